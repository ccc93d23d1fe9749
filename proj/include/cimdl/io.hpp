#pragma once

// Binary matrix, label and model files (little-endian), plus a plain CSV
// fallback for feature matrices.
//
//   CIMF  "CIMF" u32 version u32 rows u32 cols f64[rows*cols] (row-major)
//   CIML  "CIML" u32 version u32 count u32 num_classes u32[count]
//   CIMM  "CIMM" u32 version u32 M u32 l
//         f64 V1,Q1,V2,Q2 (M x M each), W1,W2,W3 (l x M each), c[3],
//         then 14 hyperparameters in the order of kModelHyperparameterOrder.

#include "cimdl/core.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace cimdl {

constexpr std::uint32_t kFormatVersion = 1;

inline constexpr std::array<const char*, 14> kModelHyperparameterOrder = {
    "alpha1", "alpha2", "sigma1", "sigma2", "delta1", "delta2", "theta1",
    "theta2", "mu",     "eta",    "lr_w",   "lr_vq",  "p",      "tol"};

namespace detail {

using Bytes = std::vector<std::uint8_t>;

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open for reading");
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(path.string() + ": write failed");
}

class ByteWriter {
 public:
  void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void f64(double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void matrix(const Matrix& m) {
    bytes_.reserve(bytes_.size() + static_cast<std::size_t>(m.size()) * 8);
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }

  const Bytes& bytes() const { return bytes_; }

 private:
  Bytes bytes_;
};

class ByteReader {
 public:
  ByteReader(const Bytes& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(source_ + ": " + msg + " at byte offset " + std::to_string(pos_));
  }

  void expect_magic(std::string_view tag) {
    need(tag.size(), "magic");
    if (std::memcmp(bytes_.data() + pos_, tag.data(), tag.size()) != 0) {
      const std::string found(reinterpret_cast<const char*>(bytes_.data() + pos_), tag.size());
      fail("bad magic '" + found + "', expected \"" + std::string(tag) + "\"");
    }
    pos_ += tag.size();
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  void expect_version() {
    const std::size_t at = pos_;
    const std::uint32_t v = u32("version");
    if (v != kFormatVersion) {
      pos_ = at;
      fail("unsupported version " + std::to_string(v) + " (expected " + std::to_string(kFormatVersion) + ")");
    }
  }

  /// Reserves room for `count` payload entries of `width` bytes.
  void expect_payload(std::uint64_t count, std::uint64_t width, const char* what) {
    const std::uint64_t remaining = bytes_.size() - pos_;
    if (count > remaining / width) {
      fail(std::string(what) + " needs " + std::to_string(count) + " entries but only " +
           std::to_string(remaining) + " bytes remain");
    }
  }

  Matrix matrix(Index rows, Index cols, const char* what) {
    expect_payload(static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols), 8, what);
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = f64(what);
    return m;
  }

  void expect_end() const {
    if (pos_ != bytes_.size()) {
      fail(std::to_string(bytes_.size() - pos_) + " trailing bytes");
    }
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) fail(std::string("truncated while reading ") + what);
  }

  const Bytes& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline std::uint32_t checked_u32(Index v, const char* what) {
  if (v < 0 || static_cast<std::uint64_t>(v) > 0xffffffffULL) {
    throw FormatError(std::string(what) + " does not fit in u32");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

// ---------------------------------------------------------------- features

inline std::vector<std::uint8_t> encode_features(const Matrix& x) {
  detail::ByteWriter w;
  w.magic("CIMF");
  w.u32(kFormatVersion);
  w.u32(detail::checked_u32(x.rows(), "rows"));
  w.u32(detail::checked_u32(x.cols(), "cols"));
  w.matrix(x);
  return w.bytes();
}

inline Matrix decode_features(const std::vector<std::uint8_t>& bytes, const std::string& source = "<memory>") {
  detail::ByteReader r(bytes, source);
  r.expect_magic("CIMF");
  r.expect_version();
  const std::uint32_t rows = r.u32("rows");
  const std::uint32_t cols = r.u32("cols");
  Matrix m = r.matrix(rows, cols, "matrix payload");
  r.expect_end();
  return m;
}

inline void write_features(const std::filesystem::path& path, const Matrix& x) {
  detail::write_file(path, encode_features(x));
}

inline Matrix read_features(const std::filesystem::path& path) {
  return decode_features(detail::read_file(path), path.string());
}

/// Plain numeric CSV, one matrix row per line. Ragged input is rejected.
inline Matrix read_csv_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open for reading");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      std::string_view field(line.data() + start, (comma == std::string::npos ? line.size() : comma) - start);
      while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
      while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
        throw FormatError(path.string() + ": line " + std::to_string(lineno) + ": '" +
                          std::string(field) + "' is not a number");
      }
      row.push_back(v);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw FormatError(path.string() + ": line " + std::to_string(lineno) + " has " +
                        std::to_string(row.size()) + " fields, expected " +
                        std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(path.string() + ": empty CSV");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return m;
}

/// CIMF by magic, CSV otherwise.
inline Matrix read_matrix_any(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open for reading");
  char head[4] = {};
  in.read(head, 4);
  if (in.gcount() == 4 && std::memcmp(head, "CIMF", 4) == 0) return read_features(path);
  return read_csv_matrix(path);
}

// ------------------------------------------------------------------ labels

struct LabelFile {
  std::vector<int> labels;
  int num_classes = 0;
};

inline void check_labels(const std::vector<int>& labels, int num_classes) {
  if (num_classes < 1) throw ValidationError("labels: num_classes must be >= 1");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ValidationError("labels: record " + std::to_string(i) + " has class " +
                            std::to_string(labels[i]) + ", expected < " + std::to_string(num_classes));
    }
  }
}

inline void write_labels(const std::filesystem::path& path, const std::vector<int>& labels, int num_classes) {
  check_labels(labels, num_classes);
  detail::ByteWriter w;
  w.magic("CIML");
  w.u32(kFormatVersion);
  w.u32(detail::checked_u32(static_cast<Index>(labels.size()), "label count"));
  w.u32(static_cast<std::uint32_t>(num_classes));
  for (int v : labels) w.u32(static_cast<std::uint32_t>(v));
  detail::write_file(path, w.bytes());
}

/// Reads a CIML file. With `expected_classes` > 0 the stored class count must match.
inline LabelFile read_labels(const std::filesystem::path& path, int expected_classes = 0) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes, path.string());
  r.expect_magic("CIML");
  r.expect_version();
  const std::uint32_t count = r.u32("count");
  const std::uint32_t classes = r.u32("num_classes");
  if (classes == 0 || classes > 0x7fffffffU) r.fail("invalid num_classes " + std::to_string(classes));
  if (expected_classes > 0 && classes != static_cast<std::uint32_t>(expected_classes)) {
    throw ValidationError(path.string() + ": file declares " + std::to_string(classes) +
                          " classes, expected " + std::to_string(expected_classes));
  }
  r.expect_payload(count, 4, "label payload");
  LabelFile out;
  out.num_classes = static_cast<int>(classes);
  out.labels.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t v = r.u32("label");
    if (v >= classes) {
      throw ValidationError(path.string() + ": record " + std::to_string(i) + " has class " +
                            std::to_string(v) + ", expected < " + std::to_string(classes));
    }
    out.labels.push_back(static_cast<int>(v));
  }
  r.expect_end();
  return out;
}

/// L_kn = 1 iff labels[n] == k.
inline LabelMatrix one_hot(const std::vector<int>& labels, int num_classes) {
  check_labels(labels, num_classes);
  LabelMatrix l = LabelMatrix::Zero(num_classes, static_cast<Index>(labels.size()));
  for (std::size_t n = 0; n < labels.size(); ++n) l(labels[n], static_cast<Index>(n)) = 1.0;
  return l;
}

// ------------------------------------------------------------------- model

struct ModelFile {
  FusionModel model;
  Hyperparameters hyperparameters;
};

inline std::array<double*, 14> model_hyperparameter_fields(Hyperparameters& hp) {
  return {&hp.alpha1, &hp.alpha2, &hp.sigma1, &hp.sigma2, &hp.delta1, &hp.delta2, &hp.theta1,
          &hp.theta2, &hp.mu,     &hp.eta,    &hp.lr_w,   &hp.lr_vq,  &hp.p,      &hp.tol};
}

inline std::vector<std::uint8_t> encode_model(const FusionModel& model, const Hyperparameters& hp) {
  model.validate_shape();
  detail::ByteWriter w;
  w.magic("CIMM");
  w.u32(kFormatVersion);
  w.u32(detail::checked_u32(model.dim(), "M"));
  w.u32(detail::checked_u32(model.classes(), "l"));
  w.matrix(model.modality1.correlated);
  w.matrix(model.modality1.individual);
  w.matrix(model.modality2.correlated);
  w.matrix(model.modality2.individual);
  for (const auto& b : model.classifier) w.matrix(b);
  for (int i = 0; i < 3; ++i) w.f64(model.weights[i]);
  Hyperparameters copy = hp;
  for (double* f : model_hyperparameter_fields(copy)) w.f64(*f);
  return w.bytes();
}

inline ModelFile decode_model(const std::vector<std::uint8_t>& bytes, const std::string& source = "<memory>") {
  detail::ByteReader r(bytes, source);
  r.expect_magic("CIMM");
  r.expect_version();
  const std::uint32_t m = r.u32("M");
  const std::uint32_t l = r.u32("l");
  if (m == 0 || l == 0) r.fail("zero model dimension");
  const std::uint64_t mm = static_cast<std::uint64_t>(m) * m;
  const std::uint64_t lm = static_cast<std::uint64_t>(l) * m;
  if (mm > (1ULL << 40) || lm > (1ULL << 40)) r.fail("model dimensions overflow");
  r.expect_payload(4 * mm + 3 * lm + 3 + 14, 8, "model payload");

  ModelFile out;
  out.model.modality1.correlated = r.matrix(m, m, "V1");
  out.model.modality1.individual = r.matrix(m, m, "Q1");
  out.model.modality2.correlated = r.matrix(m, m, "V2");
  out.model.modality2.individual = r.matrix(m, m, "Q2");
  for (auto& b : out.model.classifier) b = r.matrix(l, m, "W");
  for (int i = 0; i < 3; ++i) out.model.weights[i] = r.f64("c");
  for (double* f : model_hyperparameter_fields(out.hyperparameters)) *f = r.f64("hyperparameter");
  r.expect_end();
  return out;
}

inline void save_model(const std::filesystem::path& path, const FusionModel& model, const Hyperparameters& hp) {
  detail::write_file(path, encode_model(model, hp));
}

inline ModelFile load_model(const std::filesystem::path& path) {
  return decode_model(detail::read_file(path), path.string());
}

}  // namespace cimdl
