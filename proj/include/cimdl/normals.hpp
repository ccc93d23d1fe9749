#pragma once

// Depth maps, their three-channel surface-normal encoding, and the PGM/PPM
// image files used to move them in and out.

#include "cimdl/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace cimdl {

/// Row-major depth samples with a per-pixel validity mask.
class DepthMap {
 public:
  DepthMap(int width, int height, std::vector<double> values, std::vector<std::uint8_t> valid)
      : width_(width), height_(height), values_(std::move(values)), valid_(std::move(valid)) {
    if (width_ < 1 || height_ < 1) throw ValidationError("depth map: empty image");
    const std::size_t n = static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
    if (values_.size() != n || valid_.size() != n) {
      throw ShapeError("depth map: expected " + std::to_string(n) + " samples");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (valid_[i] && !(values_[i] > 0.0 && std::isfinite(values_[i]))) {
        throw ValidationError("depth map: valid pixel " + std::to_string(i) + " has non-positive depth");
      }
    }
  }

  /// All pixels with positive depth are valid.
  static DepthMap from_values(int width, int height, std::vector<double> values) {
    std::vector<std::uint8_t> valid(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) valid[i] = values[i] > 0.0 ? 1 : 0;
    return DepthMap(width, height, std::move(values), std::move(valid));
  }

  int width() const { return width_; }
  int height() const { return height_; }
  double at(int x, int y) const { return values_[index(x, y)]; }
  bool valid(int x, int y) const { return valid_[index(x, y)] != 0; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_;
  int height_;
  std::vector<double> values_;
  std::vector<std::uint8_t> valid_;
};

/// Unit normals as a 3 x (width*height) matrix, pixel columns in row-major order.
struct NormalMap {
  int width = 0;
  int height = 0;
  Matrix normals;
  std::vector<std::uint8_t> valid;

  Eigen::Vector3d at(int x, int y) const { return normals.col(static_cast<Index>(y) * width + x); }
  bool is_valid(int x, int y) const { return valid[static_cast<std::size_t>(y) * width + x] != 0; }
};

/// Central differences on the depth grid; normal = normalize(-gx, -gy, 1).
///
/// A pixel gets a normal only if it and its four neighbours are valid; every
/// other pixel, including the image border, is (0, 0, 0) and flagged invalid.
inline NormalMap depth_to_surface_normals(const DepthMap& depth) {
  const int w = depth.width();
  const int h = depth.height();
  if (w < 3 || h < 3) {
    throw ValidationError("surface normals: image must be at least 3x3, got " + std::to_string(w) +
                          "x" + std::to_string(h));
  }
  NormalMap out;
  out.width = w;
  out.height = h;
  out.normals = Matrix::Zero(3, static_cast<Index>(w) * h);
  out.valid.assign(static_cast<std::size_t>(w) * h, 0);
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      if (!depth.valid(x, y) || !depth.valid(x - 1, y) || !depth.valid(x + 1, y) ||
          !depth.valid(x, y - 1) || !depth.valid(x, y + 1)) {
        continue;
      }
      const double gx = (depth.at(x + 1, y) - depth.at(x - 1, y)) / 2.0;
      const double gy = (depth.at(x, y + 1) - depth.at(x, y - 1)) / 2.0;
      const Eigen::Vector3d n(-gx, -gy, 1.0);
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      out.normals.col(static_cast<Index>(idx)) = n / n.norm();
      out.valid[idx] = 1;
    }
  }
  return out;
}

namespace detail {

/// Next whitespace-delimited PNM header token, skipping '#' comments.
inline std::string pnm_token(std::istream& in, const std::string& source) {
  std::string tok;
  int ch = 0;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) throw FormatError(source + ": truncated PNM header");
  return tok;
}

inline int pnm_int(std::istream& in, const std::string& source, const char* what) {
  const std::string tok = pnm_token(in, source);
  try {
    std::size_t used = 0;
    const long v = std::stol(tok, &used);
    if (used != tok.size() || v < 1 || v > 65535 * 256) throw std::invalid_argument(tok);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw FormatError(source + ": bad PNM " + what + " '" + tok + "'");
  }
}

}  // namespace detail

/// Binary PGM (P5), 8- or 16-bit; 0 marks an invalid pixel.
inline DepthMap read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::string src = path.string();
  if (!in) throw FormatError(src + ": cannot open for reading");
  if (detail::pnm_token(in, src) != "P5") throw FormatError(src + ": not a binary PGM (expected \"P5\")");
  const int w = detail::pnm_int(in, src, "width");
  const int h = detail::pnm_int(in, src, "height");
  const int maxval = detail::pnm_int(in, src, "maxval");
  if (maxval > 65535) throw FormatError(src + ": maxval " + std::to_string(maxval) + " exceeds 65535");
  const int bytes_per = maxval > 255 ? 2 : 1;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  std::vector<unsigned char> raw(n * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw FormatError(src + ": truncated PGM payload (" + std::to_string(in.gcount()) + " of " +
                      std::to_string(raw.size()) + " bytes)");
  }
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = bytes_per == 2 ? static_cast<double>((raw[2 * i] << 8) | raw[2 * i + 1]) : raw[i];
  }
  return DepthMap::from_values(w, h, std::move(values));
}

/// 16-bit binary PGM; values are rounded and clamped to [0, 65535], invalid pixels written as 0.
inline void write_pgm16(const std::filesystem::path& path, const DepthMap& depth) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out << "P5\n" << depth.width() << " " << depth.height() << "\n65535\n";
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      double v = depth.valid(x, y) ? std::round(depth.at(x, y)) : 0.0;
      v = std::min(std::max(v, 0.0), 65535.0);
      const auto u = static_cast<std::uint16_t>(v);
      out.put(static_cast<char>(u >> 8));
      out.put(static_cast<char>(u & 0xff));
    }
  }
  if (!out) throw FormatError(path.string() + ": write failed");
}

/// Channel byte for a normal component: round((n + 1) / 2 * 255).
inline std::uint8_t encode_normal_channel(double n) {
  const double v = std::round((n + 1.0) / 2.0 * 255.0);
  return static_cast<std::uint8_t>(std::min(std::max(v, 0.0), 255.0));
}

/// Binary PPM (P6). Invalid pixels carry the (0,0,0) normal.
inline void write_ppm(const std::filesystem::path& path, const NormalMap& normals) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out << "P6\n" << normals.width << " " << normals.height << "\n255\n";
  for (Index i = 0; i < normals.normals.cols(); ++i) {
    for (int c = 0; c < 3; ++c) out.put(static_cast<char>(encode_normal_channel(normals.normals(c, i))));
  }
  if (!out) throw FormatError(path.string() + ": write failed");
}

}  // namespace cimdl
