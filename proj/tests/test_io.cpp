#include "cimdl/cimdl.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>

using namespace cimdl;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("cimdl_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path path(const std::string& name) const { return dir_ / name; }

  fs::path dir_;
};

bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

using FeatureFile = TempDir;
using LabelFileTest = TempDir;
using ModelFileTest = TempDir;
using CsvFile = TempDir;

TEST_F(FeatureFile, RoundTripsBitExact) {
  write_features(path("z.cimf"), Matrix::Zero(1, 1));
  EXPECT_TRUE(bit_equal(read_features(path("z.cimf")), Matrix::Zero(1, 1)));

  Matrix x = oracle::random(3, 4, 7, 1e5);
  x(0, 0) = -0.0;
  x(1, 2) = std::numeric_limits<double>::denorm_min();
  x(2, 3) = std::numeric_limits<double>::max();
  write_features(path("r.cimf"), x);
  EXPECT_TRUE(bit_equal(read_features(path("r.cimf")), x));
  EXPECT_EQ(fs::file_size(path("r.cimf")), 16u + 12u * 8u);
}

TEST_F(FeatureFile, LayoutIsLittleEndianRowMajor) {
  Matrix x(2, 2);
  x << 1, 2, 3, 4;
  const auto bytes = encode_features(x);
  ASSERT_EQ(bytes.size(), 16u + 32u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CIMF");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 2);
  EXPECT_EQ(bytes[12], 2);
  double second = 0;
  std::memcpy(&second, bytes.data() + 24, 8);
  EXPECT_EQ(second, 2.0);
}

TEST_F(FeatureFile, BadMagicNamesExpected) {
  std::ofstream(path("bad.cimf"), std::ios::binary) << "XXXX0000000000000000";
  const std::string msg = error_of([&] { read_features(path("bad.cimf")); });
  EXPECT_NE(msg.find("\"CIMF\""), std::string::npos) << msg;
  EXPECT_NE(msg.find("byte offset 0"), std::string::npos) << msg;
  EXPECT_THROW(read_features(path("bad.cimf")), FormatError);
}

TEST_F(FeatureFile, TruncationReportsOffset) {
  auto bytes = encode_features(oracle::random(2, 3, 1));
  bytes.resize(bytes.size() - 5);
  const std::string msg = error_of([&] { decode_features(bytes, "t.cimf"); });
  EXPECT_NE(msg.find("t.cimf"), std::string::npos) << msg;
  EXPECT_NE(msg.find("byte offset 16"), std::string::npos) << msg;
  auto header_only = encode_features(oracle::random(2, 3, 1));
  header_only.resize(10);
  EXPECT_NE(error_of([&] { decode_features(header_only); }).find("byte offset 8"), std::string::npos);
}

TEST_F(FeatureFile, DimensionOverflowAndVersion) {
  detail::ByteWriter w;
  w.magic("CIMF");
  w.u32(1);
  w.u32(0xffffffffu);
  w.u32(0xffffffffu);
  EXPECT_THROW(decode_features(w.bytes()), FormatError);
  auto bytes = encode_features(Matrix::Zero(1, 1));
  bytes[4] = 2;
  EXPECT_NE(error_of([&] { decode_features(bytes); }).find("version 2"), std::string::npos);
  bytes = encode_features(Matrix::Zero(1, 1));
  bytes.push_back(0);
  EXPECT_NE(error_of([&] { decode_features(bytes); }).find("trailing"), std::string::npos);
}

TEST_F(FeatureFile, MillionEntriesUnderFiveSeconds) {
  const Matrix big = oracle::random(1000, 1000, 3);
  const auto start = std::chrono::steady_clock::now();
  write_features(path("big.cimf"), big);
  const Matrix back = read_features(path("big.cimf"));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_TRUE(bit_equal(back, big));
  EXPECT_LT(secs, 5.0);
}

TEST_F(LabelFileTest, RoundTrips) {
  write_labels(path("a.ciml"), {0, 1, 2}, 3);
  const LabelFile f = read_labels(path("a.ciml"), 3);
  EXPECT_EQ(f.labels, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(f.num_classes, 3);

  std::vector<int> many(10000);
  for (std::size_t i = 0; i < many.size(); ++i) many[i] = static_cast<int>((i * 7919) % 13);
  write_labels(path("b.ciml"), many, 13);
  EXPECT_EQ(read_labels(path("b.ciml")).labels, many);
}

TEST_F(LabelFileTest, OutOfRangeNamesRecord) {
  EXPECT_THROW(write_labels(path("c.ciml"), {0, 5, 1}, 3), ValidationError);
  // Hand-built file with label 5 at record 1.
  detail::ByteWriter w;
  w.magic("CIML");
  w.u32(1);
  w.u32(3);
  w.u32(3);
  w.u32(0);
  w.u32(5);
  w.u32(1);
  detail::write_file(path("c.ciml"), w.bytes());
  const std::string msg = error_of([&] { read_labels(path("c.ciml")); });
  EXPECT_NE(msg.find("record 1"), std::string::npos) << msg;
  write_labels(path("d.ciml"), {0, 1}, 2);
  EXPECT_THROW(read_labels(path("d.ciml"), 3), ValidationError);
}

TEST(OneHot, Examples) {
  Matrix expected(2, 2);
  expected << 1, 0, 0, 1;
  EXPECT_EQ(one_hot({0, 1}, 2), expected);
  const LabelMatrix same = one_hot({2, 2, 2, 2}, 3);
  EXPECT_TRUE(same.row(2).isOnes(0.0));
  EXPECT_TRUE(same.topRows(2).isZero(0.0));
  std::vector<int> y(50);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>((i * 31) % 4);
  EXPECT_TRUE(one_hot(y, 4).colwise().sum().isOnes(0.0));
  EXPECT_THROW(one_hot({0, 3}, 3), ValidationError);
  EXPECT_THROW(one_hot({-1}, 3), ValidationError);
}

TEST_F(ModelFileTest, InitModelRoundTrips) {
  const FusionModel m = init_model(5, 3, InitScheme::SplitIdentity, 8);
  const Hyperparameters hp = resolve_hyperparameters(5, 40, {{"p", "2"}});
  save_model(path("m.cimm"), m, hp);
  const ModelFile f = load_model(path("m.cimm"));
  EXPECT_EQ(f.model, m);
  for (std::size_t i = 0; i < 14; ++i) {
    Hyperparameters a = hp, b = f.hyperparameters;
    EXPECT_EQ(*model_hyperparameter_fields(a)[i], *model_hyperparameter_fields(b)[i]) << kModelHyperparameterOrder[i];
  }
  EXPECT_EQ(fs::file_size(path("m.cimm")), 16u + 8u * (4 * 25 + 3 * 15 + 3 + 14));
}

TEST_F(ModelFileTest, TrainedModelPredictsIdentically) {
  SyntheticSpec spec = benchmark_spec(2);
  spec.n_train = 60;
  spec.n_test = 30;
  const SyntheticSplit split = generate_synthetic(spec);
  Hyperparameters hp = resolve_hyperparameters(16, 60);
  hp.max_iters = 25;
  const FusionModel m = train(split.train.modality1, split.train.modality2, one_hot(split.train.labels, 3), hp).final_model;
  save_model(path("t.cimm"), m, hp);
  const FusionModel back = load_model(path("t.cimm")).model;
  EXPECT_EQ(back, m);
  EXPECT_EQ(predict(back, split.test.modality1, split.test.modality2),
            predict(m, split.test.modality1, split.test.modality2));
}

TEST_F(ModelFileTest, CorruptedLengthFieldRejected) {
  auto bytes = encode_model(init_model(3, 2, InitScheme::SplitIdentity, 0), default_hyperparameters(3, 5));
  bytes[8] = 4;  // M 3 -> 4
  EXPECT_THROW(decode_model(bytes), FormatError);
  bytes[8] = 2;  // M 3 -> 2 leaves trailing bytes
  EXPECT_THROW(decode_model(bytes), FormatError);
  bytes[8] = 0;
  EXPECT_THROW(decode_model(bytes), FormatError);
  auto wrong = encode_model(init_model(3, 2, InitScheme::SplitIdentity, 0), default_hyperparameters(3, 5));
  wrong[0] = 'X';
  EXPECT_NE(error_of([&] { decode_model(wrong); }).find("\"CIMM\""), std::string::npos);
}

TEST_F(CsvFile, ReadsAndRejectsRagged) {
  std::ofstream(path("a.csv")) << "1, 2.5,3\n\n-4,5e-1,6\r\n";
  Matrix expected(2, 3);
  expected << 1, 2.5, 3, -4, 0.5, 6;
  EXPECT_EQ(read_csv_matrix(path("a.csv")), expected);
  EXPECT_EQ(read_matrix_any(path("a.csv")), expected);
  write_features(path("a.cimf"), expected);
  EXPECT_EQ(read_matrix_any(path("a.cimf")), expected);

  std::ofstream(path("r.csv")) << "1,2\n3\n";
  const std::string msg = error_of([&] { read_csv_matrix(path("r.csv")); });
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  std::ofstream(path("n.csv")) << "1,abc\n";
  EXPECT_THROW(read_csv_matrix(path("n.csv")), FormatError);
  std::ofstream(path("e.csv")) << "\n";
  EXPECT_THROW(read_csv_matrix(path("e.csv")), FormatError);
}
