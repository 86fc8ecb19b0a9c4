#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "lad/data.hpp"
#include "test_util.hpp"

using namespace lad;

namespace {

CsvTable parse(const std::string& text, std::optional<bool> header = std::nullopt) {
  std::istringstream in(text);
  return parse_csv(in, header);
}

LossMatrix load_text(const std::string& text) {
  test::TempDir dir;
  return load_loss_matrix(dir.write("z.csv", text), std::nullopt);
}

}  // namespace

TEST(LoadLossMatrix, ParsesHeaderAndValues) {
  const LossMatrix z = load_text("a,b\n1.0,2.0\n3.0,4.0\n");
  EXPECT_EQ(z.n(), 2u);
  EXPECT_EQ(z.K(), 2u);
  EXPECT_EQ(z.model_names(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(z.values()(1, 0), 3.0);
  EXPECT_EQ(z.values()(0, 1), 2.0);
}

TEST(LoadLossMatrix, NaNCellNamesLocation) {
  try {
    load_text("a,b\n1.0,2.0\n3.0,NaN\n");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column"), std::string::npos) << msg;
  }
}

TEST(LoadLossMatrix, SingleColumn) {
  const LossMatrix z = load_text("1\n2\n3\n");
  EXPECT_EQ(z.K(), 1u);
  EXPECT_EQ(z.n(), 3u);
  EXPECT_EQ(z.model_names(), (std::vector<std::string>{"model_1"}));
}

TEST(LoadLossMatrix, RaggedRowIsFormatError) { EXPECT_THROW(load_text("a,b\n1,2\n3\n"), FormatError); }

TEST(LoadLossMatrix, TextCellIsValidationError) { EXPECT_THROW(load_text("a,b\n1,2\n3,x\n"), ValidationError); }

TEST(LoadLossMatrix, InfiniteCellIsValidationError) { EXPECT_THROW(load_text("1,2\n3,inf\n"), ValidationError); }

TEST(LoadLossMatrix, TooFewRowsIsSizeError) { EXPECT_THROW(load_text("a,b\n1,2\n"), SizeError); }

TEST(LoadLossMatrix, MissingFile) { EXPECT_THROW(load_loss_matrix("/nonexistent/z.csv", std::nullopt), Error); }

TEST(LossMatrix, RejectsDuplicateNames) {
  EXPECT_THROW(LossMatrix(Matrix::Zero(3, 2), {"a", "a"}), ValidationError);
}

TEST(LossMatrix, RejectsNameCountMismatch) { EXPECT_THROW(LossMatrix(Matrix::Zero(3, 2), {"a"}), Error); }

TEST(ParseCsv, ExplicitHeaderFlag) {
  const CsvTable t = parse("1,2\n3,4\n", true);
  EXPECT_EQ(t.header, (std::vector<std::string>{"1", "2"}));
  EXPECT_EQ(t.values.rows(), 1);
}

TEST(BiasCorrect, SingleEntry) {
  Matrix v = Matrix::Constant(100, 1, 0.5);
  ModelMeta meta{{}, {1.0}, {3.0}};
  const LossMatrix z = bias_correct(LossMatrix(v), meta);
  EXPECT_DOUBLE_EQ(z.values()(0, 0), 0.515);
  EXPECT_TRUE(z.is_bias_corrected());
}

TEST(BiasCorrect, ZeroDimsUnchanged) {
  test::TempDir dir;
  RandomStream rng(1, 0);
  const Matrix v = test::random_matrix(rng, 5, 3);
  const LossMatrix z = bias_correct(LossMatrix(v), ModelMeta::uniform(3));
  EXPECT_EQ(z.values(), v);
}

TEST(BiasCorrect, ColumnShifts) {
  const Matrix v = Matrix::Zero(10, 2);
  const LossMatrix z = bias_correct(LossMatrix(v), ModelMeta{{}, {1.0, 2.0}, {1.0, 2.0}});
  EXPECT_DOUBLE_EQ(z.values()(3, 0), 0.05);
  EXPECT_DOUBLE_EQ(z.values()(3, 1), 0.10);
}

TEST(BiasCorrect, DoubleCorrectionIsError) {
  const ModelMeta meta{{}, {1.0}, {1.0}};
  const LossMatrix once = bias_correct(LossMatrix(Matrix::Zero(4, 1)), meta);
  EXPECT_THROW(bias_correct(once, meta), Error);
}

TEST(Summarize, TwoRowExample) {
  Matrix v(2, 2);
  v << 0, 0, 2, 2;
  const LossSummary s = summarize(LossMatrix(v));
  EXPECT_EQ(s.mean, Vector::Constant(2, 1.0));
  EXPECT_EQ(s.cov, Matrix::Constant(2, 2, 1.0));
  EXPECT_EQ(s.n, 2u);
}

TEST(Summarize, ConstantColumnHasZeroCovariance) {
  Matrix v(3, 2);
  v << 1, 5, 2, 5, 4, 5;
  const LossSummary s = summarize(LossMatrix(v));
  EXPECT_EQ(s.cov(1, 1), 0.0);
  EXPECT_EQ(s.cov(0, 1), 0.0);
  EXPECT_EQ(s.cov(1, 0), 0.0);
}

TEST(Summarize, OneColumnExample) {
  Matrix v(2, 1);
  v << 0, 4;
  const LossSummary s = summarize(LossMatrix(v));
  EXPECT_EQ(s.mean(0), 2.0);
  EXPECT_EQ(s.cov(0, 0), 4.0);
}

// Properties.

TEST(SummarizeProperty, MatchesBruteForceLoop) {
  RandomStream rng(11, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng.uniform() * 49);
    const auto K = static_cast<Eigen::Index>(1 + rng.uniform() * 6);
    const Matrix v = test::random_matrix(rng, n, K, 3.0);
    const LossSummary s = summarize(LossMatrix(v));
    Vector mean = Vector::Zero(K);
    for (Eigen::Index i = 0; i < n; ++i) mean += v.row(i).transpose();
    mean /= static_cast<double>(n);
    for (Eigen::Index a = 0; a < K; ++a) {
      for (Eigen::Index b = 0; b < K; ++b) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) acc += (v(i, a) - mean(a)) * (v(i, b) - mean(b));
        ASSERT_NEAR(s.cov(a, b), acc / static_cast<double>(n), 1e-10);
      }
    }
    ASSERT_TRUE(is_symmetric(s.cov));
    ASSERT_TRUE((s.cov.diagonal().array() >= 0.0).all());
  }
}

TEST(BiasCorrectProperty, ShiftsMeansOnly) {
  RandomStream rng(12, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng.uniform() * 40);
    const auto K = static_cast<Eigen::Index>(1 + rng.uniform() * 5);
    const Matrix v = test::random_matrix(rng, n, K);
    ModelMeta meta = ModelMeta::uniform(static_cast<std::size_t>(K));
    for (auto& d : meta.dims) d = std::floor(rng.uniform() * 10.0);
    const LossSummary before = summarize(LossMatrix(v));
    const LossSummary after = summarize(bias_correct(LossMatrix(v), meta));
    for (Eigen::Index k = 0; k < K; ++k) {
      const double shift = meta.dims[static_cast<std::size_t>(k)] / (2.0 * static_cast<double>(n));
      ASSERT_NEAR(after.mean(k) - before.mean(k), shift, 1e-12);
    }
    ASSERT_LE((after.cov - before.cov).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(CsvProperty, RoundTripIsBitIdentical) {
  test::TempDir dir;
  RandomStream rng(13, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng.uniform() * 20);
    const auto K = static_cast<Eigen::Index>(1 + rng.uniform() * 5);
    Matrix v = test::random_matrix(rng, n, K);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < K; ++j) v(i, j) = std::ldexp(v(i, j), static_cast<int>(rng.uniform() * 80) - 40);
    const LossMatrix z(v);
    const std::string path = dir.file("rt.csv");
    write_loss_matrix(path, z);
    const LossMatrix back = load_loss_matrix(path, std::nullopt);
    ASSERT_EQ(back.values(), v);
    ASSERT_EQ(back.model_names(), z.model_names());
  }
}

TEST(Meta, ParseAndValidate) {
  const ModelMeta meta = parse_meta(nlohmann::json::parse(R"({"model_names":["a","b"],"complexity":[1,2],"dims":[1,3]})"));
  EXPECT_EQ(meta.K(), 2u);
  EXPECT_EQ(meta.dims[1], 3.0);
  EXPECT_THROW(parse_meta(nlohmann::json::parse(R"({"complexity":[1,2],"dims":[1]})")), Error);
  EXPECT_THROW(parse_meta(nlohmann::json::parse(R"({"complexity":[-1],"dims":[1]})")), Error);
}

TEST(Meta, AlignByName) {
  const LossMatrix z(Matrix::Zero(3, 2), {"b", "a"});
  const ModelMeta meta{{"a", "b"}, {1.0, 2.0}, {1.0, 2.0}};
  const ModelMeta aligned = align_meta(meta, z);
  EXPECT_EQ(aligned.model_names, (std::vector<std::string>{"b", "a"}));
  EXPECT_EQ(aligned.complexity, (std::vector<double>{2.0, 1.0}));
}

TEST(Meta, AlignByPositionWithoutNames) {
  const LossMatrix z(Matrix::Zero(3, 2), {"b", "a"});
  const ModelMeta meta{{}, {1.0, 2.0}, {1.0, 2.0}};
  EXPECT_EQ(align_meta(meta, z).complexity, (std::vector<double>{1.0, 2.0}));
}

TEST(Meta, AlignLengthMismatch) {
  const LossMatrix z(Matrix::Zero(3, 2));
  EXPECT_THROW(align_meta(ModelMeta{{}, {1.0}, {1.0}}, z), Error);
}
