#include <cmath>
#include <limits>
#include <set>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "randproto/binary_io.hpp"
#include "randproto/solver.hpp"
#include "support.hpp"

using namespace randproto;
using testing_support::gauss_solve;
using testing_support::Gen;
using testing_support::naive_cross;
using testing_support::naive_gram;
using testing_support::one_hot;
using testing_support::rel_fro;
using testing_support::TempDir;

namespace {

struct Instance {
  Eigen::MatrixXd gram, targets;
  double lambda;
};

Instance random_instance(Gen& gen, Eigen::Index M, Eigen::Index N, Eigen::Index D) {
  const RowMatrix h = gen.rows(N, M);
  const RowMatrix y = gen.rows(N, D);
  return {naive_gram(h), naive_cross(h, y), std::pow(10.0, gen.uniform(-2, 2))};
}

}  // namespace

TEST(Solve, MatchesGaussianEliminationProperty) {
  Gen gen(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto M = static_cast<Eigen::Index>(gen.range(1, 64));
    const auto N = static_cast<Eigen::Index>(gen.range(1, 3 * std::size_t(M)));
    const auto D = static_cast<Eigen::Index>(gen.range(1, 10));
    const auto in = random_instance(gen, M, N, D);
    const auto head = solve(in.gram, in.targets, in.lambda);
    Eigen::MatrixXd shifted = in.gram;
    shifted.diagonal().array() += in.lambda;
    const Eigen::MatrixXd oracle = gauss_solve(shifted, in.targets);
    ASSERT_LT(rel_fro(head.weights(), oracle), 1e-8) << "trial " << trial;
    ASSERT_LE(head.diagnostics().residual, 1e-8);
    ASSERT_EQ(head.diagnostics().jitter, 0.0);
    ASSERT_EQ(head.lambda(), in.lambda);
  }
}

TEST(Solve, ResidualReported) {
  Gen gen(12);
  const auto in = random_instance(gen, 20, 30, 4);
  const auto head = solve(in.gram, in.targets, in.lambda);
  Eigen::MatrixXd shifted = in.gram;
  shifted.diagonal().array() += in.lambda;
  const double r = (shifted * head.weights() - in.targets).norm() / in.targets.norm();
  EXPECT_NEAR(head.diagnostics().residual, r, 1e-15);
}

TEST(Solve, IterativeOracleAgrees) {
  Gen gen(13);
  for (int trial = 0; trial < 10; ++trial) {
    const auto M = static_cast<Eigen::Index>(gen.range(2, 40));
    const auto in = random_instance(gen, M, 2 * M, 3);
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(in.gram).eigenvalues();
    const double hi = ev.maxCoeff() + in.lambda, lo = std::max(ev.minCoeff(), 0.0) + in.lambda;
    const auto steps = static_cast<std::size_t>(std::ceil(hi / lo * std::log(1e8))) + 10;
    const Eigen::MatrixXd gd = fit_iterative_oracle(in.gram, in.targets, in.lambda, steps, 0.5 / hi);
    EXPECT_LT(rel_fro(gd, solve(in.gram, in.targets, in.lambda).weights()), 1e-3) << "trial " << trial;
  }
}

TEST(Solve, OracleRejectsLargeSteps) {
  Gen gen(14);
  const auto in = random_instance(gen, 5, 10, 2);
  EXPECT_ERRC(fit_iterative_oracle(in.gram, in.targets, in.lambda, 50, 10.0), Errc::kStepSize);
  EXPECT_ERRC(fit_iterative_oracle(in.gram, in.targets, in.lambda, 50, 0.0), Errc::kStepSize);
}

TEST(Solve, OneHotTargetsGiveRidgeClassifier) {
  Gen gen(15);
  const auto labels = gen.labels(100, 4);
  const RowMatrix h = gen.rows(100, 8);
  auto acc = Accumulator::classification(8, 4);
  acc.update_batch_labels(h, labels);
  const auto head = solve(acc, 0.5);
  // normal equations of min ||Y - H W||^2 + 0.5 ||W||^2
  Eigen::MatrixXd a = h.transpose() * h;
  a.diagonal().array() += 0.5;
  const Eigen::MatrixXd ref = gauss_solve(a, h.transpose() * one_hot(labels, 4));
  EXPECT_LT(rel_fro(head.weights(), ref), 1e-10);
  const Eigen::VectorXd s = head.score(h.row(0).transpose());
  EXPECT_EQ(head.predict(h.row(0).transpose()), argmax(s));
  EXPECT_TRUE(head.score_batch(h.topRows(3)).row(2).isApprox((h.row(2) * head.weights())));
}

TEST(Solve, RankDeficientZeroLambdaUsesJitter) {
  Gen gen(16);
  const RowMatrix h = gen.rows(3, 10);  // rank 3 Gram in 10 dimensions
  const auto head = solve(naive_gram(h), naive_cross(h, gen.rows(3, 2)), 0.0);
  EXPECT_GT(head.diagnostics().jitter, 0.0);
  EXPECT_GE(head.diagnostics().jitter_retries, 1);
  EXPECT_TRUE(head.weights().allFinite());
}

TEST(Solve, IndefiniteIsSingular) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Identity(3, 3);
  g(2, 2) = -5.0;
  EXPECT_ERRC(solve(g, Eigen::MatrixXd::Ones(3, 1), 0.1), Errc::kSingular);
}

TEST(Solve, ParameterChecks) {
  const Eigen::MatrixXd g = Eigen::MatrixXd::Identity(3, 3);
  EXPECT_ERRC(solve(g, Eigen::MatrixXd::Ones(3, 1), -1.0), Errc::kParameter);
  EXPECT_ERRC(solve(g, Eigen::MatrixXd::Ones(3, 1), std::nan("")), Errc::kParameter);
  EXPECT_ERRC(solve(g, Eigen::MatrixXd::Ones(2, 1), 1.0), Errc::kShapeMismatch);
  EXPECT_ERRC(solve(Eigen::MatrixXd::Ones(2, 3), Eigen::MatrixXd::Ones(2, 1), 1.0), Errc::kShapeMismatch);
}

TEST(Argmax, LowestIndexWinsTies) {
  EXPECT_EQ(argmax(Eigen::Vector4d(1, 3, 3, 2)), 1u);
  EXPECT_EQ(argmax(Eigen::Vector3d(-1, -1, -1)), 0u);
  const std::vector<std::uint32_t> allowed{3, 2, 0};
  EXPECT_EQ(argmax_among(Eigen::Vector4d(9, 1, 5, 5), allowed), 0u);
  const std::vector<std::uint32_t> no_zero{3, 2};
  EXPECT_EQ(argmax_among(Eigen::Vector4d(9, 1, 5, 5), no_zero), 2u);
  EXPECT_ERRC(argmax(Eigen::VectorXd()), Errc::kParameter);
  EXPECT_ERRC(argmax_among(Eigen::Vector2d(1, 2), std::vector<std::uint32_t>{}), Errc::kParameter);
  EXPECT_ERRC(argmax_among(Eigen::Vector2d(1, 2), std::vector<std::uint32_t>{2}), Errc::kParameter);
}

TEST(Head, SaveLoadRoundTrip) {
  Gen gen(17);
  const auto in = random_instance(gen, 6, 12, 3);
  const auto head = solve(in.gram, in.targets, in.lambda);
  TempDir dir;
  const std::string stem = (dir / "head").string();
  head.save(stem);
  const auto back = DecorrelatedHead::load(stem);
  EXPECT_EQ(back.weights(), head.weights());
  EXPECT_EQ(back.lambda(), head.lambda());
  head.save(stem + "32", false);
  const auto narrow = DecorrelatedHead::load(stem + "32");
  EXPECT_EQ(narrow.weights(), head.weights().cast<float>().cast<double>());
  EXPECT_EQ(std::filesystem::file_size(stem + ".bin"), 8u + 16u + 1u + 6u * 3u * 8u);
  EXPECT_ERRC(DecorrelatedHead::load((dir / "missing").string()), Errc::kIo);
}

TEST(LambdaGrid, SeventeenDecades) {
  const auto grid = LambdaSchedule::standard_grid();
  ASSERT_EQ(grid.size(), 17u);
  for (int k = 0; k < 17; ++k) EXPECT_DOUBLE_EQ(grid[std::size_t(k)], std::pow(10.0, k - 8));
  EXPECT_EQ(LambdaSchedule{}.grid, grid);
}

TEST(LambdaGrid, Validation) {
  LambdaSchedule s;
  s.validate();
  s.grid = {};
  EXPECT_ERRC(s.validate(), Errc::kConfig);
  s.grid = {1.0, 1.0};
  EXPECT_ERRC(s.validate(), Errc::kConfig);
  s.grid = {0.0, 1.0};
  EXPECT_ERRC(s.validate(), Errc::kConfig);
  s = LambdaSchedule::fixed(3.0);
  s.holdout_fraction = 1.0;
  EXPECT_ERRC(s.validate(), Errc::kConfig);
}

TEST(SelectLambda, PicksLowestHoldoutError) {
  Gen gen(18);
  // y = h w + heavy noise, few samples: strong shrinkage generalizes better
  const Eigen::Index M = 30;
  const Eigen::VectorXd w = gen.vector(M) * 0.05;
  auto make = [&](Eigen::Index n, RowMatrix& h, RowMatrix& y) {
    h = gen.rows(n, M);
    y = h * w;
    for (Eigen::Index r = 0; r < n; ++r) y(r, 0) += 2.0 * gen.normal();
  };
  RowMatrix fh, fy, hh, hy;
  make(35, fh, fy);
  make(400, hh, hy);
  auto acc = Accumulator::regression(M, 1);
  acc.update_batch(fh, fy);
  const auto grid = LambdaSchedule::standard_grid();
  const auto sel = select_lambda(acc, hh, hy, grid);
  ASSERT_EQ(sel.mse.size(), grid.size());
  std::size_t best = 0;
  for (std::size_t k = 0; k < grid.size(); ++k)
    if (sel.mse[k] < sel.mse[best]) best = k;
  EXPECT_EQ(sel.lambda, grid[best]);
  EXPECT_GE(sel.lambda, 1.0);
  EXPECT_EQ(sel.fit_samples, 35u);
  EXPECT_EQ(sel.holdout_samples, 400u);
}

TEST(SelectLambda, TiesGoToSmallest) {
  // zero targets: every lambda predicts exactly zero
  auto acc = Accumulator::regression(2, 1);
  acc.update(Eigen::Vector2d(1, 0), Eigen::VectorXd::Zero(1));
  acc.update(Eigen::Vector2d(0, 1), Eigen::VectorXd::Zero(1));
  RowMatrix hh(1, 2), hy = RowMatrix::Zero(1, 1);
  hh << 1, 1;
  const std::vector<double> grid{0.1, 1.0, 10.0};
  EXPECT_EQ(select_lambda(acc, hh, hy, grid).lambda, 0.1);
}

TEST(CrossValidate, HoldoutFoldedBackIn) {
  Gen gen(19);
  const auto labels = gen.labels(120, 3);
  const RowMatrix h = gen.rows(120, 7);
  auto base = Accumulator::classification(7, 3);
  base.update_batch_labels(gen.rows(50, 7), gen.labels(50, 3));
  auto expected = base;
  expected.update_batch_labels(h, labels);

  MatrixTaskStream stream(h, one_hot(labels, 3));
  LambdaSchedule schedule;
  const auto cv = cross_validate_lambda(stream, base, schedule, 99);
  EXPECT_LT(rel_fro(cv.accumulator.gram_dense(), expected.gram_dense()), 1e-12);
  EXPECT_LT(rel_fro(cv.accumulator.prototypes(), expected.prototypes()), 1e-12);
  EXPECT_EQ(cv.accumulator.class_counts(), expected.class_counts());
  EXPECT_EQ(cv.selection.holdout_samples, 24u);
  EXPECT_EQ(cv.selection.fit_samples, 50u + 96u);
  EXPECT_FALSE(cv.selection.fell_back);
  EXPECT_GT(cv.selection.lambda, 0.0);

  MatrixTaskStream again(h, one_hot(labels, 3));
  EXPECT_EQ(cross_validate_lambda(again, base, schedule, 99).selection.mse, cv.selection.mse);
}

TEST(CrossValidate, UndersizedTaskFallsBack) {
  Gen gen(20);
  LambdaSchedule schedule;
  schedule.min_task_samples = 10;
  schedule.first_task_lambda = 0.25;
  auto base = Accumulator::regression(3, 1);
  {
    MatrixTaskStream s(gen.rows(4, 3), gen.rows(4, 1));
    const auto cv = cross_validate_lambda(s, base, schedule, 1);
    EXPECT_TRUE(cv.selection.fell_back);
    EXPECT_EQ(cv.selection.lambda, 0.25);
    EXPECT_EQ(cv.accumulator.num_samples(), 4u);
  }
  {
    MatrixTaskStream s(gen.rows(4, 3), gen.rows(4, 1));
    EXPECT_EQ(cross_validate_lambda(s, base, schedule, 1, 7.0).selection.lambda, 7.0);
  }
  schedule.allow_fallback = false;
  MatrixTaskStream s(gen.rows(4, 3), gen.rows(4, 1));
  EXPECT_ERRC(cross_validate_lambda(s, base, schedule, 1), Errc::kDegenerateSplit);
}

TEST(CrossValidate, FixedLambdaSkipsSplit) {
  Gen gen(21);
  MatrixTaskStream s(gen.rows(30, 4), gen.rows(30, 2));
  const auto cv = cross_validate_lambda(s, Accumulator::regression(4, 2), LambdaSchedule::fixed(2.0), 3);
  EXPECT_EQ(cv.selection.lambda, 2.0);
  EXPECT_FALSE(cv.selection.fell_back);
  EXPECT_EQ(cv.selection.holdout_samples, 0u);
  EXPECT_EQ(cv.accumulator.num_samples(), 30u);
}

TEST(InverseSqrt, WhitensSpdMatrix) {
  Gen gen(22);
  const Eigen::MatrixXd a = gen.matrix(6, 6);
  const Eigen::MatrixXd s = a * a.transpose() + Eigen::MatrixXd::Identity(6, 6);
  const Eigen::MatrixXd r = symmetric_inverse_sqrt(s);
  EXPECT_LT(rel_fro(r * s * r, Eigen::MatrixXd::Identity(6, 6)), 1e-12);
  EXPECT_LT(rel_fro(r, r.transpose()), 1e-14);
  EXPECT_ERRC(symmetric_inverse_sqrt(-s), Errc::kSingular);
}
