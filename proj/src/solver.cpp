#include "randproto/solver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "randproto/binary_io.hpp"
#include "randproto/error.hpp"
#include "randproto/rng.hpp"

namespace randproto {

Eigen::VectorXd DecorrelatedHead::score(const Eigen::Ref<const Eigen::VectorXd>& h) const {
  if (h.size() != weights_.rows())
    fail(Errc::kDimensionMismatch, "score input length " + std::to_string(h.size()) +
                                       " != head input " + std::to_string(weights_.rows()));
  return weights_.transpose() * h;
}

RowMatrix DecorrelatedHead::score_batch(const Eigen::Ref<const RowMatrix>& h) const {
  if (h.cols() != weights_.rows()) fail(Errc::kDimensionMismatch, "score_batch input width");
  return h * weights_;
}

std::size_t DecorrelatedHead::predict(const Eigen::Ref<const Eigen::VectorXd>& h) const {
  return argmax(score(h));
}

void DecorrelatedHead::save(const std::string& stem, bool double_precision) const {
  {
    io::AtomicFile file(stem + ".bin");
    auto& out = file.stream();
    out.write("PFHEAD01", 8);
    io::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(weights_.rows()));
    io::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(weights_.cols()));
    const char width = double_precision ? 8 : 4;
    out.write(&width, 1);
    for (Eigen::Index i = 0; i < weights_.rows(); ++i)
      for (Eigen::Index j = 0; j < weights_.cols(); ++j) {
        if (double_precision)
          io::write_le<double>(out, weights_(i, j));
        else
          io::write_le<float>(out, static_cast<float>(weights_(i, j)));
      }
    file.commit();
  }
  nlohmann::json meta = {{"lambda", lambda_},
                         {"residual", diagnostics_.residual},
                         {"jitter", diagnostics_.jitter},
                         {"M", weights_.rows()},
                         {"D", weights_.cols()},
                         {"dtype", double_precision ? "f64" : "f32"}};
  io::write_text_atomic(stem + ".json", meta.dump(2) + "\n");
}

DecorrelatedHead DecorrelatedHead::load(const std::string& stem) {
  const auto meta = nlohmann::json::parse(io::read_text(stem + ".json"));
  std::ifstream in(stem + ".bin", std::ios::binary);
  if (!in) fail(Errc::kIo, "cannot open " + stem + ".bin");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "PFHEAD01") fail(Errc::kCorruption, "bad head file");
  std::uint64_t rows = 0, cols = 0;
  char width = 0;
  io::read_le(in, rows);
  io::read_le(in, cols);
  in.read(&width, 1);
  if (!in || (width != 4 && width != 8)) fail(Errc::kCorruption, "bad head header");
  Eigen::MatrixXd w(rows, cols);
  for (std::uint64_t i = 0; i < rows; ++i)
    for (std::uint64_t j = 0; j < cols; ++j) {
      if (width == 8) {
        double v = 0;
        if (!io::read_le(in, v)) fail(Errc::kCorruption, "head truncated");
        w(i, j) = v;
      } else {
        float v = 0;
        if (!io::read_le(in, v)) fail(Errc::kCorruption, "head truncated");
        w(i, j) = v;
      }
    }
  SolveDiagnostics diag;
  diag.residual = meta.value("residual", 0.0);
  diag.jitter = meta.value("jitter", 0.0);
  return DecorrelatedHead(std::move(w), meta.value("lambda", 0.0), diag);
}

namespace {

double relative_residual(const Eigen::Ref<const Eigen::MatrixXd>& gram, double shift,
                         const Eigen::MatrixXd& x, const Eigen::Ref<const Eigen::MatrixXd>& c,
                         Eigen::MatrixXd* residual_out = nullptr) {
  Eigen::MatrixXd r = c - gram * x - shift * x;
  const double denom = c.norm();
  const double value = denom > 0 ? r.norm() / denom : r.norm();
  if (residual_out) *residual_out = std::move(r);
  return value;
}

}  // namespace

DecorrelatedHead solve(const Eigen::Ref<const Eigen::MatrixXd>& gram,
                       const Eigen::Ref<const Eigen::MatrixXd>& targets, double lambda,
                       const SolveOptions& options) {
  const Eigen::Index m = gram.rows();
  if (gram.cols() != m) fail(Errc::kShapeMismatch, "Gram matrix must be square");
  if (targets.rows() != m)
    fail(Errc::kShapeMismatch, "targets have " + std::to_string(targets.rows()) +
                                   " rows, Gram is " + std::to_string(m));
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    fail(Errc::kParameter, "lambda must be finite and non-negative");

  SolveDiagnostics diag;
  const double trace = gram.trace();
  const double jitter_base = 1e-10 * (trace > 0 ? trace / static_cast<double>(m) : 1.0);

  Eigen::MatrixXd system = gram;
  system.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(system);
  while (llt.info() != Eigen::Success) {
    if (diag.jitter_retries == options.max_jitter_retries) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(system);
      const double min_pivot = ldlt.vectorD().minCoeff();
      fail(Errc::kSingular, "G + lambda I is not positive definite (lambda=" +
                                std::to_string(lambda) + ", jitter=" + std::to_string(diag.jitter) +
                                ", min eigenvalue estimate " + std::to_string(min_pivot) + ")");
    }
    const double next = jitter_base * std::pow(10.0, diag.jitter_retries);
    system.diagonal().array() += next - diag.jitter;
    diag.jitter = next;
    ++diag.jitter_retries;
    llt.compute(system);
  }

  Eigen::MatrixXd x = llt.solve(targets);
  Eigen::MatrixXd r;
  diag.residual = relative_residual(gram, lambda, x, targets, &r);
  while (diag.residual > options.residual_tolerance &&
         diag.refinement_steps < options.max_refinement_steps) {
    Eigen::MatrixXd candidate = x + llt.solve(r);
    Eigen::MatrixXd r_next;
    const double next = relative_residual(gram, lambda, candidate, targets, &r_next);
    ++diag.refinement_steps;
    if (!(next < diag.residual)) break;
    x = std::move(candidate);
    r = std::move(r_next);
    diag.residual = next;
  }
  if (!std::isfinite(diag.residual))
    fail(Errc::kSingular, "solve produced non-finite weights");
  if (options.enforce_residual && diag.jitter == 0.0 &&
      diag.residual > options.residual_tolerance)
    fail(Errc::kSingular, "relative residual " + std::to_string(diag.residual) +
                              " exceeds tolerance at lambda=" + std::to_string(lambda));
  return DecorrelatedHead(std::move(x), lambda, diag);
}

DecorrelatedHead solve(const Accumulator& acc, double lambda, const SolveOptions& options) {
  return solve(acc.gram_dense(), acc.prototypes(), lambda, options);
}

std::size_t argmax(const Eigen::Ref<const Eigen::VectorXd>& scores) {
  if (scores.size() == 0) fail(Errc::kParameter, "argmax of an empty score vector");
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < scores.size(); ++k)
    if (scores[k] > scores[best]) best = k;
  return static_cast<std::size_t>(best);
}

std::size_t argmax_among(const Eigen::Ref<const Eigen::VectorXd>& scores,
                         std::span<const std::uint32_t> allowed) {
  if (allowed.empty()) fail(Errc::kParameter, "argmax over an empty class set");
  std::uint32_t best = allowed[0];
  for (std::uint32_t k : allowed) {
    if (k >= scores.size()) fail(Errc::kParameter, "allowed class out of range");
    if (scores[k] > scores[best] || (scores[k] == scores[best] && k < best)) best = k;
  }
  return best;
}

std::vector<double> LambdaSchedule::standard_grid() {
  std::vector<double> grid;
  for (int e = -8; e <= 8; ++e) grid.push_back(std::pow(10.0, e));
  return grid;
}

LambdaSchedule LambdaSchedule::fixed(double lambda) {
  LambdaSchedule s;
  s.grid = {lambda};
  return s;
}

void LambdaSchedule::validate() const {
  if (grid.empty()) fail(Errc::kConfig, "lambda grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0) || !std::isfinite(grid[i]))
      fail(Errc::kConfig, "lambda grid values must be positive and finite");
    if (i > 0 && !(grid[i] > grid[i - 1]))
      fail(Errc::kConfig, "lambda grid must be strictly increasing");
  }
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    fail(Errc::kConfig, "holdout fraction must lie in (0, 1)");
}

MatrixTaskStream::MatrixTaskStream(RowMatrix h, RowMatrix y) : h_(std::move(h)), y_(std::move(y)) {
  if (h_.rows() != y_.rows()) fail(Errc::kShapeMismatch, "h and y row counts differ");
}

std::size_t MatrixTaskStream::next_batch(RowMatrix& h, RowMatrix& y, std::size_t max_rows) {
  const Eigen::Index n = std::min<Eigen::Index>(static_cast<Eigen::Index>(max_rows),
                                                h_.rows() - cursor_);
  if (n <= 0) return 0;
  h = h_.middleRows(cursor_, n);
  y = y_.middleRows(cursor_, n);
  cursor_ += n;
  return static_cast<std::size_t>(n);
}

LambdaSelection select_lambda(const Accumulator& fit, const Eigen::Ref<const RowMatrix>& holdout_h,
                              const Eigen::Ref<const RowMatrix>& holdout_y,
                              std::span<const double> grid) {
  if (grid.empty()) fail(Errc::kConfig, "lambda grid is empty");
  LambdaSelection sel;
  sel.grid.assign(grid.begin(), grid.end());
  sel.fit_samples = fit.num_samples();
  sel.holdout_samples = static_cast<std::size_t>(holdout_h.rows());
  if (grid.size() == 1) {
    sel.lambda = grid[0];
    sel.mse.assign(1, std::numeric_limits<double>::quiet_NaN());
    return sel;
  }
  const Eigen::MatrixXd gram = fit.gram_dense();
  // Grid values whose solve is rejected (singular or residual above
  // tolerance) are not eligible.
  const SolveOptions options;
  std::size_t best = grid.size();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    double mse = std::numeric_limits<double>::infinity();
    try {
      const auto head = solve(gram, fit.prototypes(), grid[k], options);
      if (holdout_h.rows() > 0) {
        const RowMatrix pred = holdout_h * head.weights();
        mse = (pred - holdout_y).squaredNorm() / static_cast<double>(pred.size());
      }
    } catch (const Error& e) {
      if (e.code() != Errc::kSingular) throw;
    }
    sel.mse.push_back(mse);
    if (std::isfinite(mse) && (best == grid.size() || mse < sel.mse[best])) best = k;
  }
  if (best == grid.size())
    fail(Errc::kSingular, "no lambda in the grid produced a usable solve");
  sel.lambda = grid[best];
  return sel;
}

CrossValidationResult cross_validate_lambda(TaskStream& task, Accumulator base,
                                            const LambdaSchedule& schedule, std::uint64_t seed,
                                            std::optional<double> previous_lambda) {
  schedule.validate();
  const std::size_t n = task.size();
  constexpr std::size_t kBatch = 256;
  RowMatrix h, y;

  const bool undersized = n < schedule.min_task_samples;
  if (undersized && !schedule.allow_fallback)
    fail(Errc::kDegenerateSplit, "task has " + std::to_string(n) + " samples, cross-validation needs " +
                                     std::to_string(schedule.min_task_samples));
  if (undersized || schedule.grid.size() == 1) {
    while (task.next_batch(h, y, kBatch) > 0) base.update_batch(h, y);
    LambdaSelection sel;
    sel.grid = schedule.grid;
    sel.mse.assign(schedule.grid.size(), std::numeric_limits<double>::quiet_NaN());
    sel.fit_samples = n;
    if (schedule.grid.size() == 1 && !undersized) {
      sel.lambda = schedule.grid[0];
    } else {
      sel.fell_back = true;
      sel.lambda = previous_lambda.value_or(schedule.first_task_lambda);
    }
    return {std::move(sel), std::move(base)};
  }

  // Holdout membership: the first round(fraction * n) positions of a seeded
  // permutation, at least one sample on each side.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  const std::size_t n_holdout = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(schedule.holdout_fraction * static_cast<double>(n))),
      1, n - 1);
  std::vector<char> in_holdout(n, 0);
  for (std::size_t i = 0; i < n_holdout; ++i) in_holdout[order[i]] = 1;

  RowMatrix holdout_h(static_cast<Eigen::Index>(n_holdout), base.feature_dim());
  RowMatrix holdout_y(static_cast<Eigen::Index>(n_holdout), base.target_dim());
  RowMatrix fit_h, fit_y;
  Eigen::Index held = 0;
  std::size_t position = 0;
  while (const std::size_t got = task.next_batch(h, y, kBatch)) {
    std::vector<Eigen::Index> fit_rows;
    for (std::size_t r = 0; r < got; ++r, ++position) {
      const auto row = static_cast<Eigen::Index>(r);
      if (in_holdout[position]) {
        holdout_h.row(held) = h.row(row);
        holdout_y.row(held) = y.row(row);
        ++held;
      } else {
        fit_rows.push_back(row);
      }
    }
    fit_h.resize(static_cast<Eigen::Index>(fit_rows.size()), h.cols());
    fit_y.resize(static_cast<Eigen::Index>(fit_rows.size()), y.cols());
    for (std::size_t k = 0; k < fit_rows.size(); ++k) {
      fit_h.row(static_cast<Eigen::Index>(k)) = h.row(fit_rows[k]);
      fit_y.row(static_cast<Eigen::Index>(k)) = y.row(fit_rows[k]);
    }
    base.update_batch(fit_h, fit_y);
  }
  if (position != n) fail(Errc::kCorruption, "task stream produced fewer samples than declared");

  LambdaSelection sel = select_lambda(base, holdout_h, holdout_y, schedule.grid);
  base.update_batch(holdout_h, holdout_y);
  return {std::move(sel), std::move(base)};
}

Eigen::MatrixXd fit_iterative_oracle(const Eigen::Ref<const Eigen::MatrixXd>& gram,
                                     const Eigen::Ref<const Eigen::MatrixXd>& targets,
                                     double lambda, std::size_t steps, double learning_rate) {
  if (gram.rows() != gram.cols() || targets.rows() != gram.rows())
    fail(Errc::kShapeMismatch, "oracle shapes");
  if (!(learning_rate > 0.0)) fail(Errc::kStepSize, "learning rate must be positive");
  // J(W) = tr(W^T G W) - 2 tr(W^T C) + lambda ||W||^2, the regularized squared
  // error up to the constant ||Y||^2.
  auto objective = [&](const Eigen::MatrixXd& w) {
    return (w.transpose() * gram * w).trace() - 2.0 * (w.transpose() * targets).trace() +
           lambda * w.squaredNorm();
  };
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(gram.rows(), targets.cols());
  double current = objective(w);
  for (std::size_t s = 0; s < steps; ++s) {
    const Eigen::MatrixXd grad = 2.0 * (gram * w + lambda * w - targets);
    w -= learning_rate * grad;
    const double next = objective(w);
    if (!std::isfinite(next) || next > current + 1e-12 * std::max(1.0, std::abs(current)))
      fail(Errc::kStepSize, "objective increased at step " + std::to_string(s) +
                                "; learning rate " + std::to_string(learning_rate) + " too large");
    current = next;
  }
  return w;
}

Eigen::MatrixXd symmetric_inverse_sqrt(const Eigen::Ref<const Eigen::MatrixXd>& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
  if (eig.info() != Eigen::Success) fail(Errc::kSingular, "eigendecomposition failed");
  if (eig.eigenvalues().minCoeff() <= 0.0)
    fail(Errc::kSingular, "matrix is not positive definite");
  return eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace randproto
