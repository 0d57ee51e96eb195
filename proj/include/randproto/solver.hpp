#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "randproto/accumulator.hpp"
#include "randproto/projection.hpp"

namespace randproto {

struct SolveDiagnostics {
  double residual = 0.0;  // ||(G + lambda I) W - C||_F / ||C||_F
  double jitter = 0.0;    // diagonal shift added on top of lambda, if any
  int jitter_retries = 0;
  int refinement_steps = 0;
};

struct SolveOptions {
  double residual_tolerance = 1e-8;
  /// Throw kSingular when an unjittered solve misses the tolerance.
  bool enforce_residual = true;
  int max_refinement_steps = 3;
  int max_jitter_retries = 3;
};

/// Closed-form ridge head W_o = (G + lambda I)^{-1} C.
class DecorrelatedHead {
 public:
  DecorrelatedHead() = default;
  DecorrelatedHead(Eigen::MatrixXd weights, double lambda, SolveDiagnostics diagnostics)
      : weights_(std::move(weights)), lambda_(lambda), diagnostics_(diagnostics) {}

  const Eigen::MatrixXd& weights() const { return weights_; }
  double lambda() const { return lambda_; }
  const SolveDiagnostics& diagnostics() const { return diagnostics_; }
  std::size_t feature_dim() const { return static_cast<std::size_t>(weights_.rows()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(weights_.cols()); }

  /// h^T W_o.
  Eigen::VectorXd score(const Eigen::Ref<const Eigen::VectorXd>& h) const;
  RowMatrix score_batch(const Eigen::Ref<const RowMatrix>& h) const;
  std::size_t predict(const Eigen::Ref<const Eigen::VectorXd>& h) const;

  /// Writes `<stem>.bin` ("PFHEAD01", u64 M, u64 D, u8 width, row-major
  /// f32 or f64 LE) and `<stem>.json` (lambda, residual, M, D, dtype).
  void save(const std::string& stem, bool double_precision = true) const;
  static DecorrelatedHead load(const std::string& stem);

 private:
  Eigen::MatrixXd weights_;
  double lambda_ = 0.0;
  SolveDiagnostics diagnostics_;
};

DecorrelatedHead solve(const Eigen::Ref<const Eigen::MatrixXd>& gram,
                       const Eigen::Ref<const Eigen::MatrixXd>& targets, double lambda,
                       const SolveOptions& options = {});
DecorrelatedHead solve(const Accumulator& acc, double lambda, const SolveOptions& options = {});

/// Index of the largest score; the lowest index wins ties.
std::size_t argmax(const Eigen::Ref<const Eigen::VectorXd>& scores);
/// As argmax, restricted to `allowed` (ascending or not). Throws if empty.
std::size_t argmax_among(const Eigen::Ref<const Eigen::VectorXd>& scores,
                         std::span<const std::uint32_t> allowed);

struct LambdaSchedule {
  std::vector<double> grid = standard_grid();
  double holdout_fraction = 0.2;
  /// Tasks smaller than this skip cross-validation.
  std::size_t min_task_samples = 5;
  /// Lambda used for an undersized first task.
  double first_task_lambda = 1e-2;
  /// When false an undersized task raises kDegenerateSplit instead.
  bool allow_fallback = true;

  /// {1e-8, 1e-7, ..., 1e8}.
  static std::vector<double> standard_grid();
  static LambdaSchedule fixed(double lambda);
  void validate() const;
};

/// Finite, single-pass stream of the current task's (h, y) rows.
class TaskStream {
 public:
  virtual ~TaskStream() = default;
  virtual std::size_t size() const = 0;
  /// Fills up to `max_rows` rows; returns the number produced (0 at end).
  virtual std::size_t next_batch(RowMatrix& h, RowMatrix& y, std::size_t max_rows) = 0;
};

class MatrixTaskStream final : public TaskStream {
 public:
  MatrixTaskStream(RowMatrix h, RowMatrix y);
  std::size_t size() const override { return static_cast<std::size_t>(h_.rows()); }
  std::size_t next_batch(RowMatrix& h, RowMatrix& y, std::size_t max_rows) override;

 private:
  RowMatrix h_;
  RowMatrix y_;
  Eigen::Index cursor_ = 0;
};

struct LambdaSelection {
  double lambda = 0.0;
  std::vector<double> grid;
  std::vector<double> mse;  // per grid value; +inf where the solve failed
  bool fell_back = false;
  std::size_t fit_samples = 0;
  std::size_t holdout_samples = 0;
};

/// Picks the grid value with the lowest held-out MSE (smallest lambda on ties).
LambdaSelection select_lambda(const Accumulator& fit, const Eigen::Ref<const RowMatrix>& holdout_h,
                              const Eigen::Ref<const RowMatrix>& holdout_y,
                              std::span<const double> grid);

struct CrossValidationResult {
  LambdaSelection selection;
  Accumulator accumulator;  // base + the whole task
};

/// Splits the task's samples by `seed` into fit/holdout portions, selects
/// lambda on base + fit, then folds the holdout portion in as well. Only the
/// accumulated statistics of earlier tasks are visible, never their samples.
CrossValidationResult cross_validate_lambda(TaskStream& task, Accumulator base,
                                            const LambdaSchedule& schedule, std::uint64_t seed,
                                            std::optional<double> previous_lambda = std::nullopt);

/// Gradient descent on ||Y^T - W^T H||^2 + lambda ||W||^2 expressed through
/// (G, C); an independent check of the closed form. Throws kStepSize when the
/// objective increases.
Eigen::MatrixXd fit_iterative_oracle(const Eigen::Ref<const Eigen::MatrixXd>& gram,
                                     const Eigen::Ref<const Eigen::MatrixXd>& targets,
                                     double lambda, std::size_t steps, double learning_rate);

/// S^{-1/2} for symmetric positive-definite S (eigendecomposition).
Eigen::MatrixXd symmetric_inverse_sqrt(const Eigen::Ref<const Eigen::MatrixXd>& s);

}  // namespace randproto
