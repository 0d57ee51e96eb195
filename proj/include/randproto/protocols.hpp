#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "randproto/baselines.hpp"
#include "randproto/feature_store.hpp"
#include "randproto/projection.hpp"
#include "randproto/solver.hpp"

namespace randproto {

inline constexpr char kVersion[] = "0.1.0";

// ---- metrics -------------------------------------------------------------
// R is T x T with R(t, i) the accuracy on task i after training task t
// (0-based storage); t below is 1-based as in the usual definitions.

/// A_t = (1/t) sum_{i<=t} R_{t,i}.
double average_accuracy(const Eigen::Ref<const Eigen::MatrixXd>& r, std::size_t t);
/// F_t = (1/(t-1)) sum_{i<t} max_{t'<t} (R_{t',i} - R_{t,i}); throws for t < 2.
double average_forgetting(const Eigen::Ref<const Eigen::MatrixXd>& r, std::size_t t);

// ---- configuration -------------------------------------------------------

enum class ProtocolKind { kCil, kDil, kTaskAgnostic };
enum class Method { kRanpac, kGramNoRp, kNcm, kLda };
enum class TargetMode { kOneHot, kRegression };
enum class FeatureSpace { kRaw, kProjected };

std::string to_string(ProtocolKind p);
std::string to_string(Method m);
std::string to_string(TargetMode t);
std::string to_string(FeatureSpace s);

/// Gaussian-over-class-index sampling for the task-agnostic protocol. The
/// centre of the class distribution moves linearly over the (seed-shuffled)
/// class order from the first to the last class across the micro-tasks.
struct ScheduleConfig {
  std::size_t micro_tasks = 200;
  std::size_t batches_per_micro_task = 5;
  std::size_t batch_size = 48;
  /// Standard deviation in class-index units; 0 selects uniform sampling.
  double width = 2.0;
  std::size_t checkpoint_every = 20;  // micro-tasks between head solves
  double queue_fraction = 0.1;        // held-out share for lambda refresh
};

struct RunConfig {
  std::string dataset;
  ProtocolKind protocol = ProtocolKind::kCil;
  std::size_t num_tasks = 10;
  /// Master seed; split, projection, cross-validation and schedule seeds are
  /// derived from it unless given explicitly.
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> split_seed;
  std::optional<std::uint64_t> projection_seed;

  Method method = Method::kRanpac;
  std::size_t rp_dim = 2000;
  WeightDistribution distribution = WeightDistribution::kGaussian;
  Activation activation = Activation::kRelu;
  LambdaSchedule lambda;
  FeatureSpace baseline_space = FeatureSpace::kRaw;
  LdaOptions lda;
  TargetMode targets = TargetMode::kOneHot;
  ScheduleConfig schedule;
  std::string output;

  std::uint64_t resolved_split_seed() const;
  std::uint64_t resolved_projection_seed() const;
  void validate() const;
};

/// Canonical JSON text (every field present).
std::string config_to_json(const RunConfig& config);
/// Missing fields keep their defaults; unknown keys raise kConfig.
RunConfig config_from_json(const std::string& text);
/// Applies `dotted.key=value` overrides to config JSON text. Values parse as
/// JSON when possible, otherwise as strings.
std::string apply_overrides(const std::string& config_json,
                            std::span<const std::string> overrides);

// ---- results -------------------------------------------------------------

struct PhaseTiming {
  double train_seconds = 0.0;
  double solve_seconds = 0.0;
  double eval_seconds = 0.0;
};

struct Checkpoint {
  std::size_t micro_task = 0;   // 1-based, after this micro-task
  std::uint64_t samples_seen = 0;
  std::size_t classes_seen = 0;
  double lambda = 0.0;
  double accuracy_all = 0.0;    // over the full validation set
  double accuracy_seen = 0.0;   // over validation samples of seen classes
};

struct RunResult {
  std::string config_json;  // resolved configuration
  std::string dataset_name;
  ProtocolKind protocol = ProtocolKind::kCil;
  Method method = Method::kRanpac;

  Eigen::MatrixXd accuracy;            // R; NaN above the diagonal
  std::vector<double> avg_accuracy;    // A_t
  std::vector<double> avg_forgetting;  // F_t, NaN for t = 1
  std::vector<double> lambdas;         // per task, NaN for ncm / lda
  std::vector<std::vector<std::uint32_t>> task_classes;

  // DIL: correct / total per (task, domain).
  std::vector<std::string> domain_names;
  std::vector<std::vector<std::uint64_t>> domain_correct;
  std::vector<std::uint64_t> domain_total;

  std::vector<Checkpoint> checkpoints;  // task-agnostic only
  std::vector<PhaseTiming> timings;     // excluded from determinism checks

  double final_accuracy() const;
  std::size_t num_tasks() const { return static_cast<std::size_t>(accuracy.rows()); }

  std::string to_json(bool include_timings = true) const;
  /// Per-task metrics (or checkpoints); contains no timings.
  std::string to_csv() const;
  std::string summary() const;
};

struct RunSummary {
  std::string dataset_name;
  std::string method;
  std::string protocol;
  std::size_t num_tasks = 0;
  double final_accuracy = 0.0;
  double final_forgetting = 0.0;
  std::string config_json;
};

RunSummary summary_from_json(const std::string& result_json);

struct DomainReport {
  std::vector<std::string> domains;
  Eigen::MatrixXd accuracy;          // tasks x domains
  std::vector<double> macro_mean;    // unweighted mean over domains
  std::vector<double> overall;       // sample-weighted
  std::string to_csv() const;
};

DomainReport dil_domain_report(const RunResult& result);

// ---- runners -------------------------------------------------------------

RunResult run(const RunConfig& config);
RunResult run(const RunConfig& config, const FeatureStore& store);

RunResult run_task_agnostic(const RunConfig& config);
RunResult run_task_agnostic(const RunConfig& config, const FeatureStore& store);

/// Trains a ranpac / gram_no_rp head on `sample_ids` as a single task, with
/// lambda chosen by `config.lambda`.
struct FittedHead {
  std::optional<ProjectionMatrix> projection;
  DecorrelatedHead head;
  Accumulator accumulator;
};
FittedHead fit_gram_head(const RunConfig& config, const FeatureStore& store,
                         std::span<const std::uint64_t> sample_ids);

/// Rows of `store` as a double matrix.
RowMatrix gather_features(const FeatureStore& store, std::span<const std::uint64_t> ids);

}  // namespace randproto
