#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "randproto/feature_store.hpp"
#include "randproto/projection.hpp"
#include "randproto/solver.hpp"

namespace randproto {

struct MonteCarloSpec {
  std::vector<std::size_t> dims{64, 256, 1024, 4096};  // values of M
  std::size_t trials = 2000;
  double sigma = 1.0;
  /// Tail threshold, relative: |z - f.g| > epsilon |f||g| for inner products,
  /// |n^2 / (M sigma^2 |f|^2) - 1| > epsilon for norms.
  double epsilon = 0.05;
  WeightDistribution distribution = WeightDistribution::kGaussian;
  std::uint64_t seed = 0;
};

struct ConcentrationRow {
  std::size_t dim = 0;
  std::size_t trials = 0;
  double expected = 0.0;
  double mean = 0.0;
  double std_dev = 0.0;
  double std_error = 0.0;
  double mean_abs_deviation = 0.0;  // mean |statistic - expected|
  double relative_std = 0.0;        // std_dev / |mean|
  double tail_fraction = 0.0;
};

struct ConcentrationReport {
  std::string kind;  // "inner_product" or "norm"
  std::size_t input_dim = 0;
  double sigma = 0.0;
  double epsilon = 0.0;
  WeightDistribution distribution = WeightDistribution::kGaussian;
  std::vector<ConcentrationRow> rows;

  std::string to_csv() const;
  std::string to_json() const;
};

/// Per trial, draws a fresh L x M matrix W (entries sigma * N(0,1) or
/// sigma * +-1) and records z = (W^T f)^T (W^T g) / (M sigma^2), whose
/// expectation is f^T g. Trial k at dimension M uses the seed
/// derive_seed(derive_seed(seed, "inner-product", M), "trial", k).
ConcentrationReport inner_product_test(const Eigen::Ref<const Eigen::VectorXd>& f,
                                       const Eigen::Ref<const Eigen::VectorXd>& g,
                                       const MonteCarloSpec& spec);

/// As inner_product_test for n = ||W^T f||. `expected` is the leading-order
/// value sigma sqrt(M) ||f||.
ConcentrationReport norm_concentration_test(const Eigen::Ref<const Eigen::VectorXd>& f,
                                            const MonteCarloSpec& spec);

/// Pearson correlation between every pair of columns. Throws
/// kUndefinedSimilarity when a column is constant.
Eigen::MatrixXd pearson_columns(const Eigen::Ref<const Eigen::MatrixXd>& columns);

enum class PrototypeKind { kNcm, kDecorrelated };

struct CorrelationReport {
  PrototypeKind kind = PrototypeKind::kNcm;
  Eigen::MatrixXd cc;  // K x K
  double mean_off_diagonal = 0.0;
  double mean_abs_off_diagonal = 0.0;

  std::string to_csv() const;
};

/// kNcm: columns are the class means of `features`; kDecorrelated: columns of
/// (G + lambda I)^-1 C built from `features` with one-hot targets. Every class
/// in [0, num_classes) needs at least two samples.
CorrelationReport prototype_correlation_report(const Eigen::Ref<const RowMatrix>& features,
                                               std::span<const std::uint32_t> labels,
                                               std::size_t num_classes, PrototypeKind kind,
                                               double lambda);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

struct HistogramReport {
  std::vector<double> edges;  // bins + 1, equal width over the pooled range
  std::vector<std::uint64_t> true_counts;
  std::vector<std::uint64_t> inter_counts;
  /// Histogram intersection of the two normalized histograms, in [0, 1].
  double overlap = 0.0;
  KsResult ks;

  /// Gnuplot-friendly columns: bin centre, true density, inter density.
  std::string to_csv() const;
};

/// scores(n, k) is the similarity of sample n to class k. True-class values
/// are scores(n, labels[n]); inter-class values are all other entries of the
/// row. Non-finite scores (classes without a prototype) are ignored.
HistogramReport similarity_histogram_report(const Eigen::Ref<const RowMatrix>& scores,
                                            std::span<const std::uint32_t> labels,
                                            std::size_t bins = 100);

struct InteractionConfig {
  std::size_t max_features = 100;  // leading features kept
  std::vector<std::size_t> dims{100, 500, 2000, 10000};
  Activation nonlinearity = Activation::kRelu;
  WeightDistribution distribution = WeightDistribution::kGaussian;
  /// M for the identity-activation variant; 0 uses the largest of `dims`.
  std::size_t identity_dim = 0;
  bool include_pairwise = true;
  LambdaSchedule lambda;
  std::uint64_t seed = 0;
};

struct InteractionRow {
  std::string variant;  // raw, pairwise, rp_<activation>, rp_identity
  std::size_t dim = 0;  // features seen by the head
  double lambda = 0.0;
  double accuracy = 0.0;
};

struct InteractionReport {
  std::vector<InteractionRow> rows;
  const InteractionRow& find(const std::string& variant, std::size_t dim = 0) const;
  std::string to_csv() const;
};

/// Fits a single-task Gram head on each feature variant of the train split
/// and reports validation accuracy.
InteractionReport interaction_study(const FeatureStore& store, const InteractionConfig& config);

}  // namespace randproto
