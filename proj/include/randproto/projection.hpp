#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace randproto {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class WeightDistribution { kGaussian, kBipolar };
enum class Activation { kIdentity, kRelu, kSquare };

std::string to_string(WeightDistribution d);
std::string to_string(Activation a);
WeightDistribution parse_distribution(const std::string& name);
Activation parse_activation(const std::string& name);

struct ProjectionSpec {
  std::size_t input_dim = 0;   // L
  std::size_t output_dim = 0;  // M
  WeightDistribution distribution = WeightDistribution::kGaussian;
  Activation activation = Activation::kRelu;
  std::uint64_t seed = 0;

  bool operator==(const ProjectionSpec&) const = default;
};

void apply_activation(Activation activation, Eigen::Ref<RowMatrix> values);

/// Frozen L x M random weights. Entries are drawn row by row (input feature
/// i, then output unit j) from one Rng seeded with spec.seed; weights are
/// unscaled N(0, 1) or +-1.
class ProjectionMatrix {
 public:
  static ProjectionMatrix generate(const ProjectionSpec& spec);

  /// Wraps explicit weights (fixtures and debugging); the spec's seed and
  /// distribution fields are informational only.
  static ProjectionMatrix from_weights(RowMatrix weights, Activation activation);

  const ProjectionSpec& spec() const { return spec_; }
  const RowMatrix& weights() const { return weights_; }
  std::size_t input_dim() const { return spec_.input_dim; }
  std::size_t output_dim() const { return spec_.output_dim; }

  /// h = phi(f^T W).
  Eigen::VectorXd project(std::span<const double> features) const;
  Eigen::VectorXd project(const Eigen::Ref<const Eigen::VectorXd>& features) const;

  /// Row r of the result equals project(features.row(r)) bit for bit.
  RowMatrix project_batch(const Eigen::Ref<const RowMatrix>& features) const;

  /// One bit per entry (1 = +1), row-major, LSB first within each byte.
  /// Only valid for bipolar weights.
  std::vector<std::uint8_t> pack_bipolar() const;
  static RowMatrix unpack_bipolar(std::span<const std::uint8_t> bits,
                                  std::size_t rows, std::size_t cols);

  /// Debug dump: f32 LE matrix preceded by u64 rows and cols.
  void dump(const std::string& path) const;

 private:
  ProjectionMatrix(ProjectionSpec spec, RowMatrix weights)
      : spec_(spec), weights_(std::move(weights)) {}

  ProjectionSpec spec_;
  RowMatrix weights_;
};

/// All pairwise products f_i f_j with i <= j, lexicographic in (i, j).
/// Throws kParameter when the output would exceed `max_outputs`.
Eigen::VectorXd expand_pairwise(const Eigen::Ref<const Eigen::VectorXd>& features,
                                std::size_t max_outputs = 1u << 24);

}  // namespace randproto
