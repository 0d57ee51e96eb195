#include "randproto/projection.hpp"

#include <algorithm>
#include <fstream>

#include "randproto/binary_io.hpp"
#include "randproto/error.hpp"
#include "randproto/rng.hpp"

namespace randproto {

std::string to_string(WeightDistribution d) {
  return d == WeightDistribution::kGaussian ? "gaussian" : "bipolar";
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kSquare: return "square";
  }
  return "?";
}

WeightDistribution parse_distribution(const std::string& name) {
  if (name == "gaussian") return WeightDistribution::kGaussian;
  if (name == "bipolar") return WeightDistribution::kBipolar;
  fail(Errc::kConfig, "unknown weight distribution '" + name + "'");
}

Activation parse_activation(const std::string& name) {
  if (name == "identity" || name == "linear") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "square") return Activation::kSquare;
  fail(Errc::kConfig, "unknown activation '" + name + "'");
}

void apply_activation(Activation activation, Eigen::Ref<RowMatrix> values) {
  switch (activation) {
    case Activation::kIdentity:
      break;
    case Activation::kRelu:
      values = values.cwiseMax(0.0);
      break;
    case Activation::kSquare:
      values = values.cwiseAbs2();
      break;
  }
}

ProjectionMatrix ProjectionMatrix::generate(const ProjectionSpec& spec) {
  if (spec.input_dim == 0 || spec.output_dim == 0)
    fail(Errc::kParameter, "projection needs L >= 1 and M >= 1");
  RowMatrix w(spec.input_dim, spec.output_dim);
  Rng rng(spec.seed);
  double* data = w.data();
  const std::size_t n = spec.input_dim * spec.output_dim;
  if (spec.distribution == WeightDistribution::kGaussian) {
    for (std::size_t k = 0; k < n; ++k) data[k] = rng.gaussian();
  } else {
    for (std::size_t k = 0; k < n; ++k) data[k] = rng.bipolar();
  }
  return ProjectionMatrix(spec, std::move(w));
}

ProjectionMatrix ProjectionMatrix::from_weights(RowMatrix weights,
                                                Activation activation) {
  if (weights.rows() == 0 || weights.cols() == 0)
    fail(Errc::kParameter, "projection weights must be non-empty");
  ProjectionSpec spec;
  spec.input_dim = static_cast<std::size_t>(weights.rows());
  spec.output_dim = static_cast<std::size_t>(weights.cols());
  spec.activation = activation;
  return ProjectionMatrix(spec, std::move(weights));
}

Eigen::VectorXd ProjectionMatrix::project(std::span<const double> features) const {
  return project(Eigen::Map<const Eigen::VectorXd>(features.data(),
                                                   static_cast<Eigen::Index>(features.size())));
}

Eigen::VectorXd ProjectionMatrix::project(
    const Eigen::Ref<const Eigen::VectorXd>& features) const {
  RowMatrix one = features.transpose();
  return project_batch(one).row(0).transpose();
}

RowMatrix ProjectionMatrix::project_batch(const Eigen::Ref<const RowMatrix>& features) const {
  if (static_cast<std::size_t>(features.cols()) != spec_.input_dim)
    fail(Errc::kDimensionMismatch, "feature length " + std::to_string(features.cols()) +
                                       " != projection input " + std::to_string(spec_.input_dim));
  // Each output accumulates over inputs in ascending order, independent of
  // how many rows are processed together, so batch and single calls agree
  // exactly.
  constexpr Eigen::Index kRowBlock = 32;
  RowMatrix out = RowMatrix::Zero(features.rows(), weights_.cols());
  for (Eigen::Index r0 = 0; r0 < features.rows(); r0 += kRowBlock) {
    const Eigen::Index rows = std::min(kRowBlock, features.rows() - r0);
    auto block = out.middleRows(r0, rows);
    for (Eigen::Index i = 0; i < weights_.rows(); ++i)
      block.noalias() += features.block(r0, i, rows, 1) * weights_.row(i);
  }
  apply_activation(spec_.activation, out);
  return out;
}

std::vector<std::uint8_t> ProjectionMatrix::pack_bipolar() const {
  const std::size_t n = static_cast<std::size_t>(weights_.size());
  std::vector<std::uint8_t> bits((n + 7) / 8, 0);
  const double* data = weights_.data();
  for (std::size_t k = 0; k < n; ++k) {
    if (data[k] != 1.0 && data[k] != -1.0)
      fail(Errc::kParameter, "pack_bipolar on non-bipolar weights");
    if (data[k] > 0) bits[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
  }
  return bits;
}

RowMatrix ProjectionMatrix::unpack_bipolar(std::span<const std::uint8_t> bits,
                                           std::size_t rows, std::size_t cols) {
  if (bits.size() * 8 < rows * cols) fail(Errc::kShapeMismatch, "bit buffer too short");
  RowMatrix w(rows, cols);
  double* data = w.data();
  for (std::size_t k = 0; k < rows * cols; ++k)
    data[k] = (bits[k / 8] >> (k % 8)) & 1u ? 1.0 : -1.0;
  return w;
}

void ProjectionMatrix::dump(const std::string& path) const {
  io::AtomicFile file(path);
  io::write_le<std::uint64_t>(file.stream(), static_cast<std::uint64_t>(weights_.rows()));
  io::write_le<std::uint64_t>(file.stream(), static_cast<std::uint64_t>(weights_.cols()));
  for (Eigen::Index k = 0; k < weights_.size(); ++k)
    io::write_le<float>(file.stream(), static_cast<float>(weights_.data()[k]));
  file.commit();
}

Eigen::VectorXd expand_pairwise(const Eigen::Ref<const Eigen::VectorXd>& features,
                                std::size_t max_outputs) {
  const std::size_t L = static_cast<std::size_t>(features.size());
  const std::size_t n = L * (L + 1) / 2;
  if (n > max_outputs)
    fail(Errc::kParameter, "pairwise expansion of L=" + std::to_string(L) +
                               " exceeds the output budget");
  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = i; j < L; ++j) out[k++] = features[i] * features[j];
  return out;
}

}  // namespace randproto
