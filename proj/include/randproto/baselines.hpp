#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "randproto/projection.hpp"

namespace randproto {

/// Nearest-class-mean classifier scored by cosine similarity.
class NcmHead {
 public:
  NcmHead() = default;
  NcmHead(std::size_t dim, std::size_t num_classes);

  /// Fixture constructor: one prototype per column, every class marked seen.
  static NcmHead from_prototypes(const Eigen::Ref<const Eigen::MatrixXd>& prototypes);

  std::size_t dim() const { return static_cast<std::size_t>(sums_.rows()); }
  std::size_t num_classes() const { return counts_.size(); }
  const std::vector<std::uint64_t>& class_counts() const { return counts_; }

  void update(const Eigen::Ref<const Eigen::VectorXd>& f, std::uint32_t label);
  void update_batch(const Eigen::Ref<const RowMatrix>& f, std::span<const std::uint32_t> labels);
  void merge_from(const NcmHead& other);

  /// Mean of class y; throws kUndefinedPrototype for an empty class.
  Eigen::VectorXd prototype(std::uint32_t label) const;

  /// Cosine similarity to every prototype; -inf for classes with no samples.
  /// Throws kUndefinedSimilarity for a zero-norm input or prototype.
  Eigen::VectorXd score(const Eigen::Ref<const Eigen::VectorXd>& f) const;
  RowMatrix score_batch(const Eigen::Ref<const RowMatrix>& f) const;
  std::size_t predict(const Eigen::Ref<const Eigen::VectorXd>& f) const;

 private:
  void refresh_cache(std::uint32_t label);

  Eigen::MatrixXd sums_;
  std::vector<std::uint64_t> counts_;
  Eigen::MatrixXd unit_prototypes_;  // normalized means, zero for empty classes
};

struct LdaOptions {
  /// Shrinkage epsilon = relative_shrinkage * trace(S) / dim.
  double relative_shrinkage = 1e-4;
  bool uniform_priors = false;
};

/// Linear discriminant with a shared covariance S, class means and priors.
///
///   psi_y     = f^T S^-1 m_y - 0.5 m_y^T S^-1 m_y + log(pi_y)   (argmax)
///   psi_hat_y = (f - m_y)^T S^-1 (f - m_y) - log(pi_y^2)         (argmin)
///
/// Classes with a zero prior are excluded (-inf / +inf).
class LdaModel {
 public:
  /// `covariance` is used as given plus shrinkage * I; priors need not be
  /// normalized. Throws kSingular if the shifted matrix is not positive
  /// definite.
  static LdaModel from_statistics(const Eigen::Ref<const Eigen::MatrixXd>& covariance,
                                  const Eigen::Ref<const Eigen::MatrixXd>& means,
                                  std::span<const double> priors, double shrinkage);

  std::size_t dim() const { return static_cast<std::size_t>(means_.rows()); }
  std::size_t num_classes() const { return static_cast<std::size_t>(means_.cols()); }
  double shrinkage() const { return shrinkage_; }
  const Eigen::MatrixXd& means() const { return means_; }
  const std::vector<double>& priors() const { return priors_; }

  Eigen::VectorXd discriminant(const Eigen::Ref<const Eigen::VectorXd>& f) const;
  RowMatrix discriminant_batch(const Eigen::Ref<const RowMatrix>& f) const;
  /// Computed from the explicit differences f - m_y, not from psi.
  Eigen::VectorXd mahalanobis(const Eigen::Ref<const Eigen::VectorXd>& f) const;

  std::size_t predict(const Eigen::Ref<const Eigen::VectorXd>& f) const;
  std::size_t predict_mahalanobis(const Eigen::Ref<const Eigen::VectorXd>& f) const;

 private:
  Eigen::MatrixXd factor_;        // lower Cholesky factor of S + eps I
  Eigen::MatrixXd means_;         // dim x K
  Eigen::MatrixXd weights_;       // S^-1 m_y
  Eigen::VectorXd bias_;          // -0.5 m^T S^-1 m + log(pi)
  std::vector<double> priors_;    // normalized
  double shrinkage_ = 0.0;
};

/// Streaming class means and pooled within-class scatter
/// S_w = sum_y sum_{i in y} (x_i - m_y)(x_i - m_y)^T, updated one sample at
/// a time with Welford's recurrence and merged with Chan's formula.
class LdaState {
 public:
  LdaState() = default;
  LdaState(std::size_t dim, std::size_t num_classes);

  std::size_t dim() const { return static_cast<std::size_t>(means_.rows()); }
  std::size_t num_classes() const { return counts_.size(); }
  std::uint64_t num_samples() const { return total_; }
  const std::vector<std::uint64_t>& class_counts() const { return counts_; }
  const Eigen::MatrixXd& means() const { return means_; }
  const Eigen::MatrixXd& scatter() const { return scatter_; }

  void update(const Eigen::Ref<const Eigen::VectorXd>& f, std::uint32_t label);
  void update_batch(const Eigen::Ref<const RowMatrix>& f, std::span<const std::uint32_t> labels);
  void merge_from(const LdaState& other);

  /// Covariance S_w / N; needs N >= 2.
  Eigen::MatrixXd covariance() const;
  LdaModel fit(const LdaOptions& options = {}) const;

 private:
  Eigen::MatrixXd means_;
  Eigen::MatrixXd scatter_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

}  // namespace randproto
