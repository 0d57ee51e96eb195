#include "randproto/baselines.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "randproto/error.hpp"
#include "randproto/solver.hpp"

namespace randproto {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_label(std::uint32_t label, std::size_t num_classes) {
  if (label >= num_classes)
    fail(Errc::kValidation, "label " + std::to_string(label) + " outside [0, " +
                                std::to_string(num_classes) + ")");
}

}  // namespace

NcmHead::NcmHead(std::size_t dim, std::size_t num_classes)
    : sums_(Eigen::MatrixXd::Zero(dim, num_classes)),
      counts_(num_classes, 0),
      unit_prototypes_(Eigen::MatrixXd::Zero(dim, num_classes)) {
  if (dim == 0 || num_classes == 0) fail(Errc::kParameter, "NCM head needs dim, K >= 1");
}

NcmHead NcmHead::from_prototypes(const Eigen::Ref<const Eigen::MatrixXd>& prototypes) {
  NcmHead head(static_cast<std::size_t>(prototypes.rows()),
               static_cast<std::size_t>(prototypes.cols()));
  head.sums_ = prototypes;
  for (std::size_t y = 0; y < head.counts_.size(); ++y) {
    head.counts_[y] = 1;
    head.refresh_cache(static_cast<std::uint32_t>(y));
  }
  return head;
}

void NcmHead::refresh_cache(std::uint32_t label) {
  const double norm = sums_.col(label).norm();
  if (norm > 0)
    unit_prototypes_.col(label) = sums_.col(label) / norm;
  else
    unit_prototypes_.col(label).setZero();
}

void NcmHead::update(const Eigen::Ref<const Eigen::VectorXd>& f, std::uint32_t label) {
  check_label(label, counts_.size());
  if (f.size() != sums_.rows()) fail(Errc::kDimensionMismatch, "NCM update length");
  sums_.col(label) += f;
  ++counts_[label];
  refresh_cache(label);
}

void NcmHead::update_batch(const Eigen::Ref<const RowMatrix>& f,
                           std::span<const std::uint32_t> labels) {
  if (static_cast<std::size_t>(f.rows()) != labels.size())
    fail(Errc::kShapeMismatch, "NCM batch rows != labels");
  if (f.cols() != sums_.rows()) fail(Errc::kDimensionMismatch, "NCM batch width");
  std::vector<char> touched(counts_.size(), 0);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    check_label(labels[r], counts_.size());
    sums_.col(labels[r]) += f.row(static_cast<Eigen::Index>(r)).transpose();
    ++counts_[labels[r]];
    touched[labels[r]] = 1;
  }
  for (std::size_t y = 0; y < touched.size(); ++y)
    if (touched[y]) refresh_cache(static_cast<std::uint32_t>(y));
}

void NcmHead::merge_from(const NcmHead& other) {
  if (other.sums_.rows() != sums_.rows() || other.sums_.cols() != sums_.cols())
    fail(Errc::kShapeMismatch, "NCM merge shapes");
  sums_ += other.sums_;
  for (std::size_t y = 0; y < counts_.size(); ++y) {
    counts_[y] += other.counts_[y];
    refresh_cache(static_cast<std::uint32_t>(y));
  }
}

Eigen::VectorXd NcmHead::prototype(std::uint32_t label) const {
  check_label(label, counts_.size());
  if (counts_[label] == 0)
    fail(Errc::kUndefinedPrototype, "class " + std::to_string(label) + " has no samples");
  return sums_.col(label) / static_cast<double>(counts_[label]);
}

Eigen::VectorXd NcmHead::score(const Eigen::Ref<const Eigen::VectorXd>& f) const {
  if (f.size() != sums_.rows()) fail(Errc::kDimensionMismatch, "NCM score length");
  const double norm = f.norm();
  if (!(norm > 0)) fail(Errc::kUndefinedSimilarity, "zero-norm input vector");
  Eigen::VectorXd s = unit_prototypes_.transpose() * f / norm;
  for (std::size_t y = 0; y < counts_.size(); ++y) {
    if (counts_[y] == 0) {
      s[static_cast<Eigen::Index>(y)] = -kInf;
    } else if (unit_prototypes_.col(static_cast<Eigen::Index>(y)).squaredNorm() == 0) {
      fail(Errc::kUndefinedSimilarity, "class " + std::to_string(y) + " prototype has zero norm");
    }
  }
  return s;
}

RowMatrix NcmHead::score_batch(const Eigen::Ref<const RowMatrix>& f) const {
  RowMatrix out(f.rows(), static_cast<Eigen::Index>(counts_.size()));
  for (Eigen::Index r = 0; r < f.rows(); ++r) out.row(r) = score(f.row(r).transpose()).transpose();
  return out;
}

std::size_t NcmHead::predict(const Eigen::Ref<const Eigen::VectorXd>& f) const {
  return argmax(score(f));
}

LdaModel LdaModel::from_statistics(const Eigen::Ref<const Eigen::MatrixXd>& covariance,
                                   const Eigen::Ref<const Eigen::MatrixXd>& means,
                                   std::span<const double> priors, double shrinkage) {
  const Eigen::Index d = covariance.rows();
  if (covariance.cols() != d || means.rows() != d)
    fail(Errc::kShapeMismatch, "LDA covariance / means shapes");
  if (priors.size() != static_cast<std::size_t>(means.cols()))
    fail(Errc::kShapeMismatch, "LDA priors length != K");
  if (!(shrinkage >= 0.0)) fail(Errc::kParameter, "LDA shrinkage must be non-negative");

  LdaModel model;
  model.shrinkage_ = shrinkage;
  model.means_ = means;
  double total = 0.0;
  for (double p : priors) {
    if (!(p >= 0.0)) fail(Errc::kParameter, "LDA priors must be non-negative");
    total += p;
  }
  if (!(total > 0.0)) fail(Errc::kParameter, "LDA priors sum to zero");
  for (double p : priors) model.priors_.push_back(p / total);

  Eigen::MatrixXd shifted = covariance;
  shifted.diagonal().array() += shrinkage;
  Eigen::LLT<Eigen::MatrixXd> llt(shifted);
  if (llt.info() != Eigen::Success)
    fail(Errc::kSingular, "LDA covariance is not positive definite (shrinkage " +
                              std::to_string(shrinkage) + ")");
  model.factor_ = llt.matrixL();
  model.weights_ = llt.solve(means);
  model.bias_.resize(means.cols());
  for (Eigen::Index y = 0; y < means.cols(); ++y) {
    const double p = model.priors_[static_cast<std::size_t>(y)];
    model.bias_[y] = p > 0 ? -0.5 * means.col(y).dot(model.weights_.col(y)) + std::log(p) : -kInf;
  }
  return model;
}

Eigen::VectorXd LdaModel::discriminant(const Eigen::Ref<const Eigen::VectorXd>& f) const {
  if (f.size() != means_.rows()) fail(Errc::kDimensionMismatch, "LDA score length");
  Eigen::VectorXd psi = weights_.transpose() * f + bias_;
  for (Eigen::Index y = 0; y < psi.size(); ++y)
    if (priors_[static_cast<std::size_t>(y)] == 0.0) psi[y] = -kInf;
  return psi;
}

RowMatrix LdaModel::discriminant_batch(const Eigen::Ref<const RowMatrix>& f) const {
  if (f.cols() != means_.rows()) fail(Errc::kDimensionMismatch, "LDA batch width");
  RowMatrix psi = f * weights_;
  psi.rowwise() += bias_.transpose();
  for (Eigen::Index y = 0; y < psi.cols(); ++y)
    if (priors_[static_cast<std::size_t>(y)] == 0.0) psi.col(y).setConstant(-kInf);
  return psi;
}

Eigen::VectorXd LdaModel::mahalanobis(const Eigen::Ref<const Eigen::VectorXd>& f) const {
  if (f.size() != means_.rows()) fail(Errc::kDimensionMismatch, "Mahalanobis input length");
  const auto lower = factor_.triangularView<Eigen::Lower>();
  Eigen::VectorXd out(means_.cols());
  for (Eigen::Index y = 0; y < means_.cols(); ++y) {
    const double p = priors_[static_cast<std::size_t>(y)];
    if (p == 0.0) {
      out[y] = kInf;
      continue;
    }
    const Eigen::VectorXd z = lower.solve(f - means_.col(y));
    out[y] = z.squaredNorm() - std::log(p * p);
  }
  return out;
}

std::size_t LdaModel::predict(const Eigen::Ref<const Eigen::VectorXd>& f) const {
  return argmax(discriminant(f));
}

std::size_t LdaModel::predict_mahalanobis(const Eigen::Ref<const Eigen::VectorXd>& f) const {
  return argmax(-mahalanobis(f));
}

LdaState::LdaState(std::size_t dim, std::size_t num_classes)
    : means_(Eigen::MatrixXd::Zero(dim, num_classes)),
      scatter_(Eigen::MatrixXd::Zero(dim, dim)),
      counts_(num_classes, 0) {
  if (dim == 0 || num_classes == 0) fail(Errc::kParameter, "LDA state needs dim, K >= 1");
}

void LdaState::update(const Eigen::Ref<const Eigen::VectorXd>& f, std::uint32_t label) {
  check_label(label, counts_.size());
  if (f.size() != means_.rows()) fail(Errc::kDimensionMismatch, "LDA update length");
  const auto n = static_cast<double>(++counts_[label]);
  ++total_;
  const Eigen::VectorXd delta = f - means_.col(label);
  means_.col(label) += delta / n;
  scatter_.noalias() += delta * (f - means_.col(label)).transpose();
}

void LdaState::update_batch(const Eigen::Ref<const RowMatrix>& f,
                            std::span<const std::uint32_t> labels) {
  if (static_cast<std::size_t>(f.rows()) != labels.size())
    fail(Errc::kShapeMismatch, "LDA batch rows != labels");
  for (std::size_t r = 0; r < labels.size(); ++r)
    update(f.row(static_cast<Eigen::Index>(r)).transpose(), labels[r]);
}

void LdaState::merge_from(const LdaState& other) {
  if (other.means_.rows() != means_.rows() || other.counts_.size() != counts_.size())
    fail(Errc::kShapeMismatch, "LDA merge shapes");
  scatter_ += other.scatter_;
  for (std::size_t y = 0; y < counts_.size(); ++y) {
    const auto na = static_cast<double>(counts_[y]);
    const auto nb = static_cast<double>(other.counts_[y]);
    if (nb == 0) continue;
    const auto col = static_cast<Eigen::Index>(y);
    const Eigen::VectorXd delta = other.means_.col(col) - means_.col(col);
    scatter_.noalias() += (na * nb / (na + nb)) * delta * delta.transpose();
    means_.col(col) += delta * (nb / (na + nb));
    counts_[y] += other.counts_[y];
  }
  total_ += other.total_;
}

Eigen::MatrixXd LdaState::covariance() const {
  if (total_ < 2) fail(Errc::kDegenerateSplit, "LDA needs at least 2 samples");
  Eigen::MatrixXd s = scatter_ / static_cast<double>(total_);
  return 0.5 * (s + s.transpose());
}

LdaModel LdaState::fit(const LdaOptions& options) const {
  const Eigen::MatrixXd s = covariance();
  const double eps = options.relative_shrinkage * s.trace() / static_cast<double>(s.rows());
  std::vector<double> priors(counts_.size());
  for (std::size_t y = 0; y < counts_.size(); ++y)
    priors[y] = counts_[y] == 0 ? 0.0 : (options.uniform_priors ? 1.0 : double(counts_[y]));
  return LdaModel::from_statistics(s, means_, priors, eps);
}

}  // namespace randproto
