#include "randproto/accumulator.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

#include "randproto/binary_io.hpp"
#include "randproto/error.hpp"

namespace randproto {

void PackedSymmetric::rank_one_update(const Eigen::Ref<const Eigen::VectorXd>& v,
                                      double alpha) {
  if (static_cast<std::size_t>(v.size()) != n_)
    fail(Errc::kDimensionMismatch, "rank-one update length mismatch");
  double* p = data_.data();
  for (std::size_t i = 0; i < n_; ++i) {
    const double a = alpha * v[i];
    if (a != 0.0)
      for (std::size_t j = i; j < n_; ++j) p[j - i] += a * v[j];
    p += n_ - i;
  }
}

void PackedSymmetric::add_upper(const Eigen::Ref<const Eigen::MatrixXd>& dense) {
  if (static_cast<std::size_t>(dense.rows()) != n_ || static_cast<std::size_t>(dense.cols()) != n_)
    fail(Errc::kShapeMismatch, "add_upper shape mismatch");
  double* p = data_.data();
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = i; j < n_; ++j) p[j - i] += dense(i, j);
    p += n_ - i;
  }
}

void PackedSymmetric::add(const PackedSymmetric& other) {
  if (other.n_ != n_) fail(Errc::kShapeMismatch, "packed matrix size mismatch");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
}

Eigen::MatrixXd PackedSymmetric::to_dense() const {
  Eigen::MatrixXd out(n_, n_);
  const double* p = data_.data();
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = i; j < n_; ++j) {
      out(i, j) = p[j - i];
      out(j, i) = p[j - i];
    }
    p += n_ - i;
  }
  return out;
}

double PackedSymmetric::trace() const {
  double t = 0.0;
  for (std::size_t i = 0; i < n_; ++i) t += data_[offset(i, i)];
  return t;
}

Accumulator::Accumulator(std::size_t feature_dim, std::size_t target_dim,
                         std::size_t num_classes)
    : gram_(feature_dim),
      prototypes_(Eigen::MatrixXd::Zero(feature_dim, target_dim)),
      counts_(num_classes, 0) {
  if (feature_dim == 0 || target_dim == 0)
    fail(Errc::kParameter, "accumulator needs M >= 1 and D >= 1");
  if (num_classes > 0 && num_classes != target_dim)
    fail(Errc::kParameter, "classification mode needs D == K");
}

void Accumulator::check_shapes(Eigen::Index h_len, Eigen::Index y_len) const {
  if (static_cast<std::size_t>(h_len) != feature_dim())
    fail(Errc::kDimensionMismatch, "h has length " + std::to_string(h_len) + ", expected " +
                                       std::to_string(feature_dim()));
  if (static_cast<std::size_t>(y_len) != target_dim())
    fail(Errc::kDimensionMismatch, "y has length " + std::to_string(y_len) + ", expected " +
                                       std::to_string(target_dim()));
}

namespace {

// Index of the hot entry, or -1 when `y` is not one-hot.
Eigen::Index one_hot_index(const Eigen::Ref<const Eigen::VectorXd>& y) {
  Eigen::Index hot = -1;
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    if (y[k] == 1.0) {
      if (hot >= 0) return -1;
      hot = k;
    } else if (y[k] != 0.0) {
      return -1;
    }
  }
  return hot;
}

}  // namespace

void Accumulator::update(const Eigen::Ref<const Eigen::VectorXd>& h,
                         const Eigen::Ref<const Eigen::VectorXd>& y) {
  check_shapes(h.size(), y.size());
  if (is_classification()) {
    const Eigen::Index hot = one_hot_index(y);
    if (hot < 0) fail(Errc::kValidation, "classification target is not one-hot");
    ++counts_[static_cast<std::size_t>(hot)];
  }
  gram_.rank_one_update(h);
  prototypes_.noalias() += h * y.transpose();
  ++num_samples_;
}

void Accumulator::update_label(const Eigen::Ref<const Eigen::VectorXd>& h,
                               std::uint32_t label) {
  if (!is_classification()) fail(Errc::kParameter, "update_label in regression mode");
  check_shapes(h.size(), static_cast<Eigen::Index>(target_dim()));
  if (label >= num_classes())
    fail(Errc::kValidation, "label " + std::to_string(label) + " >= K");
  gram_.rank_one_update(h);
  prototypes_.col(label) += h;
  ++counts_[label];
  ++num_samples_;
}

namespace {

constexpr Eigen::Index kPanel = 256;

// G += H^T H for the rows of `h`, filling the packed upper triangle one row
// panel at a time so the scratch stays at kPanel x M.
void add_gram_block(PackedSymmetric& gram, const Eigen::Ref<const RowMatrix>& h) {
  const Eigen::Index m = h.cols();
  Eigen::MatrixXd scratch;
  auto packed = gram.packed();
  for (Eigen::Index i0 = 0; i0 < m; i0 += kPanel) {
    const Eigen::Index rows = std::min(kPanel, m - i0);
    scratch.noalias() = h.middleCols(i0, rows).transpose() * h.rightCols(m - i0);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const std::size_t i = static_cast<std::size_t>(i0 + r);
      const std::size_t n = static_cast<std::size_t>(m);
      double* p = packed.data() + (i * n - i * (i - 1) / 2);
      for (Eigen::Index c = r; c < m - i0; ++c) p[c - r] += scratch(r, c);
    }
  }
}

}  // namespace

void Accumulator::update_batch(const Eigen::Ref<const RowMatrix>& h,
                               const Eigen::Ref<const RowMatrix>& y) {
  if (h.rows() != y.rows()) fail(Errc::kShapeMismatch, "h and y row counts differ");
  if (h.rows() == 0) return;
  check_shapes(h.cols(), y.cols());
  if (is_classification()) {
    std::vector<std::uint32_t> labels(static_cast<std::size_t>(h.rows()));
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const Eigen::Index hot = one_hot_index(y.row(r).transpose());
      if (hot < 0) fail(Errc::kValidation, "classification target is not one-hot");
      labels[static_cast<std::size_t>(r)] = static_cast<std::uint32_t>(hot);
    }
    update_batch_labels(h, labels);
    return;
  }
  add_gram_block(gram_, h);
  prototypes_.noalias() += h.transpose() * y;
  num_samples_ += static_cast<std::uint64_t>(h.rows());
}

void Accumulator::update_batch_labels(const Eigen::Ref<const RowMatrix>& h,
                                      std::span<const std::uint32_t> labels) {
  if (!is_classification()) fail(Errc::kParameter, "update_batch_labels in regression mode");
  if (static_cast<std::size_t>(h.rows()) != labels.size())
    fail(Errc::kShapeMismatch, "h rows and label count differ");
  if (h.rows() == 0) return;
  check_shapes(h.cols(), static_cast<Eigen::Index>(target_dim()));
  for (std::uint32_t label : labels)
    if (label >= num_classes()) fail(Errc::kValidation, "label " + std::to_string(label) + " >= K");
  add_gram_block(gram_, h);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    prototypes_.col(labels[r]) += h.row(static_cast<Eigen::Index>(r)).transpose();
    ++counts_[labels[r]];
  }
  num_samples_ += labels.size();
}

Accumulator Accumulator::merge(const Accumulator& a, const Accumulator& b) {
  Accumulator out = a;
  out.merge_from(b);
  return out;
}

void Accumulator::merge_from(const Accumulator& other) {
  if (other.feature_dim() != feature_dim() || other.target_dim() != target_dim() ||
      other.num_classes() != num_classes())
    fail(Errc::kShapeMismatch, "cannot merge accumulators of different shapes");
  gram_.add(other.gram_);
  prototypes_ += other.prototypes_;
  for (std::size_t k = 0; k < counts_.size(); ++k) counts_[k] += other.counts_[k];
  num_samples_ += other.num_samples_;
}

Eigen::VectorXd Accumulator::class_mean(std::uint32_t label) const {
  if (!is_classification()) fail(Errc::kParameter, "class means need classification mode");
  if (label >= num_classes()) fail(Errc::kValidation, "label out of range");
  if (counts_[label] == 0)
    fail(Errc::kUndefinedPrototype, "class " + std::to_string(label) + " has no samples");
  return prototypes_.col(label) / static_cast<double>(counts_[label]);
}

Eigen::MatrixXd Accumulator::class_means() const {
  Eigen::MatrixXd out(feature_dim(), num_classes());
  for (std::size_t y = 0; y < num_classes(); ++y)
    out.col(static_cast<Eigen::Index>(y)) = class_mean(static_cast<std::uint32_t>(y));
  return out;
}

std::vector<std::uint8_t> Accumulator::snapshot() const {
  std::ostringstream out(std::ios::binary);
  out.write(kAccumulatorMagic, 8);
  io::write_le<std::uint64_t>(out, feature_dim());
  io::write_le<std::uint64_t>(out, target_dim());
  io::write_le<std::uint64_t>(out, num_classes());
  io::write_le<std::uint64_t>(out, num_samples_);
  io::write_le(out, gram_.packed());
  io::write_le(out, std::span<const double>(prototypes_.data(),
                                            static_cast<std::size_t>(prototypes_.size())));
  io::write_le(out, std::span<const std::uint64_t>(counts_));
  const std::string bytes = out.str();
  return std::vector<std::uint8_t>(bytes.begin(), bytes.end());
}

Accumulator Accumulator::restore(std::span<const std::uint8_t> bytes) {
  std::istringstream in(std::string(bytes.begin(), bytes.end()), std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kAccumulatorMagic, 5) != 0)
    fail(Errc::kCorruption, "not an accumulator snapshot");
  if (std::memcmp(magic, kAccumulatorMagic, 8) != 0)
    fail(Errc::kVersionMismatch, "snapshot version " + std::string(magic + 5, 3) +
                                     ", expected 001");
  std::uint64_t m = 0, d = 0, k = 0, n = 0;
  if (!io::read_le(in, m) || !io::read_le(in, d) || !io::read_le(in, k) || !io::read_le(in, n))
    fail(Errc::kCorruption, "snapshot header truncated");
  const std::uint64_t expected =
      8 + 32 + 8 * (m * (m + 1) / 2 + m * d + k);
  if (bytes.size() != expected) fail(Errc::kCorruption, "snapshot length mismatch");
  Accumulator acc(m, d, k);
  acc.num_samples_ = n;
  io::read_le(in, acc.gram_.packed());
  io::read_le(in, std::span<double>(acc.prototypes_.data(),
                                    static_cast<std::size_t>(acc.prototypes_.size())));
  io::read_le(in, std::span<std::uint64_t>(acc.counts_));
  return acc;
}

void Accumulator::save(const std::string& path) const {
  const auto bytes = snapshot();
  io::AtomicFile file(path);
  file.stream().write(reinterpret_cast<const char*>(bytes.data()),
                      static_cast<std::streamsize>(bytes.size()));
  file.commit();
}

Accumulator Accumulator::load(const std::string& path) {
  const std::string text = io::read_text(path);
  return restore(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

bool Accumulator::operator==(const Accumulator& other) const {
  return gram_ == other.gram_ && prototypes_.rows() == other.prototypes_.rows() &&
         prototypes_.cols() == other.prototypes_.cols() &&
         prototypes_ == other.prototypes_ && counts_ == other.counts_ &&
         num_samples_ == other.num_samples_;
}

double relative_frobenius(const Eigen::Ref<const Eigen::MatrixXd>& a,
                          const Eigen::Ref<const Eigen::MatrixXd>& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

}  // namespace randproto
