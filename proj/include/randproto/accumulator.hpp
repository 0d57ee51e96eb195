#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "randproto/projection.hpp"

namespace randproto {

/// Symmetric matrix stored as its packed upper triangle, row by row:
/// (i, j) with i <= j lives at i*n - i*(i-1)/2 + (j - i).
class PackedSymmetric {
 public:
  PackedSymmetric() = default;
  explicit PackedSymmetric(std::size_t n) : n_(n), data_(n * (n + 1) / 2, 0.0) {}

  std::size_t dim() const { return n_; }
  std::span<const double> packed() const { return data_; }
  std::span<double> packed() { return data_; }

  double operator()(std::size_t i, std::size_t j) const {
    return i <= j ? data_[offset(i, j)] : data_[offset(j, i)];
  }

  /// this += alpha * v v^T (upper triangle only).
  void rank_one_update(const Eigen::Ref<const Eigen::VectorXd>& v, double alpha = 1.0);
  /// this += upper triangle of `dense` (assumed symmetric).
  void add_upper(const Eigen::Ref<const Eigen::MatrixXd>& dense);
  void add(const PackedSymmetric& other);

  Eigen::MatrixXd to_dense() const;
  double trace() const;

  bool operator==(const PackedSymmetric&) const = default;

 private:
  std::size_t offset(std::size_t i, std::size_t j) const {
    return i * n_ - i * (i - 1) / 2 + (j - i);
  }

  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// Streaming Gram / target-prototype statistics: G = sum h h^T, C = sum h y^T.
///
/// Classification mode (num_classes > 0) requires D == K and one-hot targets
/// and keeps per-class counts. Regression mode (num_classes == 0) accepts
/// arbitrary dense targets.
class Accumulator {
 public:
  Accumulator() = default;
  Accumulator(std::size_t feature_dim, std::size_t target_dim, std::size_t num_classes);

  static Accumulator classification(std::size_t feature_dim, std::size_t num_classes) {
    return Accumulator(feature_dim, num_classes, num_classes);
  }
  static Accumulator regression(std::size_t feature_dim, std::size_t target_dim) {
    return Accumulator(feature_dim, target_dim, 0);
  }

  std::size_t feature_dim() const { return gram_.dim(); }
  std::size_t target_dim() const { return static_cast<std::size_t>(prototypes_.cols()); }
  std::size_t num_classes() const { return counts_.size(); }
  bool is_classification() const { return !counts_.empty(); }
  std::uint64_t num_samples() const { return num_samples_; }

  const PackedSymmetric& gram() const { return gram_; }
  Eigen::MatrixXd gram_dense() const { return gram_.to_dense(); }
  /// M x D; column y is c_y in classification mode.
  const Eigen::MatrixXd& prototypes() const { return prototypes_; }
  const std::vector<std::uint64_t>& class_counts() const { return counts_; }

  void update(const Eigen::Ref<const Eigen::VectorXd>& h,
              const Eigen::Ref<const Eigen::VectorXd>& y);
  void update_label(const Eigen::Ref<const Eigen::VectorXd>& h, std::uint32_t label);

  /// Rows of `h` are samples. Uses a symmetric rank-k product per block; the
  /// result matches per-sample updates up to floating-point reassociation.
  void update_batch(const Eigen::Ref<const RowMatrix>& h, const Eigen::Ref<const RowMatrix>& y);
  void update_batch_labels(const Eigen::Ref<const RowMatrix>& h,
                           std::span<const std::uint32_t> labels);

  static Accumulator merge(const Accumulator& a, const Accumulator& b);
  void merge_from(const Accumulator& other);

  /// c_y / n_y; throws kUndefinedPrototype when n_y == 0.
  Eigen::VectorXd class_mean(std::uint32_t label) const;
  /// M x K matrix of class means; throws if any class is empty.
  Eigen::MatrixXd class_means() const;

  /// Snapshot format: "PFACC001", u64 M, D, K, N, packed G (f64), C
  /// column-major (f64), counts (u64); all little-endian.
  std::vector<std::uint8_t> snapshot() const;
  static Accumulator restore(std::span<const std::uint8_t> bytes);
  void save(const std::string& path) const;
  static Accumulator load(const std::string& path);

  bool operator==(const Accumulator& other) const;

 private:
  void check_shapes(Eigen::Index h_len, Eigen::Index y_len) const;

  PackedSymmetric gram_;
  Eigen::MatrixXd prototypes_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t num_samples_ = 0;
};

inline constexpr char kAccumulatorMagic[] = "PFACC001";

/// Relative Frobenius distance ||A - B|| / max(||A||, ||B||, tiny).
double relative_frobenius(const Eigen::Ref<const Eigen::MatrixXd>& a,
                          const Eigen::Ref<const Eigen::MatrixXd>& b);

}  // namespace randproto
