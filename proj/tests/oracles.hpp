#pragma once

// Independent numerical oracles and seeded generators shared by the unit and
// acceptance tests. They do not go through the library's own Rng.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>

#include "randproto/error.hpp"
#include "randproto/feature_store.hpp"
#include "randproto/projection.hpp"

namespace testing_support {

using randproto::RowMatrix;

/// Seeded generator for property tests (std::mt19937_64, not the library Rng).
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(eng_); }
  std::size_t range(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(eng_);
  }

  Eigen::VectorXd vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (auto& x : v) x = normal();
    return v;
  }
  Eigen::MatrixXd matrix(Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal();
    return m;
  }
  RowMatrix rows(Eigen::Index r, Eigen::Index c) { return matrix(r, c); }

  std::vector<std::uint32_t> labels(std::size_t n, std::size_t k) {
    std::vector<std::uint32_t> y(n);
    for (auto& v : y) v = static_cast<std::uint32_t>(index(k));
    return y;
  }

  template <typename T>
  void shuffle(std::vector<T>& items) { std::shuffle(items.begin(), items.end(), eng_); }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

inline RowMatrix one_hot(const std::vector<std::uint32_t>& labels, std::size_t k) {
  RowMatrix y = RowMatrix::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(k));
  for (std::size_t r = 0; r < labels.size(); ++r) y(static_cast<Eigen::Index>(r), labels[r]) = 1.0;
  return y;
}

/// Gaussian elimination with partial pivoting, column by column; solves A X = B.
inline Eigen::MatrixXd gauss_solve(Eigen::MatrixXd a, Eigen::MatrixXd b) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index p = k;
    for (Eigen::Index i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(p, k))) p = i;
    if (p != k) {
      a.row(k).swap(a.row(p));
      b.row(k).swap(b.row(p));
    }
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double m = a(i, k) / a(k, k);
      for (Eigen::Index j = k; j < n; ++j) a(i, j) -= m * a(k, j);
      for (Eigen::Index j = 0; j < b.cols(); ++j) b(i, j) -= m * b(k, j);
    }
  }
  Eigen::MatrixXd x(n, b.cols());
  for (Eigen::Index j = 0; j < b.cols(); ++j)
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      double s = b(i, j);
      for (Eigen::Index c = i + 1; c < n; ++c) s -= a(i, c) * x(c, j);
      x(i, j) = s / a(i, i);
    }
  return x;
}

/// G = sum_n h_n h_n^T by explicit loops.
inline Eigen::MatrixXd naive_gram(const RowMatrix& h) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(h.cols(), h.cols());
  for (Eigen::Index n = 0; n < h.rows(); ++n)
    for (Eigen::Index i = 0; i < h.cols(); ++i)
      for (Eigen::Index j = 0; j < h.cols(); ++j) g(i, j) += h(n, i) * h(n, j);
  return g;
}

inline Eigen::MatrixXd naive_cross(const RowMatrix& h, const RowMatrix& y) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(h.cols(), y.cols());
  for (Eigen::Index n = 0; n < h.rows(); ++n)
    for (Eigen::Index i = 0; i < h.cols(); ++i)
      for (Eigen::Index k = 0; k < y.cols(); ++k) c(i, k) += h(n, i) * y(n, k);
  return c;
}

inline double rel_fro(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-300});
}

/// Data for the Gram-head / LDA agreement check: zero-mean features,
/// equiprobable classes whose means have equal quadratic form under
/// G^{-1}, with G = H^T H over all samples. Means are +-a along k rotated
/// axes (K = 2k classes); within-class offsets are +-s_i along every axis,
/// with a common s on the mean axes and varied s_i elsewhere.
struct GramLdaFixture {
  RowMatrix h;                          // N x L samples
  std::vector<std::uint32_t> labels;
  Eigen::MatrixXd gram;                 // H^T H
  Eigen::MatrixXd class_sums;           // L x K, C for one-hot targets
  Eigen::MatrixXd class_means;          // L x K
};

inline GramLdaFixture make_gram_lda_fixture(Gen& gen, Eigen::Index L, Eigen::Index k) {
  // random rotation from the QR factor of a Gaussian matrix
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gen.matrix(L, L)).householderQ();
  const double a = 2.0, common = 0.7;
  std::vector<double> scale(static_cast<std::size_t>(L), common);
  for (Eigen::Index i = k; i < L; ++i) scale[std::size_t(i)] = gen.uniform(0.2, 3.0);

  GramLdaFixture fx;
  const Eigen::Index K = 2 * k;
  std::vector<Eigen::VectorXd> rows;
  for (Eigen::Index y = 0; y < K; ++y) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(L);
    mean[y / 2] = y % 2 == 0 ? a : -a;
    for (Eigen::Index i = 0; i < L; ++i)
      for (double sign : {1.0, -1.0}) {
        Eigen::VectorXd x = mean;
        x[i] += sign * scale[std::size_t(i)];
        rows.push_back(q * x);
        fx.labels.push_back(static_cast<std::uint32_t>(y));
      }
  }
  fx.h.resize(static_cast<Eigen::Index>(rows.size()), L);
  for (std::size_t r = 0; r < rows.size(); ++r) fx.h.row(Eigen::Index(r)) = rows[r].transpose();
  fx.gram = fx.h.transpose() * fx.h;
  fx.class_sums = Eigen::MatrixXd::Zero(L, K);
  for (std::size_t r = 0; r < rows.size(); ++r) fx.class_sums.col(fx.labels[r]) += rows[r];
  fx.class_means = fx.class_sums / static_cast<double>(2 * L);
  return fx;
}

}  // namespace testing_support
