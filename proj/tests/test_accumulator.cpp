#include <gtest/gtest.h>

#include "randproto/accumulator.hpp"
#include "support.hpp"

using namespace randproto;
using testing_support::Gen;
using testing_support::naive_cross;
using testing_support::naive_gram;
using testing_support::one_hot;
using testing_support::rel_fro;
using testing_support::TempDir;

TEST(PackedSymmetric, LayoutAndAccess) {
  PackedSymmetric p(3);
  Eigen::Matrix3d d;
  d << 1, 2, 3, 2, 4, 5, 3, 5, 6;
  p.add_upper(d);
  const std::vector<double> expected{1, 2, 3, 4, 5, 6};
  EXPECT_EQ(std::vector<double>(p.packed().begin(), p.packed().end()), expected);
  EXPECT_EQ(p(2, 1), 5.0);
  EXPECT_EQ(p(1, 2), 5.0);
  EXPECT_EQ(p.to_dense(), Eigen::MatrixXd(d));
  EXPECT_EQ(p.trace(), 11.0);
}

TEST(PackedSymmetric, RankOneMatchesDense) {
  Gen gen(1);
  PackedSymmetric p(7);
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(7, 7);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd v = gen.vector(7);
    const double a = gen.uniform(-1, 2);
    p.rank_one_update(v, a);
    dense += a * v * v.transpose();
  }
  EXPECT_LT(rel_fro(p.to_dense(), dense), 1e-14);
  EXPECT_ERRC(p.rank_one_update(Eigen::VectorXd::Ones(6)), Errc::kDimensionMismatch);
}

TEST(Accumulator, BatchMatchesNaiveSums) {
  Gen gen(2);
  const auto labels = gen.labels(300, 5);
  const RowMatrix h = gen.rows(300, 11);
  auto acc = Accumulator::classification(11, 5);
  acc.update_batch_labels(h, labels);
  EXPECT_LT(rel_fro(acc.gram_dense(), naive_gram(h)), 1e-13);
  EXPECT_LT(rel_fro(acc.prototypes(), naive_cross(h, one_hot(labels, 5))), 1e-13);
  EXPECT_EQ(acc.num_samples(), 300u);
  std::vector<std::uint64_t> counts(5, 0);
  for (auto y : labels) ++counts[y];
  EXPECT_EQ(acc.class_counts(), counts);
}

TEST(Accumulator, SingleUpdatesMatchBatch) {
  Gen gen(3);
  const auto labels = gen.labels(64, 4);
  const RowMatrix h = gen.rows(64, 9);
  auto a = Accumulator::classification(9, 4), b = a, c = a;
  a.update_batch_labels(h, labels);
  b.update_batch(h, one_hot(labels, 4));
  for (std::size_t r = 0; r < labels.size(); ++r) c.update_label(h.row(Eigen::Index(r)).transpose(), labels[r]);
  EXPECT_LT(rel_fro(a.gram_dense(), c.gram_dense()), 1e-13);
  EXPECT_LT(rel_fro(a.prototypes(), c.prototypes()), 1e-13);
  EXPECT_EQ(a.class_counts(), b.class_counts());
  EXPECT_EQ(a.class_counts(), c.class_counts());
}

TEST(Accumulator, OrderInvarianceProperty) {
  Gen gen(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto n = static_cast<Eigen::Index>(gen.range(10, 200));
    const auto M = static_cast<Eigen::Index>(gen.range(1, 16));
    const std::size_t K = gen.range(1, 6);
    const RowMatrix h = gen.rows(n, M);
    const auto labels = gen.labels(std::size_t(n), K);
    auto ref = Accumulator::classification(std::size_t(M), K);
    ref.update_batch_labels(h, labels);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[std::size_t(i)] = i;
    gen.shuffle(order);
    auto perm = Accumulator::classification(std::size_t(M), K);
    // random chunking, some chunks merged from separate accumulators
    std::size_t pos = 0;
    while (pos < order.size()) {
      const std::size_t len = std::min(order.size() - pos, gen.range(1, 40));
      RowMatrix chunk(Eigen::Index(len), M);
      std::vector<std::uint32_t> y(len);
      for (std::size_t k = 0; k < len; ++k) {
        chunk.row(Eigen::Index(k)) = h.row(order[pos + k]);
        y[k] = labels[std::size_t(order[pos + k])];
      }
      if (gen.index(2)) {
        perm.update_batch_labels(chunk, y);
      } else {
        auto part = Accumulator::classification(std::size_t(M), K);
        part.update_batch_labels(chunk, y);
        perm.merge_from(part);
      }
      pos += len;
    }
    ASSERT_LT(relative_frobenius(ref.gram_dense(), perm.gram_dense()), 1e-12);
    ASSERT_LT(relative_frobenius(ref.prototypes(), perm.prototypes()), 1e-12);
    ASSERT_EQ(ref.class_counts(), perm.class_counts());
    ASSERT_EQ(ref.num_samples(), perm.num_samples());
  }
}

TEST(Accumulator, MergeIsAdditive) {
  Gen gen(5);
  auto a = Accumulator::regression(6, 3), b = a;
  const RowMatrix ha = gen.rows(20, 6), ya = gen.rows(20, 3), hb = gen.rows(15, 6), yb = gen.rows(15, 3);
  a.update_batch(ha, ya);
  b.update_batch(hb, yb);
  const auto ab = Accumulator::merge(a, b), ba = Accumulator::merge(b, a);
  EXPECT_EQ(ab.num_samples(), 35u);
  EXPECT_LT(rel_fro(ab.gram_dense(), ba.gram_dense()), 1e-15);
  EXPECT_LT(rel_fro(ab.gram_dense(), naive_gram(ha) + naive_gram(hb)), 1e-13);
  EXPECT_LT(rel_fro(ab.prototypes(), naive_cross(ha, ya) + naive_cross(hb, yb)), 1e-13);
  EXPECT_ERRC(a.merge_from(Accumulator::regression(5, 3)), Errc::kShapeMismatch);
}

TEST(Accumulator, ClassMeans) {
  auto acc = Accumulator::classification(2, 3);
  acc.update_label(Eigen::Vector2d(1, 2), 0);
  acc.update_label(Eigen::Vector2d(3, 4), 0);
  acc.update_label(Eigen::Vector2d(5, 6), 2);
  EXPECT_EQ(acc.class_mean(0), Eigen::Vector2d(2, 3));
  EXPECT_EQ(acc.class_mean(2), Eigen::Vector2d(5, 6));
  EXPECT_ERRC(acc.class_mean(1), Errc::kUndefinedPrototype);
  EXPECT_ERRC(acc.class_means(), Errc::kUndefinedPrototype);
  EXPECT_ERRC(acc.update_label(Eigen::Vector2d(0, 0), 3), Errc::kValidation);
  EXPECT_ERRC(acc.update(Eigen::Vector2d(0, 0), Eigen::Vector3d(1, 1, 0)), Errc::kValidation);
  EXPECT_ERRC(acc.update(Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 0, 0)), Errc::kDimensionMismatch);
}

TEST(Accumulator, ConstructionErrors) {
  EXPECT_ERRC(Accumulator(0, 2, 2), Errc::kParameter);
  EXPECT_ERRC(Accumulator(3, 2, 3), Errc::kParameter);
  auto reg = Accumulator::regression(3, 2);
  EXPECT_ERRC(reg.update_label(Eigen::Vector3d(1, 2, 3), 0), Errc::kParameter);
}

TEST(Accumulator, SnapshotRoundTrip) {
  Gen gen(6);
  auto acc = Accumulator::classification(5, 3);
  acc.update_batch_labels(gen.rows(40, 5), gen.labels(40, 3));
  const auto bytes = acc.snapshot();
  EXPECT_EQ(bytes.size(), 8u + 32u + 8u * (15 + 15 + 3));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "PFACC001");
  EXPECT_TRUE(Accumulator::restore(bytes) == acc);

  TempDir dir;
  acc.save((dir / "acc.bin").string());
  EXPECT_TRUE(Accumulator::load((dir / "acc.bin").string()) == acc);

  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_ERRC(Accumulator::restore(truncated), Errc::kCorruption);
  auto version = bytes;
  version[7] = '2';
  EXPECT_ERRC(Accumulator::restore(version), Errc::kVersionMismatch);
  auto junk = bytes;
  junk[0] = 'Z';
  EXPECT_ERRC(Accumulator::restore(junk), Errc::kCorruption);
}

TEST(RelativeFrobenius, Basics) {
  const Eigen::Matrix2d a = Eigen::Matrix2d::Identity();
  EXPECT_EQ(relative_frobenius(a, a), 0.0);
  EXPECT_NEAR(relative_frobenius(a, 2 * a), 0.5, 1e-15);
  EXPECT_EQ(relative_frobenius(Eigen::Matrix2d::Zero(), Eigen::Matrix2d::Zero()), 0.0);
}
