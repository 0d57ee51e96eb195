#include <cmath>

#include <Eigen/Dense>

#include "randproto/error.hpp"
#include "randproto/feature_store.hpp"
#include "randproto/rng.hpp"

namespace randproto {

namespace {

Eigen::VectorXd gaussian_vector(Rng& rng, Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.gaussian();
  return v;
}

struct SignedPermutation {
  std::vector<std::uint32_t> index;
  std::vector<double> sign;

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) y[i] = sign[i] * x[index[i]];
    return y;
  }
};

SignedPermutation random_signed_permutation(Rng& rng, std::uint32_t n) {
  SignedPermutation p;
  p.index.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) p.index[i] = i;
  rng.shuffle(std::span<std::uint32_t>(p.index));
  for (std::uint32_t i = 0; i < n; ++i) p.sign.push_back(rng.bipolar());
  return p;
}

// Gain of the random part of the anisotropic noise mixing.
constexpr double kMixingGain = 3.0;

}  // namespace

FeatureStore synth_generate(const SynthSpec& spec) {
  if (spec.num_classes < 2) fail(Errc::kParameter, "synthetic store needs K >= 2");
  if (spec.feature_dim < 2) fail(Errc::kParameter, "synthetic store needs L >= 2");
  if (spec.covariance == CovarianceKind::kAnisotropic &&
      !(spec.rho >= 0.0 && spec.rho < 1.0))
    fail(Errc::kParameter, "rho must lie in [0, 1)");
  if (!(spec.domain_shift >= 0.0 && spec.domain_shift <= 1.0))
    fail(Errc::kParameter, "domain_shift must lie in [0, 1]");

  const std::uint32_t K = spec.num_classes;
  const std::uint32_t L = spec.feature_dim;
  const bool anisotropic = spec.covariance == CovarianceKind::kAnisotropic;

  Rng mean_rng(derive_seed(spec.seed, "synth-means"));
  std::vector<Eigen::VectorXd> means;
  const Eigen::VectorXd shared = gaussian_vector(mean_rng, L);
  for (std::uint32_t y = 0; y < K; ++y) {
    Eigen::VectorXd z = gaussian_vector(mean_rng, L);
    if (anisotropic)
      z = std::sqrt(spec.rho) * shared + std::sqrt(1.0 - spec.rho) * z;
    means.push_back(spec.mean_scale * z);
  }

  Eigen::MatrixXd mixing = Eigen::MatrixXd::Identity(L, L);
  if (anisotropic) {
    Rng mix_rng(derive_seed(spec.seed, "synth-mixing"));
    Eigen::MatrixXd random(L, L);
    for (std::uint32_t i = 0; i < L; ++i)
      for (std::uint32_t j = 0; j < L; ++j)
        random(i, j) = mix_rng.gaussian() * kMixingGain / std::sqrt(double(L));
    mixing = std::sqrt(1.0 - spec.rho) * mixing + std::sqrt(spec.rho) * random;
  }

  const std::uint32_t num_domains = std::max<std::uint32_t>(spec.num_domains, 1);
  std::vector<SignedPermutation> domain_maps;
  Rng domain_rng(derive_seed(spec.seed, "synth-domains"));
  for (std::uint32_t d = 0; d < num_domains; ++d)
    domain_maps.push_back(random_signed_permutation(domain_rng, L));

  std::vector<FeatureRecord> records;
  auto emit = [&](Rng& rng, std::uint32_t per_class, Split split) {
    for (std::uint32_t d = 0; d < num_domains; ++d) {
      for (std::uint32_t y = 0; y < K; ++y) {
        for (std::uint32_t i = 0; i < per_class; ++i) {
          Eigen::VectorXd x = means[y] + mixing * gaussian_vector(rng, L);
          if (d > 0)
            x = (1.0 - spec.domain_shift) * x + spec.domain_shift * domain_maps[d].apply(x);
          FeatureRecord r;
          r.features.resize(L);
          for (std::uint32_t k = 0; k < L; ++k) r.features[k] = static_cast<float>(x[k]);
          r.label = y;
          if (spec.num_domains > 0) r.domain_id = d;
          r.sample_id = records.size();
          r.split = split;
          records.push_back(std::move(r));
        }
      }
    }
  };
  Rng train_rng(derive_seed(spec.seed, "synth-train"));
  emit(train_rng, spec.train_per_class, Split::kTrain);
  Rng val_rng(derive_seed(spec.seed, "synth-val"));
  emit(val_rng, spec.val_per_class, Split::kVal);

  StoreInfo info;
  info.name = anisotropic ? "synth-anisotropic" : "synth-isotropic";
  info.num_classes = K;
  for (std::uint32_t y = 0; y < K; ++y) info.class_names.push_back("class" + std::to_string(y));
  for (std::uint32_t d = 0; d < spec.num_domains; ++d)
    info.domains.push_back("domain" + std::to_string(d));
  return FeatureStore::from_records(records, info);
}

FeatureStore synth_xor(const XorSpec& spec) {
  if (spec.feature_dim < 2) fail(Errc::kParameter, "XOR data needs L >= 2");
  std::vector<FeatureRecord> records;
  auto emit = [&](Rng& rng, std::uint32_t count, Split split) {
    for (std::uint32_t i = 0; i < count; ++i) {
      FeatureRecord r;
      r.features.resize(spec.feature_dim);
      for (auto& v : r.features) v = static_cast<float>(rng.gaussian());
      r.label = (r.features[0] * r.features[1] > 0.0f) ? 1u : 0u;
      r.sample_id = records.size();
      r.split = split;
      records.push_back(std::move(r));
    }
  };
  Rng train_rng(derive_seed(spec.seed, "xor-train"));
  emit(train_rng, spec.num_train, Split::kTrain);
  Rng val_rng(derive_seed(spec.seed, "xor-val"));
  emit(val_rng, spec.num_val, Split::kVal);
  return FeatureStore::from_records(records, StoreInfo{"synth-xor", 2, {"opposite", "same"}, {}});
}

}  // namespace randproto
