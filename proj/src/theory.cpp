#include "randproto/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "randproto/accumulator.hpp"
#include "randproto/error.hpp"
#include "randproto/rng.hpp"

namespace randproto {

namespace {

void check_spec(const MonteCarloSpec& spec) {
  if (!(spec.sigma > 0.0)) fail(Errc::kParameter, "sigma must be positive");
  if (spec.trials < 2) fail(Errc::kParameter, "need at least 2 trials");
  if (spec.dims.empty()) fail(Errc::kParameter, "no projection dimensions given");
  for (auto m : spec.dims)
    if (m == 0) fail(Errc::kParameter, "projection dimension must be >= 1");
}

inline double draw(Rng& rng, WeightDistribution d) {
  return d == WeightDistribution::kGaussian ? rng.gaussian() : rng.bipolar();
}

ConcentrationRow summarize(std::size_t dim, double expected, const std::vector<double>& values,
                           const std::vector<char>& tail) {
  ConcentrationRow row;
  row.dim = dim;
  row.trials = values.size();
  row.expected = expected;
  const double n = static_cast<double>(values.size());
  double sum = 0.0, abs_dev = 0.0;
  for (double v : values) {
    sum += v;
    abs_dev += std::abs(v - expected);
  }
  row.mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - row.mean) * (v - row.mean);
  row.std_dev = std::sqrt(ss / (n - 1.0));
  row.std_error = row.std_dev / std::sqrt(n);
  row.mean_abs_deviation = abs_dev / n;
  row.relative_std = row.mean != 0.0 ? row.std_dev / std::abs(row.mean) : std::numeric_limits<double>::infinity();
  std::size_t hits = 0;
  for (char t : tail) hits += t ? 1 : 0;
  row.tail_fraction = static_cast<double>(hits) / n;
  return row;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

ConcentrationReport inner_product_test(const Eigen::Ref<const Eigen::VectorXd>& f,
                                       const Eigen::Ref<const Eigen::VectorXd>& g,
                                       const MonteCarloSpec& spec) {
  check_spec(spec);
  if (f.size() != g.size() || f.size() == 0)
    fail(Errc::kDimensionMismatch, "f and g must have the same non-zero length");
  const Eigen::Index L = f.size();
  const double expected = f.dot(g);
  const double scale = f.norm() * g.norm();

  ConcentrationReport report;
  report.kind = "inner_product";
  report.input_dim = static_cast<std::size_t>(L);
  report.sigma = spec.sigma;
  report.epsilon = spec.epsilon;
  report.distribution = spec.distribution;

  std::vector<double> values(spec.trials);
  std::vector<char> tail(spec.trials);
  for (std::size_t M : spec.dims) {
    const std::uint64_t dim_seed = derive_seed(spec.seed, "inner-product", M);
    for (std::size_t trial = 0; trial < spec.trials; ++trial) {
      Rng rng(derive_seed(dim_seed, "trial", trial));
      double dot = 0.0;
      for (std::size_t j = 0; j < M; ++j) {
        double u = 0.0, v = 0.0;
        for (Eigen::Index i = 0; i < L; ++i) {
          const double w = spec.sigma * draw(rng, spec.distribution);
          u += w * f[i];
          v += w * g[i];
        }
        dot += u * v;
      }
      const double z = dot / (static_cast<double>(M) * spec.sigma * spec.sigma);
      values[trial] = z;
      tail[trial] = std::abs(z - expected) > spec.epsilon * scale;
    }
    report.rows.push_back(summarize(M, expected, values, tail));
  }
  return report;
}

ConcentrationReport norm_concentration_test(const Eigen::Ref<const Eigen::VectorXd>& f,
                                            const MonteCarloSpec& spec) {
  check_spec(spec);
  if (f.size() == 0) fail(Errc::kDimensionMismatch, "f must be non-empty");
  const Eigen::Index L = f.size();
  const double f2 = f.squaredNorm();

  ConcentrationReport report;
  report.kind = "norm";
  report.input_dim = static_cast<std::size_t>(L);
  report.sigma = spec.sigma;
  report.epsilon = spec.epsilon;
  report.distribution = spec.distribution;

  std::vector<double> values(spec.trials);
  std::vector<char> tail(spec.trials);
  for (std::size_t M : spec.dims) {
    const std::uint64_t dim_seed = derive_seed(spec.seed, "norm", M);
    for (std::size_t trial = 0; trial < spec.trials; ++trial) {
      Rng rng(derive_seed(dim_seed, "trial", trial));
      double sq = 0.0;
      for (std::size_t j = 0; j < M; ++j) {
        double u = 0.0;
        for (Eigen::Index i = 0; i < L; ++i) u += spec.sigma * draw(rng, spec.distribution) * f[i];
        sq += u * u;
      }
      values[trial] = std::sqrt(sq);
      const double ratio = sq / (static_cast<double>(M) * spec.sigma * spec.sigma * f2);
      tail[trial] = std::abs(ratio - 1.0) > spec.epsilon;
    }
    report.rows.push_back(summarize(M, spec.sigma * std::sqrt(double(M) * f2), values, tail));
  }
  return report;
}

std::string ConcentrationReport::to_csv() const {
  std::ostringstream out;
  out << "kind,M,trials,expected,mean,std_dev,std_error,mean_abs_deviation,relative_std,tail_fraction\n";
  for (const auto& r : rows)
    out << kind << ',' << r.dim << ',' << r.trials << ',' << fmt(r.expected) << ',' << fmt(r.mean)
        << ',' << fmt(r.std_dev) << ',' << fmt(r.std_error) << ',' << fmt(r.mean_abs_deviation)
        << ',' << fmt(r.relative_std) << ',' << fmt(r.tail_fraction) << '\n';
  return out.str();
}

std::string ConcentrationReport::to_json() const {
  nlohmann::json j;
  j["kind"] = kind;
  j["L"] = input_dim;
  j["sigma"] = sigma;
  j["epsilon"] = epsilon;
  j["distribution"] = to_string(distribution);
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows)
    rs.push_back({{"M", r.dim},
                  {"trials", r.trials},
                  {"expected", r.expected},
                  {"mean", r.mean},
                  {"std_dev", r.std_dev},
                  {"std_error", r.std_error},
                  {"mean_abs_deviation", r.mean_abs_deviation},
                  {"relative_std", r.relative_std},
                  {"tail_fraction", r.tail_fraction}});
  j["rows"] = rs;
  return j.dump(2) + "\n";
}

Eigen::MatrixXd pearson_columns(const Eigen::Ref<const Eigen::MatrixXd>& columns) {
  if (columns.rows() < 2) fail(Errc::kParameter, "Pearson correlation needs vectors of length >= 2");
  Eigen::MatrixXd centred = columns.rowwise() - columns.colwise().mean();
  for (Eigen::Index k = 0; k < centred.cols(); ++k) {
    const double norm = centred.col(k).norm();
    if (!(norm > 0)) fail(Errc::kUndefinedSimilarity, "column " + std::to_string(k) + " is constant");
    centred.col(k) /= norm;
  }
  Eigen::MatrixXd cc = centred.transpose() * centred;
  cc.diagonal().setOnes();
  return cc;
}

CorrelationReport prototype_correlation_report(const Eigen::Ref<const RowMatrix>& features,
                                               std::span<const std::uint32_t> labels,
                                               std::size_t num_classes, PrototypeKind kind,
                                               double lambda) {
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    fail(Errc::kShapeMismatch, "features rows != labels");
  if (num_classes < 2) fail(Errc::kParameter, "need at least 2 classes");
  auto acc = Accumulator::classification(static_cast<std::size_t>(features.cols()), num_classes);
  acc.update_batch_labels(features, labels);
  for (std::size_t y = 0; y < num_classes; ++y)
    if (acc.class_counts()[y] < 2)
      fail(Errc::kUndefinedPrototype, "class " + std::to_string(y) + " has fewer than 2 samples");

  CorrelationReport report;
  report.kind = kind;
  const Eigen::MatrixXd columns =
      kind == PrototypeKind::kNcm ? acc.class_means() : solve(acc, lambda).weights();
  report.cc = pearson_columns(columns);
  const auto K = report.cc.rows();
  double sum = 0.0, abs_sum = 0.0;
  for (Eigen::Index a = 0; a < K; ++a)
    for (Eigen::Index b = 0; b < K; ++b)
      if (a != b) {
        sum += report.cc(a, b);
        abs_sum += std::abs(report.cc(a, b));
      }
  const double pairs = static_cast<double>(K * (K - 1));
  report.mean_off_diagonal = sum / pairs;
  report.mean_abs_off_diagonal = abs_sum / pairs;
  return report;
}

std::string CorrelationReport::to_csv() const {
  std::ostringstream out;
  for (Eigen::Index a = 0; a < cc.rows(); ++a) {
    for (Eigen::Index b = 0; b < cc.cols(); ++b) out << (b ? "," : "") << fmt(cc(a, b));
    out << '\n';
  }
  return out.str();
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) fail(Errc::kParameter, "KS test needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  // Asymptotic Kolmogorov distribution with the usual small-sample correction.
  const double ne = std::sqrt(na * nb / (na + nb));
  const double lam = (ne + 0.12 + 0.11 / ne) * d;
  double p = 0.0;
  if (lam < 1e-3) {
    p = 1.0;
  } else {
    double sign = 1.0;
    for (int k = 1; k <= 200; ++k) {
      const double term = sign * std::exp(-2.0 * k * k * lam * lam);
      p += term;
      if (std::abs(term) < 1e-16) break;
      sign = -sign;
    }
    p = std::clamp(2.0 * p, 0.0, 1.0);
  }
  return {d, p};
}

HistogramReport similarity_histogram_report(const Eigen::Ref<const RowMatrix>& scores,
                                            std::span<const std::uint32_t> labels,
                                            std::size_t bins) {
  if (static_cast<std::size_t>(scores.rows()) != labels.size())
    fail(Errc::kShapeMismatch, "score rows != labels");
  if (bins == 0) fail(Errc::kParameter, "need at least one bin");
  std::vector<double> true_sims, inter_sims;
  for (Eigen::Index n = 0; n < scores.rows(); ++n) {
    const auto y = labels[static_cast<std::size_t>(n)];
    if (y >= scores.cols()) fail(Errc::kValidation, "label outside score columns");
    for (Eigen::Index k = 0; k < scores.cols(); ++k) {
      const double s = scores(n, k);
      if (!std::isfinite(s)) continue;
      (k == y ? true_sims : inter_sims).push_back(s);
    }
  }
  if (true_sims.empty() || inter_sims.empty())
    fail(Errc::kParameter, "need both true-class and inter-class similarities");

  HistogramReport report;
  double lo = true_sims.front(), hi = lo;
  for (const auto* v : {&true_sims, &inter_sims})
    for (double s : *v) {
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  if (hi == lo) hi = lo + 1.0;
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) report.edges.push_back(lo + width * static_cast<double>(b));
  report.edges.back() = hi;
  auto bin_of = [&](double s) {
    auto b = static_cast<std::size_t>((s - lo) / width);
    return std::min(b, bins - 1);
  };
  report.true_counts.assign(bins, 0);
  report.inter_counts.assign(bins, 0);
  for (double s : true_sims) ++report.true_counts[bin_of(s)];
  for (double s : inter_sims) ++report.inter_counts[bin_of(s)];
  const double nt = static_cast<double>(true_sims.size());
  const double ni = static_cast<double>(inter_sims.size());
  for (std::size_t b = 0; b < bins; ++b)
    report.overlap += std::min(report.true_counts[b] / nt, report.inter_counts[b] / ni);
  report.ks = ks_two_sample(std::move(true_sims), std::move(inter_sims));
  return report;
}

std::string HistogramReport::to_csv() const {
  std::uint64_t nt = 0, ni = 0;
  for (auto c : true_counts) nt += c;
  for (auto c : inter_counts) ni += c;
  std::ostringstream out;
  out << "# centre true_class inter_class (fractions); overlap " << fmt(overlap) << ", KS D "
      << fmt(ks.statistic) << " p " << fmt(ks.p_value) << '\n';
  for (std::size_t b = 0; b < true_counts.size(); ++b)
    out << fmt(0.5 * (edges[b] + edges[b + 1])) << ' ' << fmt(double(true_counts[b]) / double(nt))
        << ' ' << fmt(double(inter_counts[b]) / double(ni)) << '\n';
  return out.str();
}

namespace {

// Streams transformed training rows into cross-validation without holding
// the transformed matrix.
template <typename Transform>
class TransformStream final : public TaskStream {
 public:
  TransformStream(const RowMatrix& f, const RowMatrix& y, Transform transform)
      : f_(f), y_(y), transform_(std::move(transform)) {}

  std::size_t size() const override { return static_cast<std::size_t>(f_.rows()); }

  std::size_t next_batch(RowMatrix& h, RowMatrix& y, std::size_t max_rows) override {
    const Eigen::Index n = std::min<Eigen::Index>(static_cast<Eigen::Index>(max_rows), f_.rows() - cursor_);
    if (n <= 0) return 0;
    h = transform_(f_.middleRows(cursor_, n));
    y = y_.middleRows(cursor_, n);
    cursor_ += n;
    return static_cast<std::size_t>(n);
  }

 private:
  const RowMatrix& f_;
  const RowMatrix& y_;
  Transform transform_;
  Eigen::Index cursor_ = 0;
};

RowMatrix pairwise_rows(const Eigen::Ref<const RowMatrix>& f) {
  const Eigen::Index L = f.cols();
  RowMatrix out(f.rows(), L * (L + 1) / 2);
  for (Eigen::Index r = 0; r < f.rows(); ++r)
    out.row(r) = expand_pairwise(f.row(r).transpose()).transpose();
  return out;
}

}  // namespace

const InteractionRow& InteractionReport::find(const std::string& variant, std::size_t dim) const {
  for (const auto& r : rows)
    if (r.variant == variant && (dim == 0 || r.dim == dim)) return r;
  fail(Errc::kParameter, "no interaction row '" + variant + "'");
}

std::string InteractionReport::to_csv() const {
  std::ostringstream out;
  out << "variant,dim,lambda,accuracy\n";
  for (const auto& r : rows)
    out << r.variant << ',' << r.dim << ',' << fmt(r.lambda) << ',' << fmt(r.accuracy) << '\n';
  return out.str();
}

InteractionReport interaction_study(const FeatureStore& store, const InteractionConfig& config) {
  const auto& manifest = store.index.manifest;
  if (manifest.num_train == 0 || manifest.num_val == 0)
    fail(Errc::kValidation, "interaction study needs train and validation samples");
  config.lambda.validate();
  const auto L = static_cast<Eigen::Index>(std::min<std::size_t>(manifest.feature_dim, config.max_features));
  const std::size_t K = manifest.num_classes;

  auto load = [&](std::uint64_t begin, std::uint64_t end, RowMatrix& f, std::vector<std::uint32_t>& y) {
    f.resize(static_cast<Eigen::Index>(end - begin), L);
    y.clear();
    for (std::uint64_t id = begin; id < end; ++id) {
      const auto row = store.row(id);
      for (Eigen::Index k = 0; k < L; ++k) f(static_cast<Eigen::Index>(id - begin), k) = row[static_cast<std::size_t>(k)];
      y.push_back(store.index.labels[id]);
    }
  };
  RowMatrix train_f, val_f;
  std::vector<std::uint32_t> train_y, val_y;
  load(0, manifest.num_train, train_f, train_y);
  load(manifest.num_train, manifest.num_samples(), val_f, val_y);
  RowMatrix one_hot = RowMatrix::Zero(train_f.rows(), static_cast<Eigen::Index>(K));
  for (std::size_t r = 0; r < train_y.size(); ++r) one_hot(static_cast<Eigen::Index>(r), train_y[r]) = 1.0;
  std::vector<std::uint32_t> allowed;
  {
    std::vector<char> seen(K, 0);
    for (auto y : train_y) seen[y] = 1;
    for (std::uint32_t y = 0; y < K; ++y)
      if (seen[y]) allowed.push_back(y);
  }

  InteractionReport report;
  auto evaluate = [&](const std::string& variant, std::size_t dim, auto transform) {
    TransformStream stream(train_f, one_hot, transform);
    auto cv = cross_validate_lambda(stream, Accumulator::classification(dim, K), config.lambda,
                                    derive_seed(config.seed, "interaction-cv", dim));
    const auto head = solve(cv.accumulator, cv.selection.lambda);
    std::size_t hits = 0;
    constexpr Eigen::Index kChunk = 1024;
    for (Eigen::Index r0 = 0; r0 < val_f.rows(); r0 += kChunk) {
      const Eigen::Index n = std::min(kChunk, val_f.rows() - r0);
      const RowMatrix scores = head.score_batch(transform(val_f.middleRows(r0, n)));
      for (Eigen::Index r = 0; r < n; ++r)
        hits += argmax_among(scores.row(r).transpose(), allowed) == val_y[static_cast<std::size_t>(r0 + r)];
    }
    report.rows.push_back({variant, dim, cv.selection.lambda,
                           static_cast<double>(hits) / static_cast<double>(val_f.rows())});
  };

  auto identity = [](const Eigen::Ref<const RowMatrix>& f) { return RowMatrix(f); };
  evaluate("raw", static_cast<std::size_t>(L), identity);
  if (config.include_pairwise)
    evaluate("pairwise", static_cast<std::size_t>(L * (L + 1) / 2),
             [](const Eigen::Ref<const RowMatrix>& f) { return pairwise_rows(f); });

  auto rp_variant = [&](std::size_t M, Activation activation) {
    ProjectionSpec spec;
    spec.input_dim = static_cast<std::size_t>(L);
    spec.output_dim = M;
    spec.distribution = config.distribution;
    spec.activation = activation;
    spec.seed = derive_seed(config.seed, "interaction-projection", M);
    const auto projection = ProjectionMatrix::generate(spec);
    evaluate("rp_" + to_string(activation), M,
             [&projection](const Eigen::Ref<const RowMatrix>& f) { return projection.project_batch(f); });
  };
  for (std::size_t M : config.dims) rp_variant(M, config.nonlinearity);
  std::size_t identity_dim = config.identity_dim;
  if (identity_dim == 0 && !config.dims.empty())
    identity_dim = *std::max_element(config.dims.begin(), config.dims.end());
  if (identity_dim > 0 && config.nonlinearity != Activation::kIdentity)
    rp_variant(identity_dim, Activation::kIdentity);
  return report;
}

}  // namespace randproto
