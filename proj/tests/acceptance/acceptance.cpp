// Acceptance suite: one PASS / FAIL / SKIP line per criterion, exit status 1
// if anything failed.
//
//   randproto_acceptance [name-substring ...]
//
// The real-feature check runs only when RANDPROTO_REAL_FEATURES names a
// feature store directory (CIFAR100 features from a ViT-B/16 backbone).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <future>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "oracles.hpp"
#include "randproto/accumulator.hpp"
#include "randproto/baselines.hpp"
#include "randproto/feature_store.hpp"
#include "randproto/protocols.hpp"
#include "randproto/rng.hpp"
#include "randproto/solver.hpp"
#include "randproto/theory.hpp"

using namespace randproto;
using testing_support::Gen;

namespace {

enum class Verdict { kPass, kFail, kSkip };

struct Outcome {
  Verdict verdict = Verdict::kFail;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome check(bool ok, std::string detail) { return {ok ? Verdict::kPass : Verdict::kFail, std::move(detail)}; }

RowMatrix train_rows(const FeatureStore& store, std::vector<std::uint64_t>* ids = nullptr) {
  std::vector<std::uint64_t> all;
  for (std::uint64_t id = 0; id < store.index.manifest.num_train; ++id) all.push_back(id);
  if (ids) *ids = all;
  return gather_features(store, all);
}

// ---- order invariance ----------------------------------------------------------

Outcome order_invariance() {
  SynthSpec spec;
  spec.num_classes = 10;
  spec.feature_dim = 64;
  spec.train_per_class = 200;
  spec.val_per_class = 50;
  spec.seed = 101;
  const auto store = synth_generate(spec);

  ProjectionSpec ps;
  ps.input_dim = 64;
  ps.output_dim = 1000;
  ps.seed = 7;
  const auto projection = ProjectionMatrix::generate(ps);
  std::vector<std::uint64_t> train_ids;
  const RowMatrix h = projection.project_batch(train_rows(store, &train_ids));
  std::vector<std::uint64_t> val_ids;
  for (std::uint64_t id = store.index.manifest.num_train; id < store.size(); ++id) val_ids.push_back(id);
  const RowMatrix hv = projection.project_batch(gather_features(store, val_ids));
  const std::span<const std::uint32_t> labels(store.index.labels.data(), train_ids.size());

  auto reference = Accumulator::classification(1000, 10);
  reference.update_batch_labels(h, labels);
  const double lambda = 1.0;
  const auto ref_head = solve(reference, lambda);
  std::vector<std::size_t> ref_pred(val_ids.size());
  for (Eigen::Index r = 0; r < hv.rows(); ++r) ref_pred[std::size_t(r)] = ref_head.predict(hv.row(r).transpose());

  double worst = 0.0;
  std::size_t mismatches = 0;
  for (std::uint64_t perm = 0; perm < 5; ++perm) {
    // task order from a fresh class split, sample order shuffled within each task,
    // streamed in random chunk sizes with every other task merged from a side accumulator
    const auto split = split_cil(store.index, 5, 1000 + perm);
    Rng rng(derive_seed(perm, "order"));
    auto acc = Accumulator::classification(1000, 10);
    for (std::size_t t = 0; t < split.num_tasks(); ++t) {
      std::vector<std::uint64_t> ids = split.train[t];
      rng.shuffle(std::span(ids));
      auto side = Accumulator::classification(1000, 10);
      auto& target = t % 2 ? side : acc;
      std::size_t pos = 0;
      while (pos < ids.size()) {
        const std::size_t len = std::min<std::size_t>(ids.size() - pos, 1 + rng.bounded(97));
        RowMatrix chunk(Eigen::Index(len), 1000);
        std::vector<std::uint32_t> y(len);
        for (std::size_t k = 0; k < len; ++k) {
          chunk.row(Eigen::Index(k)) = h.row(Eigen::Index(ids[pos + k]));
          y[k] = store.index.labels[ids[pos + k]];
        }
        target.update_batch_labels(chunk, y);
        pos += len;
      }
      if (t % 2) acc.merge_from(side);
    }
    worst = std::max({worst, relative_frobenius(reference.gram_dense(), acc.gram_dense()),
                      relative_frobenius(reference.prototypes(), acc.prototypes())});
    const auto head = solve(acc, lambda);
    for (Eigen::Index r = 0; r < hv.rows(); ++r)
      mismatches += head.predict(hv.row(r).transpose()) != ref_pred[std::size_t(r)];
  }
  return check(worst <= 1e-9 && mismatches == 0,
               fmt("max rel. Frobenius %.2e, %zu prediction mismatches over 5 x %zu", worst, mismatches,
                   val_ids.size()));
}

// ---- ridge optimality ----------------------------------------------------------

Outcome ridge_optimality() {
  Gen gen(202);
  double worst_residual = 0.0, worst_gap = 0.0;
  for (int instance = 0; instance < 50; ++instance) {
    const auto M = static_cast<Eigen::Index>(gen.range(2, 64));
    const auto K = static_cast<std::size_t>(gen.range(2, 10));
    const auto n = static_cast<Eigen::Index>(gen.range(std::size_t(M) / 2 + 1, 4 * std::size_t(M)));
    const RowMatrix h = gen.rows(n, M);
    const auto y = gen.labels(std::size_t(n), K);
    auto acc = Accumulator::classification(std::size_t(M), K);
    acc.update_batch_labels(h, y);
    const double lambda = std::pow(10.0, gen.uniform(-1, 2));
    const auto head = solve(acc, lambda);
    worst_residual = std::max(worst_residual, head.diagnostics().residual);
    const Eigen::MatrixXd g = acc.gram_dense();
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g, Eigen::EigenvaluesOnly).eigenvalues();
    const double hi = ev.maxCoeff() + lambda, lo = std::max(ev.minCoeff(), 0.0) + lambda;
    const auto steps = static_cast<std::size_t>(std::ceil(hi / lo * std::log(1e8))) + 10;
    const Eigen::MatrixXd w = fit_iterative_oracle(g, acc.prototypes(), lambda, steps, 0.5 / hi);
    worst_gap = std::max(worst_gap, relative_frobenius(w, head.weights()));
  }
  return check(worst_residual <= 1e-8 && worst_gap <= 1e-3,
               fmt("max residual %.2e, max oracle gap %.2e", worst_residual, worst_gap));
}

// ---- decorrelation over NCM ----------------------------------------------------

Outcome decorrelation() {
  SynthSpec spec;
  spec.covariance = CovarianceKind::kAnisotropic;
  spec.rho = 0.95;
  spec.num_classes = 10;
  spec.feature_dim = 64;
  spec.seed = 303;
  const auto store = synth_generate(spec);

  RunConfig cfg;
  cfg.num_tasks = 5;
  cfg.seed = 303;
  cfg.method = Method::kGramNoRp;
  const RunResult gram = run(cfg, store);
  cfg.method = Method::kNcm;
  const RunResult ncm = run(cfg, store);

  std::vector<std::uint64_t> ids;
  const RowMatrix f = train_rows(store, &ids);
  const std::span<const std::uint32_t> labels(store.index.labels.data(), ids.size());
  const double cc_ncm = prototype_correlation_report(f, labels, 10, PrototypeKind::kNcm, 0).mean_off_diagonal;
  const double cc_dec =
      prototype_correlation_report(f, labels, 10, PrototypeKind::kDecorrelated, gram.lambdas.back())
          .mean_off_diagonal;
  const double gain = 100.0 * (gram.final_accuracy() - ncm.final_accuracy());
  const double drop = (cc_ncm - cc_dec) / std::abs(cc_ncm);
  return check(gain >= 3.0 && drop >= 0.5,
               fmt("A_T gram %.2f%% vs ncm %.2f%% (+%.2f pts); CC %.3f -> %.3f (%.0f%% drop)",
                   100 * gram.final_accuracy(), 100 * ncm.final_accuracy(), gain, cc_ncm, cc_dec, 100 * drop));
}

// ---- nonlinearity --------------------------------------------------------------

Outcome nonlinearity() {
  XorSpec x;
  x.seed = 404;
  const auto store = synth_xor(x);
  InteractionConfig cfg;
  cfg.dims = {2000};
  cfg.identity_dim = 2000;
  cfg.seed = 404;
  const auto report = interaction_study(store, cfg);
  const double raw = 100 * report.find("raw").accuracy, pair = 100 * report.find("pairwise").accuracy;
  const double relu = 100 * report.find("rp_relu", 2000).accuracy;
  const double ident = 100 * report.find("rp_identity", 2000).accuracy;
  const bool ok = pair >= relu && relu > ident && pair - relu <= 5.0 && std::abs(ident - raw) <= 1.0;
  return check(ok, fmt("pairwise %.2f%%, rp+relu %.2f%%, rp+identity %.2f%%, raw %.2f%%", pair, relu, ident, raw));
}

// ---- concentration -------------------------------------------------------------

Outcome concentration() {
  Gen gen(505);
  MonteCarloSpec spec;
  spec.dims = {64, 256, 1024, 4096};
  spec.trials = 2000;
  spec.epsilon = 0.05;
  const Eigen::Index L = 16;
  std::vector<std::future<ConcentrationReport>> jobs;
  for (std::uint64_t pair = 0; pair < 5; ++pair) {
    const Eigen::VectorXd f = gen.vector(L).normalized(), g = gen.vector(L).normalized();
    spec.seed = 505 + pair;
    jobs.push_back(std::async(std::launch::async, [f, g, spec] { return inner_product_test(f, g, spec); }));
  }
  double worst_z = 0.0;
  bool monotone = true;
  for (auto& job : jobs) {
    const auto report = job.get();
    for (std::size_t k = 0; k < report.rows.size(); ++k) {
      const auto& row = report.rows[k];
      worst_z = std::max(worst_z, std::abs(row.mean - row.expected) / row.std_error);
      if (k > 0 && row.tail_fraction > report.rows[k - 1].tail_fraction) monotone = false;
    }
  }
  return check(worst_z <= 3.0 && monotone,
               fmt("max |mean - f.f'| = %.2f SE over 5 pairs x 4 M; tail fractions %s", worst_z,
                   monotone ? "non-increasing" : "NOT monotone"));
}

// ---- metric formulas -----------------------------------------------------------

Outcome metric_formulas() {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Eigen::Matrix3d r;
  r << 1.0, nan, nan, 0.9, 0.8, nan, 0.7, 0.75, 0.8;
  const double a3 = average_accuracy(r, 3), f3 = average_forgetting(r, 3);
  return check(std::abs(a3 - 0.75) <= 1e-12 && std::abs(f3 - 0.175) <= 1e-12,
               fmt("A_3 = %.15f, F_3 = %.15f", a3, f3));
}

// ---- LDA consistency -----------------------------------------------------------

Outcome lda_consistency() {
  Gen gen(606);
  const Eigen::Index L = 20, K = 10;
  const Eigen::MatrixXd a = gen.matrix(L, L);
  const Eigen::MatrixXd s = a * a.transpose() / double(L) + 0.05 * Eigen::MatrixXd::Identity(L, L);
  std::vector<double> priors(static_cast<std::size_t>(K));
  for (auto& p : priors) p = gen.uniform(0.1, 1.0);
  const auto model = LdaModel::from_statistics(s, 1.5 * gen.matrix(L, K), priors, 0.0);
  std::size_t disagree = 0;
  for (int i = 0; i < 1000; ++i) {
    const Eigen::VectorXd f = 1.5 * gen.vector(L);
    disagree += model.predict(f) != model.predict_mahalanobis(f);
  }

  const auto fx = testing_support::make_gram_lda_fixture(gen, 16, 4);
  const std::vector<double> equal(static_cast<std::size_t>(fx.class_means.cols()), 1.0);
  const auto lda = LdaModel::from_statistics(fx.gram, fx.class_means, equal, 0.0);
  const auto head = solve(fx.gram, fx.class_sums, 0.0);
  std::size_t gram_disagree = 0;
  for (int i = 0; i < 1000; ++i) {
    const Eigen::VectorXd f = 3.0 * gen.vector(16);
    gram_disagree += lda.predict(f) != head.predict(f);
  }
  return check(disagree == 0 && gram_disagree == 0,
               fmt("psi/psi_hat disagreements %zu/1000, LDA/Gram-head disagreements %zu/1000", disagree,
                   gram_disagree));
}

// ---- lambda cross-validation ---------------------------------------------------

// Counts rows handed out; after seal() any further read is recorded.
class GuardedStream final : public TaskStream {
 public:
  GuardedStream(RowMatrix h, RowMatrix y) : inner_(std::move(h), std::move(y)), size_(inner_.size()) {}
  std::size_t size() const override { return size_; }
  std::size_t next_batch(RowMatrix& h, RowMatrix& y, std::size_t max_rows) override {
    if (sealed_) ++late_reads_;
    const std::size_t got = inner_.next_batch(h, y, max_rows);
    rows_read_ += got;
    return got;
  }
  void seal() { sealed_ = true; }
  std::size_t rows_read() const { return rows_read_; }
  std::size_t late_reads() const { return late_reads_; }

 private:
  MatrixTaskStream inner_;
  std::size_t size_;
  bool sealed_ = false;
  std::size_t rows_read_ = 0;
  std::size_t late_reads_ = 0;
};

Outcome lambda_cv() {
  SynthSpec spec;
  spec.num_classes = 10;
  spec.feature_dim = 64;
  spec.train_per_class = 30;
  spec.val_per_class = 1;
  spec.seed = 707;
  const auto store = synth_generate(spec);
  ProjectionSpec ps;
  ps.input_dim = 64;
  ps.output_dim = 500;
  ps.seed = 707;
  const auto projection = ProjectionMatrix::generate(ps);
  std::vector<std::uint64_t> ids;
  const RowMatrix h = projection.project_batch(train_rows(store, &ids));
  const RowMatrix y = testing_support::one_hot(
      std::vector<std::uint32_t>(store.index.labels.begin(), store.index.labels.begin() + long(ids.size())), 10);

  // prior task: rows 0..249, current task: 50 rows
  const Eigen::Index n_prior = 250, n_task = 50;
  GuardedStream prior(h.topRows(n_prior), y.topRows(n_prior));
  GuardedStream task(h.middleRows(n_prior, n_task), y.middleRows(n_prior, n_task));
  const LambdaSchedule schedule;

  // rank-deficient first task on its own
  GuardedStream alone(h.middleRows(n_prior, n_task), y.middleRows(n_prior, n_task));
  const auto first = cross_validate_lambda(alone, Accumulator::classification(500, 10), schedule, 1);
  const double rank = double(Eigen::FullPivLU<Eigen::MatrixXd>(first.accumulator.gram_dense()).rank());

  auto base = Accumulator::classification(500, 10);
  RowMatrix bh, by;
  while (prior.next_batch(bh, by, 64) > 0) base.update_batch(bh, by);
  prior.seal();
  const auto second = cross_validate_lambda(task, base, schedule, 2);

  // same statistics, different prior samples: the prior rows in reverse order
  auto reversed = Accumulator::classification(500, 10);
  for (Eigen::Index r = n_prior - 1; r >= 0; --r) reversed.update(h.row(r).transpose(), y.row(r).transpose());
  GuardedStream task_again(h.middleRows(n_prior, n_task), y.middleRows(n_prior, n_task));
  const auto third = cross_validate_lambda(task_again, Accumulator::restore(reversed.snapshot()), schedule, 2);

  const auto grid = LambdaSchedule::standard_grid();
  bool grid_ok = grid.size() == 17;
  for (std::size_t i = 0; grid_ok && i < grid.size(); ++i)
    grid_ok = std::abs(grid[i] / std::pow(10.0, double(i) - 8.0) - 1.0) <= 1e-12;

  const bool structural = prior.late_reads() == 0 && task.rows_read() == std::size_t(n_task) &&
                          alone.rows_read() == std::size_t(n_task) &&
                          second.selection.lambda == third.selection.lambda;
  const bool ok = first.selection.lambda > 0 && second.selection.lambda > 0 && !first.selection.fell_back &&
                  rank < 500 && structural && grid_ok;
  return check(ok, fmt("lambda* %.0e (alone, rank %.0f/500), %.0e (after prior task); prior reads after seal %zu; "
                       "task rows read %zu/%lld; grid %s",
                       first.selection.lambda, rank, second.selection.lambda, prior.late_reads(), task.rows_read(),
                       static_cast<long long>(n_task), grid_ok ? "1e-8..1e8 (17)" : "WRONG"));
}

// ---- real features (optional) --------------------------------------------------

Outcome real_features() {
  const char* path = std::getenv("RANDPROTO_REAL_FEATURES");
  if (!path || !*path) return {Verdict::kSkip, "set RANDPROTO_REAL_FEATURES to a CIFAR100 ViT-B/16 feature store"};
  const auto store = load_store(path);
  RunConfig cfg;
  cfg.num_tasks = 10;
  cfg.rp_dim = 10000;
  std::string detail;
  bool ok = true;
  auto expect = [&](const char* name, const RunConfig& c, double expected) {
    const double got = 100 * run(c, store).final_accuracy();
    ok = ok && std::abs(got - expected) <= 1.0;
    detail += fmt("%s %.1f%% (expected %.1f%%); ", name, got, expected);
  };
  cfg.method = Method::kRanpac;
  expect("rp", cfg, 89.0);
  cfg.method = Method::kGramNoRp;
  expect("no-rp", cfg, 87.0);
  cfg.method = Method::kNcm;
  expect("ncm", cfg, 83.4);
  // projection-size sweep with a constant lambda = 100
  const std::vector<std::pair<std::size_t, double>> sweep{{100, 71.6},  {200, 80.3},   {400, 83.9},
                                                          {800, 86.2},  {1250, 86.8},  {2500, 87.7},
                                                          {5000, 88.4}, {10000, 88.8}, {15000, 89.0}};
  cfg.method = Method::kRanpac;
  cfg.lambda = LambdaSchedule::fixed(100.0);
  for (const auto& [m, expected] : sweep) {
    cfg.rp_dim = m;
    expect(("M=" + std::to_string(m)).c_str(), cfg, expected);
  }
  return check(ok, detail);
}

struct Criterion {
  const char* name;
  double time_limit;  // seconds, 0 for none
  std::function<Outcome()> fn;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"order-invariance", 10, order_invariance},
      {"ridge-optimality", 0, ridge_optimality},
      {"decorrelation-over-ncm", 30, decorrelation},
      {"nonlinearity-necessity", 60, nonlinearity},
      {"concentration", 60, concentration},
      {"metric-formulas", 0, metric_formulas},
      {"lda-consistency", 0, lda_consistency},
      {"lambda-cross-validation", 0, lambda_cv},
      {"real-feature-reproduction", 0, real_features},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    bool selected = argc < 2;
    for (int i = 1; i < argc; ++i) selected = selected || std::string(c.name).find(argv[i]) != std::string::npos;
    if (!selected) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.fn();
    } catch (const std::exception& e) {
      out = {Verdict::kFail, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (out.verdict == Verdict::kPass && c.time_limit > 0 && secs > c.time_limit) {
      out.verdict = Verdict::kFail;
      out.detail += fmt("; over the %.0f s limit", c.time_limit);
    }
    const char* tag = out.verdict == Verdict::kPass ? "PASS" : out.verdict == Verdict::kFail ? "FAIL" : "SKIP";
    std::printf("%s  %-26s %6.2fs  %s\n", tag, c.name, secs, out.detail.c_str());
    std::fflush(stdout);
    failed += out.verdict == Verdict::kFail;
  }
  return failed ? 1 : 0;
}
