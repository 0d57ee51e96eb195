#include "randproto/protocols.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>

#include "randproto/accumulator.hpp"
#include "randproto/baselines.hpp"
#include "randproto/error.hpp"
#include "randproto/rng.hpp"

namespace randproto {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr Eigen::Index kChunk = 1024;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

double average_accuracy(const Eigen::Ref<const Eigen::MatrixXd>& r, std::size_t t) {
  if (t == 0 || t > static_cast<std::size_t>(r.rows()) || t > static_cast<std::size_t>(r.cols()))
    fail(Errc::kParameter, "A_t needs 1 <= t <= T");
  double sum = 0.0;
  for (std::size_t i = 0; i < t; ++i) sum += r(static_cast<Eigen::Index>(t - 1), static_cast<Eigen::Index>(i));
  return sum / static_cast<double>(t);
}

double average_forgetting(const Eigen::Ref<const Eigen::MatrixXd>& r, std::size_t t) {
  if (t < 2) fail(Errc::kParameter, "F_t is undefined for t < 2");
  if (t > static_cast<std::size_t>(r.rows()) || t > static_cast<std::size_t>(r.cols()))
    fail(Errc::kParameter, "F_t needs t <= T");
  const auto now = static_cast<Eigen::Index>(t - 1);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < now; ++i) {
    double drop = -std::numeric_limits<double>::infinity();
    for (Eigen::Index earlier = i; earlier < now; ++earlier)
      drop = std::max(drop, r(earlier, i) - r(now, i));
    sum += drop;
  }
  return sum / static_cast<double>(t - 1);
}

RowMatrix gather_features(const FeatureStore& store, std::span<const std::uint64_t> ids) {
  const Eigen::Index L = store.feature_dim();
  RowMatrix out(static_cast<Eigen::Index>(ids.size()), L);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto row = store.row(ids[r]);
    for (Eigen::Index k = 0; k < L; ++k) out(static_cast<Eigen::Index>(r), k) = row[static_cast<std::size_t>(k)];
  }
  return out;
}

namespace {

std::vector<std::uint32_t> gather_labels(const FeatureStore& store,
                                         std::span<const std::uint64_t> ids) {
  std::vector<std::uint32_t> out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(store.index.labels[id]);
  return out;
}

RowMatrix gather_targets(const FeatureStore& store, std::span<const std::uint64_t> ids) {
  const auto D = static_cast<Eigen::Index>(store.index.manifest.target_dim);
  RowMatrix out(static_cast<Eigen::Index>(ids.size()), D);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto row = store.target_row(ids[r]);
    for (Eigen::Index k = 0; k < D; ++k) out(static_cast<Eigen::Index>(r), k) = row[static_cast<std::size_t>(k)];
  }
  return out;
}

// Projects feature rows on demand so a task never holds its full H matrix.
class ProjectingStream final : public TaskStream {
 public:
  ProjectingStream(const RowMatrix& f, const RowMatrix& y, const ProjectionMatrix* projection)
      : f_(f), y_(y), projection_(projection) {}

  std::size_t size() const override { return static_cast<std::size_t>(f_.rows()); }

  std::size_t next_batch(RowMatrix& h, RowMatrix& y, std::size_t max_rows) override {
    const Eigen::Index n = std::min<Eigen::Index>(static_cast<Eigen::Index>(max_rows), f_.rows() - cursor_);
    if (n <= 0) return 0;
    if (projection_)
      h = projection_->project_batch(f_.middleRows(cursor_, n));
    else
      h = f_.middleRows(cursor_, n);
    y = y_.middleRows(cursor_, n);
    cursor_ += n;
    return static_cast<std::size_t>(n);
  }

 private:
  const RowMatrix& f_;
  const RowMatrix& y_;
  const ProjectionMatrix* projection_;
  Eigen::Index cursor_ = 0;
};

struct TaskData {
  RowMatrix features;
  std::vector<std::uint32_t> labels;
  RowMatrix targets;  // regression mode only
};

class Learner {
 public:
  virtual ~Learner() = default;
  /// Adds one task; returns the seconds spent solving (0 if none).
  virtual double train(const TaskData& task, std::size_t task_index) = 0;
  virtual std::vector<std::uint32_t> predict(const Eigen::Ref<const RowMatrix>& f,
                                             std::span<const std::uint32_t> allowed) const = 0;
  virtual double lambda() const { return kNaN; }
};

std::optional<ProjectionMatrix> make_projection(const RunConfig& config, std::size_t input_dim) {
  if (config.method != Method::kRanpac &&
      !((config.method == Method::kNcm || config.method == Method::kLda) &&
        config.baseline_space == FeatureSpace::kProjected))
    return std::nullopt;
  ProjectionSpec spec;
  spec.input_dim = input_dim;
  spec.output_dim = config.rp_dim;
  spec.distribution = config.distribution;
  spec.activation = config.activation;
  spec.seed = config.resolved_projection_seed();
  return ProjectionMatrix::generate(spec);
}

RowMatrix maybe_project(const std::optional<ProjectionMatrix>& projection,
                        const Eigen::Ref<const RowMatrix>& f) {
  return projection ? projection->project_batch(f) : RowMatrix(f);
}

class GramLearner final : public Learner {
 public:
  GramLearner(const RunConfig& config, std::size_t input_dim, std::size_t num_classes,
              std::size_t target_dim)
      : config_(config),
        projection_(make_projection(config, input_dim)),
        num_classes_(num_classes) {
    const std::size_t M = projection_ ? projection_->output_dim() : input_dim;
    if (config.targets == TargetMode::kOneHot) {
      acc_ = Accumulator::classification(M, num_classes);
    } else {
      if (target_dim == 0) fail(Errc::kValidation, "regression targets requested but the store has none");
      acc_ = Accumulator::regression(M, target_dim);
      target_sums_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(target_dim), static_cast<Eigen::Index>(num_classes));
      target_counts_.assign(num_classes, 0);
    }
  }

  double train(const TaskData& task, std::size_t task_index) override {
    RowMatrix y;
    if (config_.targets == TargetMode::kOneHot) {
      y = RowMatrix::Zero(task.features.rows(), static_cast<Eigen::Index>(num_classes_));
      for (std::size_t r = 0; r < task.labels.size(); ++r) {
        if (task.labels[r] >= num_classes_) fail(Errc::kValidation, "label out of range");
        y(static_cast<Eigen::Index>(r), task.labels[r]) = 1.0;
      }
    } else {
      y = task.targets;
      for (std::size_t r = 0; r < task.labels.size(); ++r) {
        target_sums_.col(task.labels[r]) += task.targets.row(static_cast<Eigen::Index>(r)).transpose();
        ++target_counts_[task.labels[r]];
      }
    }
    ProjectingStream stream(task.features, y, projection_ ? &*projection_ : nullptr);
    auto cv = cross_validate_lambda(stream, std::move(acc_), config_.lambda,
                                    derive_seed(config_.seed, "cv", task_index), previous_lambda_);
    acc_ = std::move(cv.accumulator);
    lambda_ = cv.selection.lambda;
    previous_lambda_ = lambda_;
    const auto start = Clock::now();
    head_ = solve(acc_, lambda_);
    return seconds_since(start);
  }

  std::vector<std::uint32_t> predict(const Eigen::Ref<const RowMatrix>& f,
                                     std::span<const std::uint32_t> allowed) const override {
    const RowMatrix scores = head_.score_batch(maybe_project(projection_, f));
    std::vector<std::uint32_t> out(static_cast<std::size_t>(scores.rows()));
    if (config_.targets == TargetMode::kOneHot) {
      for (Eigen::Index r = 0; r < scores.rows(); ++r)
        out[static_cast<std::size_t>(r)] =
            static_cast<std::uint32_t>(argmax_among(scores.row(r).transpose(), allowed));
      return out;
    }
    // Regression targets: nearest class-mean target by cosine similarity.
    std::vector<std::uint32_t> usable;
    for (auto k : allowed)
      if (target_counts_[k] > 0 && target_sums_.col(k).norm() > 0) usable.push_back(k);
    if (usable.empty()) fail(Errc::kUndefinedPrototype, "no class has a mean target yet");
    Eigen::MatrixXd unit = Eigen::MatrixXd::Zero(target_sums_.rows(), target_sums_.cols());
    for (auto k : usable) unit.col(k) = target_sums_.col(k).normalized();
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
      const double norm = scores.row(r).norm();
      Eigen::VectorXd cos = unit.transpose() * scores.row(r).transpose();
      if (norm > 0) cos /= norm;
      out[static_cast<std::size_t>(r)] = static_cast<std::uint32_t>(argmax_among(cos, usable));
    }
    return out;
  }

  double lambda() const override { return lambda_; }

  const Accumulator& accumulator() const { return acc_; }
  const DecorrelatedHead& head() const { return head_; }
  const std::optional<ProjectionMatrix>& projection() const { return projection_; }

 private:
  RunConfig config_;
  std::optional<ProjectionMatrix> projection_;
  std::size_t num_classes_;
  Accumulator acc_;
  DecorrelatedHead head_;
  double lambda_ = kNaN;
  std::optional<double> previous_lambda_;
  Eigen::MatrixXd target_sums_;
  std::vector<std::uint64_t> target_counts_;
};

class NcmLearner final : public Learner {
 public:
  NcmLearner(const RunConfig& config, std::size_t input_dim, std::size_t num_classes)
      : projection_(make_projection(config, input_dim)),
        head_(projection_ ? projection_->output_dim() : input_dim, num_classes) {}

  double train(const TaskData& task, std::size_t) override {
    for (Eigen::Index r0 = 0; r0 < task.features.rows(); r0 += kChunk) {
      const Eigen::Index n = std::min(kChunk, task.features.rows() - r0);
      head_.update_batch(maybe_project(projection_, task.features.middleRows(r0, n)),
                         std::span(task.labels).subspan(static_cast<std::size_t>(r0), static_cast<std::size_t>(n)));
    }
    return 0.0;
  }

  std::vector<std::uint32_t> predict(const Eigen::Ref<const RowMatrix>& f,
                                     std::span<const std::uint32_t> allowed) const override {
    const RowMatrix h = maybe_project(projection_, f);
    std::vector<std::uint32_t> out(static_cast<std::size_t>(h.rows()));
    for (Eigen::Index r = 0; r < h.rows(); ++r)
      out[static_cast<std::size_t>(r)] =
          static_cast<std::uint32_t>(argmax_among(head_.score(h.row(r).transpose()), allowed));
    return out;
  }

 private:
  std::optional<ProjectionMatrix> projection_;
  NcmHead head_;
};

class LdaLearner final : public Learner {
 public:
  LdaLearner(const RunConfig& config, std::size_t input_dim, std::size_t num_classes)
      : options_(config.lda),
        projection_(make_projection(config, input_dim)),
        state_(projection_ ? projection_->output_dim() : input_dim, num_classes) {}

  double train(const TaskData& task, std::size_t) override {
    for (Eigen::Index r0 = 0; r0 < task.features.rows(); r0 += kChunk) {
      const Eigen::Index n = std::min(kChunk, task.features.rows() - r0);
      state_.update_batch(maybe_project(projection_, task.features.middleRows(r0, n)),
                          std::span(task.labels).subspan(static_cast<std::size_t>(r0), static_cast<std::size_t>(n)));
    }
    const auto start = Clock::now();
    model_ = state_.fit(options_);
    return seconds_since(start);
  }

  std::vector<std::uint32_t> predict(const Eigen::Ref<const RowMatrix>& f,
                                     std::span<const std::uint32_t> allowed) const override {
    if (!model_) fail(Errc::kDegenerateSplit, "LDA head used before training");
    const RowMatrix psi = model_->discriminant_batch(maybe_project(projection_, f));
    std::vector<std::uint32_t> out(static_cast<std::size_t>(psi.rows()));
    for (Eigen::Index r = 0; r < psi.rows(); ++r)
      out[static_cast<std::size_t>(r)] = static_cast<std::uint32_t>(argmax_among(psi.row(r).transpose(), allowed));
    return out;
  }

 private:
  LdaOptions options_;
  std::optional<ProjectionMatrix> projection_;
  LdaState state_;
  std::optional<LdaModel> model_;
};

std::unique_ptr<Learner> make_learner(const RunConfig& config, const FeatureStore& store) {
  const std::size_t L = store.feature_dim();
  const std::size_t K = store.num_classes();
  switch (config.method) {
    case Method::kRanpac:
    case Method::kGramNoRp:
      return std::make_unique<GramLearner>(config, L, K, store.index.manifest.target_dim);
    case Method::kNcm:
      return std::make_unique<NcmLearner>(config, L, K);
    case Method::kLda:
      return std::make_unique<LdaLearner>(config, L, K);
  }
  fail(Errc::kConfig, "unknown method");
}

TaskData load_task(const RunConfig& config, const FeatureStore& store,
                   std::span<const std::uint64_t> ids) {
  TaskData task;
  task.features = gather_features(store, ids);
  task.labels = gather_labels(store, ids);
  if (config.targets == TargetMode::kRegression) task.targets = gather_targets(store, ids);
  return task;
}

/// Per-sample correctness of `learner` on `ids`, evaluated in chunks.
std::vector<char> evaluate(const Learner& learner, const FeatureStore& store,
                           std::span<const std::uint64_t> ids,
                           std::span<const std::uint32_t> allowed) {
  std::vector<char> correct(ids.size(), 0);
  if (allowed.empty()) return correct;
  for (std::size_t start = 0; start < ids.size(); start += static_cast<std::size_t>(kChunk)) {
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(kChunk), ids.size() - start);
    const auto chunk = ids.subspan(start, n);
    const auto predictions = learner.predict(gather_features(store, chunk), allowed);
    for (std::size_t r = 0; r < n; ++r)
      correct[start + r] = predictions[r] == store.index.labels[chunk[r]];
  }
  return correct;
}

double mean_of(const std::vector<char>& correct) {
  if (correct.empty()) return 0.0;
  std::size_t hits = 0;
  for (char c : correct) hits += c ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(correct.size());
}

std::string task_context(std::size_t t, const Error& e) {
  return "task " + std::to_string(t + 1) + ": " + e.what();
}

void check_store(const RunConfig& config, const FeatureStore& store) {
  if (store.index.manifest.num_train == 0) fail(Errc::kValidation, "store has no training samples");
  if (config.targets == TargetMode::kRegression && !store.index.manifest.has_targets())
    fail(Errc::kValidation, "regression targets requested but the store has no targets.bin");
}

void finish_metrics(RunResult& result) {
  const std::size_t T = result.num_tasks();
  result.avg_accuracy.clear();
  result.avg_forgetting.clear();
  for (std::size_t t = 1; t <= T; ++t) {
    result.avg_accuracy.push_back(average_accuracy(result.accuracy, t));
    result.avg_forgetting.push_back(t >= 2 ? average_forgetting(result.accuracy, t) : kNaN);
  }
}

}  // namespace

RunResult run(const RunConfig& config) {
  config.validate();
  if (config.protocol == ProtocolKind::kTaskAgnostic) return run_task_agnostic(config);
  if (config.dataset.empty()) fail(Errc::kIo, "config has no dataset path");
  return run(config, load_store(config.dataset));
}

RunResult run(const RunConfig& config, const FeatureStore& store) {
  config.validate();
  if (config.protocol == ProtocolKind::kTaskAgnostic) return run_task_agnostic(config, store);
  check_store(config, store);

  const bool dil = config.protocol == ProtocolKind::kDil;
  const TaskSplit split = dil ? split_dil(store.index)
                              : split_cil(store.index, config.num_tasks, config.resolved_split_seed());
  const std::size_t T = split.num_tasks();

  RunResult result;
  result.config_json = config_to_json(config);
  result.dataset_name = store.index.manifest.name;
  result.protocol = config.protocol;
  result.method = config.method;
  result.accuracy = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(T), kNaN);

  std::vector<std::uint64_t> all_val;
  if (dil) {
    result.domain_names = store.index.manifest.domains;
    result.domain_total.assign(result.domain_names.size(), 0);
    for (std::uint64_t id = store.index.manifest.num_train; id < store.size(); ++id) {
      all_val.push_back(id);
      ++result.domain_total[store.index.domains[id]];
    }
  }

  auto learner = make_learner(config, store);
  std::vector<char> seen(store.num_classes(), 0);
  for (std::size_t t = 0; t < T; ++t) {
    PhaseTiming timing;
    try {
      auto start = Clock::now();
      const TaskData task = load_task(config, store, split.train[t]);
      for (auto y : task.labels) seen[y] = 1;
      const double solve_seconds = learner->train(task, t);
      timing.train_seconds = seconds_since(start) - solve_seconds;
      timing.solve_seconds = solve_seconds;

      std::vector<std::uint32_t> allowed;
      for (std::uint32_t y = 0; y < seen.size(); ++y)
        if (seen[y]) allowed.push_back(y);

      start = Clock::now();
      if (dil) {
        const auto correct = evaluate(*learner, store, all_val, allowed);
        const double overall = mean_of(correct);
        for (std::size_t i = 0; i <= t; ++i)
          result.accuracy(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = overall;
        std::vector<std::uint64_t> per_domain(result.domain_names.size(), 0);
        for (std::size_t r = 0; r < all_val.size(); ++r)
          if (correct[r]) ++per_domain[store.index.domains[all_val[r]]];
        result.domain_correct.push_back(std::move(per_domain));
      } else {
        for (std::size_t i = 0; i <= t; ++i)
          result.accuracy(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) =
              mean_of(evaluate(*learner, store, split.val[i], allowed));
      }
      timing.eval_seconds = seconds_since(start);
    } catch (const Error& e) {
      throw Error(e.code(), task_context(t, e));
    }
    result.lambdas.push_back(learner->lambda());
    result.timings.push_back(timing);
  }
  result.task_classes = split.classes;
  finish_metrics(result);
  return result;
}

RunResult run_task_agnostic(const RunConfig& config) {
  config.validate();
  if (config.dataset.empty()) fail(Errc::kIo, "config has no dataset path");
  return run_task_agnostic(config, load_store(config.dataset));
}

RunResult run_task_agnostic(const RunConfig& config, const FeatureStore& store) {
  config.validate();
  check_store(config, store);
  const ScheduleConfig& sched = config.schedule;
  const std::size_t K = store.num_classes();

  // Class order and per-class sample pools, both shuffled from the schedule seed.
  Rng order_rng(derive_seed(config.seed, "schedule-classes"));
  std::vector<std::uint32_t> order(K);
  for (std::uint32_t k = 0; k < K; ++k) order[k] = k;
  order_rng.shuffle(std::span(order));
  std::vector<std::vector<std::uint64_t>> pools(K);
  for (std::uint64_t id = 0; id < store.index.manifest.num_train; ++id)
    pools[store.index.labels[id]].push_back(id);
  Rng pool_rng(derive_seed(config.seed, "schedule-pools"));
  for (auto& pool : pools) pool_rng.shuffle(std::span(pool));
  std::vector<std::size_t> cursor(K, 0);

  RunConfig cv_config = config;
  cv_config.lambda.holdout_fraction = sched.queue_fraction;
  auto learner = make_learner(cv_config, store);

  std::vector<std::uint64_t> val_ids;
  for (std::uint64_t id = store.index.manifest.num_train; id < store.size(); ++id) val_ids.push_back(id);

  RunResult result;
  result.config_json = config_to_json(config);
  result.dataset_name = store.index.manifest.name;
  result.protocol = ProtocolKind::kTaskAgnostic;
  result.method = config.method;

  Rng draw_rng(derive_seed(config.seed, "schedule"));
  std::vector<double> weights(K);
  std::vector<std::uint64_t> pending;
  std::vector<char> seen(K, 0);
  std::uint64_t samples_seen = 0;
  std::size_t checkpoint_index = 0;
  PhaseTiming timing;
  auto interval_start = Clock::now();

  for (std::size_t u = 0; u < sched.micro_tasks; ++u) {
    // Sampling weights over class positions for this micro-task.
    const double centre = sched.micro_tasks == 1
                              ? 0.5 * static_cast<double>(K - 1)
                              : static_cast<double>(u) * static_cast<double>(K - 1) /
                                    static_cast<double>(sched.micro_tasks - 1);
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      weights[k] = 1.0;
      if (sched.width > 0) {
        const double z = (static_cast<double>(k) - centre) / sched.width;
        weights[k] = std::exp(-0.5 * z * z);
      }
      total += weights[k];
    }
    const std::size_t draws = sched.batches_per_micro_task * sched.batch_size;
    for (std::size_t d = 0; d < draws; ++d) {
      double pick = draw_rng.uniform() * total;
      std::size_t position = 0;
      while (position + 1 < K && pick >= weights[position]) pick -= weights[position++];
      const std::uint32_t cls = order[position];
      // Exhausted classes are skipped: the draw produces no sample.
      if (cursor[cls] >= pools[cls].size()) continue;
      pending.push_back(pools[cls][cursor[cls]++]);
    }

    const bool last = u + 1 == sched.micro_tasks;
    if ((u + 1) % sched.checkpoint_every != 0 && !last) continue;

    try {
      const TaskData task = load_task(config, store, pending);
      for (auto y : task.labels) seen[y] = 1;
      const double solve_seconds = learner->train(task, checkpoint_index);
      samples_seen += pending.size();
      pending.clear();
      timing.train_seconds = seconds_since(interval_start) - solve_seconds;
      timing.solve_seconds = solve_seconds;

      std::vector<std::uint32_t> allowed;
      for (std::uint32_t y = 0; y < K; ++y)
        if (seen[y]) allowed.push_back(y);
      const auto start = Clock::now();
      const auto correct = evaluate(*learner, store, val_ids, allowed);
      std::size_t hits = 0, seen_total = 0, seen_hits = 0;
      for (std::size_t r = 0; r < val_ids.size(); ++r) {
        hits += correct[r] ? 1 : 0;
        if (seen[store.index.labels[val_ids[r]]]) {
          ++seen_total;
          seen_hits += correct[r] ? 1 : 0;
        }
      }
      timing.eval_seconds = seconds_since(start);

      Checkpoint cp;
      cp.micro_task = u + 1;
      cp.samples_seen = samples_seen;
      cp.classes_seen = allowed.size();
      cp.lambda = learner->lambda();
      cp.accuracy_all = val_ids.empty() ? 0.0 : double(hits) / double(val_ids.size());
      cp.accuracy_seen = seen_total == 0 ? 0.0 : double(seen_hits) / double(seen_total);
      result.checkpoints.push_back(cp);
      result.lambdas.push_back(cp.lambda);
      result.timings.push_back(timing);
    } catch (const Error& e) {
      throw Error(e.code(), "checkpoint " + std::to_string(checkpoint_index + 1) + ": " + e.what());
    }
    ++checkpoint_index;
    interval_start = Clock::now();
  }

  result.accuracy = Eigen::MatrixXd::Constant(1, 1, result.checkpoints.back().accuracy_all);
  finish_metrics(result);
  return result;
}

FittedHead fit_gram_head(const RunConfig& config, const FeatureStore& store,
                         std::span<const std::uint64_t> sample_ids) {
  if (config.method != Method::kRanpac && config.method != Method::kGramNoRp)
    fail(Errc::kConfig, "fit_gram_head needs method ranpac or gram_no_rp");
  GramLearner learner(config, store.feature_dim(), store.num_classes(),
                      store.index.manifest.target_dim);
  learner.train(load_task(config, store, sample_ids), 0);
  return FittedHead{learner.projection(), learner.head(), learner.accumulator()};
}

DomainReport dil_domain_report(const RunResult& result) {
  if (result.protocol != ProtocolKind::kDil)
    fail(Errc::kParameter, "domain report needs a DIL run");
  DomainReport report;
  report.domains = result.domain_names;
  const auto T = static_cast<Eigen::Index>(result.domain_correct.size());
  const auto D = static_cast<Eigen::Index>(report.domains.size());
  report.accuracy = Eigen::MatrixXd::Zero(T, D);
  std::uint64_t total = 0;
  for (auto n : result.domain_total) total += n;
  for (Eigen::Index t = 0; t < T; ++t) {
    std::uint64_t hits = 0;
    double macro = 0.0;
    Eigen::Index present = 0;
    for (Eigen::Index d = 0; d < D; ++d) {
      const auto n = result.domain_total[static_cast<std::size_t>(d)];
      const auto c = result.domain_correct[static_cast<std::size_t>(t)][static_cast<std::size_t>(d)];
      hits += c;
      report.accuracy(t, d) = n ? double(c) / double(n) : kNaN;
      if (n) {
        macro += report.accuracy(t, d);
        ++present;
      }
    }
    report.macro_mean.push_back(present ? macro / double(present) : kNaN);
    report.overall.push_back(total ? double(hits) / double(total) : kNaN);
  }
  return report;
}

}  // namespace randproto
