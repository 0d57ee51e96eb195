#include <cmath>
#include <set>

#include <json.hpp>

#include "randproto/error.hpp"
#include "randproto/protocols.hpp"
#include "randproto/rng.hpp"

namespace randproto {

using nlohmann::json;

std::string to_string(ProtocolKind p) {
  switch (p) {
    case ProtocolKind::kCil: return "cil";
    case ProtocolKind::kDil: return "dil";
    case ProtocolKind::kTaskAgnostic: return "task_agnostic";
  }
  return "?";
}

std::string to_string(Method m) {
  switch (m) {
    case Method::kRanpac: return "ranpac";
    case Method::kGramNoRp: return "gram_no_rp";
    case Method::kNcm: return "ncm";
    case Method::kLda: return "lda";
  }
  return "?";
}

std::string to_string(TargetMode t) { return t == TargetMode::kOneHot ? "one_hot" : "regression"; }
std::string to_string(FeatureSpace s) { return s == FeatureSpace::kRaw ? "raw" : "projected"; }

namespace {

ProtocolKind parse_protocol(const std::string& s) {
  if (s == "cil") return ProtocolKind::kCil;
  if (s == "dil") return ProtocolKind::kDil;
  if (s == "task_agnostic") return ProtocolKind::kTaskAgnostic;
  fail(Errc::kConfig, "unknown protocol '" + s + "' (cil, dil, task_agnostic)");
}

Method parse_method(const std::string& s) {
  if (s == "ranpac") return Method::kRanpac;
  if (s == "gram_no_rp") return Method::kGramNoRp;
  if (s == "ncm") return Method::kNcm;
  if (s == "lda") return Method::kLda;
  fail(Errc::kConfig, "unknown method '" + s + "' (ranpac, gram_no_rp, ncm, lda)");
}

TargetMode parse_targets(const std::string& s) {
  if (s == "one_hot") return TargetMode::kOneHot;
  if (s == "regression") return TargetMode::kRegression;
  fail(Errc::kConfig, "unknown target mode '" + s + "' (one_hot, regression)");
}

FeatureSpace parse_space(const std::string& s) {
  if (s == "raw") return FeatureSpace::kRaw;
  if (s == "projected") return FeatureSpace::kProjected;
  fail(Errc::kConfig, "unknown baseline space '" + s + "' (raw, projected)");
}

json optional_u64(const std::optional<std::uint64_t>& v) {
  return v ? json(*v) : json(nullptr);
}

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Reader {
 public:
  Reader(const json& object, std::string path) : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) fail(Errc::kConfig, where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!object_.contains(key)) return;
    try {
      out = object_.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(Errc::kConfig, where() + "." + key + ": " + e.what());
    }
  }

  void get_optional(const char* key, std::optional<std::uint64_t>& out) {
    seen_.insert(key);
    if (!object_.contains(key) || object_.at(key).is_null()) return;
    std::uint64_t v = 0;
    get(key, v);
    out = v;
  }

  std::optional<Reader> child(const char* key) {
    seen_.insert(key);
    if (!object_.contains(key)) return std::nullopt;
    return Reader(object_.at(key), where() + "." + key);
  }

  void finish() const {
    for (const auto& [key, value] : object_.items())
      if (!seen_.count(key)) fail(Errc::kConfig, "unknown config key " + where() + "." + key);
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

std::uint64_t RunConfig::resolved_split_seed() const {
  return split_seed ? *split_seed : derive_seed(seed, "split");
}

std::uint64_t RunConfig::resolved_projection_seed() const {
  return projection_seed ? *projection_seed : derive_seed(seed, "projection");
}

void RunConfig::validate() const {
  if (protocol != ProtocolKind::kTaskAgnostic && num_tasks == 0)
    fail(Errc::kConfig, "protocol.tasks must be >= 1");
  if (method == Method::kRanpac && rp_dim == 0) fail(Errc::kConfig, "projection.M must be >= 1");
  lambda.validate();
  if (!(lda.relative_shrinkage >= 0.0)) fail(Errc::kConfig, "lda.relative_shrinkage must be >= 0");
  if (targets == TargetMode::kRegression &&
      (method == Method::kNcm || method == Method::kLda))
    fail(Errc::kConfig, "regression targets need a ranpac or gram_no_rp method");
  if (protocol == ProtocolKind::kTaskAgnostic) {
    if (schedule.micro_tasks == 0 || schedule.batch_size == 0 ||
        schedule.batches_per_micro_task == 0 || schedule.checkpoint_every == 0)
      fail(Errc::kConfig, "schedule sizes must be >= 1");
    if (!(schedule.width >= 0.0) || !std::isfinite(schedule.width))
      fail(Errc::kConfig, "schedule.width must be finite and >= 0");
    if (!(schedule.queue_fraction > 0.0 && schedule.queue_fraction < 1.0))
      fail(Errc::kConfig, "schedule.queue_fraction must lie in (0, 1)");
  }
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["dataset"] = c.dataset;
  j["seed"] = c.seed;
  j["protocol"] = {
      {"kind", to_string(c.protocol)},
      {"tasks", c.num_tasks},
      {"split_seed", optional_u64(c.split_seed)},
      {"schedule",
       {{"micro_tasks", c.schedule.micro_tasks},
        {"batches_per_micro_task", c.schedule.batches_per_micro_task},
        {"batch_size", c.schedule.batch_size},
        {"width", c.schedule.width},
        {"checkpoint_every", c.schedule.checkpoint_every},
        {"queue_fraction", c.schedule.queue_fraction}}}};
  j["method"] = {
      {"kind", to_string(c.method)},
      {"projection",
       {{"M", c.rp_dim},
        {"distribution", to_string(c.distribution)},
        {"activation", to_string(c.activation)},
        {"seed", optional_u64(c.projection_seed)}}},
      {"lambda",
       {{"grid", c.lambda.grid},
        {"holdout_fraction", c.lambda.holdout_fraction},
        {"min_task_samples", c.lambda.min_task_samples},
        {"first_task_lambda", c.lambda.first_task_lambda},
        {"allow_fallback", c.lambda.allow_fallback}}},
      {"baseline_space", to_string(c.baseline_space)},
      {"lda",
       {{"relative_shrinkage", c.lda.relative_shrinkage},
        {"uniform_priors", c.lda.uniform_priors}}}};
  j["targets"] = to_string(c.targets);
  j["output"] = c.output;
  return j.dump(2);
}

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(Errc::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Reader root(j, "");
  root.get("dataset", c.dataset);
  root.get("seed", c.seed);
  root.get("output", c.output);
  std::string targets = to_string(c.targets);
  root.get("targets", targets);
  c.targets = parse_targets(targets);
  if (auto p = root.child("protocol")) {
    std::string kind = to_string(c.protocol);
    p->get("kind", kind);
    c.protocol = parse_protocol(kind);
    p->get("tasks", c.num_tasks);
    p->get_optional("split_seed", c.split_seed);
    if (auto s = p->child("schedule")) {
      s->get("micro_tasks", c.schedule.micro_tasks);
      s->get("batches_per_micro_task", c.schedule.batches_per_micro_task);
      s->get("batch_size", c.schedule.batch_size);
      s->get("width", c.schedule.width);
      s->get("checkpoint_every", c.schedule.checkpoint_every);
      s->get("queue_fraction", c.schedule.queue_fraction);
      s->finish();
    }
    p->finish();
  }
  if (auto m = root.child("method")) {
    std::string kind = to_string(c.method);
    m->get("kind", kind);
    c.method = parse_method(kind);
    if (auto p = m->child("projection")) {
      p->get("M", c.rp_dim);
      std::string dist = to_string(c.distribution), act = to_string(c.activation);
      p->get("distribution", dist);
      p->get("activation", act);
      c.distribution = parse_distribution(dist);
      c.activation = parse_activation(act);
      p->get_optional("seed", c.projection_seed);
      p->finish();
    }
    if (auto l = m->child("lambda")) {
      l->get("grid", c.lambda.grid);
      l->get("holdout_fraction", c.lambda.holdout_fraction);
      l->get("min_task_samples", c.lambda.min_task_samples);
      l->get("first_task_lambda", c.lambda.first_task_lambda);
      l->get("allow_fallback", c.lambda.allow_fallback);
      l->finish();
    }
    std::string space = to_string(c.baseline_space);
    m->get("baseline_space", space);
    c.baseline_space = parse_space(space);
    if (auto l = m->child("lda")) {
      l->get("relative_shrinkage", c.lda.relative_shrinkage);
      l->get("uniform_priors", c.lda.uniform_priors);
      l->finish();
    }
    m->finish();
  }
  root.finish();
  c.validate();
  return c;
}

std::string apply_overrides(const std::string& config_json,
                            std::span<const std::string> overrides) {
  json j;
  try {
    j = json::parse(config_json);
  } catch (const json::parse_error& e) {
    fail(Errc::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  for (const std::string& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      fail(Errc::kConfig, "override '" + item + "' is not key=value");
    const std::string path = item.substr(0, eq);
    const std::string raw = item.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    json* node = &j;
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
      if (key.empty()) fail(Errc::kConfig, "override '" + item + "' has an empty key");
      if (!node->is_object()) fail(Errc::kConfig, "override '" + item + "' descends into a non-object");
      if (dot == std::string::npos) {
        (*node)[key] = value;
        break;
      }
      if (!node->contains(key)) (*node)[key] = json::object();
      node = &(*node)[key];
      start = dot + 1;
    }
  }
  return j.dump(2);
}

}  // namespace randproto
