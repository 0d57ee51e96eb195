#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "randproto/error.hpp"
#include "randproto/protocols.hpp"

namespace randproto {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vector_json(const std::vector<double>& values) {
  json out = json::array();
  for (double v : values) out.push_back(number_or_null(v));
  return out;
}

}  // namespace

double RunResult::final_accuracy() const {
  return avg_accuracy.empty() ? std::numeric_limits<double>::quiet_NaN() : avg_accuracy.back();
}

std::string RunResult::to_json(bool include_timings) const {
  json j;
  j["version"] = kVersion;
  j["config"] = json::parse(config_json);
  j["dataset"] = dataset_name;
  j["protocol"] = to_string(protocol);
  j["method"] = to_string(method);
  j["tasks"] = num_tasks();
  json r = json::array();
  for (Eigen::Index t = 0; t < accuracy.rows(); ++t) {
    json row = json::array();
    for (Eigen::Index i = 0; i <= t; ++i) row.push_back(number_or_null(accuracy(t, i)));
    r.push_back(row);
  }
  j["R"] = r;
  j["A"] = vector_json(avg_accuracy);
  j["F"] = vector_json(avg_forgetting);
  j["lambda"] = vector_json(lambdas);
  j["final_accuracy"] = number_or_null(final_accuracy());
  j["final_forgetting"] = number_or_null(avg_forgetting.empty() ? NAN : avg_forgetting.back());
  j["task_classes"] = task_classes;
  if (!domain_names.empty()) {
    j["domains"] = {{"names", domain_names},
                    {"val_counts", domain_total},
                    {"correct", domain_correct}};
  }
  if (!checkpoints.empty()) {
    json cps = json::array();
    for (const auto& c : checkpoints)
      cps.push_back({{"micro_task", c.micro_task},
                     {"samples_seen", c.samples_seen},
                     {"classes_seen", c.classes_seen},
                     {"lambda", number_or_null(c.lambda)},
                     {"accuracy_all", c.accuracy_all},
                     {"accuracy_seen", c.accuracy_seen}});
    j["checkpoints"] = cps;
  }
  if (include_timings) {
    json ts = json::array();
    for (const auto& t : timings)
      ts.push_back({{"train_s", t.train_seconds}, {"solve_s", t.solve_seconds}, {"eval_s", t.eval_seconds}});
    j["timings"] = ts;
  }
  return j.dump(2) + "\n";
}

std::string RunResult::to_csv() const {
  std::ostringstream out;
  if (!checkpoints.empty()) {
    out << "checkpoint,micro_task,samples_seen,classes_seen,lambda,accuracy_all,accuracy_seen\n";
    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
      const auto& c = checkpoints[k];
      out << k + 1 << ',' << c.micro_task << ',' << c.samples_seen << ',' << c.classes_seen << ','
          << fmt(c.lambda) << ',' << fmt(c.accuracy_all) << ',' << fmt(c.accuracy_seen) << '\n';
    }
    return out.str();
  }
  const Eigen::Index T = accuracy.rows();
  out << "task,lambda,A,F";
  for (Eigen::Index i = 0; i < T; ++i) out << ",R" << i + 1;
  out << '\n';
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto k = static_cast<std::size_t>(t);
    out << t + 1 << ',' << fmt(k < lambdas.size() ? lambdas[k] : NAN) << ','
        << fmt(avg_accuracy[k]) << ',' << fmt(avg_forgetting[k]);
    for (Eigen::Index i = 0; i < T; ++i) out << ',' << fmt(i <= t ? accuracy(t, i) : NAN);
    out << '\n';
  }
  return out.str();
}

std::string RunResult::summary() const {
  std::ostringstream out;
  out << "dataset " << dataset_name << ", method " << to_string(method) << ", protocol "
      << to_string(protocol) << "\n";
  if (!checkpoints.empty()) {
    out << "checkpoint  samples  classes  acc_all  acc_seen\n";
    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
      const auto& c = checkpoints[k];
      char line[128];
      std::snprintf(line, sizeof line, "%10zu  %7llu  %7zu  %6.2f%%  %7.2f%%\n", k + 1,
                    static_cast<unsigned long long>(c.samples_seen), c.classes_seen,
                    100 * c.accuracy_all, 100 * c.accuracy_seen);
      out << line;
    }
  } else {
    out << "task  lambda      A_t      F_t\n";
    for (std::size_t t = 0; t < avg_accuracy.size(); ++t) {
      char line[128];
      std::snprintf(line, sizeof line, "%4zu  %-10.3g  %6.2f%%  ", t + 1,
                    t < lambdas.size() ? lambdas[t] : NAN, 100 * avg_accuracy[t]);
      out << line;
      if (std::isnan(avg_forgetting[t])) {
        out << "     -\n";
      } else {
        std::snprintf(line, sizeof line, "%6.2f%%\n", 100 * avg_forgetting[t]);
        out << line;
      }
    }
  }
  char tail[128];
  std::snprintf(tail, sizeof tail, "final A_T = %.2f%%", 100 * final_accuracy());
  out << tail;
  if (!avg_forgetting.empty() && !std::isnan(avg_forgetting.back())) {
    std::snprintf(tail, sizeof tail, ", F_T = %.2f%%", 100 * avg_forgetting.back());
    out << tail;
  }
  out << "\n";
  return out.str();
}

RunSummary summary_from_json(const std::string& result_json) {
  json j;
  try {
    j = json::parse(result_json);
  } catch (const json::parse_error& e) {
    fail(Errc::kCorruption, std::string("result is not valid JSON: ") + e.what());
  }
  RunSummary s;
  try {
    s.dataset_name = j.at("dataset").get<std::string>();
    s.method = j.at("method").get<std::string>();
    s.protocol = j.at("protocol").get<std::string>();
    s.num_tasks = j.at("tasks").get<std::size_t>();
    const auto& a = j.at("final_accuracy");
    s.final_accuracy = a.is_null() ? NAN : a.get<double>();
    const auto& f = j.value("final_forgetting", json(nullptr));
    s.final_forgetting = f.is_null() ? NAN : f.get<double>();
    s.config_json = j.at("config").dump();
  } catch (const json::exception& e) {
    fail(Errc::kCorruption, std::string("result is missing fields: ") + e.what());
  }
  return s;
}

std::string DomainReport::to_csv() const {
  std::ostringstream out;
  out << "task";
  for (const auto& d : domains) out << ',' << d;
  out << ",macro_mean,overall\n";
  for (Eigen::Index t = 0; t < accuracy.rows(); ++t) {
    out << t + 1;
    for (Eigen::Index d = 0; d < accuracy.cols(); ++d) out << ',' << fmt(accuracy(t, d));
    out << ',' << fmt(macro_mean[static_cast<std::size_t>(t)]) << ','
        << fmt(overall[static_cast<std::size_t>(t)]) << '\n';
  }
  return out.str();
}

}  // namespace randproto
