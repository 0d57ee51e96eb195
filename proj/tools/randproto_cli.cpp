// randproto command-line front end.
//
// Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
// error. Artifacts are written only after a command succeeds, each through a
// temporary file renamed into place.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <future>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "randproto/binary_io.hpp"
#include "randproto/error.hpp"
#include "randproto/feature_store.hpp"
#include "randproto/protocols.hpp"
#include "randproto/rng.hpp"
#include "randproto/theory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace randproto;

namespace {

int verbosity = 0;

void info(const std::string& msg) {
  if (verbosity >= 0) std::cerr << msg << '\n';
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

// Explicit --output wins; otherwise <root>/<command>-<timestamp>[-n] with the
// root taken from RANDPROTO_OUTPUT_ROOT (default ./runs).
fs::path resolve_output(const std::string& explicit_dir, const std::string& command) {
  if (!explicit_dir.empty()) return explicit_dir;
  const char* env = std::getenv("RANDPROTO_OUTPUT_ROOT");
  const fs::path root = env && *env ? env : "runs";
  const std::string stem = command + "-" + timestamp();
  fs::path dir = root / stem;
  for (int n = 2; fs::exists(dir); ++n) dir = root / (stem + "-" + std::to_string(n));
  return dir;
}

void write_artifact(const fs::path& dir, const std::string& name, const std::string& text) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(Errc::kIo, "cannot create " + dir.string() + ": " + ec.message());
  io::write_text_atomic(dir / name, text);
}

std::string load_config_text(const std::string& path, const std::vector<std::string>& overrides) {
  std::string text;
  if (path.empty()) {
    text = "{}";
  } else {
    try {
      text = io::read_text(path);
    } catch (const Error& e) {
      fail(Errc::kConfig, std::string("cannot read config: ") + e.what());
    }
  }
  return apply_overrides(text, overrides);
}

std::vector<std::size_t> parse_dims(const std::string& list) {
  std::vector<std::size_t> dims;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      dims.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      fail(Errc::kConfig, "bad dimension '" + item + "' in list '" + list + "'");
    }
  }
  if (dims.empty()) fail(Errc::kConfig, "empty dimension list");
  return dims;
}

std::string pct(double v) {
  if (std::isnan(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100 * v);
  return buf;
}

// ---- synth / inspect -------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::string kind = "isotropic";
  std::uint32_t classes = 10, dim = 64, train_per_class = 100, val_per_class = 50;
  double mean_scale = 3.0, rho = 0.95, domain_shift = 1.0;
  std::uint32_t domains = 0;
  std::uint32_t xor_train = 4000, xor_val = 2000;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a) {
  FeatureStore store;
  if (a.kind == "xor") {
    XorSpec spec;
    spec.feature_dim = a.dim;
    spec.num_train = a.xor_train;
    spec.num_val = a.xor_val;
    spec.seed = a.seed;
    store = synth_xor(spec);
  } else {
    SynthSpec spec;
    spec.num_classes = a.classes;
    spec.feature_dim = a.dim;
    spec.train_per_class = a.train_per_class;
    spec.val_per_class = a.val_per_class;
    spec.mean_scale = a.mean_scale;
    spec.covariance = a.kind == "anisotropic" ? CovarianceKind::kAnisotropic : CovarianceKind::kIsotropic;
    spec.rho = a.kind == "anisotropic" ? a.rho : 0.0;
    spec.num_domains = a.domains;
    spec.domain_shift = a.domain_shift;
    spec.seed = a.seed;
    store = synth_generate(spec);
  }
  const auto manifest = write_store(store, a.out);
  std::cout << "wrote " << manifest.num_train << " train + " << manifest.num_val << " val samples ("
            << "L=" << manifest.feature_dim << ", K=" << manifest.num_classes << ") to " << a.out << '\n';
  return 0;
}

int cmd_inspect(const std::string& path) {
  const StoreIndex index = read_index(path);
  const auto& m = index.manifest;
  std::cout << "name        " << m.name << "\n"
            << "format      v" << m.format_version << " " << m.dtype << " " << m.endianness << "\n"
            << "feature dim " << m.feature_dim << "\n"
            << "classes     " << m.num_classes << "\n"
            << "train / val " << m.num_train << " / " << m.num_val << "\n";
  if (m.has_targets()) std::cout << "target dim  " << m.target_dim << "\n";
  std::vector<std::uint64_t> train(m.num_classes, 0), val(m.num_classes, 0);
  for (std::uint64_t id = 0; id < index.size(); ++id)
    ++(index.split_of(id) == Split::kTrain ? train : val)[index.labels[id]];
  const auto [lo, hi] = std::minmax_element(train.begin(), train.end());
  if (!train.empty()) std::cout << "train/class " << *lo << ".." << *hi << "\n";
  if (m.has_domains()) {
    std::vector<std::uint64_t> per(m.domains.size(), 0);
    for (auto d : index.domains) ++per[d];
    std::cout << "domains    ";
    for (std::size_t d = 0; d < per.size(); ++d) std::cout << ' ' << m.domains[d] << '=' << per[d];
    std::cout << "\n";
  }
  if (verbosity > 0) {
    std::cout << "class  train  val\n";
    for (std::size_t y = 0; y < train.size(); ++y)
      std::cout << y << "  " << train[y] << "  " << val[y] << "\n";
  }
  return 0;
}

// ---- run / sweep-m -----------------------------------------------------------

void write_run(const fs::path& dir, const RunResult& result) {
  write_artifact(dir, "result.json", result.to_json());
  write_artifact(dir, "result.csv", result.to_csv());
  write_artifact(dir, "summary.txt", result.summary());
  if (result.protocol == ProtocolKind::kDil && !result.domain_names.empty())
    write_artifact(dir, "domains.csv", dil_domain_report(result).to_csv());
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides,
            const std::string& output) {
  const RunConfig config = config_from_json(load_config_text(config_path, overrides));
  config.validate();
  const auto result = run(config);
  const fs::path dir = resolve_output(output.empty() ? config.output : output, "run");
  write_run(dir, result);
  std::cout << result.summary() << "results in " << dir.string() << '\n';
  return 0;
}

int cmd_sweep_m(const std::string& config_path, const std::vector<std::string>& overrides,
                const std::string& dims_text, std::size_t jobs, const std::string& output) {
  const RunConfig base = config_from_json(load_config_text(config_path, overrides));
  base.validate();
  if (base.method != Method::kRanpac) fail(Errc::kConfig, "sweep-m needs method.kind = ranpac");
  const auto dims = parse_dims(dims_text);
  const FeatureStore store = load_store(base.dataset);
  const fs::path dir = resolve_output(output.empty() ? base.output : output, "sweep-m");

  auto one = [&](std::size_t M) {
    RunConfig config = base;
    config.rp_dim = M;
    return run(config, store);
  };
  std::vector<RunResult> results(dims.size());
  if (jobs <= 1) {
    for (std::size_t k = 0; k < dims.size(); ++k) {
      info("M = " + std::to_string(dims[k]));
      results[k] = one(dims[k]);
    }
  } else {
    for (std::size_t start = 0; start < dims.size(); start += jobs) {
      const std::size_t stop = std::min(dims.size(), start + jobs);
      std::vector<std::future<RunResult>> batch;
      for (std::size_t k = start; k < stop; ++k) batch.push_back(std::async(std::launch::async, one, dims[k]));
      for (std::size_t k = start; k < stop; ++k) results[k] = batch[k - start].get();
    }
  }

  std::ostringstream csv;
  csv << "M,final_accuracy,final_forgetting,last_lambda\n";
  std::cout << "      M     A_T     F_T\n";
  for (std::size_t k = 0; k < dims.size(); ++k) {
    const auto& r = results[k];
    const double f = r.avg_forgetting.empty() ? NAN : r.avg_forgetting.back();
    const double lam = r.lambdas.empty() ? NAN : r.lambdas.back();
    char line[160];
    std::snprintf(line, sizeof line, "%zu,%.10g,%.10g,%.10g\n", dims[k], r.final_accuracy(), f, lam);
    csv << line;
    std::snprintf(line, sizeof line, "%7zu  %6s  %6s\n", dims[k], pct(r.final_accuracy()).c_str(), pct(f).c_str());
    std::cout << line;
  }
  for (std::size_t k = 0; k < dims.size(); ++k)
    write_run(dir / ("M" + std::to_string(dims[k])), results[k]);
  write_artifact(dir, "sweep.csv", csv.str());
  std::cout << "results in " << dir.string() << '\n';
  return 0;
}

// ---- theory ----------------------------------------------------------------

struct TheoryArgs {
  std::string kind;
  std::string dims = "64,256,1024,4096";
  std::size_t trials = 2000;
  double sigma = 1.0;
  double epsilon = 0.05;
  std::string distribution = "gaussian";
  std::uint32_t input_dim = 32;
  std::uint64_t seed = 0;
  std::string store;
  std::string config;
  std::vector<std::string> overrides;
  std::string head = "decorrelated";
  double lambda = 1.0;
  std::size_t bins = 100;
  std::size_t max_features = 100;
};

Eigen::VectorXd unit_gaussian(Rng& rng, std::size_t n) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = rng.gaussian();
  return v / v.norm();
}

std::vector<std::uint64_t> split_ids(const StoreIndex& index, Split split) {
  std::vector<std::uint64_t> ids;
  for (std::uint64_t id = 0; id < index.size(); ++id)
    if (index.split_of(id) == split) ids.push_back(id);
  return ids;
}

std::vector<std::uint32_t> labels_of(const StoreIndex& index, std::span<const std::uint64_t> ids) {
  std::vector<std::uint32_t> y;
  for (auto id : ids) y.push_back(index.labels[id]);
  return y;
}

int cmd_theory(const TheoryArgs& a, const std::string& output) {
  const fs::path dir = resolve_output(output, "theory-" + a.kind);
  if (a.kind == "inner-product" || a.kind == "norm") {
    MonteCarloSpec spec;
    spec.dims = parse_dims(a.dims);
    spec.trials = a.trials;
    spec.sigma = a.sigma;
    spec.epsilon = a.epsilon;
    spec.distribution = parse_distribution(a.distribution);
    spec.seed = a.seed;
    Rng rng(derive_seed(a.seed, "theory-vectors"));
    const Eigen::VectorXd f = unit_gaussian(rng, a.input_dim);
    const Eigen::VectorXd g = unit_gaussian(rng, a.input_dim);
    const auto report = a.kind == "norm" ? norm_concentration_test(f, spec) : inner_product_test(f, g, spec);
    std::cout << report.to_csv();
    write_artifact(dir, "concentration.csv", report.to_csv());
    write_artifact(dir, "concentration.json", report.to_json());
  } else if (a.kind == "correlation" || a.kind == "histogram") {
    if (a.store.empty()) fail(Errc::kConfig, "--store is required for " + a.kind);
    const FeatureStore store = load_store(a.store);
    const auto train = split_ids(store.index, Split::kTrain);
    const auto val = split_ids(store.index, Split::kVal);
    const bool ncm = a.head == "ncm";
    if (!ncm && a.head != "decorrelated") fail(Errc::kConfig, "--head must be ncm or decorrelated");
    if (a.kind == "correlation") {
      const RowMatrix f = gather_features(store, train);
      const auto y = labels_of(store.index, train);
      const auto report = prototype_correlation_report(
          f, y, store.num_classes(), ncm ? PrototypeKind::kNcm : PrototypeKind::kDecorrelated, a.lambda);
      std::printf("mean off-diagonal CC %.6f (mean |CC| %.6f)\n", report.mean_off_diagonal,
                  report.mean_abs_off_diagonal);
      write_artifact(dir, "cc.csv", report.to_csv());
    } else {
      RowMatrix scores;
      const RowMatrix val_f = gather_features(store, val);
      if (ncm) {
        NcmHead head(store.feature_dim(), store.num_classes());
        head.update_batch(gather_features(store, train), labels_of(store.index, train));
        scores = head.score_batch(val_f);
      } else {
        RunConfig config = config_from_json(load_config_text(a.config, a.overrides));
        const auto fitted = fit_gram_head(config, store, train);
        scores = fitted.head.score_batch(fitted.projection ? fitted.projection->project_batch(val_f) : val_f);
      }
      const auto report = similarity_histogram_report(scores, labels_of(store.index, val), a.bins);
      std::printf("overlap %.6f, KS D %.6f p %.3g\n", report.overlap, report.ks.statistic, report.ks.p_value);
      write_artifact(dir, "histogram.dat", report.to_csv());
    }
  } else if (a.kind == "interaction") {
    if (a.store.empty()) fail(Errc::kConfig, "--store is required for interaction");
    InteractionConfig config;
    config.dims = parse_dims(a.dims);
    config.max_features = a.max_features;
    config.distribution = parse_distribution(a.distribution);
    config.seed = a.seed;
    const auto report = interaction_study(load_store(a.store), config);
    std::cout << report.to_csv();
    write_artifact(dir, "interaction.csv", report.to_csv());
  } else {
    fail(Errc::kConfig, "unknown theory report '" + a.kind + "'");
  }
  std::cout << "results in " << dir.string() << '\n';
  return 0;
}

// ---- report ----------------------------------------------------------------

struct ReportRow {
  std::string path;
  RunSummary s;
  std::string comparable;  // protocol / tasks / seed signature
};

int cmd_report(const std::vector<std::string>& paths, const std::string& baseline,
               const std::string& output) {
  std::vector<ReportRow> rows;
  for (const auto& p : paths) {
    fs::path file = p;
    if (fs::is_directory(file)) file /= "result.json";
    try {
      ReportRow row{file.string(), summary_from_json(io::read_text(file)), {}};
      const json cfg = json::parse(row.s.config_json);
      row.comparable = row.s.protocol + "/T=" + std::to_string(row.s.num_tasks) + "/seed=" +
                       cfg.value("seed", json(0)).dump();
      rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << file.string() << ": " << e.what() << '\n';
    }
  }
  if (rows.empty()) fail(Errc::kIo, "no readable result files");

  std::map<std::string, std::vector<const ReportRow*>> groups;
  for (const auto& r : rows) groups[r.s.dataset_name].push_back(&r);
  if (groups.size() > 1)
    std::cerr << "warning: results cover " << groups.size() << " datasets; grouped by dataset\n";

  std::ostringstream csv, md;
  csv << "dataset,method,protocol,tasks,final_accuracy,final_forgetting,rel_error_reduction,source\n";
  md << "| dataset | method | protocol | T | A_T (%) | F_T (%) | Rel. ER (%) |\n"
        "|---|---|---|---|---|---|---|\n";
  for (const auto& [dataset, members] : groups) {
    const ReportRow* base = members.front();
    for (const auto* r : members)
      if (r->s.method == baseline) {
        base = r;
        break;
      }
    for (const auto* r : members)
      if (r->comparable != base->comparable)
        std::cerr << "warning: " << r->path << " (" << r->comparable << ") is not directly comparable with "
                  << base->path << " (" << base->comparable << ")\n";
    const double e_base = 1.0 - base->s.final_accuracy;
    for (const auto* r : members) {
      const double e_new = 1.0 - r->s.final_accuracy;
      const double rel = r == base || !(e_base > 0) ? NAN : (e_base - e_new) / e_base;
      char line[512];
      std::snprintf(line, sizeof line, "%s,%s,%s,%zu,%.10g,%.10g,%.10g,%s\n", dataset.c_str(),
                    r->s.method.c_str(), r->s.protocol.c_str(), r->s.num_tasks, r->s.final_accuracy,
                    r->s.final_forgetting, rel, r->path.c_str());
      csv << line;
      md << "| " << dataset << " | " << r->s.method << " | " << r->s.protocol << " | " << r->s.num_tasks
         << " | " << pct(r->s.final_accuracy) << " | " << pct(r->s.final_forgetting) << " | " << pct(rel)
         << " |\n";
    }
  }
  std::cout << md.str();
  const fs::path dir = resolve_output(output, "report");
  write_artifact(dir, "report.csv", csv.str());
  write_artifact(dir, "report.md", md.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random-projection prototype heads for continual learning"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1, 1);
  app.fallthrough();
  std::string output;
  bool quiet = false;
  app.add_option("-o,--output", output, "Output directory (default: $RANDPROTO_OUTPUT_ROOT or ./runs, timestamped)");
  app.add_flag("-v,--verbose", verbosity, "More output");
  app.add_flag("-q,--quiet", quiet, "Suppress progress messages");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic feature store");
  synth_cmd->add_option("store", synth.out, "Store directory to write")->required();
  synth_cmd->add_option("--kind", synth.kind)->check(CLI::IsMember({"isotropic", "anisotropic", "xor"}));
  synth_cmd->add_option("--classes", synth.classes);
  synth_cmd->add_option("--dim", synth.dim);
  synth_cmd->add_option("--train-per-class", synth.train_per_class);
  synth_cmd->add_option("--val-per-class", synth.val_per_class);
  synth_cmd->add_option("--mean-scale", synth.mean_scale);
  synth_cmd->add_option("--rho", synth.rho);
  synth_cmd->add_option("--domains", synth.domains);
  synth_cmd->add_option("--domain-shift", synth.domain_shift);
  synth_cmd->add_option("--xor-train", synth.xor_train);
  synth_cmd->add_option("--xor-val", synth.xor_val);
  synth_cmd->add_option("--seed", synth.seed);

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "Summarize a feature store");
  inspect_cmd->add_option("store", inspect_path)->required();

  std::string config_path;
  std::vector<std::string> overrides;
  auto* run_cmd = app.add_subcommand("run", "Run one continual-learning experiment");
  run_cmd->add_option("-c,--config", config_path, "RunConfig JSON");
  run_cmd->add_option("--set", overrides, "dotted.key=value override (repeatable)");

  std::string dims = "100,500,2000,10000";
  std::size_t jobs = 1;
  auto* sweep_cmd = app.add_subcommand("sweep-m", "Run one experiment per projection size M");
  sweep_cmd->add_option("-c,--config", config_path, "RunConfig JSON");
  sweep_cmd->add_option("--set", overrides, "dotted.key=value override (repeatable)");
  sweep_cmd->add_option("--dims", dims, "Comma-separated M values");
  sweep_cmd->add_option("-j,--jobs", jobs, "Runs in parallel")->check(CLI::PositiveNumber);

  TheoryArgs theory;
  auto* theory_cmd = app.add_subcommand("theory", "Monte-Carlo and prototype analyses");
  theory_cmd->add_option("kind", theory.kind)
      ->required()
      ->check(CLI::IsMember({"inner-product", "norm", "correlation", "histogram", "interaction"}));
  theory_cmd->add_option("--dims", theory.dims, "Comma-separated M values");
  theory_cmd->add_option("--trials", theory.trials);
  theory_cmd->add_option("--sigma", theory.sigma);
  theory_cmd->add_option("--epsilon", theory.epsilon);
  theory_cmd->add_option("--distribution", theory.distribution)->check(CLI::IsMember({"gaussian", "bipolar"}));
  theory_cmd->add_option("--input-dim", theory.input_dim, "L for the Monte-Carlo vectors");
  theory_cmd->add_option("--seed", theory.seed);
  theory_cmd->add_option("--store", theory.store);
  theory_cmd->add_option("-c,--config", theory.config, "RunConfig JSON for the decorrelated histogram head");
  theory_cmd->add_option("--set", theory.overrides);
  theory_cmd->add_option("--head", theory.head)->check(CLI::IsMember({"ncm", "decorrelated"}));
  theory_cmd->add_option("--lambda", theory.lambda);
  theory_cmd->add_option("--bins", theory.bins);
  theory_cmd->add_option("--max-features", theory.max_features);

  std::vector<std::string> report_paths;
  std::string baseline = "ncm";
  auto* report_cmd = app.add_subcommand("report", "Tabulate result files");
  report_cmd->add_option("results", report_paths, "result.json files or run directories")->required();
  report_cmd->add_option("--baseline", baseline, "Method used as the Rel. ER baseline");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorCategory::kConfig);
  }
  if (quiet) verbosity = -1;

  try {
    if (*synth_cmd) return cmd_synth(synth);
    if (*inspect_cmd) return cmd_inspect(inspect_path);
    if (*run_cmd) return cmd_run(config_path, overrides, output);
    if (*sweep_cmd) return cmd_sweep_m(config_path, overrides, dims, jobs, output);
    if (*theory_cmd) return cmd_theory(theory, output);
    if (*report_cmd) return cmd_report(report_paths, baseline, output);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.category());
  } catch (const std::bad_alloc&) {
    std::cerr << "error: out of memory\n";
    return static_cast<int>(ErrorCategory::kNumerical);
  }
  return 0;
}
