#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "randproto/accumulator.hpp"
#include "randproto/error.hpp"
#include "randproto/feature_store.hpp"
#include "randproto/projection.hpp"
#include "randproto/protocols.hpp"
#include "randproto/solver.hpp"
#include "randproto/theory.hpp"

namespace py = pybind11;
using namespace randproto;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>;

// Builds records from column arrays; rows with split == 0 must come first.
std::vector<FeatureRecord> to_records(const FloatArray& features, const LabelArray& labels,
                                      const py::array_t<std::uint8_t, py::array::forcecast>& split,
                                      const std::optional<LabelArray>& domains,
                                      const std::optional<FloatArray>& targets) {
  if (features.ndim() != 2) fail(Errc::kShapeMismatch, "features must be 2-D (N x L)");
  const auto n = static_cast<std::size_t>(features.shape(0));
  const auto L = static_cast<std::size_t>(features.shape(1));
  if (static_cast<std::size_t>(labels.size()) != n || static_cast<std::size_t>(split.size()) != n)
    fail(Errc::kShapeMismatch, "labels and split need one entry per row");
  if (domains && static_cast<std::size_t>(domains->size()) != n)
    fail(Errc::kShapeMismatch, "domains need one entry per row");
  std::size_t target_dim = 0;
  if (targets) {
    if (targets->ndim() != 2 || static_cast<std::size_t>(targets->shape(0)) != n)
      fail(Errc::kShapeMismatch, "targets must be N x D");
    target_dim = static_cast<std::size_t>(targets->shape(1));
  }
  auto f = features.unchecked<2>();
  auto y = labels.unchecked<1>();
  auto s = split.unchecked<1>();
  std::vector<FeatureRecord> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    auto& rec = out[r];
    rec.features.resize(L);
    for (std::size_t k = 0; k < L; ++k) rec.features[k] = f(py::ssize_t(r), py::ssize_t(k));
    rec.label = y(py::ssize_t(r));
    rec.split = s(py::ssize_t(r)) ? Split::kVal : Split::kTrain;
    rec.sample_id = r;
    if (domains) rec.domain_id = domains->at(py::ssize_t(r));
    if (targets) {
      rec.target.resize(target_dim);
      for (std::size_t k = 0; k < target_dim; ++k) rec.target[k] = targets->at(py::ssize_t(r), py::ssize_t(k));
    }
  }
  return out;
}

py::dict store_to_dict(const FeatureStore& store) {
  const auto n = static_cast<py::ssize_t>(store.size());
  const auto L = static_cast<py::ssize_t>(store.feature_dim());
  py::dict d;
  d["manifest"] = manifest_to_json(store.index.manifest);
  FloatArray features({n, L});
  std::copy(store.features.begin(), store.features.end(), features.mutable_data());
  d["features"] = features;
  LabelArray labels(n);
  std::copy(store.index.labels.begin(), store.index.labels.end(), labels.mutable_data());
  d["labels"] = labels;
  py::array_t<std::uint8_t> split(n);
  for (py::ssize_t r = 0; r < n; ++r) split.mutable_at(r) = store.index.split_of(std::uint64_t(r)) == Split::kVal;
  d["split"] = split;
  if (!store.index.domains.empty()) {
    LabelArray domains(n);
    std::copy(store.index.domains.begin(), store.index.domains.end(), domains.mutable_data());
    d["domains"] = domains;
  } else {
    d["domains"] = py::none();
  }
  const auto D = static_cast<py::ssize_t>(store.index.manifest.target_dim);
  if (D > 0) {
    FloatArray targets({n, D});
    std::copy(store.targets.begin(), store.targets.end(), targets.mutable_data());
    d["targets"] = targets;
  } else {
    d["targets"] = py::none();
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Random-projection prototype heads for continual learning (C++ core)";
  m.attr("__version__") = kVersion;

  // the module attribute keeps the type alive
  static py::handle error_type = py::exception<Error>(m, "RandprotoError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = error_type(e.what());
      err.attr("code") = errc_name(e.code());
      PyErr_SetObject(error_type.ptr(), err.ptr());
    }
  });

  // ---- feature stores ----
  m.def(
      "write_store",
      [](const std::filesystem::path& dir, const FloatArray& features, const LabelArray& labels,
         const py::array_t<std::uint8_t, py::array::forcecast>& split, std::uint32_t num_classes,
         const std::string& name, std::vector<std::string> class_names, std::optional<LabelArray> domains,
         std::vector<std::string> domain_names, std::optional<FloatArray> targets) {
        StoreInfo info;
        info.name = name;
        info.num_classes = num_classes;
        info.class_names = std::move(class_names);
        info.domains = std::move(domain_names);
        const auto records = to_records(features, labels, split, domains, targets);
        py::gil_scoped_release release;
        return manifest_to_json(write_store(records, dir, info));
      },
      py::arg("path"), py::arg("features"), py::arg("labels"), py::arg("split"), py::arg("num_classes"),
      py::arg("name") = "store", py::arg("class_names") = std::vector<std::string>{},
      py::arg("domains") = py::none(), py::arg("domain_names") = std::vector<std::string>{},
      py::arg("targets") = py::none(),
      "Write a feature store. split: 0 = train, 1 = val (train rows first). Returns the manifest JSON.");
  m.def(
      "load_store", [](const std::filesystem::path& dir) { return store_to_dict(load_store(dir)); },
      py::arg("path"), "Load a store as a dict of numpy arrays plus the manifest JSON.");
  m.def(
      "read_manifest", [](const std::filesystem::path& dir) { return manifest_to_json(read_index(dir).manifest); },
      py::arg("path"));
  m.def(
      "synth",
      [](const std::filesystem::path& dir, std::uint32_t num_classes, std::uint32_t feature_dim,
         std::uint32_t train_per_class, std::uint32_t val_per_class, double mean_scale, double rho,
         std::uint32_t num_domains, std::uint64_t seed) {
        SynthSpec spec;
        spec.num_classes = num_classes;
        spec.feature_dim = feature_dim;
        spec.train_per_class = train_per_class;
        spec.val_per_class = val_per_class;
        spec.mean_scale = mean_scale;
        spec.rho = rho;
        spec.covariance = rho > 0 ? CovarianceKind::kAnisotropic : CovarianceKind::kIsotropic;
        spec.num_domains = num_domains;
        spec.seed = seed;
        return manifest_to_json(write_store(synth_generate(spec), dir));
      },
      py::arg("path"), py::arg("num_classes") = 10, py::arg("feature_dim") = 64, py::arg("train_per_class") = 100,
      py::arg("val_per_class") = 50, py::arg("mean_scale") = 3.0, py::arg("rho") = 0.0,
      py::arg("num_domains") = 0, py::arg("seed") = 0,
      "Write a Gaussian-cluster store (anisotropic when rho > 0).");

  // ---- projection ----
  py::class_<ProjectionMatrix>(m, "Projection")
      .def(py::init([](std::size_t input_dim, std::size_t output_dim, const std::string& distribution,
                       const std::string& activation, std::uint64_t seed) {
             ProjectionSpec s;
             s.input_dim = input_dim;
             s.output_dim = output_dim;
             s.distribution = parse_distribution(distribution);
             s.activation = parse_activation(activation);
             s.seed = seed;
             return ProjectionMatrix::generate(s);
           }),
           py::arg("input_dim"), py::arg("output_dim"), py::arg("distribution") = "gaussian",
           py::arg("activation") = "relu", py::arg("seed") = 0)
      .def_property_readonly("weights", [](const ProjectionMatrix& p) { return Eigen::MatrixXd(p.weights()); })
      .def_property_readonly("input_dim", &ProjectionMatrix::input_dim)
      .def_property_readonly("output_dim", &ProjectionMatrix::output_dim)
      .def(
          "project", [](const ProjectionMatrix& p, const Eigen::Ref<const RowMatrix>& f) { return p.project_batch(f); },
          py::arg("features"), "Rows of features (N x L) to activated projections (N x M).");

  // ---- accumulator and head ----
  py::class_<Accumulator>(m, "Accumulator")
      .def(py::init([](std::size_t feature_dim, std::size_t num_classes) {
             return Accumulator::classification(feature_dim, num_classes);
           }),
           py::arg("feature_dim"), py::arg("num_classes"))
      .def(
          "update",
          [](Accumulator& a, const Eigen::Ref<const RowMatrix>& h, const std::vector<std::uint32_t>& labels) {
            a.update_batch_labels(h, labels);
          },
          py::arg("h"), py::arg("labels"))
      .def("merge", &Accumulator::merge_from, py::arg("other"))
      .def_property_readonly("gram", &Accumulator::gram_dense)
      .def_property_readonly("prototypes", &Accumulator::prototypes)
      .def_property_readonly("class_counts", &Accumulator::class_counts)
      .def_property_readonly("num_samples", &Accumulator::num_samples)
      .def(
          "solve", [](const Accumulator& a, double lambda) { return solve(a, lambda).weights(); },
          py::arg("lam"), "Ridge head weights (G + lam I)^-1 C, M x K.");

  // ---- runs ----
  m.def(
      "run",
      [](const std::string& config_json, const std::vector<std::string>& overrides) {
        const RunConfig config = config_from_json(apply_overrides(config_json, overrides));
        py::gil_scoped_release release;
        return run(config).to_json();
      },
      py::arg("config_json") = "{}", py::arg("overrides") = std::vector<std::string>{},
      "Run one experiment from RunConfig JSON; returns the result JSON.");
  m.def(
      "default_config", [] { return config_to_json(RunConfig{}); }, "Canonical default RunConfig JSON.");
  m.def(
      "lambda_grid", [] { return LambdaSchedule::standard_grid(); });
  m.def(
      "average_accuracy", [](const Eigen::MatrixXd& r, std::size_t t) { return average_accuracy(r, t); },
      py::arg("R"), py::arg("t"));
  m.def(
      "average_forgetting", [](const Eigen::MatrixXd& r, std::size_t t) { return average_forgetting(r, t); },
      py::arg("R"), py::arg("t"));

  // ---- theory ----
  m.def(
      "inner_product_test",
      [](const Eigen::VectorXd& f, const Eigen::VectorXd& g, std::vector<std::size_t> dims, std::size_t trials,
         double sigma, double epsilon, const std::string& distribution, std::uint64_t seed) {
        MonteCarloSpec spec;
        spec.dims = std::move(dims);
        spec.trials = trials;
        spec.sigma = sigma;
        spec.epsilon = epsilon;
        spec.distribution = parse_distribution(distribution);
        spec.seed = seed;
        py::gil_scoped_release release;
        return inner_product_test(f, g, spec).to_json();
      },
      py::arg("f"), py::arg("g"), py::arg("dims") = std::vector<std::size_t>{64, 256, 1024, 4096},
      py::arg("trials") = 2000, py::arg("sigma") = 1.0, py::arg("epsilon") = 0.05,
      py::arg("distribution") = "gaussian", py::arg("seed") = 0);
}
