#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace randproto {

enum class Split : std::uint8_t { kTrain = 0, kVal = 1 };

/// One labeled feature vector. `sample_id` is the row position in its store:
/// train rows come first, validation rows after them.
struct FeatureRecord {
  std::vector<float> features;
  std::uint32_t label = 0;
  std::optional<std::uint32_t> domain_id;
  std::uint64_t sample_id = 0;
  Split split = Split::kTrain;
  std::vector<float> target;  // regression target; empty when the store has none

  bool operator==(const FeatureRecord&) const = default;
};

struct DatasetManifest {
  std::string name;
  std::uint32_t feature_dim = 0;  // L
  std::uint32_t num_classes = 0;  // K
  std::uint64_t num_train = 0;
  std::uint64_t num_val = 0;
  std::vector<std::string> class_names;
  std::vector<std::string> domains;
  std::uint32_t target_dim = 0;
  std::string dtype = "f32";
  std::string endianness = "little";
  std::uint32_t format_version = 1;

  std::uint64_t num_samples() const { return num_train + num_val; }
  bool has_domains() const { return !domains.empty(); }
  bool has_targets() const { return target_dim > 0; }

  bool operator==(const DatasetManifest&) const = default;
};

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

/// Store-level metadata that is not derivable from the records themselves.
struct StoreInfo {
  std::string name;
  std::uint32_t num_classes = 0;
  std::vector<std::string> class_names;
  std::vector<std::string> domains;
};

// On-disk layout of a store directory.
inline constexpr char kManifestFile[] = "manifest.json";
inline constexpr char kFeaturesFile[] = "features.bin";
inline constexpr char kLabelsFile[] = "labels.bin";
inline constexpr char kDomainsFile[] = "domains.bin";
inline constexpr char kTargetsFile[] = "targets.bin";
inline constexpr char kFeaturesMagic[] = "PFSTOR01";
inline constexpr char kLabelsMagic[] = "PFLABL01";
inline constexpr char kDomainsMagic[] = "PFDOMN01";
inline constexpr char kTargetsMagic[] = "PFTARG01";
inline constexpr std::size_t kMagicSize = 8;

/// Writes records (train block first, sample_id == row) to `dir`.
/// Each file is written to a temporary name and renamed into place.
DatasetManifest write_store(std::span<const FeatureRecord> records,
                            const std::filesystem::path& dir,
                            const StoreInfo& info);

/// Streams records from a store in stored order, one row in memory at a time.
class StoreReader {
 public:
  explicit StoreReader(const std::filesystem::path& dir);

  const DatasetManifest& manifest() const { return manifest_; }
  std::uint64_t position() const { return position_; }

  std::optional<FeatureRecord> next();

 private:
  DatasetManifest manifest_;
  std::ifstream features_;
  std::ifstream labels_;
  std::optional<std::ifstream> domains_;
  std::optional<std::ifstream> targets_;
  std::uint64_t position_ = 0;
};

/// Labels, domains and split boundaries without the feature payload.
struct StoreIndex {
  DatasetManifest manifest;
  std::vector<std::uint32_t> labels;
  std::vector<std::uint32_t> domains;  // empty when the store has none

  Split split_of(std::uint64_t sample_id) const {
    return sample_id < manifest.num_train ? Split::kTrain : Split::kVal;
  }
  std::uint64_t size() const { return labels.size(); }
};

StoreIndex read_index(const std::filesystem::path& dir);

/// A store held fully in memory (row-major float payloads).
struct FeatureStore {
  StoreIndex index;
  std::vector<float> features;
  std::vector<float> targets;

  std::uint64_t size() const { return index.size(); }
  std::uint32_t feature_dim() const { return index.manifest.feature_dim; }
  std::uint32_t num_classes() const { return index.manifest.num_classes; }
  std::span<const float> row(std::uint64_t sample_id) const;
  std::span<const float> target_row(std::uint64_t sample_id) const;

  FeatureRecord record(std::uint64_t sample_id) const;
  std::vector<FeatureRecord> records() const;

  static FeatureStore from_records(std::span<const FeatureRecord> records,
                                   const StoreInfo& info);
};

FeatureStore load_store(const std::filesystem::path& dir);
DatasetManifest write_store(const FeatureStore& store,
                            const std::filesystem::path& dir);

/// Sample assignment of a continual-learning run. Train and validation ids
/// are listed per task; for CIL `classes[t]` holds the task's class set.
struct TaskSplit {
  bool class_incremental = true;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::uint32_t>> classes;
  std::vector<std::vector<std::uint64_t>> train;
  std::vector<std::vector<std::uint64_t>> val;

  std::size_t num_tasks() const { return train.size(); }
};

/// Class-group sizes for a K-class, T-task CIL split. Tasks after the first
/// get ceil(K/T) classes and the first task absorbs the difference (196
/// classes over 10 tasks gives 16 then 9 x 20). When that would leave the
/// first task empty, floor(K/T) is used with the remainder on the first task.
std::vector<std::size_t> cil_group_sizes(std::size_t num_classes,
                                         std::size_t num_tasks);

TaskSplit split_cil(const StoreIndex& index, std::size_t num_tasks,
                    std::uint64_t seed);
TaskSplit split_dil(const StoreIndex& index);

enum class CovarianceKind { kIsotropic, kAnisotropic };

struct SynthSpec {
  std::uint32_t num_classes = 10;
  std::uint32_t feature_dim = 64;
  std::uint32_t train_per_class = 100;
  std::uint32_t val_per_class = 50;
  double mean_scale = 3.0;
  CovarianceKind covariance = CovarianceKind::kIsotropic;
  double rho = 0.0;  // anisotropic only, in [0, 1)
  std::uint32_t num_domains = 0;
  double domain_shift = 1.0;  // in [0, 1]
  std::uint64_t seed = 0;
};

/// Gaussian class clusters.
///
/// Isotropic: x = m_y + e with m_y = scale * z_y and e ~ N(0, I).
/// Anisotropic(rho): class means share a common component,
///   m_y = scale * (sqrt(rho) z_0 + sqrt(1 - rho) z_y),
/// so raw prototypes have Pearson correlation near rho, and the noise is
/// passed through a shared random mixing A = sqrt(1 - rho) I + sqrt(rho) R
/// (R i.i.d. N(0, 1/L) * 3), giving a strongly anisotropic within-class
/// covariance. With num_domains > 0, domain d > 0 blends each sample with a
/// fixed random signed permutation of itself by `domain_shift`.
FeatureStore synth_generate(const SynthSpec& spec);

/// XOR-structured two-class data: x ~ N(0, I_L), label = [x_0 * x_1 > 0].
/// Only the product of the first two features carries the label.
struct XorSpec {
  std::uint32_t feature_dim = 2;
  std::uint32_t num_train = 4000;
  std::uint32_t num_val = 2000;
  std::uint64_t seed = 0;
};

FeatureStore synth_xor(const XorSpec& spec);

}  // namespace randproto
