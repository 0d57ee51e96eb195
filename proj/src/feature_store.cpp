#include "randproto/feature_store.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "randproto/binary_io.hpp"
#include "randproto/error.hpp"

namespace randproto {

namespace fs = std::filesystem;
using nlohmann::json;

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["format"] = kFeaturesMagic;
  j["format_version"] = m.format_version;
  j["name"] = m.name;
  j["L"] = m.feature_dim;
  j["K"] = m.num_classes;
  j["dtype"] = m.dtype;
  j["endianness"] = m.endianness;
  j["splits"] = {{"train", m.num_train}, {"val", m.num_val}};
  j["class_names"] = m.class_names;
  j["domains"] = m.domains;
  j["target_dim"] = m.target_dim;
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(Errc::kCorruption, std::string("manifest is not valid JSON: ") + e.what());
  }
  DatasetManifest m;
  try {
    m.format_version = j.value("format_version", 1u);
    m.name = j.value("name", std::string{});
    m.feature_dim = j.at("L").get<std::uint32_t>();
    m.num_classes = j.at("K").get<std::uint32_t>();
    m.dtype = j.value("dtype", std::string("f32"));
    m.endianness = j.value("endianness", std::string("little"));
    m.num_train = j.at("splits").value("train", std::uint64_t{0});
    m.num_val = j.at("splits").value("val", std::uint64_t{0});
    m.class_names = j.value("class_names", std::vector<std::string>{});
    m.domains = j.value("domains", std::vector<std::string>{});
    m.target_dim = j.value("target_dim", 0u);
  } catch (const json::exception& e) {
    fail(Errc::kCorruption, std::string("malformed manifest: ") + e.what());
  }
  if (m.dtype != "f32")
    fail(Errc::kUnsupportedFormat, "dtype '" + m.dtype + "' (only f32 is supported)");
  if (m.endianness != "little")
    fail(Errc::kUnsupportedFormat, "endianness '" + m.endianness + "'");
  if (m.format_version != 1)
    fail(Errc::kUnsupportedFormat,
         "manifest format version " + std::to_string(m.format_version));
  if (m.feature_dim == 0) fail(Errc::kCorruption, "manifest declares L = 0");
  if (m.num_classes == 0) fail(Errc::kCorruption, "manifest declares K = 0");
  return m;
}

namespace {

void write_magic(std::ostream& out, const char* magic) {
  out.write(magic, kMagicSize);
}

// Validates the 8-byte header and the payload length of a binary file.
void check_binary(std::ifstream& in, const fs::path& path, const char* magic,
                  std::uint64_t expected_payload_bytes) {
  if (!in) fail(Errc::kIo, "cannot open " + path.string());
  char header[kMagicSize];
  in.read(header, kMagicSize);
  if (!in) fail(Errc::kCorruption, path.string() + " is shorter than its header");
  if (std::memcmp(header, magic, kMagicSize - 2) != 0)
    fail(Errc::kCorruption, path.string() + " has a bad magic header");
  if (std::memcmp(header, magic, kMagicSize) != 0)
    fail(Errc::kUnsupportedFormat,
         path.string() + " has format version " + std::string(header + 6, 2));
  const auto size = fs::file_size(path);
  if (size != kMagicSize + expected_payload_bytes)
    fail(Errc::kCorruption, path.string() + " holds " + std::to_string(size) +
                                " bytes, manifest implies " +
                                std::to_string(kMagicSize + expected_payload_bytes));
}

void validate_records(std::span<const FeatureRecord> records,
                      const StoreInfo& info, std::uint32_t& feature_dim,
                      std::uint32_t& target_dim, std::uint64_t& num_train) {
  feature_dim = records.empty() ? 0 : static_cast<std::uint32_t>(records[0].features.size());
  target_dim = records.empty() ? 0 : static_cast<std::uint32_t>(records[0].target.size());
  const bool with_domains = !records.empty() && records[0].domain_id.has_value();
  num_train = 0;
  bool seen_val = false;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.features.size() != feature_dim)
      fail(Errc::kDimensionMismatch, "record " + std::to_string(i) + " has " +
                                         std::to_string(r.features.size()) +
                                         " features, expected " +
                                         std::to_string(feature_dim));
    if (r.target.size() != target_dim)
      fail(Errc::kDimensionMismatch, "record " + std::to_string(i) + " target length differs");
    for (float v : r.features)
      if (!std::isfinite(v))
        fail(Errc::kValidation, "record " + std::to_string(i) + " has a non-finite feature");
    for (float v : r.target)
      if (!std::isfinite(v))
        fail(Errc::kValidation, "record " + std::to_string(i) + " has a non-finite target");
    if (r.label >= info.num_classes)
      fail(Errc::kValidation, "record " + std::to_string(i) + " label " +
                                  std::to_string(r.label) + " >= K");
    if (r.domain_id.has_value() != with_domains)
      fail(Errc::kValidation, "domain annotation present on some records only");
    if (r.domain_id && !info.domains.empty() && *r.domain_id >= info.domains.size())
      fail(Errc::kValidation, "record " + std::to_string(i) + " domain out of range");
    if (r.sample_id != i)
      fail(Errc::kValidation, "record " + std::to_string(i) + " has sample_id " +
                                  std::to_string(r.sample_id) + " (must equal its row)");
    if (r.split == Split::kVal) {
      seen_val = true;
    } else {
      if (seen_val) fail(Errc::kValidation, "train records must precede validation records");
      ++num_train;
    }
  }
  if (records.empty() && info.num_classes == 0)
    fail(Errc::kValidation, "K must be positive");
}

std::vector<std::string> domain_names_for(std::span<const FeatureRecord> records,
                                          const StoreInfo& info) {
  if (!info.domains.empty() || records.empty() || !records[0].domain_id) return info.domains;
  std::uint32_t max_domain = 0;
  for (const auto& r : records) max_domain = std::max(max_domain, *r.domain_id);
  std::vector<std::string> names;
  for (std::uint32_t d = 0; d <= max_domain; ++d) names.push_back("domain" + std::to_string(d));
  return names;
}

}  // namespace

DatasetManifest write_store(std::span<const FeatureRecord> records,
                            const fs::path& dir, const StoreInfo& info) {
  if (info.num_classes == 0) fail(Errc::kValidation, "K must be positive");
  DatasetManifest m;
  validate_records(records, info, m.feature_dim, m.target_dim, m.num_train);
  if (records.empty()) m.feature_dim = 1;  // an empty store still needs a valid L
  m.name = info.name;
  m.num_classes = info.num_classes;
  m.num_val = records.size() - m.num_train;
  m.class_names = info.class_names;
  m.domains = domain_names_for(records, info);

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(Errc::kIo, "cannot create " + dir.string() + ": " + ec.message());

  {
    io::AtomicFile f(dir / kFeaturesFile);
    write_magic(f.stream(), kFeaturesMagic);
    for (const auto& r : records) io::write_le(f.stream(), std::span<const float>(r.features));
    f.commit();
  }
  {
    io::AtomicFile f(dir / kLabelsFile);
    write_magic(f.stream(), kLabelsMagic);
    for (const auto& r : records) io::write_le(f.stream(), r.label);
    f.commit();
  }
  if (m.has_domains()) {
    io::AtomicFile f(dir / kDomainsFile);
    write_magic(f.stream(), kDomainsMagic);
    for (const auto& r : records) io::write_le(f.stream(), r.domain_id.value_or(0));
    f.commit();
  } else {
    fs::remove(dir / kDomainsFile, ec);
  }
  if (m.has_targets()) {
    io::AtomicFile f(dir / kTargetsFile);
    write_magic(f.stream(), kTargetsMagic);
    for (const auto& r : records) io::write_le(f.stream(), std::span<const float>(r.target));
    f.commit();
  } else {
    fs::remove(dir / kTargetsFile, ec);
  }
  // The manifest goes last: a store directory without one is incomplete.
  io::write_text_atomic(dir / kManifestFile, manifest_to_json(m));
  return m;
}

StoreReader::StoreReader(const fs::path& dir) {
  const auto manifest_path = dir / kManifestFile;
  if (!fs::exists(manifest_path))
    fail(Errc::kIo, "no manifest at " + manifest_path.string());
  manifest_ = manifest_from_json(io::read_text(manifest_path));
  const std::uint64_t n = manifest_.num_samples();

  features_.open(dir / kFeaturesFile, std::ios::binary);
  check_binary(features_, dir / kFeaturesFile, kFeaturesMagic,
               n * 4 * manifest_.feature_dim);
  labels_.open(dir / kLabelsFile, std::ios::binary);
  check_binary(labels_, dir / kLabelsFile, kLabelsMagic, n * 4);
  if (manifest_.has_domains()) {
    domains_.emplace(dir / kDomainsFile, std::ios::binary);
    check_binary(*domains_, dir / kDomainsFile, kDomainsMagic, n * 4);
  }
  if (manifest_.has_targets()) {
    targets_.emplace(dir / kTargetsFile, std::ios::binary);
    check_binary(*targets_, dir / kTargetsFile, kTargetsMagic,
                 n * 4 * manifest_.target_dim);
  }
}

std::optional<FeatureRecord> StoreReader::next() {
  if (position_ >= manifest_.num_samples()) return std::nullopt;
  FeatureRecord r;
  r.sample_id = position_;
  r.split = position_ < manifest_.num_train ? Split::kTrain : Split::kVal;
  r.features.resize(manifest_.feature_dim);
  if (!io::read_le(features_, std::span<float>(r.features)))
    fail(Errc::kCorruption, "features truncated at row " + std::to_string(position_));
  if (!io::read_le(labels_, r.label))
    fail(Errc::kCorruption, "labels truncated at row " + std::to_string(position_));
  if (r.label >= manifest_.num_classes)
    fail(Errc::kCorruption, "row " + std::to_string(position_) + " label " +
                                std::to_string(r.label) + " >= K");
  if (domains_) {
    std::uint32_t d = 0;
    if (!io::read_le(*domains_, d))
      fail(Errc::kCorruption, "domains truncated at row " + std::to_string(position_));
    if (d >= manifest_.domains.size())
      fail(Errc::kCorruption, "row " + std::to_string(position_) + " domain out of range");
    r.domain_id = d;
  }
  if (targets_) {
    r.target.resize(manifest_.target_dim);
    if (!io::read_le(*targets_, std::span<float>(r.target)))
      fail(Errc::kCorruption, "targets truncated at row " + std::to_string(position_));
  }
  ++position_;
  return r;
}

StoreIndex read_index(const fs::path& dir) {
  StoreIndex index;
  const auto manifest_path = dir / kManifestFile;
  if (!fs::exists(manifest_path))
    fail(Errc::kIo, "no manifest at " + manifest_path.string());
  index.manifest = manifest_from_json(io::read_text(manifest_path));
  const std::uint64_t n = index.manifest.num_samples();
  {
    std::ifstream features(dir / kFeaturesFile, std::ios::binary);
    check_binary(features, dir / kFeaturesFile, kFeaturesMagic,
                 n * 4 * index.manifest.feature_dim);
  }
  std::ifstream labels(dir / kLabelsFile, std::ios::binary);
  check_binary(labels, dir / kLabelsFile, kLabelsMagic, n * 4);
  index.labels.resize(n);
  if (!io::read_le(labels, std::span<std::uint32_t>(index.labels)))
    fail(Errc::kCorruption, "labels truncated");
  for (std::uint64_t i = 0; i < n; ++i)
    if (index.labels[i] >= index.manifest.num_classes)
      fail(Errc::kCorruption, "row " + std::to_string(i) + " label >= K");
  if (index.manifest.has_domains()) {
    std::ifstream domains(dir / kDomainsFile, std::ios::binary);
    check_binary(domains, dir / kDomainsFile, kDomainsMagic, n * 4);
    index.domains.resize(n);
    if (!io::read_le(domains, std::span<std::uint32_t>(index.domains)))
      fail(Errc::kCorruption, "domains truncated");
    for (std::uint64_t i = 0; i < n; ++i)
      if (index.domains[i] >= index.manifest.domains.size())
        fail(Errc::kCorruption, "row " + std::to_string(i) + " domain out of range");
  }
  return index;
}

std::span<const float> FeatureStore::row(std::uint64_t sample_id) const {
  const std::size_t L = feature_dim();
  return std::span<const float>(features).subspan(sample_id * L, L);
}

std::span<const float> FeatureStore::target_row(std::uint64_t sample_id) const {
  const std::size_t D = index.manifest.target_dim;
  return std::span<const float>(targets).subspan(sample_id * D, D);
}

FeatureRecord FeatureStore::record(std::uint64_t sample_id) const {
  FeatureRecord r;
  const auto f = row(sample_id);
  r.features.assign(f.begin(), f.end());
  r.label = index.labels[sample_id];
  if (!index.domains.empty()) r.domain_id = index.domains[sample_id];
  r.sample_id = sample_id;
  r.split = index.split_of(sample_id);
  if (index.manifest.has_targets()) {
    const auto t = target_row(sample_id);
    r.target.assign(t.begin(), t.end());
  }
  return r;
}

std::vector<FeatureRecord> FeatureStore::records() const {
  std::vector<FeatureRecord> out;
  out.reserve(size());
  for (std::uint64_t i = 0; i < size(); ++i) out.push_back(record(i));
  return out;
}

FeatureStore FeatureStore::from_records(std::span<const FeatureRecord> records,
                                        const StoreInfo& info) {
  if (info.num_classes == 0) fail(Errc::kValidation, "K must be positive");
  FeatureStore s;
  auto& m = s.index.manifest;
  validate_records(records, info, m.feature_dim, m.target_dim, m.num_train);
  if (records.empty()) m.feature_dim = 1;
  m.name = info.name;
  m.num_classes = info.num_classes;
  m.num_val = records.size() - m.num_train;
  m.class_names = info.class_names;
  m.domains = domain_names_for(records, info);
  s.features.reserve(records.size() * m.feature_dim);
  s.targets.reserve(records.size() * m.target_dim);
  for (const auto& r : records) {
    s.features.insert(s.features.end(), r.features.begin(), r.features.end());
    s.targets.insert(s.targets.end(), r.target.begin(), r.target.end());
    s.index.labels.push_back(r.label);
    if (r.domain_id) s.index.domains.push_back(*r.domain_id);
  }
  return s;
}

FeatureStore load_store(const fs::path& dir) {
  StoreReader reader(dir);
  FeatureStore s;
  s.index.manifest = reader.manifest();
  const auto& m = s.index.manifest;
  s.features.reserve(m.num_samples() * m.feature_dim);
  s.targets.reserve(m.num_samples() * m.target_dim);
  s.index.labels.reserve(m.num_samples());
  while (auto r = reader.next()) {
    s.features.insert(s.features.end(), r->features.begin(), r->features.end());
    s.targets.insert(s.targets.end(), r->target.begin(), r->target.end());
    s.index.labels.push_back(r->label);
    if (r->domain_id) s.index.domains.push_back(*r->domain_id);
  }
  return s;
}

DatasetManifest write_store(const FeatureStore& store, const fs::path& dir) {
  const auto records = store.records();
  const auto& m = store.index.manifest;
  return write_store(records, dir,
                     StoreInfo{m.name, m.num_classes, m.class_names, m.domains});
}

}  // namespace randproto
