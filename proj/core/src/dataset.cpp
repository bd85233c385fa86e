#include "oodmark/dataset.hpp"

#include <json.hpp>

#include <cstring>
#include <stdexcept>

#include "oodmark/digest.hpp"
#include "oodmark/io_audit.hpp"

namespace oodmark {

using nlohmann::json;

void AugmentConfig::validate() const {
  if (patch_size <= 0) throw std::invalid_argument("patch_size must be positive");
  if (!(crop_scale_min > 0.0 && crop_scale_max <= 1.0 && crop_scale_min <= crop_scale_max))
    throw std::invalid_argument("crop_scale_range must be a nonempty interval within (0,1]");
  if (flip_prob < 0.0 || flip_prob > 1.0)
    throw std::invalid_argument("flip_prob must be in [0,1]");
  if (runtime_pad < 0) throw std::invalid_argument("runtime_pad must be nonnegative");
}

static json augment_to_json(const AugmentConfig& c) {
  return json{{"seed", c.seed},
              {"patch_size", c.patch_size},
              {"crop_scale_min", c.crop_scale_min},
              {"crop_scale_max", c.crop_scale_max},
              {"rotation_deg", c.rotation_deg},
              {"shear_deg", c.shear_deg},
              {"jitter_brightness", c.jitter_brightness},
              {"jitter_contrast", c.jitter_contrast},
              {"jitter_saturation", c.jitter_saturation},
              {"jitter_hue", c.jitter_hue},
              {"flip_prob", c.flip_prob},
              {"runtime_pad", c.runtime_pad}};
}

static AugmentConfig augment_from_json(const json& j) {
  AugmentConfig c;
  c.seed = j.at("seed").get<uint64_t>();
  c.patch_size = j.at("patch_size").get<int>();
  c.crop_scale_min = j.at("crop_scale_min").get<double>();
  c.crop_scale_max = j.at("crop_scale_max").get<double>();
  c.rotation_deg = j.at("rotation_deg").get<double>();
  c.shear_deg = j.at("shear_deg").get<double>();
  c.jitter_brightness = j.at("jitter_brightness").get<double>();
  c.jitter_contrast = j.at("jitter_contrast").get<double>();
  c.jitter_saturation = j.at("jitter_saturation").get<double>();
  c.jitter_hue = j.at("jitter_hue").get<double>();
  c.flip_prob = j.at("flip_prob").get<double>();
  c.runtime_pad = j.at("runtime_pad").get<int>();
  return c;
}

std::string AugmentConfig::to_json() const { return augment_to_json(*this).dump(2); }

AugmentConfig AugmentConfig::from_json(const std::string& s) {
  return augment_from_json(json::parse(s));
}

size_t SurrogateDataset::poison_count() const {
  size_t n = 0;
  for (uint8_t p : partition)
    if (p == static_cast<uint8_t>(Partition::poison)) ++n;
  return n;
}

std::vector<size_t> SurrogateDataset::indices_of(Partition p) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < partition.size(); ++i)
    if (partition[i] == static_cast<uint8_t>(p)) out.push_back(i);
  return out;
}

namespace {

void append_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 24));
}

void append_f32(std::vector<uint8_t>& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  append_u32(out, bits);
}

uint32_t read_u32(const std::vector<uint8_t>& b, size_t& off) {
  if (off + 4 > b.size()) throw std::runtime_error("truncated .patches file");
  uint32_t v = b[off] | (b[off + 1] << 8) | (b[off + 2] << 16)
               | (static_cast<uint32_t>(b[off + 3]) << 24);
  off += 4;
  return v;
}

float read_f32(const std::vector<uint8_t>& b, size_t& off) {
  uint32_t bits = read_u32(b, off);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

// The record stream shared by the on-disk format and the content digest.
std::vector<uint8_t> record_stream(const SurrogateDataset& ds) {
  std::vector<uint8_t> out;
  const size_t px = static_cast<size_t>(ds.patch_size) * ds.patch_size * 3;
  out.reserve(4 + ds.size() * (px + 4 * ds.num_classes + 5));
  append_u32(out, static_cast<uint32_t>(ds.size()));
  for (size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    if (s.image.pixels.size() != px)
      throw std::runtime_error("sample image shape does not match patch_size");
    const auto u8 = to_u8_rgb(s.image);
    out.insert(out.end(), u8.begin(), u8.end());
    if (s.soft_label.size() != ds.num_classes)
      throw std::runtime_error("soft label length does not match num_classes");
    for (float v : s.soft_label) append_f32(out, v);
    append_u32(out, s.hard_label);
    out.push_back(i < ds.partition.size() ? ds.partition[i] : 0);
  }
  return out;
}

}  // namespace

std::string dataset_digest(const SurrogateDataset& ds) {
  Sha256 h;
  h.update_u32(static_cast<uint32_t>(ds.patch_size));
  h.update_u32(ds.num_classes);
  const auto rec = record_stream(ds);
  h.update(rec.data(), rec.size());
  return h.finish_hex();
}

void save_patches(const SurrogateDataset& ds, const std::string& base_path) {
  const auto rec = record_stream(ds);
  io::write_file(base_path + ".patches", rec.data(), rec.size());

  json j;
  j["schema_version"] = 1;
  j["patch_size"] = ds.patch_size;
  j["num_classes"] = ds.num_classes;
  j["count"] = ds.size();
  j["source_digests"] = ds.manifest.source_digests;
  j["augment"] = augment_to_json(ds.manifest.augment);
  j["generation_digest"] = ds.manifest.generation_digest;
  j["content_digest"] = dataset_digest(ds);
  j["poison_ratio"] = ds.manifest.poison_ratio;
  j["partition_seed"] = ds.manifest.partition_seed;
  j["partitioned"] = ds.manifest.partitioned;
  const std::string text = j.dump(2);
  io::write_file(base_path + ".manifest.json", text.data(), text.size());
}

SurrogateDataset load_patches(const std::string& base_path) {
  const auto mbytes = io::read_file(base_path + ".manifest.json");
  const json j = json::parse(std::string(mbytes.begin(), mbytes.end()));

  SurrogateDataset ds;
  ds.patch_size = j.at("patch_size").get<int>();
  ds.num_classes = j.at("num_classes").get<uint32_t>();
  ds.manifest.source_digests = j.at("source_digests").get<std::vector<std::string>>();
  ds.manifest.augment = augment_from_json(j.at("augment"));
  ds.manifest.count = j.at("count").get<uint32_t>();
  ds.manifest.generation_digest = j.at("generation_digest").get<std::string>();
  ds.manifest.poison_ratio = j.at("poison_ratio").get<double>();
  ds.manifest.partition_seed = j.at("partition_seed").get<uint64_t>();
  ds.manifest.partitioned = j.at("partitioned").get<bool>();

  const auto bytes = io::read_file(base_path + ".patches");
  size_t off = 0;
  const uint32_t count = read_u32(bytes, off);
  if (count != ds.manifest.count) throw std::runtime_error("manifest/count mismatch");
  const size_t px = static_cast<size_t>(ds.patch_size) * ds.patch_size * 3;
  ds.samples.resize(count);
  ds.partition.resize(count, 0);
  for (uint32_t i = 0; i < count; ++i) {
    if (off + px > bytes.size()) throw std::runtime_error("truncated .patches file");
    ds.samples[i].image = from_u8_rgb(ds.patch_size, ds.patch_size, bytes.data() + off);
    off += px;
    ds.samples[i].soft_label.resize(ds.num_classes);
    for (uint32_t c = 0; c < ds.num_classes; ++c) ds.samples[i].soft_label[c] = read_f32(bytes, off);
    ds.samples[i].hard_label = read_u32(bytes, off);
    if (off >= bytes.size()) throw std::runtime_error("truncated .patches file");
    ds.partition[i] = bytes[off++];
  }

  const std::string expect = j.at("content_digest").get<std::string>();
  if (dataset_digest(ds) != expect)
    throw std::runtime_error("dataset content digest mismatch: " + base_path);
  return ds;
}

}  // namespace oodmark
