#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "oodmark/image.hpp"

namespace oodmark {

// Offline patchification knobs. Crop scale is a fraction of the source
// image area; rotation/shear in degrees; jitter strengths follow the
// usual color-jitter convention. flip/pad drive the runtime augmentation.
struct AugmentConfig {
  uint64_t seed = 0;
  int patch_size = 32;
  double crop_scale_min = 0.01;
  double crop_scale_max = 0.25;
  double rotation_deg = 15.0;
  double shear_deg = 10.0;
  double jitter_brightness = 0.4;
  double jitter_contrast = 0.4;
  double jitter_saturation = 0.4;
  double jitter_hue = 0.1;
  double flip_prob = 0.5;
  int runtime_pad = 4;

  void validate() const;
  std::string to_json() const;
  static AugmentConfig from_json(const std::string& json);
};

struct LabeledSample {
  Image image;                   // patch_size x patch_size x 3 in [0,1]
  std::vector<float> soft_label; // empty until labeled; sums to 1
  uint32_t hard_label = kUnlabeled;

  static constexpr uint32_t kUnlabeled = 0xffffffffu;
};

enum class Partition : uint8_t { clean = 0, poison = 1 };

struct DatasetManifest {
  std::vector<std::string> source_digests;
  AugmentConfig augment;
  uint32_t count = 0;
  uint32_t num_classes = 0;         // 0 while unlabeled
  std::string generation_digest;    // digest of the freshly generated (unlabeled) dataset
  double poison_ratio = 0.0;
  uint64_t partition_seed = 0;
  bool partitioned = false;
};

// D-tilde: surrogate samples plus the clean/poison partition.
struct SurrogateDataset {
  int patch_size = 32;
  uint32_t num_classes = 0;
  std::vector<LabeledSample> samples;
  std::vector<uint8_t> partition;   // Partition per sample
  DatasetManifest manifest;

  size_t size() const { return samples.size(); }
  bool labeled() const { return num_classes > 0; }
  size_t poison_count() const;
  std::vector<size_t> indices_of(Partition p) const;
};

// sha256 of the canonical serialization (patch_size, num_classes, then the
// record stream of the .patches format). Pure content function.
std::string dataset_digest(const SurrogateDataset& ds);

// <base>.patches: little-endian u32 count, then per sample u8 RGB bytes,
// f32 soft-label vector, u32 hard label, u8 partition flag.
// <base>.manifest.json carries shapes, digests and the augment config.
void save_patches(const SurrogateDataset& ds, const std::string& base_path);
SurrogateDataset load_patches(const std::string& base_path);

}  // namespace oodmark
