#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oodmark/image.hpp"
#include "oodmark/tensor.hpp"

namespace oodmark {

enum class BlendMode : uint8_t { replace = 0, add_then_clip = 1 };

// Extra knobs for pattern construction. Every field has a default; the
// resulting mask/pattern pair is deterministic per (name, params).
struct TriggerParams {
  uint64_t seed = 17;              // l0_inv layout / smooth field
  float square_color[3] = {1.0f, 0.0f, 1.0f};
  int l0_pixels = 12;
  float smooth_amplitude = 0.15f;
  float glyph_amplitude = 0.3f;
};

// Backdoor pattern Gamma: out = (1-mask) * x + mask * pattern (replace)
// or clip(x + mask * pattern) (add_then_clip).
struct TriggerSpec {
  std::string name;
  int height = 0;
  int width = 0;
  std::vector<float> mask;     // H*W in [0,1]
  std::vector<float> pattern;  // H*W*3 in [0,1]
  BlendMode blend = BlendMode::replace;
  uint32_t target_label = 0;

  float mask_at(int y, int x) const { return mask[static_cast<size_t>(y) * width + x]; }
  float pattern_at(int y, int x, int c) const {
    return pattern[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  std::string to_json() const;
  static TriggerSpec from_json(const std::string& json);
};

struct TriggerInfo {
  std::string name;
  std::string description;
  BlendMode blend;
};

TriggerSpec make_trigger(const std::string& name, int height, int width,
                         uint32_t target_label, const TriggerParams& params = {});

Image apply_trigger(const Image& img, const TriggerSpec& spec);

// In-place trigger on a {N,3,H,W} batch.
void apply_trigger_batch(Tensor& batch, const TriggerSpec& spec);

// The six known patterns, stable order.
std::vector<TriggerInfo> list_patterns();

// Write (mask, pattern) PNG pairs for every known pattern; returns the
// sha256 of each written file keyed by filename.
std::vector<std::pair<std::string, std::string>> export_trigger_assets(
    const std::string& dir, int height, int width, const TriggerParams& params = {});

}  // namespace oodmark
