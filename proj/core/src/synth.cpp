#include "oodmark/synth.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "oodmark/rng.hpp"

namespace oodmark {

namespace {

// Value noise: seeded lattice, bilinear interpolation.
float lattice_value(uint64_t seed, int gx, int gy, int channel) {
  const uint64_t h = splitmix64(seed ^ (static_cast<uint64_t>(gx) * 0x9e3779b97f4a7c15ULL) ^
                                (static_cast<uint64_t>(gy) * 0xbf58476d1ce4e5b9ULL) ^
                                (static_cast<uint64_t>(channel) * 0x94d049bb133111ebULL));
  return static_cast<float>(h >> 11) * 0x1.0p-53f * 2.0f;  // [0, 2)
}

float value_noise(uint64_t seed, float x, float y, int channel) {
  const int gx = static_cast<int>(std::floor(x)), gy = static_cast<int>(std::floor(y));
  const float fx = x - static_cast<float>(gx), fy = y - static_cast<float>(gy);
  const float sx = fx * fx * (3.0f - 2.0f * fx);  // smoothstep
  const float sy = fy * fy * (3.0f - 2.0f * fy);
  const float v00 = lattice_value(seed, gx, gy, channel);
  const float v10 = lattice_value(seed, gx + 1, gy, channel);
  const float v01 = lattice_value(seed, gx, gy + 1, channel);
  const float v11 = lattice_value(seed, gx + 1, gy + 1, channel);
  const float top = v00 + sx * (v10 - v00);
  const float bot = v01 + sx * (v11 - v01);
  return top + sy * (bot - top);
}

float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

void hsv_to_rgb(float h, float s, float v, float rgb[3]) {
  h = h - std::floor(h);
  const float c = v * s;
  const float hp = h * 6.0f;
  const float x = c * (1.0f - std::fabs(std::fmod(hp, 2.0f) - 1.0f));
  float r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const float m = v - c;
  rgb[0] = r + m; rgb[1] = g + m; rgb[2] = b + m;
}

// Signed "inside the class glyph" test in normalized coordinates
// u, v in [-1, 1] around the glyph center.
bool glyph_hit(int cls, float u, float v) {
  const float r = std::sqrt(u * u + v * v);
  switch (cls % 10) {
    case 0: return r < 0.55f;                                        // disc
    case 1: return std::fabs(u) < 0.5f && std::fabs(v) < 0.5f;       // square
    case 2: return std::fabs(u) < 0.18f || std::fabs(v) < 0.18f;     // cross
    case 3: return std::fabs(std::fmod(u * 2.5f + 2.5f, 1.0f)) < 0.5f;  // vertical stripes
    case 4: return std::fabs(std::fmod(v * 2.5f + 2.5f, 1.0f)) < 0.5f;  // horizontal stripes
    case 5: return std::fabs(u - v) < 0.25f;                         // diagonal bar
    case 6: return v > -0.5f && v < 0.6f && std::fabs(u) < (0.6f - v) * 0.55f;  // triangle
    case 7: return r > 0.33f && r < 0.62f;                           // ring
    case 8: return (static_cast<int>(std::floor((u + 1.0f) * 2.0f)) +
                    static_cast<int>(std::floor((v + 1.0f) * 2.0f))) % 2 == 0;  // checker
    default: {                                                       // dot grid
      const float du = std::fmod(u * 3.0f + 3.0f, 1.0f) - 0.5f;
      const float dv = std::fmod(v * 3.0f + 3.0f, 1.0f) - 0.5f;
      return du * du + dv * dv < 0.06f;
    }
  }
}

}  // namespace

SourceImage make_texture_source(uint64_t seed, int side) {
  if (side < SourceImage::kMinSide)
    throw std::invalid_argument("texture source must be at least 256 px per side");
  Image img(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = 0.0f, amp = 0.5f, freq = 4.0f / static_cast<float>(side);
        for (int octave = 0; octave < 5; ++octave) {
          v += amp * value_noise(derive_seed(seed, static_cast<uint64_t>(octave)),
                                 static_cast<float>(x) * freq, static_cast<float>(y) * freq, c);
          amp *= 0.55f;
          freq *= 2.0f;
        }
        img.at(y, x, c) = clamp01(v * 0.55f);
      }
  quantize_u8(img);
  return make_source_image(std::move(img), "synth://texture/" + std::to_string(seed));
}

std::vector<LabeledSample> make_id_dataset(uint64_t seed, size_t count, int num_classes,
                                           int size) {
  if (num_classes < 2 || num_classes > 10)
    throw std::invalid_argument("make_id_dataset supports 2..10 classes");
  if (size < 8) throw std::invalid_argument("make_id_dataset: size too small");

  std::vector<LabeledSample> out(count);
  for (size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, i));
    const int cls = static_cast<int>(i % static_cast<size_t>(num_classes));

    // class hue family + per-sample jitter
    const float hue = static_cast<float>(cls) / static_cast<float>(num_classes) +
                      0.03f * (rng.uniform() - 0.5f);
    float fg[3], bg[3];
    hsv_to_rgb(hue, 0.75f + 0.2f * rng.uniform(), 0.7f + 0.3f * rng.uniform(), fg);
    hsv_to_rgb(hue + 0.5f, 0.25f * rng.uniform(), 0.15f + 0.25f * rng.uniform(), bg);

    const float cx = 0.35f * (rng.uniform() - 0.5f);
    const float cy = 0.35f * (rng.uniform() - 0.5f);
    const float scale = 0.75f + 0.5f * rng.uniform();
    const float noise_amp = 0.03f + 0.05f * rng.uniform();

    Image img(size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const float u = ((static_cast<float>(x) + 0.5f) / static_cast<float>(size) * 2.0f - 1.0f -
                         cx) / scale;
        const float v = ((static_cast<float>(y) + 0.5f) / static_cast<float>(size) * 2.0f - 1.0f -
                         cy) / scale;
        const bool hit = glyph_hit(cls, u, v);
        for (int c = 0; c < 3; ++c) {
          const float base = hit ? fg[c] : bg[c];
          img.at(y, x, c) = clamp01(base + noise_amp * (rng.uniform() - 0.5f));
        }
      }
    quantize_u8(img);
    out[i].image = std::move(img);
    out[i].hard_label = static_cast<uint32_t>(cls);
  }
  return out;
}

}  // namespace oodmark
