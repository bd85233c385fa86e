#include "oodmark/trigger.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "oodmark/digest.hpp"
#include "oodmark/rng.hpp"

namespace oodmark {

using nlohmann::json;

namespace {

void fill_badnet_grid(TriggerSpec& t) {
  // 3x3 black/white checkerboard flush with the bottom-right corner
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      const int y = t.height - 3 + r;
      const int x = t.width - 3 + c;
      t.mask[static_cast<size_t>(y) * t.width + x] = 1.0f;
      const float v = ((r + c) % 2 == 0) ? 1.0f : 0.0f;
      for (int ch = 0; ch < 3; ++ch)
        t.pattern[(static_cast<size_t>(y) * t.width + x) * 3 + ch] = v;
    }
  }
  t.blend = BlendMode::replace;
}

void fill_l0_inv(TriggerSpec& t, const TriggerParams& p) {
  // scattered single-pixel replacements with seeded positions and colors
  Rng rng(derive_seed(p.seed, 0x10f1));
  std::set<std::pair<int, int>> used;
  while (static_cast<int>(used.size()) < p.l0_pixels) {
    const int y = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(t.height)));
    const int x = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(t.width)));
    if (!used.insert({y, x}).second) continue;
    t.mask[static_cast<size_t>(y) * t.width + x] = 1.0f;
    for (int ch = 0; ch < 3; ++ch)
      t.pattern[(static_cast<size_t>(y) * t.width + x) * 3 + ch] =
          static_cast<float>(rng.uniform());
  }
  t.blend = BlendMode::replace;
}

void fill_smooth(TriggerSpec& t, const TriggerParams& p) {
  // low-frequency additive field: seeded 4x4 grid, bilinear upsampled
  constexpr int G = 4;
  float grid[3][G][G];
  Rng rng(derive_seed(p.seed, 0x500f));
  for (int ch = 0; ch < 3; ++ch)
    for (int gy = 0; gy < G; ++gy)
      for (int gx = 0; gx < G; ++gx) grid[ch][gy][gx] = static_cast<float>(rng.uniform());

  for (int y = 0; y < t.height; ++y) {
    for (int x = 0; x < t.width; ++x) {
      t.mask[static_cast<size_t>(y) * t.width + x] = 1.0f;
      const double fy = (y + 0.5) / t.height * (G - 1);
      const double fx = (x + 0.5) / t.width * (G - 1);
      const int y0 = std::min(static_cast<int>(fy), G - 2);
      const int x0 = std::min(static_cast<int>(fx), G - 2);
      const double wy = fy - y0, wx = fx - x0;
      for (int ch = 0; ch < 3; ++ch) {
        const double v = (1 - wy) * ((1 - wx) * grid[ch][y0][x0] + wx * grid[ch][y0][x0 + 1]) +
                         wy * ((1 - wx) * grid[ch][y0 + 1][x0] + wx * grid[ch][y0 + 1][x0 + 1]);
        t.pattern[(static_cast<size_t>(y) * t.width + x) * 3 + ch] =
            static_cast<float>(v) * p.smooth_amplitude;
      }
    }
  }
  t.blend = BlendMode::add_then_clip;
}

void fill_trojan_square(TriggerSpec& t, int side, const TriggerParams& p) {
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const int y = t.height - side + r;
      const int x = t.width - side + c;
      if (y < 0 || x < 0) continue;
      t.mask[static_cast<size_t>(y) * t.width + x] = 1.0f;
      for (int ch = 0; ch < 3; ++ch)
        t.pattern[(static_cast<size_t>(y) * t.width + x) * 3 + ch] = p.square_color[ch];
    }
  }
  t.blend = BlendMode::replace;
}

double seg_dist(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double u = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  u = std::clamp(u, 0.0, 1.0);
  const double qx = ax + u * dx, qy = ay + u * dy;
  return std::hypot(px - qx, py - qy);
}

void fill_trojan_wm(TriggerSpec& t, const TriggerParams& p) {
  // full-image additive watermark glyph: a W drawn from four strokes
  const double pts[5][2] = {{0.15, 0.20}, {0.30, 0.80}, {0.50, 0.40}, {0.70, 0.80}, {0.85, 0.20}};
  const double thick = 0.05;
  for (int y = 0; y < t.height; ++y) {
    for (int x = 0; x < t.width; ++x) {
      const double px = (x + 0.5) / t.width;
      const double py = (y + 0.5) / t.height;
      double d = 1e9;
      for (int s = 0; s < 4; ++s)
        d = std::min(d, seg_dist(px, py, pts[s][0], pts[s][1], pts[s + 1][0], pts[s + 1][1]));
      if (d <= thick) {
        t.mask[static_cast<size_t>(y) * t.width + x] = 1.0f;
        for (int ch = 0; ch < 3; ++ch)
          t.pattern[(static_cast<size_t>(y) * t.width + x) * 3 + ch] = p.glyph_amplitude;
      }
    }
  }
  t.blend = BlendMode::add_then_clip;
}

}  // namespace

std::vector<TriggerInfo> list_patterns() {
  return {
      {"badnet_grid", "3x3 black/white checkerboard, bottom-right, replace blend", BlendMode::replace},
      {"l0_inv", "12 seeded single-pixel replacements", BlendMode::replace},
      {"smooth", "full-image low-frequency additive field, amplitude 0.15", BlendMode::add_then_clip},
      {"trojan_3x3", "solid 3x3 square, bottom-right, replace blend", BlendMode::replace},
      {"trojan_8x8", "solid 8x8 square, bottom-right, replace blend", BlendMode::replace},
      {"trojan_wm", "full-image additive watermark glyph, amplitude 0.3", BlendMode::add_then_clip},
  };
}

TriggerSpec make_trigger(const std::string& name, int height, int width,
                         uint32_t target_label, const TriggerParams& params) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("trigger shape must be positive");
  TriggerSpec t;
  t.name = name;
  t.height = height;
  t.width = width;
  t.target_label = target_label;
  t.mask.assign(static_cast<size_t>(height) * width, 0.0f);
  t.pattern.assign(static_cast<size_t>(height) * width * 3, 0.0f);

  if (name == "badnet_grid") {
    fill_badnet_grid(t);
  } else if (name == "l0_inv") {
    fill_l0_inv(t, params);
  } else if (name == "smooth") {
    fill_smooth(t, params);
  } else if (name == "trojan_3x3") {
    fill_trojan_square(t, 3, params);
  } else if (name == "trojan_8x8") {
    fill_trojan_square(t, 8, params);
  } else if (name == "trojan_wm") {
    fill_trojan_wm(t, params);
  } else {
    std::string known;
    for (const auto& e : list_patterns()) known += (known.empty() ? "" : ", ") + e.name;
    throw std::invalid_argument("unknown trigger '" + name + "'; known patterns: " + known);
  }
  return t;
}

Image apply_trigger(const Image& img, const TriggerSpec& spec) {
  if (img.height != spec.height || img.width != spec.width)
    throw std::invalid_argument("apply_trigger: image/trigger shape mismatch");
  Image out = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const float m = spec.mask_at(y, x);
      for (int c = 0; c < 3; ++c) {
        const float p = spec.pattern_at(y, x, c);
        float v;
        if (spec.blend == BlendMode::replace)
          v = (1.0f - m) * img.at(y, x, c) + m * p;
        else
          v = img.at(y, x, c) + m * p;
        out.at(y, x, c) = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }
  return out;
}

void apply_trigger_batch(Tensor& batch, const TriggerSpec& spec) {
  if (batch.ndim() != 4 || batch.dim(1) != 3 || batch.dim(2) != spec.height ||
      batch.dim(3) != spec.width)
    throw std::invalid_argument("apply_trigger_batch: batch/trigger shape mismatch");
  const int n = batch.dim(0), h = batch.dim(2), w = batch.dim(3);
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    float* base = batch.ptr() + static_cast<int64_t>(i) * 3 * plane;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const float m = spec.mask_at(y, x);
        if (m == 0.0f) continue;
        for (int c = 0; c < 3; ++c) {
          float& v = base[c * plane + y * w + x];
          const float p = spec.pattern_at(y, x, c);
          if (spec.blend == BlendMode::replace)
            v = (1.0f - m) * v + m * p;
          else
            v = v + m * p;
          v = std::clamp(v, 0.0f, 1.0f);
        }
      }
    }
  }
}

std::string TriggerSpec::to_json() const {
  json j;
  j["name"] = name;
  j["height"] = height;
  j["width"] = width;
  j["blend"] = blend == BlendMode::replace ? "replace" : "add_then_clip";
  j["target_label"] = target_label;
  j["mask"] = mask;
  j["pattern"] = pattern;
  return j.dump();
}

TriggerSpec TriggerSpec::from_json(const std::string& text) {
  const json j = json::parse(text);
  TriggerSpec t;
  t.name = j.at("name").get<std::string>();
  t.height = j.at("height").get<int>();
  t.width = j.at("width").get<int>();
  t.blend = j.at("blend").get<std::string>() == "replace" ? BlendMode::replace
                                                          : BlendMode::add_then_clip;
  t.target_label = j.at("target_label").get<uint32_t>();
  t.mask = j.at("mask").get<std::vector<float>>();
  t.pattern = j.at("pattern").get<std::vector<float>>();
  if (t.mask.size() != static_cast<size_t>(t.height) * t.width ||
      t.pattern.size() != static_cast<size_t>(t.height) * t.width * 3)
    throw std::runtime_error("trigger json: inconsistent mask/pattern sizes");
  return t;
}

std::vector<std::pair<std::string, std::string>> export_trigger_assets(
    const std::string& dir, int height, int width, const TriggerParams& params) {
  std::vector<std::pair<std::string, std::string>> digests;
  for (const auto& info : list_patterns()) {
    const TriggerSpec t = make_trigger(info.name, height, width, 0, params);
    Image mask_img(height, width), pat_img(height, width);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        for (int c = 0; c < 3; ++c) {
          mask_img.at(y, x, c) = t.mask_at(y, x);
          pat_img.at(y, x, c) = t.pattern_at(y, x, c);
        }
      }
    }
    for (const auto& [suffix, img] : {std::pair<std::string, const Image*>{"mask", &mask_img},
                                      {"pattern", &pat_img}}) {
      const std::string file = dir + "/" + info.name + "." + suffix + ".png";
      save_png(file, *img);
      digests.emplace_back(info.name + "." + suffix + ".png", image_digest(*img));
    }
  }
  return digests;
}

}  // namespace oodmark
