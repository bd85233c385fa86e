#include "oodmark/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "oodmark/digest.hpp"
#include "oodmark/model.hpp"
#include "oodmark/rng.hpp"

namespace oodmark {

namespace {

float bilinear(const Image& img, double y, double x, int c) {
  // clamp-to-edge sampling
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0, fy = y - y0;
  const double v = (1 - fy) * ((1 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c)) +
                   fy * ((1 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c));
  return static_cast<float>(v);
}

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
  const float mx = std::max({r, g, b});
  const float mn = std::min({r, g, b});
  const float d = mx - mn;
  v = mx;
  s = mx > 0.0f ? d / mx : 0.0f;
  if (d <= 0.0f) {
    h = 0.0f;
    return;
  }
  if (mx == r)
    h = (g - b) / d + (g < b ? 6.0f : 0.0f);
  else if (mx == g)
    h = (b - r) / d + 2.0f;
  else
    h = (r - g) / d + 4.0f;
  h /= 6.0f;
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
  h = h - std::floor(h);
  const float i = std::floor(h * 6.0f);
  const float f = h * 6.0f - i;
  const float p = v * (1.0f - s);
  const float q = v * (1.0f - f * s);
  const float t = v * (1.0f - (1.0f - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

void color_jitter(Image& img, Rng& rng, const AugmentConfig& cfg) {
  const float fb = static_cast<float>(rng.uniform(1.0 - cfg.jitter_brightness,
                                                  1.0 + cfg.jitter_brightness));
  const float fc = static_cast<float>(rng.uniform(1.0 - cfg.jitter_contrast,
                                                  1.0 + cfg.jitter_contrast));
  const float fs = static_cast<float>(rng.uniform(1.0 - cfg.jitter_saturation,
                                                  1.0 + cfg.jitter_saturation));
  const float dh = static_cast<float>(rng.uniform(-cfg.jitter_hue, cfg.jitter_hue));

  // brightness
  for (auto& v : img.pixels) v = std::clamp(v * fb, 0.0f, 1.0f);

  // contrast around the mean gray level
  double mean = 0.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      mean += 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
  mean /= static_cast<double>(img.height) * img.width;
  for (auto& v : img.pixels)
    v = std::clamp(static_cast<float>((v - mean) * fc + mean), 0.0f, 1.0f);

  // saturation + hue in HSV
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      float h, s, v;
      rgb_to_hsv(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2), h, s, v);
      s = std::clamp(s * fs, 0.0f, 1.0f);
      h += dh;
      float r, g, b;
      hsv_to_rgb(h, s, v, r, g, b);
      img.at(y, x, 0) = std::clamp(r, 0.0f, 1.0f);
      img.at(y, x, 1) = std::clamp(g, 0.0f, 1.0f);
      img.at(y, x, 2) = std::clamp(b, 0.0f, 1.0f);
    }
  }
}

}  // namespace

Image generate_patch(const SourceImage& source, const AugmentConfig& cfg, uint64_t index) {
  const Image& src = source.image;
  Rng rng(derive_seed(cfg.seed, index));

  // crop geometry: square window covering a random fraction of the area
  const double area = static_cast<double>(src.height) * src.width;
  const double scale = rng.uniform(cfg.crop_scale_min, cfg.crop_scale_max);
  double side = std::sqrt(scale * area);
  side = std::min(side, static_cast<double>(std::min(src.height, src.width)));
  const double cx = rng.uniform(side / 2.0, src.width - side / 2.0);
  const double cy = rng.uniform(side / 2.0, src.height - side / 2.0);

  const double rot = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg) * M_PI / 180.0;
  const double shear = rng.uniform(-cfg.shear_deg, cfg.shear_deg) * M_PI / 180.0;
  const double cosr = std::cos(rot), sinr = std::sin(rot), tsh = std::tan(shear);

  Image patch(cfg.patch_size, cfg.patch_size);
  for (int v = 0; v < cfg.patch_size; ++v) {
    for (int u = 0; u < cfg.patch_size; ++u) {
      // normalized patch coords in [-0.5, 0.5], sheared then rotated into the window
      const double a = (u + 0.5) / cfg.patch_size - 0.5;
      const double b = (v + 0.5) / cfg.patch_size - 0.5;
      const double as = a + tsh * b;
      const double xs = cx + side * (cosr * as - sinr * b);
      const double ys = cy + side * (sinr * as + cosr * b);
      for (int c = 0; c < 3; ++c) patch.at(v, u, c) = bilinear(src, ys, xs, c);
    }
  }

  color_jitter(patch, rng, cfg);
  quantize_u8(patch);
  return patch;
}

SurrogateDataset generate_patches(const SourceImage& source, int64_t count,
                                  const AugmentConfig& cfg) {
  if (count < 0) throw std::invalid_argument("count must be nonnegative");
  cfg.validate();
  if (source.image.height < cfg.patch_size || source.image.width < cfg.patch_size)
    throw std::invalid_argument("source image smaller than patch_size");

  SurrogateDataset ds;
  ds.patch_size = cfg.patch_size;
  ds.num_classes = 0;
  ds.samples.resize(static_cast<size_t>(count));
  ds.partition.assign(static_cast<size_t>(count), 0);
  for (int64_t i = 0; i < count; ++i)
    ds.samples[static_cast<size_t>(i)].image = generate_patch(source, cfg, static_cast<uint64_t>(i));

  ds.manifest.source_digests = {source.digest};
  ds.manifest.augment = cfg;
  ds.manifest.count = static_cast<uint32_t>(count);
  ds.manifest.generation_digest = dataset_digest(ds);
  return ds;
}

void label_with_teacher(SurrogateDataset& ds, Classifier& teacher) {
  if (teacher.num_classes() < 2) throw std::invalid_argument("teacher must have >= 2 classes");
  if (teacher.input_hw() != ds.patch_size)
    throw std::invalid_argument("teacher input size does not match patch size");
  const uint32_t C = static_cast<uint32_t>(teacher.num_classes());

  const size_t batch = 256;
  teacher.set_train(false);
  for (size_t start = 0; start < ds.size(); start += batch) {
    const size_t n = std::min(batch, ds.size() - start);
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), start);
    std::vector<const Image*> imgs(n);
    for (size_t i = 0; i < n; ++i) imgs[i] = &ds.samples[start + i].image;
    const Tensor logits = teacher.forward(images_to_batch(imgs));
    const Tensor probs = softmax_rows(logits);
    for (size_t i = 0; i < n; ++i) {
      auto& s = ds.samples[start + i];
      s.soft_label.assign(probs.ptr() + i * C, probs.ptr() + (i + 1) * C);
      s.hard_label = static_cast<uint32_t>(argmax_row(probs, static_cast<int>(i)));
    }
  }
  ds.num_classes = C;
}

void split_clean_poison(SurrogateDataset& ds, double poison_ratio, uint64_t seed) {
  if (poison_ratio < 0.0 || poison_ratio > 1.0)
    throw std::invalid_argument("poison_ratio must be in [0,1]");
  const size_t n = ds.size();
  const size_t k = static_cast<size_t>(std::llround(poison_ratio * static_cast<double>(n)));
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, 0xdead5eedULL));
  rng.shuffle(idx);
  ds.partition.assign(n, static_cast<uint8_t>(Partition::clean));
  for (size_t i = 0; i < k; ++i)
    ds.partition[idx[i]] = static_cast<uint8_t>(Partition::poison);
  ds.manifest.poison_ratio = poison_ratio;
  ds.manifest.partition_seed = seed;
  ds.manifest.partitioned = true;
}

Image shift_and_flip(const Image& img, int dx, int dy, bool flip) {
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const int sx0 = flip ? img.width - 1 - x : x;
      const int sx = sx0 - dx;
      const int sy = y - dy;
      if (sx < 0 || sx >= img.width || sy < 0 || sy >= img.height) continue;  // zero fill
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

LabeledSample runtime_augment(const LabeledSample& sample, uint64_t step_seed,
                              const AugmentConfig& cfg) {
  LabeledSample out = sample;
  if (cfg.runtime_pad == 0 && cfg.flip_prob == 0.0) return out;
  Rng rng(step_seed);
  const bool flip = rng.bernoulli(cfg.flip_prob);
  int dx = 0, dy = 0;
  if (cfg.runtime_pad > 0) {
    const int span = 2 * cfg.runtime_pad + 1;
    dx = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(span))) - cfg.runtime_pad;
    dy = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(span))) - cfg.runtime_pad;
  }
  out.image = shift_and_flip(sample.image, dx, dy, flip);
  return out;
}

SurrogateDataset merge_datasets(const SurrogateDataset& a, const SurrogateDataset& b) {
  // merging with an empty side is the identity (digest included)
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  {
    if (a.patch_size != b.patch_size)
      throw std::invalid_argument("merge: patch sizes differ");
    if (a.num_classes != b.num_classes)
      throw std::invalid_argument("merge: class counts differ");
  }

  SurrogateDataset out;
  out.patch_size = a.size() ? a.patch_size : b.patch_size;
  out.num_classes = a.size() ? a.num_classes : b.num_classes;
  out.samples = a.samples;
  out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
  out.partition = a.partition;
  out.partition.insert(out.partition.end(), b.partition.begin(), b.partition.end());

  out.manifest = a.manifest;
  for (const auto& d : b.manifest.source_digests) {
    if (std::find(out.manifest.source_digests.begin(), out.manifest.source_digests.end(), d) ==
        out.manifest.source_digests.end())
      out.manifest.source_digests.push_back(d);
  }
  out.manifest.count = static_cast<uint32_t>(out.samples.size());
  out.manifest.generation_digest =
      sha256_hex(a.manifest.generation_digest + "+" + b.manifest.generation_digest);
  return out;
}

}  // namespace oodmark
