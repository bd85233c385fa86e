#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace oodmark {

// RGB image, float in [0,1], interleaved HWC layout.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // height * width * 3

  Image() = default;
  Image(int h, int w) : height(h), width(w), pixels(static_cast<size_t>(h) * w * 3, 0.0f) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  size_t size() const { return pixels.size(); }
};

// The owner's secret source image. Patchification needs a reasonably
// large image, enforced at load.
struct SourceImage {
  Image image;
  std::string digest;  // sha256 of 8-bit RGB content
  std::string uri;
  static constexpr int kMinSide = 256;
};

// Decode PNG/JPEG from disk. Pixels quantized to the u8 grid (k/255).
Image load_image(const std::string& path);
void save_png(const std::string& path, const Image& img);

SourceImage load_source_image(const std::string& path);
SourceImage make_source_image(Image img, const std::string& uri);

// sha256 over (h, w, u8 RGB content)
std::string image_digest(const Image& img);

// Snap all pixels to the nearest k/255 value (keeps the binary dataset
// format lossless) and clamp to [0,1].
void quantize_u8(Image& img);

std::vector<uint8_t> to_u8_rgb(const Image& img);
Image from_u8_rgb(int h, int w, const uint8_t* data);

}  // namespace oodmark
