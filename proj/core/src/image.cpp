#include "oodmark/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "oodmark/digest.hpp"
#include "oodmark/io_audit.hpp"

namespace oodmark {

std::vector<uint8_t> to_u8_rgb(const Image& img) {
  std::vector<uint8_t> out(img.pixels.size());
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const float v = std::clamp(img.pixels[i], 0.0f, 1.0f);
    out[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  return out;
}

Image from_u8_rgb(int h, int w, const uint8_t* data) {
  Image img(h, w);
  const size_t n = img.pixels.size();
  for (size_t i = 0; i < n; ++i) img.pixels[i] = static_cast<float>(data[i]) / 255.0f;
  return img;
}

void quantize_u8(Image& img) {
  for (auto& v : img.pixels) {
    v = std::clamp(v, 0.0f, 1.0f);
    v = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;
  }
}

Image load_image(const std::string& path) {
  const auto bytes = io::read_file(path);
  cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<uint8_t*>(bytes.data()));
  cv::Mat bgr = cv::imdecode(buf, cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("cannot decode image: " + path);
  Image img(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      img.at(y, x, 0) = row[x][2] / 255.0f;
      img.at(y, x, 1) = row[x][1] / 255.0f;
      img.at(y, x, 2) = row[x][0] / 255.0f;
    }
  }
  return img;
}

void save_png(const std::string& path, const Image& img) {
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  const auto u8 = to_u8_rgb(img);
  for (int y = 0; y < img.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x) {
      const size_t i = (static_cast<size_t>(y) * img.width + x) * 3;
      row[x] = cv::Vec3b(u8[i + 2], u8[i + 1], u8[i]);
    }
  }
  std::vector<uint8_t> out;
  if (!cv::imencode(".png", bgr, out)) throw std::runtime_error("png encode failed: " + path);
  io::write_file(path, out.data(), out.size());
}

std::string image_digest(const Image& img) {
  Sha256 h;
  h.update_u32(static_cast<uint32_t>(img.height));
  h.update_u32(static_cast<uint32_t>(img.width));
  const auto u8 = to_u8_rgb(img);
  h.update(u8.data(), u8.size());
  return h.finish_hex();
}

SourceImage make_source_image(Image img, const std::string& uri) {
  if (img.height < SourceImage::kMinSide || img.width < SourceImage::kMinSide)
    throw std::invalid_argument("source image must be at least 256x256");
  quantize_u8(img);
  SourceImage s;
  s.digest = image_digest(img);
  s.image = std::move(img);
  s.uri = uri;
  return s;
}

SourceImage load_source_image(const std::string& path) {
  return make_source_image(load_image(path), path);
}

}  // namespace oodmark
