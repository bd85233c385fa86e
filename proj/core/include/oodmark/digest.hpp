#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace oodmark {

// Incremental SHA-256. All content digests in the toolkit (datasets,
// checkpoints, trigger assets, result provenance) go through this.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* bytes, size_t n);
  void update_u32(uint32_t v);   // little-endian
  void update_f32(float v);      // little-endian IEEE bits
  void update_f32s(const float* v, size_t n);
  void update_str(const std::string& s);

  std::array<uint8_t, 32> finish();
  std::string finish_hex();

 private:
  void* ctx_;
};

std::string sha256_hex(const void* bytes, size_t n);
std::string sha256_hex(const std::vector<uint8_t>& bytes);
std::string sha256_hex(const std::string& s);
std::string to_hex(const std::array<uint8_t, 32>& d);

}  // namespace oodmark
