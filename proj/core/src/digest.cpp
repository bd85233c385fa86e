#include "oodmark/digest.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <stdexcept>

namespace oodmark {

Sha256::Sha256() {
  EVP_MD_CTX* c = EVP_MD_CTX_new();
  if (!c || EVP_DigestInit_ex(c, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 init failed");
  ctx_ = c;
}

Sha256::~Sha256() {
  if (ctx_) EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_));
}

void Sha256::update(const void* bytes, size_t n) {
  if (EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), bytes, n) != 1)
    throw std::runtime_error("sha256 update failed");
}

void Sha256::update_u32(uint32_t v) {
  uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                  static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
  update(b, 4);
}

void Sha256::update_f32(float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  update_u32(bits);
}

void Sha256::update_f32s(const float* v, size_t n) {
  // little-endian host assumed (checked at dataset/checkpoint load)
  update(v, n * sizeof(float));
}

void Sha256::update_str(const std::string& s) {
  update_u32(static_cast<uint32_t>(s.size()));
  update(s.data(), s.size());
}

std::array<uint8_t, 32> Sha256::finish() {
  std::array<uint8_t, 32> out{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), out.data(), &len) != 1 || len != 32)
    throw std::runtime_error("sha256 final failed");
  return out;
}

std::string Sha256::finish_hex() { return to_hex(finish()); }

std::string to_hex(const std::array<uint8_t, 32>& d) {
  static const char* k = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (uint8_t b : d) {
    s.push_back(k[b >> 4]);
    s.push_back(k[b & 0xf]);
  }
  return s;
}

std::string sha256_hex(const void* bytes, size_t n) {
  Sha256 h;
  h.update(bytes, n);
  return h.finish_hex();
}

std::string sha256_hex(const std::vector<uint8_t>& bytes) {
  return sha256_hex(bytes.data(), bytes.size());
}

std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

}  // namespace oodmark
