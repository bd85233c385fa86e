#include "oodmark/io_audit.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <stdexcept>

namespace oodmark::io {

namespace {
std::mutex g_mu;
std::vector<std::string> g_reads;

void record_read(const std::string& path) {
  std::lock_guard<std::mutex> lk(g_mu);
  g_reads.push_back(path);
}
}  // namespace

std::vector<uint8_t> read_file(const std::string& path) {
  record_read(path);
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open file for reading: " + path);
  f.seekg(0, std::ios::end);
  const auto n = static_cast<size_t>(f.tellg());
  f.seekg(0, std::ios::beg);
  std::vector<uint8_t> bytes(n);
  if (n) f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  if (!f) throw std::runtime_error("short read: " + path);
  return bytes;
}

void write_file(const std::string& path, const void* bytes, size_t n) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open file for writing: " + path);
  f.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(n));
  if (!f) throw std::runtime_error("short write: " + path);
}

void audit_reset() {
  std::lock_guard<std::mutex> lk(g_mu);
  g_reads.clear();
}

std::vector<std::string> audit_reads() {
  std::lock_guard<std::mutex> lk(g_mu);
  return g_reads;
}

bool audit_saw_read(const std::string& path) {
  std::lock_guard<std::mutex> lk(g_mu);
  return std::find(g_reads.begin(), g_reads.end(), path) != g_reads.end();
}

}  // namespace oodmark::io
