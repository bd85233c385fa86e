#pragma once

#include <string>
#include <vector>

namespace oodmark::io {

// Every file read in the toolkit funnels through read_file so tests can
// audit which paths a pipeline stage touched (the watermark key must never
// be read by attack stages).
std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const void* bytes, size_t n);

void audit_reset();
std::vector<std::string> audit_reads();
bool audit_saw_read(const std::string& path);

}  // namespace oodmark::io
