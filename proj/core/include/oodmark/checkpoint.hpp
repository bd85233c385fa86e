#pragma once

#include <map>
#include <string>

#include "oodmark/model.hpp"

namespace oodmark {

struct CheckpointMeta {
  std::string arch;
  int num_classes = 0;
  std::string param_digest;
  // free-form provenance (training config digest, epoch, metrics, ...)
  std::map<std::string, std::string> extra;
};

// Binary archive: header JSON (arch, classes, digests, metadata) followed
// by a name -> little-endian f32 tensor table covering parameters and
// buffers. Roundtrip is bit-exact; loads are digest-verified.
void save_checkpoint(Classifier& model, const std::string& path,
                     const std::map<std::string, std::string>& extra = {});

Classifier load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

// Reject early if the file's architecture id differs from `expected_arch`.
Classifier load_checkpoint_as(const std::string& path, const std::string& expected_arch,
                              CheckpointMeta* meta = nullptr);

}  // namespace oodmark
