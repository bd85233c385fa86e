#include "oodmark/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <stdexcept>

#include "oodmark/digest.hpp"
#include "oodmark/io_audit.hpp"

namespace oodmark {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'O', 'O', 'D', 'M', 'C', 'K', 'P', '1'};

void append_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 24));
}

uint32_t read_u32(const std::vector<uint8_t>& b, size_t& off) {
  if (off + 4 > b.size()) throw std::runtime_error("truncated checkpoint");
  uint32_t v = b[off] | (b[off + 1] << 8) | (b[off + 2] << 16)
               | (static_cast<uint32_t>(b[off + 3]) << 24);
  off += 4;
  return v;
}

void append_tensor_entry(std::vector<uint8_t>& out, const std::string& name, const Tensor& t) {
  append_u32(out, static_cast<uint32_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  append_u32(out, static_cast<uint32_t>(t.shape.size()));
  for (int d : t.shape) append_u32(out, static_cast<uint32_t>(d));
  const auto* bytes = reinterpret_cast<const uint8_t*>(t.data.data());
  out.insert(out.end(), bytes, bytes + t.data.size() * sizeof(float));
}

}  // namespace

void save_checkpoint(Classifier& model, const std::string& path,
                     const std::map<std::string, std::string>& extra) {
  json meta;
  meta["arch"] = model.arch();
  meta["num_classes"] = model.num_classes();
  meta["param_digest"] = parameter_digest(model);
  meta["extra"] = extra;
  const std::string meta_text = meta.dump();

  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 8);
  append_u32(out, static_cast<uint32_t>(meta_text.size()));
  out.insert(out.end(), meta_text.begin(), meta_text.end());

  const auto params = model.params();
  const auto buffers = model.buffers();
  append_u32(out, static_cast<uint32_t>(params.size() + buffers.size()));
  for (const auto& p : params) append_tensor_entry(out, "p:" + p.name, *p.value);
  for (const auto& b : buffers) append_tensor_entry(out, "b:" + b.name, *b.value);

  io::write_file(path, out.data(), out.size());
}

static Classifier load_impl(const std::string& path, const std::string& expected_arch,
                            CheckpointMeta* meta_out) {
  const auto bytes = io::read_file(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw std::runtime_error("not an oodmark checkpoint: " + path);
  size_t off = 8;
  const uint32_t meta_len = read_u32(bytes, off);
  if (off + meta_len > bytes.size()) throw std::runtime_error("truncated checkpoint");
  const json meta = json::parse(std::string(bytes.begin() + static_cast<long>(off),
                                            bytes.begin() + static_cast<long>(off + meta_len)));
  off += meta_len;

  const std::string arch = meta.at("arch").get<std::string>();
  if (!expected_arch.empty() && arch != expected_arch)
    throw std::runtime_error("checkpoint architecture '" + arch + "' does not match expected '" +
                             expected_arch + "'");
  Classifier model = build_model(arch, meta.at("num_classes").get<int>(), 0);

  const uint32_t n_entries = read_u32(bytes, off);
  std::map<std::string, Tensor> table;
  for (uint32_t e = 0; e < n_entries; ++e) {
    const uint32_t name_len = read_u32(bytes, off);
    if (off + name_len > bytes.size()) throw std::runtime_error("truncated checkpoint");
    std::string name(bytes.begin() + static_cast<long>(off),
                     bytes.begin() + static_cast<long>(off + name_len));
    off += name_len;
    const uint32_t ndim = read_u32(bytes, off);
    std::vector<int> shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<int>(read_u32(bytes, off));
    Tensor t(shape);
    const size_t nbytes = t.data.size() * sizeof(float);
    if (off + nbytes > bytes.size()) throw std::runtime_error("truncated checkpoint");
    std::memcpy(t.data.data(), bytes.data() + off, nbytes);
    off += nbytes;
    table.emplace(std::move(name), std::move(t));
  }

  for (auto& p : model.params()) {
    auto it = table.find("p:" + p.name);
    if (it == table.end()) throw std::runtime_error("checkpoint missing parameter " + p.name);
    if (it->second.shape != p.value->shape)
      throw std::runtime_error("checkpoint shape mismatch at " + p.name);
    *p.value = it->second;
  }
  for (auto& b : model.buffers()) {
    auto it = table.find("b:" + b.name);
    if (it == table.end()) throw std::runtime_error("checkpoint missing buffer " + b.name);
    *b.value = it->second;
  }

  const std::string expect_digest = meta.at("param_digest").get<std::string>();
  if (parameter_digest(model) != expect_digest)
    throw std::runtime_error("checkpoint digest mismatch (corrupt file): " + path);

  if (meta_out) {
    meta_out->arch = arch;
    meta_out->num_classes = model.num_classes();
    meta_out->param_digest = expect_digest;
    meta_out->extra = meta.at("extra").get<std::map<std::string, std::string>>();
  }
  return model;
}

Classifier load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  return load_impl(path, "", meta);
}

Classifier load_checkpoint_as(const std::string& path, const std::string& expected_arch,
                              CheckpointMeta* meta) {
  return load_impl(path, expected_arch, meta);
}

}  // namespace oodmark
