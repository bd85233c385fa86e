#include "oodmark/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "oodmark/digest.hpp"

namespace oodmark {

Classifier::Classifier(std::string arch, int num_classes, int input_hw)
    : arch_(std::move(arch)), num_classes_(num_classes), input_hw_(input_hw) {}

void Classifier::add(std::unique_ptr<Layer> layer, const std::string& name) {
  layers_.push_back(std::move(layer));
  names_.push_back(name);
}

Tensor Classifier::forward(const Tensor& batch) {
  if (batch.ndim() != 4 || batch.dim(1) != 3 || batch.dim(2) != input_hw_ ||
      batch.dim(3) != input_hw_)
    throw std::invalid_argument("Classifier: expected {N,3," + std::to_string(input_hw_) + "," +
                                std::to_string(input_hw_) + "} batch, got " + batch.shape_str());
  Tensor x = batch;
  for (auto& l : layers_) x = l->forward(x, train_);
  return x;
}

void Classifier::backward(const Tensor& dlogits) {
  Tensor g = dlogits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
}

std::vector<ParamRef> Classifier::params() {
  std::vector<ParamRef> out;
  for (size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect_params(names_[i], out);
  return out;
}

std::vector<BufferRef> Classifier::buffers() {
  std::vector<BufferRef> out;
  for (size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect_buffers(names_[i], out);
  return out;
}

void Classifier::zero_grad() {
  for (auto& p : params()) p.grad->fill(0.0f);
}

int64_t Classifier::param_count() {
  int64_t n = 0;
  for (auto& p : params()) n += p.value->numel();
  return n;
}

void Classifier::init_params(uint64_t seed) {
  Rng rng(splitmix64(seed ^ 0x6f6f646d61726bULL));
  for (auto& l : layers_) l->init(rng);
}

std::vector<std::string> known_architectures() {
  return {"micro", "small_conv", "mini_residual", "wrn_16_2", "resnet18"};
}

namespace {

void build_micro(Classifier& m, int C) {
  m.add(std::make_unique<Conv2d>(3, 4, 3, 1, 1), "conv1");
  m.add(std::make_unique<ReLU>(), "relu1");
  m.add(std::make_unique<MaxPool2>(), "pool1");
  m.add(std::make_unique<Flatten>(), "flatten");
  m.add(std::make_unique<Linear>(4 * 4 * 4, C), "fc");
}

void build_small_conv(Classifier& m, int C) {
  m.add(std::make_unique<Conv2d>(3, 8, 3, 1, 1), "conv1");
  m.add(std::make_unique<ReLU>(), "relu1");
  m.add(std::make_unique<MaxPool2>(), "pool1");
  m.add(std::make_unique<Conv2d>(8, 16, 3, 1, 1), "conv2");
  m.add(std::make_unique<ReLU>(), "relu2");
  m.add(std::make_unique<MaxPool2>(), "pool2");
  m.add(std::make_unique<Conv2d>(16, 32, 3, 1, 1), "conv3");
  m.add(std::make_unique<ReLU>(), "relu3");
  m.add(std::make_unique<MaxPool2>(), "pool3");
  m.add(std::make_unique<Flatten>(), "flatten");
  m.add(std::make_unique<Linear>(32 * 4 * 4, 64), "fc1");
  m.add(std::make_unique<ReLU>(), "relu4");
  m.add(std::make_unique<Linear>(64, C), "fc2");
}

void build_mini_residual(Classifier& m, int C) {
  m.add(std::make_unique<Conv2d>(3, 16, 3, 1, 1, false), "stem.conv");
  m.add(std::make_unique<BatchNorm2d>(16), "stem.bn");
  m.add(std::make_unique<ReLU>(), "stem.relu");
  m.add(std::make_unique<ResidualBlock>(16, 16, 1), "block1");
  m.add(std::make_unique<ResidualBlock>(16, 32, 2), "block2");
  m.add(std::make_unique<ResidualBlock>(32, 64, 2), "block3");
  m.add(std::make_unique<GlobalAvgPool>(), "gap");
  m.add(std::make_unique<Linear>(64, C), "fc");
}

void build_wrn_16_2(Classifier& m, int C) {
  // depth 16, widen 2: three groups of two blocks at widths 32/64/128
  m.add(std::make_unique<Conv2d>(3, 16, 3, 1, 1, false), "stem.conv");
  m.add(std::make_unique<BatchNorm2d>(16), "stem.bn");
  m.add(std::make_unique<ReLU>(), "stem.relu");
  const int widths[3] = {32, 64, 128};
  int in_ch = 16;
  for (int g = 0; g < 3; ++g) {
    const int stride = g == 0 ? 1 : 2;
    m.add(std::make_unique<ResidualBlock>(in_ch, widths[g], stride),
          "group" + std::to_string(g + 1) + ".block1");
    m.add(std::make_unique<ResidualBlock>(widths[g], widths[g], 1),
          "group" + std::to_string(g + 1) + ".block2");
    in_ch = widths[g];
  }
  m.add(std::make_unique<GlobalAvgPool>(), "gap");
  m.add(std::make_unique<Linear>(128, C), "fc");
}

void build_resnet18(Classifier& m, int C) {
  // CIFAR-style stem (3x3, no initial downsampling)
  m.add(std::make_unique<Conv2d>(3, 64, 3, 1, 1, false), "stem.conv");
  m.add(std::make_unique<BatchNorm2d>(64), "stem.bn");
  m.add(std::make_unique<ReLU>(), "stem.relu");
  const int widths[4] = {64, 128, 256, 512};
  int in_ch = 64;
  for (int g = 0; g < 4; ++g) {
    const int stride = g == 0 ? 1 : 2;
    m.add(std::make_unique<ResidualBlock>(in_ch, widths[g], stride),
          "group" + std::to_string(g + 1) + ".block1");
    m.add(std::make_unique<ResidualBlock>(widths[g], widths[g], 1),
          "group" + std::to_string(g + 1) + ".block2");
    in_ch = widths[g];
  }
  m.add(std::make_unique<GlobalAvgPool>(), "gap");
  m.add(std::make_unique<Linear>(512, C), "fc");
}

}  // namespace

Classifier build_model(const std::string& arch, int num_classes, uint64_t init_seed) {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  const int hw = arch == "micro" ? 8 : 32;
  Classifier m(arch, num_classes, hw);
  if (arch == "micro")
    build_micro(m, num_classes);
  else if (arch == "small_conv")
    build_small_conv(m, num_classes);
  else if (arch == "mini_residual")
    build_mini_residual(m, num_classes);
  else if (arch == "wrn_16_2")
    build_wrn_16_2(m, num_classes);
  else if (arch == "resnet18")
    build_resnet18(m, num_classes);
  else {
    std::string known;
    for (const auto& a : known_architectures()) known += (known.empty() ? "" : ", ") + a;
    throw std::invalid_argument("unknown architecture '" + arch + "'; known: " + known);
  }
  m.init_params(init_seed);
  return m;
}

Classifier clone_model(Classifier& model) {
  Classifier out = build_model(model.arch(), model.num_classes(), 0);
  auto src = model.params();
  auto dst = out.params();
  for (size_t i = 0; i < src.size(); ++i) *dst[i].value = *src[i].value;
  auto sb = model.buffers();
  auto db = out.buffers();
  for (size_t i = 0; i < sb.size(); ++i) *db[i].value = *sb[i].value;
  return out;
}

std::vector<LayerParams> layer_params(Classifier& model) {
  std::vector<LayerParams> out;
  for (auto& p : model.params()) {
    // strip ".weight"/".bias"/".gamma"/".beta" to group by owning layer
    const auto dot = p.name.rfind('.');
    const std::string base = p.name.substr(0, dot);
    if (p.is_weight) {
      LayerParams lp;
      lp.name = base;
      lp.weight = *p.value;
      lp.kind = p.kind;
      out.push_back(std::move(lp));
    } else {
      if (out.empty() || out.back().name != base)
        throw std::runtime_error("bias parameter without preceding weight: " + p.name);
      out.back().bias = *p.value;
    }
  }
  return out;
}

void set_layer_params(Classifier& model, const std::vector<LayerParams>& params) {
  auto refs = model.params();
  size_t li = 0;
  for (size_t i = 0; i < refs.size(); ++i) {
    const auto dot = refs[i].name.rfind('.');
    const std::string base = refs[i].name.substr(0, dot);
    if (refs[i].is_weight) {
      if (li >= params.size() || params[li].name != base)
        throw std::invalid_argument("set_layer_params: layer list does not match model");
      if (params[li].weight.shape != refs[i].value->shape)
        throw std::invalid_argument("set_layer_params: weight shape mismatch at " + base);
      *refs[i].value = params[li].weight;
      ++li;
    } else {
      const auto& lp = params[li - 1];
      if (!lp.bias || lp.bias->shape != refs[i].value->shape)
        throw std::invalid_argument("set_layer_params: bias shape mismatch at " + base);
      *refs[i].value = *lp.bias;
    }
  }
  if (li != params.size())
    throw std::invalid_argument("set_layer_params: extra layers in input");
}

std::string parameter_digest(Classifier& model) {
  Sha256 h;
  for (auto& p : model.params()) {
    h.update_str(p.name);
    h.update_f32s(p.value->ptr(), p.value->data.size());
  }
  for (auto& b : model.buffers()) {
    h.update_str(b.name);
    h.update_f32s(b.value->ptr(), b.value->data.size());
  }
  return h.finish_hex();
}

Tensor images_to_batch(const std::vector<const Image*>& images) {
  if (images.empty()) return Tensor({0, 3, 0, 0});
  const int h = images[0]->height, w = images[0]->width;
  Tensor out({static_cast<int>(images.size()), 3, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (size_t i = 0; i < images.size(); ++i) {
    const Image& img = *images[i];
    if (img.height != h || img.width != w)
      throw std::invalid_argument("images_to_batch: mixed image sizes");
    float* base = out.ptr() + static_cast<int64_t>(i) * 3 * plane;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) base[c * plane + static_cast<int64_t>(y) * w + x] = img.at(y, x, c);
  }
  return out;
}

Tensor image_to_batch(const Image& image) { return images_to_batch({&image}); }

Tensor softmax_rows(const Tensor& logits) {
  if (logits.ndim() != 2) throw std::invalid_argument("softmax_rows: expected 2-D tensor");
  const int n = logits.dim(0), c = logits.dim(1);
  Tensor out({n, c});
  for (int i = 0; i < n; ++i) {
    const float* z = logits.ptr() + static_cast<int64_t>(i) * c;
    float* p = out.ptr() + static_cast<int64_t>(i) * c;
    float mx = z[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, z[j]);
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += std::exp(static_cast<double>(z[j]) - mx);
    for (int j = 0; j < c; ++j)
      p[j] = static_cast<float>(std::exp(static_cast<double>(z[j]) - mx) / s);
  }
  return out;
}

int argmax_row(const Tensor& rows, int row) {
  const int c = rows.dim(1);
  const float* p = rows.ptr() + static_cast<int64_t>(row) * c;
  int best = 0;
  for (int j = 1; j < c; ++j)
    if (p[j] > p[best]) best = j;
  return best;
}

}  // namespace oodmark
