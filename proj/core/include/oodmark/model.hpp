#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "oodmark/image.hpp"
#include "oodmark/layers.hpp"
#include "oodmark/tensor.hpp"

namespace oodmark {

// Copyable per-layer parameter snapshot (the get/set surface used by
// perturbation, pruning and tests).
struct LayerParams {
  std::string name;
  Tensor weight;
  std::optional<Tensor> bias;
  ParamKind kind;
};

// Sequential classifier over {N,3,H,W} batches.
class Classifier {
 public:
  Classifier(std::string arch, int num_classes, int input_hw);

  Tensor forward(const Tensor& batch);
  void backward(const Tensor& dlogits);

  void set_train(bool train) { train_ = train; }
  bool is_train() const { return train_; }

  const std::string& arch() const { return arch_; }
  int num_classes() const { return num_classes_; }
  int input_hw() const { return input_hw_; }

  std::vector<ParamRef> params();
  std::vector<BufferRef> buffers();
  void zero_grad();
  int64_t param_count();

  void add(std::unique_ptr<Layer> layer, const std::string& name);
  void init_params(uint64_t seed);
  Layer* layer(size_t i) { return layers_[i].get(); }
  const std::string& layer_name(size_t i) const { return names_[i]; }
  size_t layer_count() const { return layers_.size(); }

 private:
  std::string arch_;
  int num_classes_;
  int input_hw_;
  bool train_ = false;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<std::string> names_;
};

// Known architecture ids. small_conv / mini_residual are the desk-scale
// reference nets; wrn_16_2 / resnet18 are the full-size definitions.
std::vector<std::string> known_architectures();

Classifier build_model(const std::string& arch, int num_classes, uint64_t init_seed);

Classifier clone_model(Classifier& model);

// Get/set roundtrip over weight+bias grouped per layer.
std::vector<LayerParams> layer_params(Classifier& model);
void set_layer_params(Classifier& model, const std::vector<LayerParams>& params);

// sha256 over all parameter and buffer bytes in declaration order.
std::string parameter_digest(Classifier& model);

// {N,3,H,W} batch from HWC images.
Tensor images_to_batch(const std::vector<const Image*>& images);
Tensor image_to_batch(const Image& image);

Tensor softmax_rows(const Tensor& logits);
int argmax_row(const Tensor& rows, int row);  // lowest-index tie-break

}  // namespace oodmark
