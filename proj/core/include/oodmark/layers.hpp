#pragma once

#include <memory>
#include <string>
#include <vector>

#include "oodmark/rng.hpp"
#include "oodmark/tensor.hpp"

namespace oodmark {

enum class ParamKind : uint8_t { conv = 0, linear = 1, norm = 2 };

// Mutable view into a layer parameter. Perturbation and pruning act only
// on entries with is_weight && kind != norm.
struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
  ParamKind kind;
  bool is_weight;

  bool perturbable() const { return is_weight && kind != ParamKind::norm; }
};

// Non-trainable layer state (batch-norm running stats); saved in
// checkpoints, never touched by optimizers.
struct BufferRef {
  std::string name;
  Tensor* value;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool train) = 0;
  // Consumes d(loss)/d(output), accumulates parameter grads, returns
  // d(loss)/d(input). Must follow a forward with the same input.
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
    (void)prefix; (void)out;
  }
  virtual void collect_buffers(const std::string& prefix, std::vector<BufferRef>& out) {
    (void)prefix; (void)out;
  }
  virtual void init(Rng& rng) { (void)rng; }
  virtual std::string kind() const = 0;
};

class Conv2d : public Layer {
 public:
  Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad, bool bias = true);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;
  void init(Rng& rng) override;
  std::string kind() const override { return "conv"; }

  Tensor weight;  // {out_ch, in_ch, k, k}
  Tensor wgrad;
  Tensor bias;    // {out_ch} or empty
  Tensor bgrad;

 private:
  int in_ch_, out_ch_, k_, stride_, pad_;
  bool has_bias_;
  Tensor input_;  // cached for backward
  void im2col(const float* img, float* cols, int h, int w, int oh, int ow) const;
  void col2im(const float* cols, float* img, int h, int w, int oh, int ow) const;
};

class Linear : public Layer {
 public:
  Linear(int in_f, int out_f);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;
  void init(Rng& rng) override;
  std::string kind() const override { return "linear"; }

  Tensor weight;  // {out_f, in_f}
  Tensor wgrad;
  Tensor bias;    // {out_f}
  Tensor bgrad;

 private:
  int in_f_, out_f_;
  Tensor input_;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  std::string kind() const override { return "relu"; }

 private:
  Tensor input_;
};

// 2x2 max pooling, stride 2.
class MaxPool2 : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  std::string kind() const override { return "maxpool"; }

 private:
  std::vector<int> shape_;
  std::vector<int64_t> argmax_;
};

class GlobalAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  std::string kind() const override { return "gap"; }

 private:
  std::vector<int> shape_;
};

// {N,C,H,W} -> {N, C*H*W}
class Flatten : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  std::string kind() const override { return "flatten"; }

 private:
  std::vector<int> shape_;
};

class BatchNorm2d : public Layer {
 public:
  explicit BatchNorm2d(int ch, float eps = 1e-5f, float momentum = 0.1f);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;
  void collect_buffers(const std::string& prefix, std::vector<BufferRef>& out) override;
  std::string kind() const override { return "norm"; }

  Tensor gamma, ggrad;
  Tensor beta, bgrad;
  Tensor running_mean, running_var;

 private:
  int ch_;
  float eps_, momentum_;
  bool trained_forward_ = false;
  Tensor input_, xhat_;
  std::vector<float> batch_mean_, batch_inv_std_;
};

// conv-bn-relu-conv-bn plus identity or 1x1-conv shortcut, relu after sum.
class ResidualBlock : public Layer {
 public:
  ResidualBlock(int in_ch, int out_ch, int stride);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;
  void collect_buffers(const std::string& prefix, std::vector<BufferRef>& out) override;
  void init(Rng& rng) override;
  std::string kind() const override { return "resblock"; }

 private:
  std::unique_ptr<Conv2d> conv1_, conv2_, proj_;
  std::unique_ptr<BatchNorm2d> bn1_, bn2_, bn_proj_;
  std::unique_ptr<ReLU> relu1_;
  Tensor sum_;  // pre-activation of the output relu
};

}  // namespace oodmark
