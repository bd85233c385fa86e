#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "oodmark/dataset.hpp"
#include "oodmark/model.hpp"

namespace oodmark {

// Mean cross-entropy between softmax(logits) and target distributions
// ({N,C} rows). If dlogits is non-null it receives d(loss)/d(logits).
double cross_entropy_soft(const Tensor& logits, const Tensor& targets, Tensor* dlogits);

// Mean cross-entropy against integer labels.
double cross_entropy_hard(const Tensor& logits, const std::vector<uint32_t>& labels,
                          Tensor* dlogits);

// Mean KL(softmax(p_logits_row) || softmax(q_logits_row)) over paired rows.
// Gradients are accumulated into the optional outputs.
double kl_divergence_paired(const Tensor& p_logits, const Tensor& q_logits,
                            const std::vector<std::pair<int, int>>& pairs,
                            Tensor* dp, Tensor* dq);

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

// SGD with momentum; velocity slots align with the model's param order.
class SgdOptimizer {
 public:
  SgdOptimizer(Classifier& model, SgdConfig cfg);
  void step();
  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }

 private:
  Classifier& model_;
  SgdConfig cfg_;
  std::vector<Tensor> velocity_;
};

struct TrainConfig {
  int epochs = 20;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 128;
  uint64_t seed = 0;
  bool augment = true;        // runtime flip + pad-and-crop
  int runtime_pad = 4;
  double flip_prob = 0.5;
  // optional per-parameter trainable mask hook (FT-LL etc.)
  std::function<bool(const ParamRef&)> trainable;
  // optional hook applied after each optimizer step (pruning masks)
  std::function<void(Classifier&)> post_step;
  // optional per-epoch callback (epoch index, mean loss)
  std::function<void(int, double)> on_epoch;
};

// Supervised training on hard labels. epochs == 0 is a no-op.
void train_supervised(Classifier& model, const std::vector<LabeledSample>& data,
                      const TrainConfig& cfg);

// {N,3,H,W} batch from dataset samples at the given indices.
Tensor make_batch(const std::vector<LabeledSample>& data, const std::vector<size_t>& idx);

double evaluate_accuracy(Classifier& model, const std::vector<LabeledSample>& data);

}  // namespace oodmark
