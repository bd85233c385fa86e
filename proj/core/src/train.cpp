#include "oodmark/train.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "oodmark/rng.hpp"
#include "oodmark/surrogate.hpp"

namespace oodmark {

double cross_entropy_soft(const Tensor& logits, const Tensor& targets, Tensor* dlogits) {
  if (!logits.same_shape(targets))
    throw std::invalid_argument("cross_entropy_soft: logits/targets shape mismatch");
  const int n = logits.dim(0), c = logits.dim(1);
  if (n == 0) {
    if (dlogits) *dlogits = Tensor(logits.shape);
    return 0.0;
  }
  const Tensor probs = softmax_rows(logits);
  double loss = 0.0;
  if (dlogits) *dlogits = Tensor(logits.shape);
  for (int i = 0; i < n; ++i) {
    const float* z = logits.ptr() + static_cast<int64_t>(i) * c;
    const float* q = targets.ptr() + static_cast<int64_t>(i) * c;
    const float* p = probs.ptr() + static_cast<int64_t>(i) * c;
    // log-softmax computed directly for stability
    float mx = z[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, z[j]);
    double lse = 0.0;
    for (int j = 0; j < c; ++j) lse += std::exp(static_cast<double>(z[j]) - mx);
    lse = std::log(lse) + mx;
    for (int j = 0; j < c; ++j) {
      loss -= static_cast<double>(q[j]) * (static_cast<double>(z[j]) - lse);
      if (dlogits)
        (*dlogits)[static_cast<int64_t>(i) * c + j] = (p[j] - q[j]) / static_cast<float>(n);
    }
  }
  return loss / n;
}

double cross_entropy_hard(const Tensor& logits, const std::vector<uint32_t>& labels,
                          Tensor* dlogits) {
  const int n = logits.dim(0), c = logits.dim(1);
  if (static_cast<size_t>(n) != labels.size())
    throw std::invalid_argument("cross_entropy_hard: label count mismatch");
  Tensor targets({n, c});
  for (int i = 0; i < n; ++i) {
    if (labels[static_cast<size_t>(i)] >= static_cast<uint32_t>(c))
      throw std::invalid_argument("cross_entropy_hard: label out of range");
    targets[static_cast<int64_t>(i) * c + labels[static_cast<size_t>(i)]] = 1.0f;
  }
  return cross_entropy_soft(logits, targets, dlogits);
}

double kl_divergence_paired(const Tensor& p_logits, const Tensor& q_logits,
                            const std::vector<std::pair<int, int>>& pairs,
                            Tensor* dp, Tensor* dq) {
  if (pairs.empty()) return 0.0;
  const int c = p_logits.dim(1);
  if (q_logits.dim(1) != c)
    throw std::invalid_argument("kl_divergence_paired: class count mismatch");
  const Tensor p = softmax_rows(p_logits);
  const Tensor q = softmax_rows(q_logits);
  const double inv_m = 1.0 / static_cast<double>(pairs.size());
  double total = 0.0;
  for (const auto& [pi, qi] : pairs) {
    const float* pr = p.ptr() + static_cast<int64_t>(pi) * c;
    const float* qr = q.ptr() + static_cast<int64_t>(qi) * c;
    double kl = 0.0;
    for (int j = 0; j < c; ++j) {
      const double pj = std::max(static_cast<double>(pr[j]), 1e-12);
      const double qj = std::max(static_cast<double>(qr[j]), 1e-12);
      kl += pj * (std::log(pj) - std::log(qj));
    }
    total += kl;
    if (dp) {
      // d/dz_p KL = p_k * ((log p_k - log q_k) - KL)
      for (int j = 0; j < c; ++j) {
        const double pj = std::max(static_cast<double>(pr[j]), 1e-12);
        const double qj = std::max(static_cast<double>(qr[j]), 1e-12);
        (*dp)[static_cast<int64_t>(pi) * c + j] +=
            static_cast<float>(inv_m * pj * ((std::log(pj) - std::log(qj)) - kl));
      }
    }
    if (dq) {
      // d/dz_q KL = q_k - p_k
      for (int j = 0; j < c; ++j)
        (*dq)[static_cast<int64_t>(qi) * c + j] += static_cast<float>(inv_m * (qr[j] - pr[j]));
    }
  }
  return total * inv_m;
}

SgdOptimizer::SgdOptimizer(Classifier& model, SgdConfig cfg) : model_(model), cfg_(cfg) {
  for (auto& p : model_.params()) velocity_.emplace_back(p.value->shape);
}

void SgdOptimizer::step() {
  auto params = model_.params();
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& v = velocity_[i];
    Tensor& w = *params[i].value;
    Tensor& g = *params[i].grad;
    for (size_t j = 0; j < w.data.size(); ++j) {
      float grad = g.data[j];
      if (cfg_.weight_decay > 0.0 && params[i].is_weight && params[i].kind != ParamKind::norm)
        grad += static_cast<float>(cfg_.weight_decay) * w.data[j];
      v.data[j] = static_cast<float>(cfg_.momentum) * v.data[j] + grad;
      w.data[j] -= static_cast<float>(cfg_.lr) * v.data[j];
    }
  }
}

Tensor make_batch(const std::vector<LabeledSample>& data, const std::vector<size_t>& idx) {
  std::vector<const Image*> imgs(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) imgs[i] = &data[idx[i]].image;
  return images_to_batch(imgs);
}

void train_supervised(Classifier& model, const std::vector<LabeledSample>& data,
                      const TrainConfig& cfg) {
  if (cfg.epochs == 0) return;
  if (data.empty()) throw std::invalid_argument("train_supervised: empty dataset");
  for (const auto& s : data)
    if (s.hard_label == LabeledSample::kUnlabeled)
      throw std::invalid_argument("train_supervised: dataset has unlabeled samples");

  AugmentConfig aug;
  aug.flip_prob = cfg.flip_prob;
  aug.runtime_pad = cfg.runtime_pad;

  SgdOptimizer opt(model, {cfg.lr, cfg.momentum, cfg.weight_decay});
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, 0xe90c + static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    model.set_train(true);
    double epoch_loss = 0.0;
    size_t batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t n = std::min(static_cast<size_t>(cfg.batch_size), order.size() - start);
      std::vector<LabeledSample> batch_samples(n);
      std::vector<uint32_t> labels(n);
      for (size_t i = 0; i < n; ++i) {
        const auto& s = data[order[start + i]];
        if (cfg.augment) {
          const uint64_t step_seed =
              derive_seed(cfg.seed, (static_cast<uint64_t>(epoch) << 32) ^ (start + i) ^ 0xa06ULL);
          batch_samples[i] = runtime_augment(s, step_seed, aug);
        } else {
          batch_samples[i] = s;
        }
        labels[i] = s.hard_label;
      }
      std::vector<size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      const Tensor x = make_batch(batch_samples, idx);
      const Tensor logits = model.forward(x);
      Tensor dlogits;
      epoch_loss += cross_entropy_hard(logits, labels, &dlogits);
      ++batches;
      model.zero_grad();
      model.backward(dlogits);
      if (cfg.trainable) {
        for (auto& p : model.params())
          if (!cfg.trainable(p)) p.grad->fill(0.0f);
      }
      opt.step();
      if (cfg.post_step) cfg.post_step(model);
    }
    if (cfg.on_epoch) cfg.on_epoch(epoch, epoch_loss / static_cast<double>(batches));
  }
  model.set_train(false);
}

double evaluate_accuracy(Classifier& model, const std::vector<LabeledSample>& data) {
  if (data.empty()) throw std::invalid_argument("evaluate_accuracy: empty dataset");
  model.set_train(false);
  const size_t batch = 256;
  size_t correct = 0;
  for (size_t start = 0; start < data.size(); start += batch) {
    const size_t n = std::min(batch, data.size() - start);
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = model.forward(make_batch(data, idx));
    for (size_t i = 0; i < n; ++i) {
      const auto& s = data[start + i];
      if (s.hard_label >= static_cast<uint32_t>(model.num_classes()))
        throw std::invalid_argument("evaluate_accuracy: label out of range");
      if (static_cast<uint32_t>(argmax_row(logits, static_cast<int>(i))) == s.hard_label)
        ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace oodmark
