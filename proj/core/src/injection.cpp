#include "oodmark/injection.hpp"

#include <json.hpp>

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "oodmark/digest.hpp"
#include "oodmark/io_audit.hpp"
#include "oodmark/rng.hpp"
#include "oodmark/surrogate.hpp"
#include "oodmark/train.hpp"
#include "oodmark/verification.hpp"

namespace oodmark {

using nlohmann::json;

void PerturbConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in (0,1)");
  if (beta < 0.0) throw std::invalid_argument("beta must be nonnegative");
  if (wp_epochs < 0 || total_epochs < 0 || wp_epochs > total_epochs)
    throw std::invalid_argument("require 0 <= wp_epochs <= total_epochs");
  if (poison_ratio < 0.0 || poison_ratio > 1.0)
    throw std::invalid_argument("poison_ratio must be in [0,1]");
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (verification_count <= 0) throw std::invalid_argument("verification_count must be positive");
}

Perturbation Perturbation::zeros_like(Classifier& model) {
  Perturbation v;
  for (auto& p : model.params()) {
    if (!p.perturbable()) continue;
    v.names.push_back(p.name);
    v.tensors.emplace_back(p.value->shape);
  }
  return v;
}

void Perturbation::reset() {
  for (auto& t : tensors) t.fill(0.0f);
}

namespace {

std::vector<ParamRef> perturbable_params(Classifier& model) {
  std::vector<ParamRef> out;
  for (auto& p : model.params())
    if (p.perturbable()) out.push_back(p);
  return out;
}

void check_alignment(const Perturbation& v, const std::vector<ParamRef>& params) {
  if (v.tensors.size() != params.size())
    throw std::invalid_argument("perturbation is not layer-aligned with the model");
  for (size_t i = 0; i < params.size(); ++i) {
    if (v.names[i] != params[i].name || v.tensors[i].shape != params[i].value->shape)
      throw std::invalid_argument("perturbation misaligned at " + params[i].name);
  }
}

// Applies w+v on construction, restores the saved originals (bit-exact)
// on destruction.
class PerturbScope {
 public:
  PerturbScope(Classifier& model, const Perturbation& v) : params_(perturbable_params(model)) {
    check_alignment(v, params_);
    saved_.reserve(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      saved_.push_back(*params_[i].value);
      axpy(1.0f, v.tensors[i], *params_[i].value);
    }
  }
  ~PerturbScope() {
    for (size_t i = 0; i < params_.size(); ++i) *params_[i].value = saved_[i];
  }
  PerturbScope(const PerturbScope&) = delete;
  PerturbScope& operator=(const PerturbScope&) = delete;

 private:
  std::vector<ParamRef> params_;
  std::vector<Tensor> saved_;
};

// Shared loss engine: concatenated forward over [clean; triggered poison],
// all three terms and (optionally) the backward pass.
double loss_engine(Classifier& model, const Tensor& clean_x, const Tensor& clean_targets,
                   const Tensor& poison_x, const TriggerSpec& trigger, uint32_t t, double beta,
                   bool with_grad) {
  const int nc = clean_x.numel() ? clean_x.dim(0) : 0;
  const int np = poison_x.numel() ? poison_x.dim(0) : 0;
  if (nc == 0 && np == 0)
    throw std::invalid_argument("inject loss: clean and poison batches both empty");
  const int C = model.num_classes();
  if (nc > 0 && (clean_targets.ndim() != 2 || clean_targets.dim(0) != nc || clean_targets.dim(1) != C))
    throw std::invalid_argument("inject loss: clean targets shape mismatch");
  if (t >= static_cast<uint32_t>(C))
    throw std::invalid_argument("inject loss: target label out of range");

  const int hw = model.input_hw();
  Tensor x({nc + np, 3, hw, hw});
  if (nc) std::copy(clean_x.data.begin(), clean_x.data.end(), x.data.begin());
  if (np) {
    Tensor triggered = poison_x;
    apply_trigger_batch(triggered, trigger);
    std::copy(triggered.data.begin(), triggered.data.end(),
              x.data.begin() + static_cast<int64_t>(nc) * 3 * hw * hw);
  }

  const Tensor logits = model.forward(x);
  Tensor dlogits(logits.shape);

  double loss = 0.0;
  if (nc) {
    Tensor clean_logits({nc, C});
    std::copy(logits.data.begin(), logits.data.begin() + static_cast<int64_t>(nc) * C,
              clean_logits.data.begin());
    Tensor d;
    loss += cross_entropy_soft(clean_logits, clean_targets, with_grad ? &d : nullptr);
    if (with_grad)
      std::copy(d.data.begin(), d.data.end(), dlogits.data.begin());
  }
  if (np) {
    Tensor poison_logits({np, C});
    std::copy(logits.data.begin() + static_cast<int64_t>(nc) * C, logits.data.end(),
              poison_logits.data.begin());
    Tensor d;
    loss += cross_entropy_hard(poison_logits, std::vector<uint32_t>(np, t),
                               with_grad ? &d : nullptr);
    if (with_grad)
      std::copy(d.data.begin(), d.data.end(), dlogits.data.begin() + static_cast<int64_t>(nc) * C);
  }
  if (beta > 0.0 && nc > 0 && np > 0) {
    // pair i-th clean with i-th poison, cycling the shorter side
    const int m = std::max(nc, np);
    std::vector<std::pair<int, int>> pairs(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) pairs[static_cast<size_t>(i)] = {i % nc, nc + (i % np)};
    Tensor dkl(logits.shape);
    loss += beta * kl_divergence_paired(logits, logits, pairs, with_grad ? &dkl : nullptr,
                                        with_grad ? &dkl : nullptr);
    if (with_grad) axpy(static_cast<float>(beta), dkl, dlogits);
  }

  if (with_grad) model.backward(dlogits);
  return loss;
}

void copy_grads(const std::vector<ParamRef>& params, std::vector<Tensor>& out) {
  out.clear();
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(*p.grad);
}

bool all_finite(const Tensor& t) {
  for (float v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

double compute_inject_loss(Classifier& model, const Tensor& clean_x, const Tensor& clean_targets,
                           const Tensor& poison_x, const TriggerSpec& trigger, uint32_t t) {
  return loss_engine(model, clean_x, clean_targets, poison_x, trigger, t, 0.0, false);
}

double compute_perturbed_loss(Classifier& model, const Perturbation& v, const Tensor& clean_x,
                              const Tensor& clean_targets, const Tensor& poison_x,
                              const TriggerSpec& trigger, uint32_t t, double beta) {
  PerturbScope scope(model, v);
  return loss_engine(model, clean_x, clean_targets, poison_x, trigger, t, beta, false);
}

void project_perturbation(Perturbation& v, Classifier& model, double gamma) {
  const auto params = perturbable_params(model);
  check_alignment(v, params);
  for (size_t i = 0; i < params.size(); ++i) {
    const float wn = frobenius_norm(*params[i].value);
    const float vn = frobenius_norm(v.tensors[i]);
    if (wn == 0.0f) {
      if (vn > 0.0f) v.tensors[i].fill(0.0f);  // degenerate-layer rule
      continue;
    }
    const float radius = static_cast<float>(gamma) * wn;
    if (vn > radius) {
      const float scale = radius / vn;
      for (auto& x : v.tensors[i].data) x *= scale;
    }
  }
}

void v_step(Classifier& model, Perturbation& v, const Tensor& clean_x,
            const Tensor& clean_targets, const Tensor& poison_x, const TriggerSpec& trigger,
            const PerturbConfig& cfg) {
  const auto params = perturbable_params(model);
  check_alignment(v, params);

  std::vector<Tensor> grads;
  {
    PerturbScope scope(model, v);
    model.zero_grad();
    loss_engine(model, clean_x, clean_targets, poison_x, trigger, cfg.target_label, cfg.beta, true);
    copy_grads(params, grads);
  }

  for (size_t i = 0; i < params.size(); ++i) {
    const float gn = frobenius_norm(grads[i]);
    if (gn == 0.0f) continue;  // normalization guard
    const float wn = frobenius_norm(*params[i].value);
    axpy(static_cast<float>(cfg.eta1) * wn / gn, grads[i], v.tensors[i]);
  }
  project_perturbation(v, model, cfg.gamma);
}

void w_step(Classifier& model, const Perturbation& v, const Tensor& clean_x,
            const Tensor& clean_targets, const Tensor& poison_x, const TriggerSpec& trigger,
            const PerturbConfig& cfg) {
  auto all_params = model.params();
  std::vector<Tensor> grads;
  {
    PerturbScope scope(model, v);
    model.zero_grad();
    loss_engine(model, clean_x, clean_targets, poison_x, trigger, cfg.target_label, cfg.beta, true);
    copy_grads(all_params, grads);
  }
  for (const auto& g : grads)
    if (!all_finite(g)) throw std::runtime_error("w_step: non-finite gradient, step aborted");
  for (size_t i = 0; i < all_params.size(); ++i)
    axpy(-static_cast<float>(cfg.eta2), grads[i], *all_params[i].value);
}

std::string WatermarkKey::to_json() const {
  json j;
  j["source_digests"] = source_digests;
  j["source_counts"] = source_counts;
  j["augment"] = json::parse(augment.to_json());
  j["dataset_digest"] = dataset_digest;
  j["trigger"] = json::parse(trigger_json);
  j["target_label"] = target_label;
  j["verification_indices"] = verification_indices;
  j["owner_nonce"] = owner_nonce;
  return j.dump(2);
}

WatermarkKey WatermarkKey::from_json(const std::string& text) {
  const json j = json::parse(text);
  WatermarkKey k;
  k.source_digests = j.at("source_digests").get<std::vector<std::string>>();
  k.source_counts = j.at("source_counts").get<std::vector<uint32_t>>();
  k.augment = AugmentConfig::from_json(j.at("augment").dump());
  k.dataset_digest = j.at("dataset_digest").get<std::string>();
  k.trigger_json = j.at("trigger").dump();
  k.target_label = j.at("target_label").get<uint32_t>();
  k.verification_indices = j.at("verification_indices").get<std::vector<uint32_t>>();
  k.owner_nonce = j.at("owner_nonce").get<std::string>();
  return k;
}

void WatermarkKey::save(const std::string& path) const {
  const std::string text = to_json();
  io::write_file(path, text.data(), text.size());
}

WatermarkKey WatermarkKey::load(const std::string& path) {
  const auto bytes = io::read_file(path);
  return from_json(std::string(bytes.begin(), bytes.end()));
}

InjectResult inject_watermark(Classifier& pretrained, const SurrogateDataset& ds,
                              const TriggerSpec& trigger, const PerturbConfig& cfg, uint64_t seed,
                              const std::vector<LabeledSample>* id_eval) {
  cfg.validate();
  if (!ds.labeled()) throw std::invalid_argument("inject_watermark: dataset is unlabeled");
  if (!ds.manifest.partitioned && cfg.total_epochs > 0)
    throw std::invalid_argument("inject_watermark: dataset is not partitioned");
  if (static_cast<int>(ds.num_classes) != pretrained.num_classes())
    throw std::invalid_argument("inject_watermark: class count mismatch");
  if (trigger.target_label != cfg.target_label)
    throw std::invalid_argument("inject_watermark: trigger/config target label mismatch");

  InjectResult result{clone_model(pretrained), {}, {}};
  Classifier& model = result.model;

  // owner key: enough to regenerate the verification set
  WatermarkKey& key = result.key;
  key.source_digests = ds.manifest.source_digests;
  key.source_counts = {ds.manifest.count};
  key.augment = ds.manifest.augment;
  key.dataset_digest = ds.manifest.generation_digest;
  key.trigger_json = trigger.to_json();
  key.target_label = cfg.target_label;
  const uint32_t n_verify =
      std::min<uint32_t>(static_cast<uint32_t>(cfg.verification_count),
                         static_cast<uint32_t>(ds.size()));
  key.verification_indices.resize(n_verify);
  std::iota(key.verification_indices.begin(), key.verification_indices.end(), 0u);
  key.owner_nonce = std::to_string(splitmix64(seed ^ 0xb105c0de));

  std::vector<Image> verify_imgs;
  verify_imgs.reserve(n_verify);
  for (uint32_t i = 0; i < n_verify; ++i) verify_imgs.push_back(ds.samples[i].image);

  const uint32_t C = ds.num_classes;
  Perturbation v = Perturbation::zeros_like(model);

  std::vector<size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);

  auto record_metrics = [&](int epoch, double mean_loss) {
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = mean_loss;
    model.set_train(false);
    m.ood_wsr = n_verify ? compute_wsr(model, verify_imgs, trigger, cfg.target_label) : 0.0;
    // teacher-agreement proxy on (up to) the first 1000 samples
    const size_t n_proxy = std::min<size_t>(1000, ds.size());
    if (n_proxy) {
      std::vector<LabeledSample> proxy(ds.samples.begin(),
                                       ds.samples.begin() + static_cast<long>(n_proxy));
      m.teacher_agreement = evaluate_accuracy(model, proxy);
    }
    if (id_eval && !id_eval->empty()) {
      m.id_acc = evaluate_accuracy(model, *id_eval);
      std::vector<Image> id_imgs;
      id_imgs.reserve(id_eval->size());
      for (const auto& s : *id_eval) id_imgs.push_back(s.image);
      m.id_wsr = compute_wsr(model, id_imgs, trigger, cfg.target_label);
    }
    result.curve.push_back(m);
  };

  for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, 0x13ec7 + static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    const bool wp = epoch < cfg.wp_epochs;
    double epoch_loss = 0.0;
    size_t n_batches = 0;

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t bn = std::min(static_cast<size_t>(cfg.batch_size), order.size() - start);
      std::vector<LabeledSample> clean_s, poison_s;
      for (size_t i = 0; i < bn; ++i) {
        const size_t si = order[start + i];
        const uint64_t step_seed =
            derive_seed(seed, (static_cast<uint64_t>(epoch) << 40) ^ ((start + i) << 8) ^ 0x21ULL);
        LabeledSample s = runtime_augment(ds.samples[si], step_seed, ds.manifest.augment);
        if (ds.partition[si] == static_cast<uint8_t>(Partition::poison))
          poison_s.push_back(std::move(s));
        else
          clean_s.push_back(std::move(s));
      }
      const int nc = static_cast<int>(clean_s.size());
      const int np = static_cast<int>(poison_s.size());
      if (nc + np == 0) continue;

      std::vector<size_t> cidx(clean_s.size()), pidx(poison_s.size());
      std::iota(cidx.begin(), cidx.end(), 0);
      std::iota(pidx.begin(), pidx.end(), 0);
      const Tensor clean_x = nc ? make_batch(clean_s, cidx) : Tensor({0, 3, model.input_hw(), model.input_hw()});
      const Tensor poison_x = np ? make_batch(poison_s, pidx) : Tensor({0, 3, model.input_hw(), model.input_hw()});
      Tensor clean_targets({nc, static_cast<int>(C)});
      for (int i = 0; i < nc; ++i) {
        if (cfg.hard_labels)
          clean_targets[static_cast<int64_t>(i) * C + clean_s[static_cast<size_t>(i)].hard_label] = 1.0f;
        else
          std::copy(clean_s[static_cast<size_t>(i)].soft_label.begin(),
                    clean_s[static_cast<size_t>(i)].soft_label.end(),
                    clean_targets.ptr() + static_cast<int64_t>(i) * C);
      }

      model.set_train(true);
      if (wp) {
        v.reset();
        v_step(model, v, clean_x, clean_targets, poison_x, trigger, cfg);
        w_step(model, v, clean_x, clean_targets, poison_x, trigger, cfg);
        epoch_loss += compute_perturbed_loss(model, v, clean_x, clean_targets, poison_x, trigger,
                                             cfg.target_label, cfg.beta);
      } else {
        model.zero_grad();
        epoch_loss += loss_engine(model, clean_x, clean_targets, poison_x, trigger,
                                  cfg.target_label, 0.0, true);
        auto params = model.params();
        for (auto& p : params) {
          if (!all_finite(*p.grad))
            throw std::runtime_error("inject_watermark: non-finite gradient");
          axpy(-static_cast<float>(cfg.eta2), *p.grad, *p.value);
        }
      }
      ++n_batches;
    }
    record_metrics(epoch + 1, n_batches ? epoch_loss / static_cast<double>(n_batches) : 0.0);
  }

  model.set_train(false);
  return result;
}

}  // namespace oodmark
