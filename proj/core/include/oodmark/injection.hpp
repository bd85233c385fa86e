#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oodmark/dataset.hpp"
#include "oodmark/model.hpp"
#include "oodmark/trigger.hpp"

namespace oodmark {

// All knobs of the min-max injection.
struct PerturbConfig {
  double gamma = 0.1;        // relative perturbation radius, in (0,1)
  double beta = 6.0;         // KL trade-off
  double eta1 = 1.0;         // perturbation ascent rate (self-normalized)
  double eta2 = 0.05;        // weight descent rate
  int wp_epochs = 5;
  int total_epochs = 20;
  double poison_ratio = 0.1;
  uint32_t target_label = 0;
  int batch_size = 128;
  bool hard_labels = false;  // ablation / ID-poison baseline mode
  int verification_count = 450;

  void validate() const;
};

// Layer-aligned perturbation tensors over the non-norm weight layers.
struct Perturbation {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  static Perturbation zeros_like(Classifier& model);
  void reset();
};

// The owner's secret. Sufficient to regenerate the verification set;
// never embedded in checkpoints.
struct WatermarkKey {
  std::vector<std::string> source_digests;
  std::vector<uint32_t> source_counts;  // patches generated per source
  AugmentConfig augment;
  std::string dataset_digest;  // generation digest of the surrogate set
  std::string trigger_json;    // full TriggerSpec
  uint32_t target_label = 0;
  std::vector<uint32_t> verification_indices;
  std::string owner_nonce;

  std::string to_json() const;
  static WatermarkKey from_json(const std::string& json);
  void save(const std::string& path) const;
  static WatermarkKey load(const std::string& path);
};

// L_inj = mean CE(f(x), teacher targets) over clean
//       + mean CE(f(trigger(x')), t) over poison.
double compute_inject_loss(Classifier& model, const Tensor& clean_x, const Tensor& clean_targets,
                           const Tensor& poison_x, const TriggerSpec& trigger, uint32_t t);

// L_per = L_inj(w+v, b) + beta * mean KL(f_{w+v}(x_i) || f_{w+v}(trigger(x'_i)))
// over index-paired clean/poison samples (the shorter side cycles).
// Model parameters are bit-identical before and after the call.
double compute_perturbed_loss(Classifier& model, const Perturbation& v, const Tensor& clean_x,
                              const Tensor& clean_targets, const Tensor& poison_x,
                              const TriggerSpec& trigger, uint32_t t, double beta);

// Layer-wise projection onto the gamma-relative Frobenius ball:
// if ||v_l|| > gamma * ||w_l||, rescale to the surface; a zero-norm weight
// layer forces v_l = 0.
void project_perturbation(Perturbation& v, Classifier& model, double gamma);

// v <- project(v + eta1 * grad_v L_per / ||grad_v|| * ||w||), layer-wise.
// Zero-gradient layers are left unchanged. Model parameters untouched.
void v_step(Classifier& model, Perturbation& v, const Tensor& clean_x,
            const Tensor& clean_targets, const Tensor& poison_x, const TriggerSpec& trigger,
            const PerturbConfig& cfg);

// w <- w - eta2 * grad_{w+v} L_per(w+v, b); every parameter steps on its
// own gradient; v is not mutated. Non-finite gradients abort the step.
void w_step(Classifier& model, const Perturbation& v, const Tensor& clean_x,
            const Tensor& clean_targets, const Tensor& poison_x, const TriggerSpec& trigger,
            const PerturbConfig& cfg);

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double ood_wsr = 0.0;
  double teacher_agreement = 0.0;  // accuracy proxy on clean surrogate samples
  double id_acc = -1.0;            // -1 when no ID data supplied
  double id_wsr = -1.0;
};

struct InjectResult {
  Classifier model;
  WatermarkKey key;
  std::vector<EpochMetrics> curve;
};

// Full procedure: wp_epochs of alternating v/w steps (v reset to zero per
// batch), then plain minimization of L_inj. The pretrained model is left
// untouched; supervision comes from the labels already stored in ds.
InjectResult inject_watermark(Classifier& pretrained, const SurrogateDataset& ds,
                              const TriggerSpec& trigger, const PerturbConfig& cfg, uint64_t seed,
                              const std::vector<LabeledSample>* id_eval = nullptr);

}  // namespace oodmark
