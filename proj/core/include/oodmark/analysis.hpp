#pragma once

#include <string>
#include <vector>

#include "oodmark/image.hpp"
#include "oodmark/model.hpp"
#include "oodmark/trigger.hpp"

namespace oodmark {

// Watermark loss along the straight line between two parameter vectors:
// losses[i] is evaluated at (1 - t_i) * theta_a + t_i * theta_b.
struct LandscapeCurve {
  std::vector<double> coefficients;
  std::vector<double> losses;

  std::string to_csv() const;  // coefficient,loss rows with header
};

// Mean cross-entropy to the target label on triggered samples (the
// quantity the watermark drives down).
double watermark_loss(Classifier& model, const std::vector<Image>& samples,
                      const TriggerSpec& trigger, uint32_t t);

LandscapeCurve loss_interpolation(Classifier& model_a, Classifier& model_b,
                                  const std::vector<Image>& eval_set, const TriggerSpec& trigger,
                                  uint32_t t_label, int steps);

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<uint64_t> counts;

  std::string to_csv() const;  // bin_lo,bin_hi,count rows with header
};

// Histogram over all prunable (conv + linear) weights.
Histogram weight_histogram(Classifier& model, int bins);

// E(x) = -T * log sum_j exp(f_j(x) / T), stable log-sum-exp.
std::vector<double> energy_scores(Classifier& model, const Tensor& batch, double temperature);

struct EnergyReport {
  std::vector<double> id_scores;
  std::vector<double> ood_scores;
  double temperature = 1.0;
  double auroc = 0.0;
  double aupr = 0.0;
  // lower energy reads as more ID-like; recorded so downstream consumers
  // never have to guess the sign convention
  std::string orientation = "lower_is_id";

  std::string to_json() const;
  static EnergyReport from_json(const std::string& json);
};

// AUROC (ties 0.5) and AUPR (OoD positive, trapezoidal PR integration)
// for the lower-is-ID energy detector.
std::pair<double, double> ood_detection_metrics(const std::vector<double>& id_scores,
                                                const std::vector<double>& ood_scores);

EnergyReport energy_report(Classifier& model, const std::vector<Image>& id_samples,
                           const std::vector<Image>& ood_samples, double temperature);

}  // namespace oodmark
