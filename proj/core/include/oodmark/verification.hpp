#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "oodmark/dataset.hpp"
#include "oodmark/injection.hpp"
#include "oodmark/model.hpp"
#include "oodmark/trigger.hpp"

namespace oodmark {

// The black-box contract: a suspect exposes only its outputs. Every call
// is counted so attack/verification budgets can be enforced and audited.
class QueryInterface {
 public:
  virtual ~QueryInterface() = default;

  // batch {N,3,H,W} -> logits {N,C}
  virtual Tensor query(const Tensor& batch) = 0;
  virtual int num_classes() const = 0;
  virtual int input_hw() const = 0;

  // labels-only deployments return argmax one-hots instead of logits;
  // statistical tests degrade to a proportion test in that mode.
  virtual bool labels_only() const { return false; }

  uint64_t query_count() const { return queries_; }

 protected:
  void count(int64_t n) { queries_ += static_cast<uint64_t>(n); }
  uint64_t queries_ = 0;
};

// Local model behind the black-box contract.
class ModelQueryInterface : public QueryInterface {
 public:
  explicit ModelQueryInterface(Classifier& model, bool labels_only = false)
      : model_(model), labels_only_(labels_only) {}

  Tensor query(const Tensor& batch) override;
  int num_classes() const override { return model_.num_classes(); }
  int input_hw() const override { return model_.input_hw(); }
  bool labels_only() const override { return labels_only_; }

 private:
  Classifier& model_;
  bool labels_only_;
};

struct VerifyThresholds {
  double margin = 5.0;  // "far exceeds": ood_wsr >= margin * max(1/C, nonwm_wsr)
  double alpha = 0.05;
};

struct VerificationReport {
  double acc = -1.0;  // -1 when no labeled ID test set supplied
  double ood_wsr = 0.0;
  double id_wsr = -1.0;
  double nonwm_wsr = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  double chance_rate = 0.0;
  std::string decision = "not_proven";  // "copy" | "not_proven"
  bool labels_only = false;
  uint64_t suspect_queries = 0;

  std::string to_json() const;
  static VerificationReport from_json(const std::string& json);
  void save(const std::string& path) const;
  static VerificationReport load(const std::string& path);
};

// Fraction of samples classified as t after the trigger is applied.
double compute_wsr(Classifier& model, const std::vector<Image>& samples,
                   const TriggerSpec& trigger, uint32_t t);
double compute_wsr(QueryInterface& model, const std::vector<Image>& samples,
                   const TriggerSpec& trigger, uint32_t t);

// Clean test accuracy under the black-box contract.
double compute_accuracy(QueryInterface& model, const std::vector<LabeledSample>& test_set);

// Two-sided Welch t-test on the target-class logit over triggered samples,
// suspect population vs reference population.
std::pair<double, double> logits_ttest(QueryInterface& suspect, QueryInterface& reference,
                                       const std::vector<Image>& verification_samples,
                                       const TriggerSpec& trigger, uint32_t t);

// Full decision procedure. The key regenerates the verification set from
// the owner's secret source image; a digest mismatch between the key and
// the regenerated dataset is rejected as tampering. `reference` must be an
// independent non-watermarked model of the same output dimension.
VerificationReport verify_ownership(QueryInterface& suspect, QueryInterface& reference,
                                    const WatermarkKey& key, const SourceImage& source,
                                    const VerifyThresholds& thresholds = {},
                                    const std::vector<LabeledSample>* id_test = nullptr);

// Decision predicate alone (pure in its inputs).
std::string ownership_decision(double ood_wsr, double nonwm_wsr, double p_value, int num_classes,
                               const VerifyThresholds& thresholds);

// Rebuild the triggered-verification inputs recorded in the key.
std::vector<Image> regenerate_verification_set(const WatermarkKey& key, const SourceImage& source);

}  // namespace oodmark
