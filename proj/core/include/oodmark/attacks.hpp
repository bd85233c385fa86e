#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oodmark/dataset.hpp"
#include "oodmark/model.hpp"
#include "oodmark/verification.hpp"

namespace oodmark {

enum class AttackKind : uint8_t { ft_al = 0, ft_ll = 1, rt_al = 2, prune = 3, extract = 4 };

std::string attack_kind_name(AttackKind kind);
AttackKind parse_attack_kind(const std::string& name);

struct AttackConfig {
  AttackKind kind = AttackKind::ft_al;
  double data_fraction = 0.1;  // share of the ID training split the adversary holds
  int epochs = 10;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int batch_size = 128;
  double prune_ratio = 0.5;
  int64_t query_budget = 1'000'000;
  std::string student_arch = "small_conv";
  uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static AttackConfig from_json(const std::string& json);
};

// Seeded subsample standing in for the adversary's partial training data.
std::vector<LabeledSample> subsample_id_data(const std::vector<LabeledSample>& data,
                                             double fraction, uint64_t seed);

// FT-AL: fine-tune everything. FT-LL: only the final linear layer trains.
// RT-AL: the final linear layer is re-initialized (seeded) and everything
// trains. The victim is never modified.
Classifier finetune_attack(Classifier& victim, const std::vector<LabeledSample>& id_data,
                           const AttackConfig& cfg);

// Keep flags per prunable parameter tensor, aligned with the model's
// perturbable-parameter order.
struct PruneMask {
  std::vector<std::string> names;
  std::vector<std::vector<uint8_t>> keep;  // 0 = pruned position
  size_t pruned_count = 0;
};

// Zero the round(ratio * N) globally smallest-|w| conv/linear weights
// (stable order tie-break) and return the mask.
PruneMask apply_global_pruning(Classifier& model, double ratio);

// Enforce mask zeros on the model (used after every recovery step).
void enforce_prune_mask(Classifier& model, const PruneMask& mask);

// Global magnitude pruning followed by a recovery fine-tune with the zero
// mask held fixed. ratio = 0 reduces exactly to FT-AL at the same seed.
Classifier prune_attack(Classifier& victim, const std::vector<LabeledSample>& id_data,
                        const AttackConfig& cfg);

struct ExtractResult {
  Classifier suspect;
  uint64_t queries_used = 0;
  bool budget_exhausted = false;  // partial suspect: labeling stopped early
  size_t labeled_aux = 0;
};

// Knockoff-style model extraction. The victim is reachable only through
// the query interface; auxiliary images are labeled once with the victim's
// softmax and the student distills those soft labels.
ExtractResult extract_attack(QueryInterface& victim, const std::vector<LabeledSample>& aux_data,
                             const AttackConfig& cfg);

}  // namespace oodmark
