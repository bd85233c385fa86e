#include "oodmark/verification.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "oodmark/io_audit.hpp"
#include "oodmark/stats.hpp"
#include "oodmark/surrogate.hpp"

namespace oodmark {

using nlohmann::json;

Tensor ModelQueryInterface::query(const Tensor& batch) {
  if (batch.ndim() != 4) throw std::invalid_argument("query: expected {N,3,H,W} batch");
  count(batch.dim(0));
  const bool was_train = model_.is_train();
  model_.set_train(false);
  Tensor logits = model_.forward(batch);
  model_.set_train(was_train);
  if (!labels_only_) return logits;
  Tensor onehot(logits.shape);
  const int c = logits.dim(1);
  for (int i = 0; i < logits.dim(0); ++i)
    onehot[static_cast<int64_t>(i) * c + argmax_row(logits, i)] = 1.0f;
  return onehot;
}

namespace {

constexpr size_t kQueryBatch = 256;

// Collect target-class logits and argmax hits over triggered samples.
void triggered_responses(QueryInterface& model, const std::vector<Image>& samples,
                         const TriggerSpec& trigger, uint32_t t,
                         std::vector<double>* target_logits, size_t* hits) {
  if (samples.empty()) throw std::invalid_argument("verification: empty sample set");
  if (t >= static_cast<uint32_t>(model.num_classes()))
    throw std::invalid_argument("verification: target label out of range");
  if (hits) *hits = 0;
  for (size_t start = 0; start < samples.size(); start += kQueryBatch) {
    const size_t n = std::min(kQueryBatch, samples.size() - start);
    std::vector<Image> triggered(n);
    std::vector<const Image*> ptrs(n);
    for (size_t i = 0; i < n; ++i) {
      triggered[i] = apply_trigger(samples[start + i], trigger);
      ptrs[i] = &triggered[i];
    }
    const Tensor logits = model.query(images_to_batch(ptrs));
    const int c = logits.dim(1);
    for (size_t i = 0; i < n; ++i) {
      if (target_logits)
        target_logits->push_back(logits[static_cast<int64_t>(i) * c + static_cast<int>(t)]);
      if (hits && static_cast<uint32_t>(argmax_row(logits, static_cast<int>(i))) == t) ++*hits;
    }
  }
}

}  // namespace

double compute_wsr(QueryInterface& model, const std::vector<Image>& samples,
                   const TriggerSpec& trigger, uint32_t t) {
  size_t hits = 0;
  triggered_responses(model, samples, trigger, t, nullptr, &hits);
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double compute_wsr(Classifier& model, const std::vector<Image>& samples,
                   const TriggerSpec& trigger, uint32_t t) {
  ModelQueryInterface q(model);
  return compute_wsr(q, samples, trigger, t);
}

double compute_accuracy(QueryInterface& model, const std::vector<LabeledSample>& test_set) {
  if (test_set.empty()) throw std::invalid_argument("compute_accuracy: empty test set");
  size_t correct = 0;
  for (size_t start = 0; start < test_set.size(); start += kQueryBatch) {
    const size_t n = std::min(kQueryBatch, test_set.size() - start);
    std::vector<const Image*> ptrs(n);
    for (size_t i = 0; i < n; ++i) ptrs[i] = &test_set[start + i].image;
    const Tensor logits = model.query(images_to_batch(ptrs));
    for (size_t i = 0; i < n; ++i) {
      const uint32_t label = test_set[start + i].hard_label;
      if (label >= static_cast<uint32_t>(model.num_classes()))
        throw std::invalid_argument("compute_accuracy: label out of range");
      if (static_cast<uint32_t>(argmax_row(logits, static_cast<int>(i))) == label) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(test_set.size());
}

std::pair<double, double> logits_ttest(QueryInterface& suspect, QueryInterface& reference,
                                       const std::vector<Image>& verification_samples,
                                       const TriggerSpec& trigger, uint32_t t) {
  if (suspect.num_classes() != reference.num_classes())
    throw std::invalid_argument("logits_ttest: output dimension mismatch");
  if (verification_samples.size() < 2)
    throw std::invalid_argument("logits_ttest: need at least 2 verification samples");
  std::vector<double> zs, zr;
  triggered_responses(suspect, verification_samples, trigger, t, &zs, nullptr);
  triggered_responses(reference, verification_samples, trigger, t, &zr, nullptr);
  const TTestResult r = welch_ttest(zs, zr);
  return {r.t_stat, r.p_value};
}

std::string ownership_decision(double ood_wsr, double nonwm_wsr, double p_value, int num_classes,
                               const VerifyThresholds& thresholds) {
  const double chance = 1.0 / static_cast<double>(num_classes);
  const bool copy = ood_wsr > chance &&
                    ood_wsr >= thresholds.margin * std::max(chance, nonwm_wsr) &&
                    p_value < thresholds.alpha;
  return copy ? "copy" : "not_proven";
}

std::vector<Image> regenerate_verification_set(const WatermarkKey& key,
                                               const SourceImage& source) {
  if (std::find(key.source_digests.begin(), key.source_digests.end(), source.digest) ==
      key.source_digests.end())
    throw std::invalid_argument("verification key does not reference this source image");
  if (key.source_counts.empty())
    throw std::invalid_argument("verification key records no patch counts");

  // Tamper guard: the key must reproduce the recorded dataset digest.
  const SurrogateDataset regen =
      generate_patches(source, static_cast<int64_t>(key.source_counts[0]), key.augment);
  if (regen.manifest.generation_digest != key.dataset_digest)
    throw std::runtime_error("verification key failed to regenerate the recorded dataset digest");

  std::vector<Image> out;
  out.reserve(key.verification_indices.size());
  for (uint32_t idx : key.verification_indices) {
    if (idx >= regen.size())
      throw std::invalid_argument("verification index out of range");
    out.push_back(regen.samples[idx].image);
  }
  if (out.empty()) throw std::invalid_argument("verification key has no verification indices");
  return out;
}

VerificationReport verify_ownership(QueryInterface& suspect, QueryInterface& reference,
                                    const WatermarkKey& key, const SourceImage& source,
                                    const VerifyThresholds& thresholds,
                                    const std::vector<LabeledSample>* id_test) {
  if (suspect.num_classes() != reference.num_classes())
    throw std::invalid_argument("verify_ownership: output dimension mismatch");
  const TriggerSpec trigger = TriggerSpec::from_json(key.trigger_json);
  const std::vector<Image> verification = regenerate_verification_set(key, source);

  VerificationReport report;
  report.chance_rate = 1.0 / static_cast<double>(suspect.num_classes());
  report.labels_only = suspect.labels_only() || reference.labels_only();

  const uint64_t queries_before = suspect.query_count();
  report.ood_wsr = compute_wsr(suspect, verification, trigger, key.target_label);
  report.nonwm_wsr = compute_wsr(reference, verification, trigger, key.target_label);

  if (report.labels_only) {
    const size_t n = verification.size();
    const auto hs = static_cast<size_t>(std::llround(report.ood_wsr * static_cast<double>(n)));
    const auto hr = static_cast<size_t>(std::llround(report.nonwm_wsr * static_cast<double>(n)));
    const TTestResult z = two_proportion_ztest(hs, n, hr, n);
    report.t_stat = z.t_stat;
    report.p_value = z.p_value;
  } else {
    std::tie(report.t_stat, report.p_value) =
        logits_ttest(suspect, reference, verification, trigger, key.target_label);
  }

  if (id_test && !id_test->empty()) {
    report.acc = compute_accuracy(suspect, *id_test);
    std::vector<Image> id_imgs;
    id_imgs.reserve(id_test->size());
    for (const auto& s : *id_test) id_imgs.push_back(s.image);
    report.id_wsr = compute_wsr(suspect, id_imgs, trigger, key.target_label);
  }

  report.decision = ownership_decision(report.ood_wsr, report.nonwm_wsr, report.p_value,
                                       suspect.num_classes(), thresholds);
  report.suspect_queries = suspect.query_count() - queries_before;
  return report;
}

std::string VerificationReport::to_json() const {
  json j;
  j["acc"] = acc;
  j["ood_wsr"] = ood_wsr;
  j["id_wsr"] = id_wsr;
  j["nonwm_wsr"] = nonwm_wsr;
  j["t_stat"] = t_stat;
  j["p_value"] = p_value;
  j["chance_rate"] = chance_rate;
  j["decision"] = decision;
  j["labels_only"] = labels_only;
  j["suspect_queries"] = suspect_queries;
  return j.dump(2);
}

VerificationReport VerificationReport::from_json(const std::string& text) {
  const json j = json::parse(text);
  VerificationReport r;
  r.acc = j.at("acc").get<double>();
  r.ood_wsr = j.at("ood_wsr").get<double>();
  r.id_wsr = j.at("id_wsr").get<double>();
  r.nonwm_wsr = j.at("nonwm_wsr").get<double>();
  r.t_stat = j.at("t_stat").get<double>();
  r.p_value = j.at("p_value").get<double>();
  r.chance_rate = j.at("chance_rate").get<double>();
  r.decision = j.at("decision").get<std::string>();
  r.labels_only = j.at("labels_only").get<bool>();
  r.suspect_queries = j.at("suspect_queries").get<uint64_t>();
  return r;
}

void VerificationReport::save(const std::string& path) const {
  const std::string text = to_json();
  io::write_file(path, text.data(), text.size());
}

VerificationReport VerificationReport::load(const std::string& path) {
  const auto bytes = io::read_file(path);
  return from_json(std::string(bytes.begin(), bytes.end()));
}

}  // namespace oodmark
