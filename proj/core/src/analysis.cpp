#include "oodmark/analysis.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "oodmark/train.hpp"

namespace oodmark {

using nlohmann::json;

double watermark_loss(Classifier& model, const std::vector<Image>& samples,
                      const TriggerSpec& trigger, uint32_t t) {
  if (samples.empty()) throw std::invalid_argument("watermark_loss: empty sample set");
  model.set_train(false);
  const size_t batch = 256;
  double total = 0.0;
  for (size_t start = 0; start < samples.size(); start += batch) {
    const size_t n = std::min(batch, samples.size() - start);
    std::vector<Image> triggered(n);
    std::vector<const Image*> ptrs(n);
    for (size_t i = 0; i < n; ++i) {
      triggered[i] = apply_trigger(samples[start + i], trigger);
      ptrs[i] = &triggered[i];
    }
    const Tensor logits = model.forward(images_to_batch(ptrs));
    total += cross_entropy_hard(logits, std::vector<uint32_t>(n, t), nullptr) *
             static_cast<double>(n);
  }
  return total / static_cast<double>(samples.size());
}

LandscapeCurve loss_interpolation(Classifier& model_a, Classifier& model_b,
                                  const std::vector<Image>& eval_set, const TriggerSpec& trigger,
                                  uint32_t t_label, int steps) {
  if (model_a.arch() != model_b.arch() || model_a.num_classes() != model_b.num_classes())
    throw std::invalid_argument("loss_interpolation: architecture mismatch");
  if (steps < 1) throw std::invalid_argument("loss_interpolation: steps must be >= 1");

  Classifier probe = clone_model(model_a);
  auto pa = model_a.params();
  auto pb = model_b.params();
  auto pp = probe.params();
  auto ba = model_a.buffers();
  auto bb = model_b.buffers();
  auto bp = probe.buffers();

  LandscapeCurve curve;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(steps);
    const auto tf = static_cast<float>(t);
    for (size_t k = 0; k < pp.size(); ++k)
      for (size_t j = 0; j < pp[k].value->data.size(); ++j)
        pp[k].value->data[j] = (1.0f - tf) * pa[k].value->data[j] + tf * pb[k].value->data[j];
    for (size_t k = 0; k < bp.size(); ++k)
      for (size_t j = 0; j < bp[k].value->data.size(); ++j)
        bp[k].value->data[j] = (1.0f - tf) * ba[k].value->data[j] + tf * bb[k].value->data[j];
    curve.coefficients.push_back(t);
    curve.losses.push_back(watermark_loss(probe, eval_set, trigger, t_label));
  }
  return curve;
}

std::string LandscapeCurve::to_csv() const {
  std::ostringstream out;
  out << "coefficient,loss\n";
  out.precision(10);
  for (size_t i = 0; i < coefficients.size(); ++i)
    out << coefficients[i] << "," << losses[i] << "\n";
  return out.str();
}

Histogram weight_histogram(Classifier& model, int bins) {
  if (bins < 1) throw std::invalid_argument("weight_histogram: bins must be >= 1");
  std::vector<const Tensor*> tensors;
  for (auto& p : model.params())
    if (p.perturbable()) tensors.push_back(p.value);

  Histogram h;
  h.counts.assign(static_cast<size_t>(bins), 0);
  bool first = true;
  for (const auto* t : tensors)
    for (float v : t->data) {
      if (first || v < h.lo) h.lo = v;
      if (first || v > h.hi) h.hi = v;
      first = false;
    }
  if (first) return h;  // no prunable weights

  const double span = h.hi - h.lo;
  for (const auto* t : tensors)
    for (float v : t->data) {
      int b = span == 0.0
                  ? 0
                  : static_cast<int>((static_cast<double>(v) - h.lo) / span * bins);
      if (b >= bins) b = bins - 1;
      if (b < 0) b = 0;
      ++h.counts[static_cast<size_t>(b)];
    }
  return h;
}

std::string Histogram::to_csv() const {
  std::ostringstream out;
  out << "bin_lo,bin_hi,count\n";
  out.precision(10);
  const double width = counts.empty() ? 0.0 : (hi - lo) / static_cast<double>(counts.size());
  for (size_t i = 0; i < counts.size(); ++i)
    out << lo + width * static_cast<double>(i) << ","
        << lo + width * static_cast<double>(i + 1) << "," << counts[i] << "\n";
  return out.str();
}

std::vector<double> energy_scores(Classifier& model, const Tensor& batch, double temperature) {
  if (temperature <= 0.0) throw std::invalid_argument("energy_scores: temperature must be > 0");
  model.set_train(false);
  const Tensor logits = model.forward(batch);
  const int n = logits.dim(0), c = logits.dim(1);
  std::vector<double> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const float* z = logits.ptr() + static_cast<int64_t>(i) * c;
    double mx = z[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(z[j]));
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += std::exp((static_cast<double>(z[j]) - mx) / temperature);
    out[static_cast<size_t>(i)] = -temperature * (mx / temperature + std::log(s));
  }
  return out;
}

std::pair<double, double> ood_detection_metrics(const std::vector<double>& id_scores,
                                                const std::vector<double>& ood_scores) {
  if (id_scores.empty() || ood_scores.empty())
    throw std::invalid_argument("ood_detection_metrics: empty score list");

  // lower energy reads as ID, so higher energy flags OoD
  std::vector<double> id_sorted = id_scores;
  std::sort(id_sorted.begin(), id_sorted.end());
  double u = 0.0;
  for (double o : ood_scores) {
    const auto lo = std::lower_bound(id_sorted.begin(), id_sorted.end(), o);
    const auto hi = std::upper_bound(id_sorted.begin(), id_sorted.end(), o);
    u += static_cast<double>(lo - id_sorted.begin());  // id strictly below
    u += 0.5 * static_cast<double>(hi - lo);           // ties at 0.5
  }
  const double auroc =
      u / (static_cast<double>(id_scores.size()) * static_cast<double>(ood_scores.size()));

  // AUPR, OoD positive, threshold swept from the highest score down
  struct Scored {
    double s;
    bool positive;
  };
  std::vector<Scored> all;
  all.reserve(id_scores.size() + ood_scores.size());
  for (double s : ood_scores) all.push_back({s, true});
  for (double s : id_scores) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.s > b.s; });

  const double n_pos = static_cast<double>(ood_scores.size());
  double tp = 0.0, fp = 0.0, aupr = 0.0;
  double prev_recall = 0.0, prev_precision = 1.0;
  size_t i = 0;
  while (i < all.size()) {
    size_t j = i;
    while (j < all.size() && all[j].s == all[i].s) {  // tie group moves together
      if (all[j].positive) tp += 1.0; else fp += 1.0;
      ++j;
    }
    const double recall = tp / n_pos;
    const double precision = (tp + fp) > 0.0 ? tp / (tp + fp) : 1.0;
    aupr += (recall - prev_recall) * 0.5 * (precision + prev_precision);
    prev_recall = recall;
    prev_precision = precision;
    i = j;
  }
  return {auroc, aupr};
}

EnergyReport energy_report(Classifier& model, const std::vector<Image>& id_samples,
                           const std::vector<Image>& ood_samples, double temperature) {
  if (id_samples.empty() || ood_samples.empty())
    throw std::invalid_argument("energy_report: empty sample set");
  EnergyReport r;
  r.temperature = temperature;
  const size_t batch = 256;
  auto score_all = [&](const std::vector<Image>& imgs, std::vector<double>& out) {
    for (size_t start = 0; start < imgs.size(); start += batch) {
      const size_t n = std::min(batch, imgs.size() - start);
      std::vector<const Image*> ptrs(n);
      for (size_t k = 0; k < n; ++k) ptrs[k] = &imgs[start + k];
      const auto es = energy_scores(model, images_to_batch(ptrs), temperature);
      out.insert(out.end(), es.begin(), es.end());
    }
  };
  score_all(id_samples, r.id_scores);
  score_all(ood_samples, r.ood_scores);
  std::tie(r.auroc, r.aupr) = ood_detection_metrics(r.id_scores, r.ood_scores);
  return r;
}

std::string EnergyReport::to_json() const {
  json j;
  j["id_scores"] = id_scores;
  j["ood_scores"] = ood_scores;
  j["temperature"] = temperature;
  j["auroc"] = auroc;
  j["aupr"] = aupr;
  j["orientation"] = orientation;
  return j.dump(2);
}

EnergyReport EnergyReport::from_json(const std::string& text) {
  const json j = json::parse(text);
  EnergyReport r;
  r.id_scores = j.at("id_scores").get<std::vector<double>>();
  r.ood_scores = j.at("ood_scores").get<std::vector<double>>();
  r.temperature = j.at("temperature").get<double>();
  r.auroc = j.at("auroc").get<double>();
  r.aupr = j.at("aupr").get<double>();
  r.orientation = j.at("orientation").get<std::string>();
  return r;
}

}  // namespace oodmark
