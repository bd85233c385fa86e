#include "oodmark/attacks.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "oodmark/rng.hpp"
#include "oodmark/train.hpp"

namespace oodmark {

using nlohmann::json;

std::string attack_kind_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::ft_al: return "FT-AL";
    case AttackKind::ft_ll: return "FT-LL";
    case AttackKind::rt_al: return "RT-AL";
    case AttackKind::prune: return "prune";
    case AttackKind::extract: return "extract";
  }
  throw std::invalid_argument("unknown attack kind");
}

AttackKind parse_attack_kind(const std::string& name) {
  if (name == "FT-AL") return AttackKind::ft_al;
  if (name == "FT-LL") return AttackKind::ft_ll;
  if (name == "RT-AL") return AttackKind::rt_al;
  if (name == "prune") return AttackKind::prune;
  if (name == "extract") return AttackKind::extract;
  throw std::invalid_argument("unknown attack kind '" + name +
                              "' (expected FT-AL, FT-LL, RT-AL, prune or extract)");
}

void AttackConfig::validate() const {
  if (!(data_fraction > 0.0 && data_fraction <= 1.0))
    throw std::invalid_argument("data_fraction must be in (0,1]");
  if (epochs < 0) throw std::invalid_argument("epochs must be nonnegative");
  if (lr <= 0.0) throw std::invalid_argument("lr must be positive");
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (prune_ratio < 0.0 || prune_ratio > 1.0)
    throw std::invalid_argument("prune_ratio must be in [0,1]");
  if (kind == AttackKind::prune && prune_ratio == 1.0 && epochs > 0)
    throw std::invalid_argument("prune_ratio = 1 with recovery epochs > 0 is untrainable");
  if (query_budget < 0) throw std::invalid_argument("query_budget must be nonnegative");
}

std::string AttackConfig::to_json() const {
  json j;
  j["kind"] = attack_kind_name(kind);
  j["data_fraction"] = data_fraction;
  j["epochs"] = epochs;
  j["lr"] = lr;
  j["momentum"] = momentum;
  j["weight_decay"] = weight_decay;
  j["batch_size"] = batch_size;
  j["prune_ratio"] = prune_ratio;
  j["query_budget"] = query_budget;
  j["student_arch"] = student_arch;
  j["seed"] = seed;
  return j.dump(2);
}

AttackConfig AttackConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  AttackConfig c;
  c.kind = parse_attack_kind(j.at("kind").get<std::string>());
  c.data_fraction = j.at("data_fraction").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.lr = j.at("lr").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.prune_ratio = j.at("prune_ratio").get<double>();
  c.query_budget = j.at("query_budget").get<int64_t>();
  c.student_arch = j.at("student_arch").get<std::string>();
  c.seed = j.at("seed").get<uint64_t>();
  c.validate();
  return c;
}

std::vector<LabeledSample> subsample_id_data(const std::vector<LabeledSample>& data,
                                             double fraction, uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("subsample_id_data: fraction must be in (0,1]");
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x5ab5));
  rng.shuffle(order);
  const size_t n = std::max<size_t>(
      1, static_cast<size_t>(std::llround(fraction * static_cast<double>(data.size()))));
  std::vector<LabeledSample> out;
  out.reserve(n);
  for (size_t i = 0; i < std::min(n, data.size()); ++i) out.push_back(data[order[i]]);
  return out;
}

namespace {

// Index of the last linear layer (by registration order).
size_t last_linear_layer(Classifier& model) {
  for (size_t i = model.layer_count(); i-- > 0;)
    if (model.layer(i)->kind() == "linear") return i;
  throw std::invalid_argument("model has no linear layer");
}

TrainConfig attack_train_config(const AttackConfig& cfg) {
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.lr = cfg.lr;
  tc.momentum = cfg.momentum;
  tc.weight_decay = cfg.weight_decay;
  tc.batch_size = cfg.batch_size;
  tc.seed = cfg.seed;
  tc.augment = true;
  return tc;
}

Classifier finetune_impl(Classifier& victim, const std::vector<LabeledSample>& id_data,
                         const AttackConfig& cfg, const PruneMask* mask) {
  if (id_data.empty()) throw std::invalid_argument("attack: empty adversary dataset");
  Classifier suspect = clone_model(victim);

  TrainConfig tc = attack_train_config(cfg);
  if (cfg.kind == AttackKind::rt_al) {
    Rng rng(derive_seed(cfg.seed, 0x4e11));
    suspect.layer(last_linear_layer(suspect))->init(rng);
  } else if (cfg.kind == AttackKind::ft_ll) {
    const std::string head = suspect.layer_name(last_linear_layer(suspect));
    tc.trainable = [head](const ParamRef& p) {
      return p.name.rfind(head + ".", 0) == 0 || p.name == head;
    };
  }
  if (mask) {
    const PruneMask m = *mask;  // owned copy for the hook's lifetime
    tc.post_step = [m](Classifier& model) { enforce_prune_mask(model, m); };
  }
  if (tc.epochs > 0) train_supervised(suspect, id_data, tc);
  return suspect;
}

}  // namespace

Classifier finetune_attack(Classifier& victim, const std::vector<LabeledSample>& id_data,
                           const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.kind != AttackKind::ft_al && cfg.kind != AttackKind::ft_ll &&
      cfg.kind != AttackKind::rt_al)
    throw std::invalid_argument("finetune_attack: kind must be FT-AL, FT-LL or RT-AL");
  return finetune_impl(victim, id_data, cfg, nullptr);
}

PruneMask apply_global_pruning(Classifier& model, double ratio) {
  if (ratio < 0.0 || ratio > 1.0)
    throw std::invalid_argument("prune ratio must be in [0,1]");

  std::vector<ParamRef> prunable;
  for (auto& p : model.params())
    if (p.perturbable()) prunable.push_back(p);

  PruneMask mask;
  size_t total = 0;
  for (auto& p : prunable) {
    mask.names.push_back(p.name);
    mask.keep.emplace_back(p.value->data.size(), uint8_t{1});
    total += p.value->data.size();
  }
  const auto n_prune = static_cast<size_t>(std::llround(ratio * static_cast<double>(total)));
  if (n_prune == 0) return mask;

  // global (|w|, stable position) order
  std::vector<std::pair<size_t, size_t>> pos;  // (param idx, element idx)
  pos.reserve(total);
  for (size_t i = 0; i < prunable.size(); ++i)
    for (size_t j = 0; j < prunable[i].value->data.size(); ++j) pos.emplace_back(i, j);
  std::stable_sort(pos.begin(), pos.end(), [&](const auto& a, const auto& b) {
    return std::fabs(prunable[a.first].value->data[a.second]) <
           std::fabs(prunable[b.first].value->data[b.second]);
  });

  for (size_t k = 0; k < n_prune; ++k) {
    const auto [pi, ei] = pos[k];
    prunable[pi].value->data[ei] = 0.0f;
    mask.keep[pi][ei] = 0;
  }
  mask.pruned_count = n_prune;
  return mask;
}

void enforce_prune_mask(Classifier& model, const PruneMask& mask) {
  size_t mi = 0;
  for (auto& p : model.params()) {
    if (!p.perturbable()) continue;
    if (mi >= mask.names.size() || mask.names[mi] != p.name)
      throw std::invalid_argument("prune mask is not aligned with the model");
    const auto& keep = mask.keep[mi];
    if (keep.size() != p.value->data.size())
      throw std::invalid_argument("prune mask size mismatch at " + p.name);
    for (size_t j = 0; j < keep.size(); ++j)
      if (!keep[j]) p.value->data[j] = 0.0f;
    ++mi;
  }
}

Classifier prune_attack(Classifier& victim, const std::vector<LabeledSample>& id_data,
                        const AttackConfig& cfg) {
  cfg.validate();
  if (id_data.empty()) throw std::invalid_argument("attack: empty adversary dataset");
  Classifier suspect = clone_model(victim);
  const PruneMask mask = apply_global_pruning(suspect, cfg.prune_ratio);

  AttackConfig recovery = cfg;
  recovery.kind = AttackKind::ft_al;
  Classifier recovered = finetune_impl(suspect, id_data, recovery, &mask);
  enforce_prune_mask(recovered, mask);  // exact zeros even at epochs == 0
  return recovered;
}

ExtractResult extract_attack(QueryInterface& victim, const std::vector<LabeledSample>& aux_data,
                             const AttackConfig& cfg) {
  cfg.validate();
  if (aux_data.empty()) throw std::invalid_argument("extract_attack: empty auxiliary dataset");

  ExtractResult result{build_model(cfg.student_arch, victim.num_classes(),
                                   derive_seed(cfg.seed, 0xe57)),
                       0, false, 0};
  Classifier& student = result.suspect;
  if (student.input_hw() != victim.input_hw())
    throw std::invalid_argument("extract_attack: student/victim input size mismatch");

  // one-time labeling pass under the query budget
  const uint64_t before = victim.query_count();
  std::vector<LabeledSample> distill;
  distill.reserve(aux_data.size());
  const size_t batch = 256;
  for (size_t start = 0; start < aux_data.size(); start += batch) {
    size_t n = std::min(batch, aux_data.size() - start);
    const uint64_t used = victim.query_count() - before;
    const uint64_t remaining =
        static_cast<uint64_t>(cfg.query_budget) > used
            ? static_cast<uint64_t>(cfg.query_budget) - used
            : 0;
    if (remaining == 0) {
      result.budget_exhausted = true;
      break;
    }
    if (n > remaining) {
      n = static_cast<size_t>(remaining);
      result.budget_exhausted = true;
    }
    std::vector<const Image*> ptrs(n);
    for (size_t i = 0; i < n; ++i) ptrs[i] = &aux_data[start + i].image;
    const Tensor logits = victim.query(images_to_batch(ptrs));
    const Tensor probs = softmax_rows(logits);
    const int c = probs.dim(1);
    for (size_t i = 0; i < n; ++i) {
      LabeledSample s;
      s.image = aux_data[start + i].image;
      s.soft_label.assign(probs.ptr() + static_cast<int64_t>(i) * c,
                          probs.ptr() + static_cast<int64_t>(i + 1) * c);
      s.hard_label = static_cast<uint32_t>(argmax_row(logits, static_cast<int>(i)));
      distill.push_back(std::move(s));
    }
    if (result.budget_exhausted) break;
  }
  result.queries_used = victim.query_count() - before;
  result.labeled_aux = distill.size();
  if (distill.empty() || cfg.epochs == 0) return result;

  // soft-label distillation with SGD momentum
  SgdOptimizer opt(student, {cfg.lr, cfg.momentum, cfg.weight_decay});
  std::vector<size_t> order(distill.size());
  std::iota(order.begin(), order.end(), 0);
  const int C = student.num_classes();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, 0xd157 + static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    student.set_train(true);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t n = std::min(static_cast<size_t>(cfg.batch_size), order.size() - start);
      std::vector<size_t> idx(order.begin() + static_cast<long>(start),
                              order.begin() + static_cast<long>(start + n));
      const Tensor x = make_batch(distill, idx);
      Tensor targets({static_cast<int>(n), C});
      for (size_t i = 0; i < n; ++i)
        std::copy(distill[idx[i]].soft_label.begin(), distill[idx[i]].soft_label.end(),
                  targets.ptr() + static_cast<int64_t>(i) * C);
      const Tensor logits = student.forward(x);
      Tensor dlogits;
      cross_entropy_soft(logits, targets, &dlogits);
      student.zero_grad();
      student.backward(dlogits);
      opt.step();
    }
  }
  student.set_train(false);
  return result;
}

}  // namespace oodmark
