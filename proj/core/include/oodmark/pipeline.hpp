#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oodmark/attacks.hpp"
#include "oodmark/dataset.hpp"
#include "oodmark/injection.hpp"

namespace oodmark {

// One experiment = one JSON document. Flags may override scale/seed/out.
struct ExperimentConfig {
  int schema_version = 1;
  std::string scale = "mini";  // mini | full
  std::string out_dir = "runs/exp";
  uint64_t seed = 1;

  // data
  std::string dataset = "synthetic";
  int num_classes = 10;
  size_t train_count = 4000;
  size_t test_count = 1000;
  uint64_t source_seed = 7;      // owner's secret OoD image
  uint64_t aux_source_seed = 99; // adversary's different OoD image
  size_t patch_count = 8000;
  AugmentConfig augment;

  // models
  std::string arch = "small_conv";
  int pretrain_epochs = 12;
  double pretrain_lr = 0.05;

  // watermark
  std::string trigger = "trojan_wm";
  PerturbConfig inject;

  // attacks to run (kind/epochs/ratios per entry)
  std::vector<AttackConfig> attacks;

  std::vector<std::string> stages;  // subset of the known stage names, in order

  void validate() const;
  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& json);
  static ExperimentConfig load(const std::string& path);

  // the shipped compact profile: finishes end-to-end on a laptop core
  static ExperimentConfig mini_profile();
};

// Table 2-style row.
struct ResultRow {
  std::string dataset;
  std::string trigger;
  std::string attack;  // "victim" for the unattacked model
  double acc = -1.0;
  double id_wsr = -1.0;
  double ood_wsr = -1.0;
  double p_value = -1.0;
  uint64_t seed = 0;
  double runtime_sec = 0.0;
  std::map<std::string, std::string> input_digests;
};

std::vector<std::string> known_stages();

// Directory for WatermarkKey files; OODMARK_SECRETS_DIR overrides the
// default <out_dir>/secrets.
std::string secrets_dir(const std::string& out_dir);

// Execute the configured stages in order. Completed stages whose input
// digests are unchanged are skipped; a mid-run failure leaves prior
// artifacts plus a FAILED marker describing the stage.
std::string run_experiment(const ExperimentConfig& cfg);
std::string run_experiment_file(const std::string& config_path);

// Re-emit tables from a result directory: report.csv / report.json with
// rows sorted by (dataset, trigger, attack).
std::vector<ResultRow> load_result_rows(const std::string& result_dir);
void emit_report(const std::string& result_dir, const std::string& format);

std::string result_rows_to_csv(const std::vector<ResultRow>& rows);
std::vector<ResultRow> result_rows_from_csv(const std::string& csv);

}  // namespace oodmark
