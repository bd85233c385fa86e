#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "oodmark/io_audit.hpp"
#include "oodmark/pipeline.hpp"

using namespace oodmark;
namespace fs = std::filesystem;

namespace {

std::string error_of(const ExperimentConfig& cfg) {
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("mini profile validates and covers every stage") {
  const ExperimentConfig cfg = ExperimentConfig::mini_profile();
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.stages == known_stages());
  CHECK(cfg.attacks.size() == 5);
}

TEST_CASE("config validation names the offending field") {
  ExperimentConfig cfg = ExperimentConfig::mini_profile();

  cfg.arch = "alexnet";
  CHECK(error_of(cfg).find("arch") != std::string::npos);
  CHECK(error_of(cfg).find("alexnet") != std::string::npos);
  cfg = ExperimentConfig::mini_profile();

  cfg.trigger = "no_such";
  CHECK(error_of(cfg).find("trigger") != std::string::npos);
  cfg = ExperimentConfig::mini_profile();

  cfg.stages.push_back("deploy");
  CHECK(error_of(cfg).find("stage") != std::string::npos);
  cfg = ExperimentConfig::mini_profile();

  cfg.inject.target_label = 10;
  CHECK(error_of(cfg).find("target_label") != std::string::npos);
  cfg = ExperimentConfig::mini_profile();

  cfg.scale = "huge";
  CHECK(error_of(cfg).find("scale") != std::string::npos);
  cfg = ExperimentConfig::mini_profile();

  cfg.num_classes = 1;
  CHECK(error_of(cfg).find("num_classes") != std::string::npos);
}

TEST_CASE("experiment config json roundtrip") {
  ExperimentConfig cfg = ExperimentConfig::mini_profile();
  cfg.seed = 77;
  cfg.out_dir = "runs/t";
  cfg.inject.gamma = 0.2;
  cfg.attacks[3].prune_ratio = 0.7;
  cfg.stages = {"pretrain", "verify"};

  const ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.seed == 77);
  CHECK(back.out_dir == "runs/t");
  CHECK(back.scale == cfg.scale);
  CHECK(back.trigger == cfg.trigger);
  CHECK(back.inject.gamma == doctest::Approx(0.2));
  CHECK(back.inject.eta1 == doctest::Approx(cfg.inject.eta1));
  CHECK(back.inject.target_label == cfg.inject.target_label);
  CHECK(back.attacks.size() == cfg.attacks.size());
  CHECK(back.attacks[3].prune_ratio == doctest::Approx(0.7));
  CHECK(back.stages == cfg.stages);
  CHECK(back.augment.seed == cfg.augment.seed);
}

TEST_CASE("result rows survive a csv roundtrip") {
  ResultRow a;
  a.dataset = "synthetic";
  a.trigger = "trojan_8x8";
  a.attack = "FT-AL";
  a.acc = 0.90123456789012345;
  a.id_wsr = 0.5;
  a.ood_wsr = 1.0 / 3.0;
  a.p_value = 7.7430153115136523e-138;
  a.seed = 42;
  a.runtime_sec = 1.25;
  ResultRow b = a;
  b.attack = "victim";
  b.acc = -1.0;

  const std::string csv = result_rows_to_csv({a, b});
  const auto back = result_rows_from_csv(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[0].dataset == "synthetic");
  CHECK(back[0].attack == "FT-AL");
  CHECK(back[0].acc == a.acc);          // %.17g: exact double roundtrip
  CHECK(back[0].ood_wsr == a.ood_wsr);
  CHECK(back[0].p_value == a.p_value);
  CHECK(back[0].seed == 42);
  CHECK(back[1].attack == "victim");
  CHECK(back[1].acc == -1.0);
}

TEST_CASE("emit_report sorts rows by dataset, trigger, attack") {
  const fs::path dir = fs::temp_directory_path() / "oodmark_tests" / "report_sort";
  fs::remove_all(dir);
  fs::create_directories(dir);

  std::vector<ResultRow> rows(3);
  rows[0].dataset = "synthetic";
  rows[0].trigger = "trojan_8x8";
  rows[0].attack = "victim";
  rows[1] = rows[0];
  rows[1].attack = "FT-AL";
  rows[2] = rows[0];
  rows[2].trigger = "badnet_grid";

  std::string j = "[";
  for (const auto& r : rows) {
    if (j.size() > 1) j += ",";
    j += "{\"dataset\":\"" + r.dataset + "\",\"trigger\":\"" + r.trigger + "\",\"attack\":\"" +
         r.attack +
         "\",\"acc\":-1,\"id_wsr\":-1,\"ood_wsr\":0,\"p_value\":1,\"seed\":0,"
         "\"runtime_sec\":0,\"input_digests\":{}}";
  }
  j += "]";
  io::write_file((dir / "results.json").string(), j.data(), j.size());

  emit_report(dir.string(), "csv");
  const auto report_bytes = io::read_file((dir / "report.csv").string());
  const auto sorted = result_rows_from_csv(
      std::string(reinterpret_cast<const char*>(report_bytes.data()), report_bytes.size()));
  REQUIRE(sorted.size() == 3);
  CHECK(sorted[0].trigger == "badnet_grid");
  CHECK(sorted[1].attack == "FT-AL");
  CHECK(sorted[2].attack == "victim");
}

TEST_CASE("secrets directory honors the environment override") {
  unsetenv("OODMARK_SECRETS_DIR");
  CHECK(secrets_dir("runs/exp") == "runs/exp/secrets");
  setenv("OODMARK_SECRETS_DIR", "/tmp/keyvault", 1);
  CHECK(secrets_dir("runs/exp") == "/tmp/keyvault");
  unsetenv("OODMARK_SECRETS_DIR");
}

TEST_CASE("an empty stage list is a successful no-op") {
  ExperimentConfig cfg = ExperimentConfig::mini_profile();
  const fs::path dir = fs::temp_directory_path() / "oodmark_tests" / "noop_run";
  fs::remove_all(dir);
  cfg.out_dir = dir.string();
  cfg.stages.clear();
  CHECK_NOTHROW(run_experiment(cfg));
  CHECK_FALSE(fs::exists(dir / "FAILED"));
}
