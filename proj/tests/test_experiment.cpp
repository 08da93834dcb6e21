// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "tgnn/experiment.hpp"

using namespace tgnn;
using namespace tgnn::exp;
namespace fs = std::filesystem;

namespace {

// Desk-sized configuration for pipeline smoke tests.
ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.output_dir = out.string();
  cfg.grid.nx = 15;
  cfg.grid.ny = 15;
  cfg.grid.dx = 1020.0 / 15.0;
  cfg.grid.dy = 1020.0 / 15.0;
  cfg.grid.n_steps = 10;
  cfg.sampling.n_data = 30;
  cfg.sampling.n_ic = 15;
  cfg.sampling.n_bc = 15;
  cfg.sampling.n_pde = 40;
  cfg.sampling.n_ec = 20;
  cfg.sampling.n_ek = 20;
  cfg.sampling.train_t_max = 1.0;
  cfg.architecture.n_hidden = 2;
  cfg.architecture.width = 8;
  cfg.trainer.max_epochs = 3;
  return cfg;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Drops csv columns whose header name mentions wall time; those are the
// only machine-dependent values in any report.
std::string strip_timing(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  std::vector<bool> keep;
  bool first = true;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string cell, rebuilt;
    std::size_t idx = 0;
    while (std::getline(row, cell, ',')) {
      if (first) keep.push_back(cell.find("wall") == std::string::npos);
      if (idx < keep.size() && keep[idx]) {
        if (!rebuilt.empty()) rebuilt += ',';
        rebuilt += cell;
      }
      ++idx;
    }
    out += rebuilt + '\n';
    first = false;
  }
  return out;
}

}  // namespace

TEST_CASE("config: json round trip is stable") {
  ExperimentConfig cfg;
  const std::string a = cfg.to_json();
  const auto back = ExperimentConfig::from_json_text(a, "mem");
  CHECK(back.to_json() == a);
  CHECK(back.master_seed == cfg.master_seed);
  CHECK(back.grid.nx == 51);
  CHECK(back.sampling.n_pde == 10000);
  CHECK(back.trainer.max_epochs == 2000);
  CHECK(back.trainer.multiplier_step == 1.25);
}

TEST_CASE("config: unknown and missing keys are named") {
  ExperimentConfig cfg;
  std::string text = cfg.to_json();

  // Unknown key inside the grid block.
  std::string with_unknown = text;
  const auto pos = with_unknown.find("\"nx\"");
  with_unknown.insert(pos, "\"nz\": 3,\n      ");
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json_text(with_unknown, "cfg"),
                       doctest::Contains("unknown key 'nz'"), ConfigError);

  // Missing key: drop dx.
  std::string missing = text;
  const auto dx_pos = missing.find("\"dx\"");
  const auto comma = missing.find(',', dx_pos);
  missing.erase(dx_pos, comma - dx_pos + 1);
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json_text(missing, "cfg"),
                       doctest::Contains("missing required key 'dx'"),
                       ConfigError);

  // Malformed JSON reports line:column.
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json_text("{\n  \"x\": ,\n}", "cfg"),
                       doctest::Contains("cfg:2:"), ConfigError);

  // Wrong type.
  std::string bad_type = text;
  const auto nx_pos = bad_type.find("\"nx\": 51");
  bad_type.replace(nx_pos, 8, "\"nx\": \"fifty-one\"");
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json_text(bad_type, "cfg"),
                       doctest::Contains("expected an integer"), ConfigError);
}

TEST_CASE("config: semantic validation") {
  ExperimentConfig cfg;
  cfg.grid.dt = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("write_once: identical content passes, different content refuses") {
  const auto dir = fresh_dir("tgnn_write_once");
  fs::create_directories(dir);
  const auto p = dir / "a.txt";
  write_once(p, "hello\n");
  write_once(p, "hello\n");
  CHECK_THROWS_AS(write_once(p, "other\n"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("ensure_artifacts: deterministic across directories") {
  const auto d1 = fresh_dir("tgnn_art_1");
  const auto d2 = fresh_dir("tgnn_art_2");
  auto cfg = tiny_config(d1);
  ensure_artifacts(cfg, d1, cfg.master_seed);
  ensure_artifacts(cfg, d2, cfg.master_seed);
  CHECK(slurp(d1 / "field.txt") == slurp(d2 / "field.txt"));
  CHECK(slurp(d1 / "solution.txt") == slurp(d2 / "solution.txt"));
  CHECK(slurp(d1 / "fingerprints.kv") == slurp(d2 / "fingerprints.kv"));
  CHECK(fs::exists(d1 / "config.resolved.json"));
  CHECK(fs::exists(d1 / "solution.csv"));

  // Re-running on an existing directory reuses the artifacts untouched.
  const auto before = slurp(d1 / "field.txt");
  ensure_artifacts(cfg, d1, cfg.master_seed);
  CHECK(slurp(d1 / "field.txt") == before);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("run_method: artifacts and report") {
  const auto dir = fresh_dir("tgnn_run_method");
  auto cfg = tiny_config(dir);
  const auto art = ensure_artifacts(cfg, dir, cfg.master_seed);
  const auto res = run_method(cfg, dir, art, "tgnn-ld", cfg.master_seed);
  CHECK(res.training.epochs_run == 3);
  CHECK(std::isfinite(res.report.l2_mse));
  CHECK(fs::exists(dir / "tgnn-ld" / "iterations.csv"));
  CHECK(fs::exists(dir / "tgnn-ld" / "checkpoint.txt"));
  CHECK(fs::exists(dir / "tgnn-ld" / "report.kv"));
  CHECK(fs::exists(dir / "tgnn-ld" / "dataset.csv"));
  const std::string report = slurp(dir / "tgnn-ld" / "report.kv");
  CHECK(report.find("method=tgnn-ld") != std::string::npos);
  CHECK(report.find("l2_mse=") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("cmd_compare: three methods, medians, reproducibility") {
  const auto d1 = fresh_dir("tgnn_cmp_1");
  auto cfg = tiny_config(d1);
  cmd_compare(cfg, 1);
  const std::string csv = slurp(d1 / "compare.csv");
  CHECK(csv.find("tgnn-ld,0,") != std::string::npos);
  CHECK(csv.find("tgnn,0,") != std::string::npos);
  CHECK(csv.find("tgnn-1,0,") != std::string::npos);
  CHECK(csv.find("tgnn-ld,median,") != std::string::npos);

  const auto d2 = fresh_dir("tgnn_cmp_2");
  auto cfg2 = tiny_config(d2);
  cmd_compare(cfg2, 1);
  // Identical up to the machine-dependent wall-time column.
  CHECK(strip_timing(slurp(d2 / "compare.csv")) == strip_timing(csv));
  CHECK(slurp(d2 / "seed_0" / "tgnn-ld" / "checkpoint.txt") ==
        slurp(d1 / "seed_0" / "tgnn-ld" / "checkpoint.txt"));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("cmd_sweep_epochs and cmd_replay_multipliers: report shapes") {
  const auto dir = fresh_dir("tgnn_sweep");
  auto cfg = tiny_config(dir);
  cmd_sweep_epochs(cfg, {1, 2});
  const std::string sweep = slurp(dir / "sweep.csv");
  CHECK(sweep.find("\n1,") != std::string::npos);
  CHECK(sweep.find("\n2,") != std::string::npos);
  fs::remove_all(dir);

  const auto rdir = fresh_dir("tgnn_replay");
  auto rcfg = tiny_config(rdir);
  cmd_replay_multipliers(rcfg, 8.1127, 0.28652, 1.0940);
  const std::string replay = slurp(rdir / "replay.csv");
  CHECK(replay.find("fixed-multipliers,") != std::string::npos);
  CHECK(replay.find("dynamic,") != std::string::npos);
  fs::remove_all(rdir);
}

TEST_CASE("cmd_noise_suite: level zero reproduces the clean comparison") {
  const auto ndir = fresh_dir("tgnn_noise");
  auto cfg = tiny_config(ndir);
  cmd_noise_suite(cfg, {0.0}, 1);
  const std::string noise = slurp(ndir / "noise.csv");

  const auto cdir = fresh_dir("tgnn_noise_cmp");
  auto ccfg = tiny_config(cdir);
  cmd_compare(ccfg, 1);
  const std::string cmp = slurp(cdir / "compare.csv");

  // The metric entries for each method agree between the two commands
  // (wall times aside).
  auto metric_of = [](const std::string& csv, const std::string& prefix) {
    const auto pos = csv.find(prefix);
    REQUIRE(pos != std::string::npos);
    return csv.substr(pos, csv.find('\n', pos) - pos);
  };
  const std::string a =
      metric_of(strip_timing(noise), "0,tgnn-ld,0,");
  const std::string b = metric_of(strip_timing(cmp), "tgnn-ld,0,");
  CHECK(a.substr(2) == b);
  fs::remove_all(ndir);
  fs::remove_all(cdir);
}

TEST_CASE("median: odd and even counts") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK_THROWS_AS(median({}), NumericError);
}
