// SPDX-License-Identifier: Apache-2.0
//
// Experiment driver: field generation, reference simulation, training in
// dual / fixed-weight modes, metric reports, and the sweep / noise /
// replay studies, all from one declarative JSON configuration.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tgnn/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Theory-guided network trainer with Lagrangian-dual weight "
               "adaptation on a 2-D groundwater flow scenario"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  app.add_option("--config", config_path,
                 "JSON experiment configuration (strict schema; omit to use "
                 "built-in defaults)");
  app.add_option("--seed", seed, "master seed override")
      ->each([&](const std::string&) { seed_set = true; });
  app.add_option("--out", out_dir, "output directory override");
  app.add_option("--threads", threads, "worker threads for loss assembly");

  auto* c_field = app.add_subcommand("field", "generate the conductivity field");
  auto* c_sim = app.add_subcommand(
      "sim", "generate field and reference head solution");
  auto* c_train =
      app.add_subcommand("train", "train per the trainer block of the config");
  auto* c_eval =
      app.add_subcommand("eval", "evaluate a checkpoint against the reference");
  c_eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")
      ->required();

  int n_seeds = 1;
  auto* c_compare = app.add_subcommand(
      "compare", "train tgnn-ld, tgnn, tgnn-1 on identical data and report");
  c_compare->add_option("--seeds", n_seeds, "number of master seeds (medians)");

  std::vector<int> epoch_list{1500, 1700, 1750, 1800, 2000};
  auto* c_sweep =
      app.add_subcommand("sweep-epochs", "tgnn-ld runs at several epoch budgets");
  c_sweep->add_option("--epochs", epoch_list, "epoch budgets");

  std::vector<double> levels{5.0, 10.0, 20.0};
  int noise_seeds = 1;
  auto* c_noise = app.add_subcommand(
      "noise-suite", "all three methods under noisy observations");
  c_noise->add_option("--levels", levels, "noise percentages");
  c_noise->add_option("--seeds", noise_seeds, "number of master seeds");

  double l_pde = 8.1127, l_ec = 0.28652, l_ek = 1.0940;
  auto* c_replay = app.add_subcommand(
      "replay-multipliers",
      "frozen-multiplier run paired with a dynamic run on the same data");
  c_replay->add_option("--lambda-pde", l_pde, "frozen PDE multiplier");
  c_replay->add_option("--lambda-ec", l_ec, "frozen EC multiplier");
  c_replay->add_option("--lambda-ek", l_ek, "frozen EK multiplier");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    tgnn::exp::ExperimentConfig cfg;
    if (!config_path.empty())
      cfg = tgnn::exp::ExperimentConfig::load(config_path);
    if (seed_set) cfg.master_seed = seed;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (threads > 0) cfg.threads = threads;
    cfg.validate();

    if (*c_field) tgnn::exp::cmd_field(cfg);
    if (*c_sim) tgnn::exp::cmd_sim(cfg);
    if (*c_train) tgnn::exp::cmd_train(cfg);
    if (*c_eval) tgnn::exp::cmd_eval(cfg, checkpoint_path);
    if (*c_compare) tgnn::exp::cmd_compare(cfg, n_seeds);
    if (*c_sweep) tgnn::exp::cmd_sweep_epochs(cfg, epoch_list);
    if (*c_noise) tgnn::exp::cmd_noise_suite(cfg, levels, noise_seeds);
    if (*c_replay) tgnn::exp::cmd_replay_multipliers(cfg, l_pde, l_ec, l_ek);
  } catch (const tgnn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const tgnn::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
