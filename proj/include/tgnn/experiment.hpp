// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tgnn/dual_trainer.hpp"
#include "tgnn/eval_metrics.hpp"

namespace tgnn::exp {

/// Derived sub-seed tags. One master seed reproduces the field, the
/// sampled dataset, the parameter init, the multiplier init, and the
/// noise draws; seed i of a multi-seed sweep uses
/// derive_seed(master, kSweepBase + i) as its own master.
inline constexpr std::uint64_t kFieldTag = 1, kDataTag = 2, kInitTag = 3,
                               kMultiplierTag = 4, kNoiseTag = 5,
                               kSweepBase = 1000;

struct MetricsConfig {
  bool final_step_only = false;       // eval_window: "all" | "final"
  std::vector<double> noise_levels{5.0, 10.0, 20.0};
};

/// The fully resolved experiment configuration. The JSON schema is strict:
/// every key is required, unknown keys are rejected, and each run writes
/// the resolved form beside its outputs so any artifact can be re-run
/// bit-exactly.
struct ExperimentConfig {
  int schema_version = 1;
  std::uint64_t master_seed = 7;
  std::string output_dir = "out";
  int threads = 1;

  fdm::GridSpec grid;
  fdm::BoundaryConditions boundary;
  kle::CovarianceSpec covariance;
  int kle_terms = 20;

  physics::SamplingSpec sampling;
  net::Architecture architecture;  // input scales derived from the scenario
  train::TrainConfig trainer;      // seeds filled from the master seed
  physics::ConstraintSpec constraints;
  double pde_residual_scale = 0.0;  // 0: auto (1 / S_s)
  MetricsConfig metrics;

  physics::PdeCoefficients pde_coefficients() const;
  metrics::EvalSpec eval_spec() const;
  void validate() const;

  std::string to_json() const;
  static ExperimentConfig from_json_text(const std::string& text,
                                         const std::string& origin);
  static ExperimentConfig load(const std::filesystem::path& path);
};

/// Architecture with input scales matching the scenario domain.
net::Architecture scenario_architecture(const ExperimentConfig& cfg);

/// Writes `text` to `path` unless the identical file already exists;
/// an existing file with different content is an error (outputs are
/// write-once).
void write_once(const std::filesystem::path& path, const std::string& text);

struct RunArtifacts {
  kle::FieldRealization field;
  fdm::ReferenceSolution solution;
};

/// Loads or creates field + solution inside `dir` for the given master
/// seed; writes resolved config, field.txt, solution.txt, solution.csv
/// and fingerprints.kv on first creation.
RunArtifacts ensure_artifacts(const ExperimentConfig& cfg,
                              const std::filesystem::path& dir,
                              std::uint64_t master_seed);

struct MethodResult {
  std::string method;
  std::uint64_t master_seed = 0;
  train::TrainResult training;
  metrics::EvalReport report;
};

/// Trains one method ("tgnn-ld", "tgnn", "tgnn-1", or "custom" for the
/// trainer block as configured) on the artifacts, evaluates it, and
/// writes iterations.csv, checkpoint.txt and report.kv under
/// dir/<method>/ . noise_alpha > 0 perturbs the observation labels first.
MethodResult run_method(const ExperimentConfig& cfg,
                        const std::filesystem::path& dir,
                        const RunArtifacts& art, const std::string& method,
                        std::uint64_t master_seed, double noise_alpha = 0.0,
                        std::optional<std::array<double, 3>> frozen_multipliers =
                            std::nullopt,
                        int max_epochs_override = 0);

// Command pipelines; each returns the paths it wrote.
void cmd_field(const ExperimentConfig& cfg);
void cmd_sim(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg);
void cmd_eval(const ExperimentConfig& cfg,
              const std::filesystem::path& checkpoint);
void cmd_compare(const ExperimentConfig& cfg, int n_seeds);
void cmd_sweep_epochs(const ExperimentConfig& cfg,
                      const std::vector<int>& epoch_list);
void cmd_noise_suite(const ExperimentConfig& cfg,
                     const std::vector<double>& levels, int n_seeds);
void cmd_replay_multipliers(const ExperimentConfig& cfg, double lambda_pde,
                            double lambda_ec, double lambda_ek);

double median(std::vector<double> v);

}  // namespace tgnn::exp
