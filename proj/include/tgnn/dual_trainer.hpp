// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tgnn/physics_loss.hpp"

namespace tgnn::train {

/// Lagrangian multipliers with the ascent step size. Initial values are
/// uniform draws in (0,1); each update adds step_size times the epoch's
/// violation aggregate, so traces never decrease.
struct MultiplierState {
  double lambda_pde = 0.0, lambda_ec = 0.0, lambda_ek = 0.0;
  double step_size = 1.25;
  std::uint64_t init_seed = 0;
};

MultiplierState init_multipliers(std::uint64_t seed, double step_size = 1.25);

/// L(theta) + lambda_pde nu_pde + lambda_ec nu_ec + lambda_ek nu_ek with
/// L = mse_data + mse_ic + mse_bc.
double lagrangian_loss(const physics::LossBreakdown& bd,
                       const MultiplierState& m);

/// lambda_i += s_k * nu_i, applied once per epoch after the parameter step.
void update_multipliers(MultiplierState& m, double nu_pde, double nu_ec,
                        double nu_ek);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  net::Gradient m, v;
  std::int64_t t = 0;

  explicit AdamState(const net::Architecture& arch) : m(arch), v(arch) {}
};

/// Standard Adam with bias correction at step k = state.t + 1.
/// Throws NumericError on non-finite gradient entries.
void adam_step(net::NetworkParams& params, const net::Gradient& grad,
               AdamState& state, const AdamConfig& cfg);

/// True iff at least `window` losses exist and the most recent `window`
/// values are all below `threshold`. With on_deltas set, the rule applies
/// to |loss_k - loss_{k-1}| instead of the raw values.
bool dynamic_stop(std::span<const double> losses, int window, double threshold,
                  bool on_deltas = false);

struct StoppingRule {
  enum class Kind { FixedEpochs, Dynamic };
  Kind kind = Kind::FixedEpochs;
  int window = 10;        // L_C
  double threshold = 0.006;  // beta
  bool on_deltas = false;
};

enum class TrainMode { Dual, FixedWeights };

struct TrainConfig {
  TrainMode mode = TrainMode::Dual;
  std::array<double, 6> fixed_weights{1, 1, 1, 100, 1, 1};  // DATA..EK
  int max_epochs = 2000;
  AdamConfig adam;
  StoppingRule stopping;
  double multiplier_step = 1.25;
  std::uint64_t init_seed = 0;
  std::uint64_t multiplier_seed = 0;
  int n_threads = 1;
  int checkpoint_every = 0;  // 0: no periodic checkpoints
  std::filesystem::path checkpoint_dir;

  void validate() const;
};

struct IterationRow {
  int epoch;
  double total;
  physics::LossBreakdown breakdown;
  double lambda_pde, lambda_ec, lambda_ek;
  double wall_s;  // cumulative
};

struct TrainResult {
  net::NetworkParams params;
  MultiplierState multipliers;
  std::vector<IterationRow> log;
  int epochs_run = 0;
  int stopped_epoch = 0;  // first epoch at which the dynamic rule fired, or 0
  bool aborted = false;   // non-finite loss; params hold the last good state
  double wall_s = 0.0;
};

/// Full-batch training loop. Per epoch: breakdown and gradient of the
/// mode's objective, Adam step, multiplier ascent (dual mode), log row,
/// stopping check.
TrainResult train(const TrainConfig& cfg, const net::Architecture& arch,
                  const physics::Dataset& dataset,
                  const kle::FieldRealization& field,
                  const physics::ConstraintSpec& cspec,
                  const physics::PdeCoefficients& pde);

/// As train, in dual mode with the multipliers frozen at the given values
/// and never updated.
TrainResult train_fixed_multipliers(const TrainConfig& cfg,
                                    const net::Architecture& arch,
                                    const physics::Dataset& dataset,
                                    const kle::FieldRealization& field,
                                    const physics::ConstraintSpec& cspec,
                                    const physics::PdeCoefficients& pde,
                                    double lambda_pde, double lambda_ec,
                                    double lambda_ek);

void write_iteration_log(const std::filesystem::path& path,
                         const std::vector<IterationRow>& log);

}  // namespace tgnn::train
