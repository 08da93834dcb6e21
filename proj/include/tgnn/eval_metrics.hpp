// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>

#include "tgnn/dual_trainer.hpp"
#include "tgnn/fdm_sim.hpp"
#include "tgnn/physics_loss.hpp"

namespace tgnn::metrics {

/// Evaluation set selection. The default covers every non-Dirichlet grid
/// point over all simulated steps (t > 0); final_step_only restricts to
/// the last step.
struct EvalSpec {
  bool final_step_only = false;
  bool include_dirichlet = false;
};

struct EvalReport {
  double l2_mse = 0.0;       // mean squared error (the primary "L2" figure)
  double l2_relative = 0.0;  // sqrt(sum(pred-ref)^2 / sum(ref^2))
  double r2 = 0.0;           // 1 - SS_res / SS_tot about the reference mean
  std::int64_t n_points = 0;
  double wall_time_s = 0.0;
};

/// Deterministic and order-independent; throws NumericError when the
/// reference has zero variance on the evaluation set (R2 undefined).
EvalReport evaluate(const net::NetworkParams& params,
                    const fdm::ReferenceSolution& ref,
                    const EvalSpec& spec = {});

/// Measurement-noise injection on the observation labels:
///   h* = h + h_diff(x,y) * (alpha/100) * eps,  eps ~ U(-1, 1) per point,
/// where h_diff is the per-location head range over the whole simulated
/// window. Only the data category is touched; IC/BC stay exact.
void add_noise(physics::Dataset& dataset, const fdm::ReferenceSolution& ref,
               double alpha_percent, std::uint64_t seed);

void write_report_kv(const std::filesystem::path& path, const EvalReport& rep,
                     const train::TrainResult& tr, const std::string& method,
                     std::uint64_t master_seed, std::uint64_t field_fingerprint);

}  // namespace tgnn::metrics
