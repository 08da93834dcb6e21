// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tgnn/diff_net.hpp"
#include "tgnn/fdm_sim.hpp"
#include "tgnn/kle_field.hpp"

namespace tgnn::physics {

/// A labeled training point. Grid indices are kept for points sampled from
/// the reference solution (noise injection needs the column location);
/// they are -1 for off-grid points.
struct LabeledPoint {
  double t, x, y, label;
  int step = -1, ix = -1, iy = -1;
};

struct CollocationPoint {
  double t, x, y;
};

struct Dataset {
  std::vector<LabeledPoint> data, ic, bc;
  std::vector<CollocationPoint> pde, ec, ek;
  bool data_on = true, ic_on = true, bc_on = true;
  bool pde_on = true, ec_on = true, ek_on = true;
};

/// Sampling counts and the training window. Observations are drawn from
/// t in (0, train_t_max]; collocation and boundary points cover the full
/// simulated window, which is what lets the physics terms carry the
/// prediction beyond the observed times.
struct SamplingSpec {
  int n_data = 500;
  int n_ic = 500;
  int n_bc = 500;
  int n_pde = 10000;
  int n_ec = 2000;
  int n_ek = 2000;
  double train_t_max = 5.0;

  void validate() const;
};

/// Seeded draw: observations/IC/BC from the reference grid, collocation
/// uniform over the hull of the grid columns and the full time window.
/// A count of zero disables the category.
Dataset sample_dataset(const fdm::ReferenceSolution& ref,
                       const SamplingSpec& spec, std::uint64_t seed);

/// Inequality-constraint instances: the head stays within the Dirichlet
/// extremes (expert knowledge) and is nonincreasing along the mean-flow
/// direction x (engineering control). Both are ReLU-penalized.
struct ConstraintSpec {
  double head_min = 0.0;
  double head_max = 1.0;
  bool ec_enabled = true;
  bool ek_enabled = true;

  void validate() const;
};

/// Coefficients of the governing equation. residual_scale multiplies the
/// raw residual inside the squared aggregates; the default 1/S_s puts the
/// equation in diffusivity (head-per-time) form so the PDE term is on a
/// numerically meaningful scale next to the data misfit.
struct PdeCoefficients {
  double specific_storage = 1e-4;
  double residual_scale = 1e4;

  static PdeCoefficients from_storage(double s_s) {
    return {s_s, 1.0 / s_s};
  }
};

/// The six MSE terms plus the three constraint aggregates.
/// nu_pde == mse_pde (mean squared scaled residual). For the inequality
/// constraints the mse_* fields hold mean squared ReLU violations (the
/// fixed-weight objective) while nu_* hold mean ReLU violations (the
/// multiplier update of the dual objective).
struct LossBreakdown {
  double mse_data = 0.0, mse_ic = 0.0, mse_bc = 0.0;
  double mse_pde = 0.0, mse_ec = 0.0, mse_ek = 0.0;
  double nu_pde = 0.0, nu_ec = 0.0, nu_ek = 0.0;
};

/// Raw-unit residual of the flow equation at one point:
///   f = S_s dN/dt - K (d2N/dx2 + d2N/dy2) - K (dZ/dx dN/dx + dZ/dy dN/dy)
/// with K = exp(Z) and the K derivatives supplied analytically by the
/// expansion of the field.
double pde_residual(const net::NetworkParams& params,
                    const kle::FieldRealization& field, double t, double x,
                    double y, double specific_storage = 1e-4);

struct Objective {
  enum class Mode { Dual, FixedWeights };
  Mode mode = Mode::Dual;
  // Dual mode: multipliers on the nu aggregates.
  double lambda_pde = 0.0, lambda_ec = 0.0, lambda_ek = 0.0;
  // Fixed mode: weights on the six MSE terms (DATA, IC, BC, PDE, EC, EK).
  std::array<double, 6> weights{1, 1, 1, 1, 1, 1};
};

/// Evaluates the breakdown and (optionally) the gradient of an objective
/// in one pass over the dataset. Points are processed in fixed-size blocks
/// in a fixed order and the partial sums/gradients are combined in block
/// order, so results are bit-identical for any thread count.
class LossAssembler {
 public:
  LossAssembler(const Dataset& dataset, const kle::FieldRealization& field,
                const ConstraintSpec& cspec, const PdeCoefficients& pde,
                int n_threads = 1, int block_size = 2048);

  /// Returns the objective value; fills breakdown; accumulates the
  /// gradient into *grad when non-null (grad is zeroed first).
  double assemble(const net::NetworkParams& params, const Objective& obj,
                  LossBreakdown& breakdown, net::Gradient* grad);

  const Dataset& dataset() const { return dataset_; }

 private:
  enum class Cat { Data, Ic, Bc, Pde, Ec, Ek };
  struct Task {
    Cat cat;
    Eigen::Index begin, len;
  };
  struct Partial {
    double sum = 0.0;      // squared-misfit or squared-residual sum
    double sum_lin = 0.0;  // linear ReLU violation sum (ec/ek)
  };

  const Dataset& dataset_;
  ConstraintSpec cspec_;
  PdeCoefficients pde_;
  int n_threads_;

  Eigen::Matrix3Xd pts_[6];
  Eigen::RowVectorXd labels_[3];              // data, ic, bc
  Eigen::RowVectorXd pde_k_, pde_zx_, pde_zy_;  // cached field values
  std::vector<Task> tasks_;
  std::vector<Partial> partials_;
  std::vector<net::Gradient> task_grads_;
  std::vector<std::unique_ptr<net::BatchEvaluator>> evaluators_;

  void run_task(const net::NetworkParams& params, const Objective& obj,
                std::size_t task_idx, bool want_grad,
                net::BatchEvaluator& ev);
};

/// Spec-level wrappers built on LossAssembler.
LossBreakdown mse_terms(const net::NetworkParams& params,
                        const Dataset& dataset,
                        const kle::FieldRealization& field,
                        const ConstraintSpec& cspec = {},
                        const PdeCoefficients& pde = {});

struct ConstraintAggregates {
  double nu_pde, nu_ec, nu_ek;
};
ConstraintAggregates constraint_aggregates(const net::NetworkParams& params,
                                           const Dataset& dataset,
                                           const kle::FieldRealization& field,
                                           const ConstraintSpec& cspec = {},
                                           const PdeCoefficients& pde = {});

void export_dataset_csv(const std::filesystem::path& path, const Dataset& d);
Dataset import_dataset_csv(const std::filesystem::path& path);

}  // namespace tgnn::physics
