// SPDX-License-Identifier: Apache-2.0
#include "tgnn/dual_trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

namespace tgnn::train {

MultiplierState init_multipliers(std::uint64_t seed, double step_size) {
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  MultiplierState m;
  m.lambda_pde = uni(rng);
  m.lambda_ec = uni(rng);
  m.lambda_ek = uni(rng);
  m.step_size = step_size;
  m.init_seed = seed;
  return m;
}

double lagrangian_loss(const physics::LossBreakdown& bd,
                       const MultiplierState& m) {
  return bd.mse_data + bd.mse_ic + bd.mse_bc + m.lambda_pde * bd.nu_pde +
         m.lambda_ec * bd.nu_ec + m.lambda_ek * bd.nu_ek;
}

void update_multipliers(MultiplierState& m, double nu_pde, double nu_ec,
                        double nu_ek) {
  if (nu_pde < 0.0 || nu_ec < 0.0 || nu_ek < 0.0)
    throw NumericError("update_multipliers: negative violation aggregate");
  m.lambda_pde += m.step_size * nu_pde;
  m.lambda_ec += m.step_size * nu_ec;
  m.lambda_ek += m.step_size * nu_ek;
}

void adam_step(net::NetworkParams& params, const net::Gradient& grad,
               AdamState& state, const AdamConfig& cfg) {
  if (!grad.all_finite())
    throw NumericError("adam_step: non-finite gradient entries");
  state.t += 1;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    auto upd = [&](auto& p, const auto& g, auto& m, auto& v) {
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
      p -= cfg.learning_rate *
           ((m / corr1).array() / ((v / corr2).array().sqrt() + cfg.epsilon))
               .matrix();
    };
    upd(params.weights[l], grad.weights[l], state.m.weights[l],
        state.v.weights[l]);
    upd(params.biases[l], grad.biases[l], state.m.biases[l],
        state.v.biases[l]);
  }
}

bool dynamic_stop(std::span<const double> losses, int window, double threshold,
                  bool on_deltas) {
  if (window < 1 || !(threshold > 0.0))
    throw ConfigError("dynamic_stop: require window >= 1 and threshold > 0");
  if (on_deltas) {
    if (std::ssize(losses) < window + 1) return false;
    for (std::size_t i = losses.size() - static_cast<std::size_t>(window);
         i < losses.size(); ++i)
      if (!(std::abs(losses[i] - losses[i - 1]) < threshold)) return false;
    return true;
  }
  if (std::ssize(losses) < window) return false;
  for (std::size_t i = losses.size() - static_cast<std::size_t>(window);
       i < losses.size(); ++i)
    if (!(losses[i] < threshold)) return false;
  return true;
}

void TrainConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("trainer: max_epochs must be >= 1");
  for (double w : fixed_weights)
    if (!(w >= 0.0)) throw ConfigError("trainer: weights must be nonnegative");
  if (!(multiplier_step > 0.0))
    throw ConfigError("trainer: multiplier step must be positive");
  if (checkpoint_every < 0)
    throw ConfigError("trainer: checkpoint_every must be nonnegative");
}

namespace {

TrainResult run_loop(const TrainConfig& cfg, const net::Architecture& arch,
                     const physics::Dataset& dataset,
                     const kle::FieldRealization& field,
                     const physics::ConstraintSpec& cspec,
                     const physics::PdeCoefficients& pde,
                     MultiplierState multipliers, bool update_lambdas) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult res;
  res.params = net::init_params(arch, cfg.init_seed);
  res.multipliers = multipliers;
  res.log.reserve(static_cast<std::size_t>(cfg.max_epochs));

  physics::LossAssembler assembler(dataset, field, cspec, pde, cfg.n_threads);
  AdamState adam(arch);
  net::Gradient grad(arch);
  net::NetworkParams last_good = res.params;
  std::vector<double> totals;
  totals.reserve(static_cast<std::size_t>(cfg.max_epochs));

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    physics::Objective obj;
    if (cfg.mode == TrainMode::FixedWeights) {
      obj.mode = physics::Objective::Mode::FixedWeights;
      obj.weights = cfg.fixed_weights;
    } else {
      obj.mode = physics::Objective::Mode::Dual;
      obj.lambda_pde = res.multipliers.lambda_pde;
      obj.lambda_ec = res.multipliers.lambda_ec;
      obj.lambda_ek = res.multipliers.lambda_ek;
    }

    physics::LossBreakdown bd;
    const double total = assembler.assemble(res.params, obj, bd, &grad);
    if (!std::isfinite(total) || !grad.all_finite()) {
      res.params = last_good;
      res.aborted = true;
      break;
    }
    last_good = res.params;
    adam_step(res.params, grad, adam, cfg.adam);
    if (update_lambdas)
      update_multipliers(res.multipliers, bd.nu_pde, bd.nu_ec, bd.nu_ek);

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    res.log.push_back({epoch, total, bd, res.multipliers.lambda_pde,
                       res.multipliers.lambda_ec, res.multipliers.lambda_ek,
                       wall});
    totals.push_back(total);
    res.epochs_run = epoch;

    if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 &&
        !cfg.checkpoint_dir.empty())
      net::save_checkpoint(
          cfg.checkpoint_dir / ("checkpoint_" + std::to_string(epoch) + ".txt"),
          res.params, epoch);

    if (cfg.stopping.kind == StoppingRule::Kind::Dynamic &&
        dynamic_stop(totals, cfg.stopping.window, cfg.stopping.threshold,
                     cfg.stopping.on_deltas)) {
      res.stopped_epoch = epoch;
      break;
    }
  }

  res.wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return res;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const net::Architecture& arch,
                  const physics::Dataset& dataset,
                  const kle::FieldRealization& field,
                  const physics::ConstraintSpec& cspec,
                  const physics::PdeCoefficients& pde) {
  MultiplierState m;
  bool update = false;
  if (cfg.mode == TrainMode::Dual) {
    m = init_multipliers(cfg.multiplier_seed, cfg.multiplier_step);
    update = true;
  }
  return run_loop(cfg, arch, dataset, field, cspec, pde, m, update);
}

TrainResult train_fixed_multipliers(const TrainConfig& cfg,
                                    const net::Architecture& arch,
                                    const physics::Dataset& dataset,
                                    const kle::FieldRealization& field,
                                    const physics::ConstraintSpec& cspec,
                                    const physics::PdeCoefficients& pde,
                                    double lambda_pde, double lambda_ec,
                                    double lambda_ek) {
  if (lambda_pde < 0.0 || lambda_ec < 0.0 || lambda_ek < 0.0)
    throw ConfigError("train_fixed_multipliers: multipliers must be >= 0");
  TrainConfig c = cfg;
  c.mode = TrainMode::Dual;
  MultiplierState m;
  m.lambda_pde = lambda_pde;
  m.lambda_ec = lambda_ec;
  m.lambda_ek = lambda_ek;
  m.step_size = cfg.multiplier_step;
  return run_loop(c, arch, dataset, field, cspec, pde, m, false);
}

void write_iteration_log(const std::filesystem::path& path,
                         const std::vector<IterationRow>& log) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write iteration log: " + path.string());
  out << "epoch,total_loss,mse_data,mse_ic,mse_bc,mse_pde,mse_ec,mse_ek,"
         "nu_pde,nu_ec,nu_ek,lambda_pde,lambda_ec,lambda_ek,wall_time_s\n";
  for (const auto& r : log) {
    out << r.epoch << "," << format_double(r.total) << ","
        << format_double(r.breakdown.mse_data) << ","
        << format_double(r.breakdown.mse_ic) << ","
        << format_double(r.breakdown.mse_bc) << ","
        << format_double(r.breakdown.mse_pde) << ","
        << format_double(r.breakdown.mse_ec) << ","
        << format_double(r.breakdown.mse_ek) << ","
        << format_double(r.breakdown.nu_pde) << ","
        << format_double(r.breakdown.nu_ec) << ","
        << format_double(r.breakdown.nu_ek) << ","
        << format_double(r.lambda_pde) << "," << format_double(r.lambda_ec)
        << "," << format_double(r.lambda_ek) << "," << format_double(r.wall_s)
        << "\n";
  }
}

}  // namespace tgnn::train
