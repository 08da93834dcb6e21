// SPDX-License-Identifier: Apache-2.0
#include "tgnn/eval_metrics.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

namespace tgnn::metrics {

EvalReport evaluate(const net::NetworkParams& params,
                    const fdm::ReferenceSolution& ref, const EvalSpec& spec) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& g = ref.grid;
  const int first_step = spec.final_step_only ? g.n_steps : 1;
  const int ix_lo = spec.include_dirichlet ? 0 : 1;
  const int ix_hi = spec.include_dirichlet ? g.nx - 1 : g.nx - 2;

  const Eigen::Index n_per_step =
      static_cast<Eigen::Index>(g.ny) * (ix_hi - ix_lo + 1);
  if (n_per_step <= 0 || first_step > g.n_steps)
    throw ConfigError("evaluate: empty evaluation set");

  net::BatchEvaluator ev(params.arch);
  Eigen::Matrix3Xd pts(3, n_per_step);
  double sum_ref = 0.0, sum_ref2 = 0.0, ss_res = 0.0;
  std::int64_t n = 0;

  for (int s = first_step; s <= g.n_steps; ++s) {
    Eigen::Index col = 0;
    for (int iy = 0; iy < g.ny; ++iy)
      for (int ix = ix_lo; ix <= ix_hi; ++ix)
        pts.col(col++) << s * g.dt, g.cell_x(ix), g.cell_y(iy);
    const net::BundleBatch& out =
        ev.forward(params, pts, net::Channels::value_only());
    col = 0;
    for (int iy = 0; iy < g.ny; ++iy)
      for (int ix = ix_lo; ix <= ix_hi; ++ix) {
        const double r = ref.heads[static_cast<std::size_t>(s)](iy, ix);
        const double d = out.value[col++] - r;
        sum_ref += r;
        sum_ref2 += r * r;
        ss_res += d * d;
        ++n;
      }
  }

  const double mean_ref = sum_ref / static_cast<double>(n);
  const double ss_tot = sum_ref2 - static_cast<double>(n) * mean_ref * mean_ref;
  if (!(ss_tot > 0.0))
    throw NumericError("evaluate: zero-variance reference, R2 undefined");

  EvalReport rep;
  rep.n_points = n;
  rep.l2_mse = ss_res / static_cast<double>(n);
  rep.l2_relative = sum_ref2 > 0.0 ? std::sqrt(ss_res / sum_ref2) : 0.0;
  rep.r2 = 1.0 - ss_res / ss_tot;
  rep.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rep;
}

void add_noise(physics::Dataset& dataset, const fdm::ReferenceSolution& ref,
               double alpha_percent, std::uint64_t seed) {
  if (alpha_percent < 0.0)
    throw ConfigError("add_noise: noise level must be nonnegative");
  const Eigen::MatrixXd range = ref.head_range();
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (auto& p : dataset.data) {
    const double eps = uni(rng);  // one draw per observation, even at alpha=0
    if (p.ix < 0 || p.iy < 0)
      throw ConfigError("add_noise: observation lacks grid indices");
    p.label += range(p.iy, p.ix) * (alpha_percent / 100.0) * eps;
  }
}

void write_report_kv(const std::filesystem::path& path, const EvalReport& rep,
                     const train::TrainResult& tr, const std::string& method,
                     std::uint64_t master_seed,
                     std::uint64_t field_fingerprint) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write report: " + path.string());
  out << "method=" << method << "\n";
  out << "master_seed=" << master_seed << "\n";
  out << "field_fingerprint=" << to_hex(field_fingerprint) << "\n";
  out << "epochs_run=" << tr.epochs_run << "\n";
  out << "stopped_epoch=" << tr.stopped_epoch << "\n";
  out << "aborted=" << (tr.aborted ? 1 : 0) << "\n";
  out << "l2_mse=" << format_double(rep.l2_mse) << "\n";
  out << "l2_relative=" << format_double(rep.l2_relative) << "\n";
  out << "r2=" << format_double(rep.r2) << "\n";
  out << "n_points=" << rep.n_points << "\n";
  out << "train_wall_s=" << format_double(tr.wall_s) << "\n";
  out << "eval_wall_s=" << format_double(rep.wall_time_s) << "\n";
  out << "lambda_pde=" << format_double(tr.multipliers.lambda_pde) << "\n";
  out << "lambda_ec=" << format_double(tr.multipliers.lambda_ec) << "\n";
  out << "lambda_ek=" << format_double(tr.multipliers.lambda_ek) << "\n";
}

}  // namespace tgnn::metrics
