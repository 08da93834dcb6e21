// SPDX-License-Identifier: Apache-2.0
#include "tgnn/physics_loss.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tgnn::physics {

void SamplingSpec::validate() const {
  for (int n : {n_data, n_ic, n_bc, n_pde, n_ec, n_ek})
    if (n < 0) throw ConfigError("sampling: counts must be nonnegative");
  if (!(train_t_max > 0.0))
    throw ConfigError("sampling: train_t_max must be positive");
}

void ConstraintSpec::validate() const {
  if (!(head_min < head_max))
    throw ConfigError("constraints: head_min must be below head_max");
}

Dataset sample_dataset(const fdm::ReferenceSolution& ref,
                       const SamplingSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto& g = ref.grid;
  if (spec.train_t_max > g.total_time() + 1e-12)
    throw ConfigError("sampling: train_t_max exceeds the simulated window");
  const int train_steps = std::max(
      1, static_cast<int>(std::floor(spec.train_t_max / g.dt + 1e-9)));

  auto rng = make_rng(seed);
  std::uniform_int_distribution<int> step_d(1, train_steps);
  std::uniform_int_distribution<int> step_all(0, g.n_steps);
  std::uniform_int_distribution<int> col_int(1, g.nx - 2);
  std::uniform_int_distribution<int> col_all(0, g.nx - 1);
  std::uniform_int_distribution<int> row_d(0, g.ny - 1);
  std::uniform_int_distribution<int> side_d(0, 1);
  std::uniform_real_distribution<double> t_d(0.0, g.total_time());
  std::uniform_real_distribution<double> x_d(g.cell_x(0), g.cell_x(g.nx - 1));
  std::uniform_real_distribution<double> y_d(g.cell_y(0), g.cell_y(g.ny - 1));

  Dataset d;
  // Observations from the interior of the grid within the training window.
  for (int i = 0; i < spec.n_data; ++i) {
    const int s = step_d(rng), ix = col_int(rng), iy = row_d(rng);
    d.data.push_back({s * g.dt, g.cell_x(ix), g.cell_y(iy),
                      ref.heads[static_cast<std::size_t>(s)](iy, ix), s, ix,
                      iy});
  }
  for (int i = 0; i < spec.n_ic; ++i) {
    const int ix = col_all(rng), iy = row_d(rng);
    d.ic.push_back(
        {0.0, g.cell_x(ix), g.cell_y(iy), ref.heads[0](iy, ix), 0, ix, iy});
  }
  // Prescribed heads on the Dirichlet columns over the full window.
  for (int i = 0; i < spec.n_bc; ++i) {
    const int s = step_all(rng), side = side_d(rng), iy = row_d(rng);
    const int ix = side == 0 ? 0 : g.nx - 1;
    d.bc.push_back({s * g.dt, g.cell_x(ix), g.cell_y(iy),
                    side == 0 ? ref.bcs.left_head : ref.bcs.right_head, s, ix,
                    iy});
  }
  for (int i = 0; i < spec.n_pde; ++i)
    d.pde.push_back({t_d(rng), x_d(rng), y_d(rng)});
  for (int i = 0; i < spec.n_ec; ++i)
    d.ec.push_back({t_d(rng), x_d(rng), y_d(rng)});
  for (int i = 0; i < spec.n_ek; ++i)
    d.ek.push_back({t_d(rng), x_d(rng), y_d(rng)});

  d.data_on = spec.n_data > 0;
  d.ic_on = spec.n_ic > 0;
  d.bc_on = spec.n_bc > 0;
  d.pde_on = spec.n_pde > 0;
  d.ec_on = spec.n_ec > 0;
  d.ek_on = spec.n_ek > 0;
  return d;
}

double pde_residual(const net::NetworkParams& params,
                    const kle::FieldRealization& field, double t, double x,
                    double y, double specific_storage) {
  const net::EvalBundle b = net::forward_with_derivs(params, t, x, y);
  const kle::LogKEval z = field.eval_logK(x, y);
  const double k = std::exp(z.z);
  return specific_storage * b.dt - k * (b.dxx + b.dyy) -
         k * (z.dz_dx * b.dx + z.dz_dy * b.dy);
}

namespace {

Eigen::Matrix3Xd to_matrix(const std::vector<LabeledPoint>& pts) {
  Eigen::Matrix3Xd m(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i)
    m.col(static_cast<Eigen::Index>(i)) << pts[i].t, pts[i].x, pts[i].y;
  return m;
}

Eigen::Matrix3Xd to_matrix(const std::vector<CollocationPoint>& pts) {
  Eigen::Matrix3Xd m(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i)
    m.col(static_cast<Eigen::Index>(i)) << pts[i].t, pts[i].x, pts[i].y;
  return m;
}

}  // namespace

LossAssembler::LossAssembler(const Dataset& dataset,
                             const kle::FieldRealization& field,
                             const ConstraintSpec& cspec,
                             const PdeCoefficients& pde, int n_threads,
                             int block_size)
    : dataset_(dataset), cspec_(cspec), pde_(pde), n_threads_(n_threads) {
  cspec.validate();
  if (block_size < 1) throw ConfigError("loss assembler: block_size >= 1");
  if (n_threads_ < 1) n_threads_ = 1;

  const bool on[6] = {dataset.data_on,
                      dataset.ic_on,
                      dataset.bc_on,
                      dataset.pde_on,
                      dataset.ec_on && cspec.ec_enabled,
                      dataset.ek_on && cspec.ek_enabled};
  const std::size_t sizes[6] = {dataset.data.size(), dataset.ic.size(),
                                dataset.bc.size(),   dataset.pde.size(),
                                dataset.ec.size(),   dataset.ek.size()};
  static const char* names[6] = {"data", "ic", "bc", "pde", "ec", "ek"};
  for (int c = 0; c < 6; ++c)
    if (on[c] && sizes[c] == 0)
      throw ConfigError(std::string("loss assembler: enabled category '") +
                        names[c] + "' has no points");

  if (on[0]) {
    pts_[0] = to_matrix(dataset.data);
    labels_[0].resize(pts_[0].cols());
    for (Eigen::Index i = 0; i < labels_[0].size(); ++i)
      labels_[0][i] = dataset.data[static_cast<std::size_t>(i)].label;
  }
  if (on[1]) {
    pts_[1] = to_matrix(dataset.ic);
    labels_[1].resize(pts_[1].cols());
    for (Eigen::Index i = 0; i < labels_[1].size(); ++i)
      labels_[1][i] = dataset.ic[static_cast<std::size_t>(i)].label;
  }
  if (on[2]) {
    pts_[2] = to_matrix(dataset.bc);
    labels_[2].resize(pts_[2].cols());
    for (Eigen::Index i = 0; i < labels_[2].size(); ++i)
      labels_[2][i] = dataset.bc[static_cast<std::size_t>(i)].label;
  }
  if (on[3]) {
    pts_[3] = to_matrix(dataset.pde);
    const auto n = pts_[3].cols();
    pde_k_.resize(n);
    pde_zx_.resize(n);
    pde_zy_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const kle::LogKEval z = field.eval_logK(pts_[3](1, i), pts_[3](2, i));
      pde_k_[i] = std::exp(z.z);
      pde_zx_[i] = z.dz_dx;
      pde_zy_[i] = z.dz_dy;
    }
  }
  if (on[4]) pts_[4] = to_matrix(dataset.ec);
  if (on[5]) pts_[5] = to_matrix(dataset.ek);

  for (int c = 0; c < 6; ++c) {
    if (!on[c]) continue;
    const auto n = pts_[c].cols();
    for (Eigen::Index b = 0; b < n; b += block_size)
      tasks_.push_back(
          {static_cast<Cat>(c), b, std::min<Eigen::Index>(block_size, n - b)});
  }
  partials_.resize(tasks_.size());
}

void LossAssembler::run_task(const net::NetworkParams& params,
                             const Objective& obj, std::size_t ti,
                             bool want_grad, net::BatchEvaluator& ev) {
  const Task& task = tasks_[ti];
  const int c = static_cast<int>(task.cat);
  const Eigen::Matrix3Xd block = pts_[c].middleCols(task.begin, task.len);

  net::Channels ch;  // value-only by default
  if (task.cat == Cat::Pde) ch = net::Channels::full();
  if (task.cat == Cat::Ec) ch.d_x = true;

  const net::BundleBatch& out = ev.forward(params, block, ch);
  Partial& p = partials_[ti];
  p = Partial{};

  net::BundleBatch cot;
  if (want_grad) {
    cot.resize(out.channels, task.len);
    cot.set_zero();
  }
  const bool fixed = obj.mode == Objective::Mode::FixedWeights;

  switch (task.cat) {
    case Cat::Data:
    case Cat::Ic:
    case Cat::Bc: {
      const auto n_total = static_cast<double>(pts_[c].cols());
      const Eigen::RowVectorXd diff =
          out.value - labels_[c].segment(task.begin, task.len);
      p.sum = diff.squaredNorm();
      if (want_grad) {
        const double w = fixed ? obj.weights[static_cast<std::size_t>(c)] : 1.0;
        cot.value = (2.0 * w / n_total) * diff;
      }
      break;
    }
    case Cat::Pde: {
      const auto n_total = static_cast<double>(pts_[3].cols());
      const auto k = pde_k_.segment(task.begin, task.len).array();
      const auto zx = pde_zx_.segment(task.begin, task.len).array();
      const auto zy = pde_zy_.segment(task.begin, task.len).array();
      const Eigen::ArrayXXd f_hat =
          pde_.residual_scale *
          (pde_.specific_storage * out.dt.array() -
           k * (out.dxx.array() + out.dyy.array()) -
           k * (zx * out.dx.array() + zy * out.dy.array()));
      p.sum = f_hat.square().sum();
      if (want_grad) {
        const double w = fixed ? obj.weights[3] : obj.lambda_pde;
        const Eigen::ArrayXXd u =
            (2.0 * w / n_total) * pde_.residual_scale * f_hat;
        cot.dt = (u * pde_.specific_storage).matrix();
        cot.dx = (-u * k * zx).matrix();
        cot.dy = (-u * k * zy).matrix();
        cot.dxx = (-u * k).matrix();
        cot.dyy = (-u * k).matrix();
      }
      break;
    }
    case Cat::Ec: {
      const auto n_total = static_cast<double>(pts_[4].cols());
      const Eigen::ArrayXXd viol = out.dx.array().max(0.0);
      p.sum = viol.square().sum();
      p.sum_lin = viol.sum();
      if (want_grad) {
        const Eigen::ArrayXXd active = (out.dx.array() > 0.0).cast<double>();
        if (fixed)
          cot.dx = ((2.0 * obj.weights[4] / n_total) * viol).matrix();
        else
          cot.dx = ((obj.lambda_ec / n_total) * active).matrix();
      }
      break;
    }
    case Cat::Ek: {
      const auto n_total = static_cast<double>(pts_[5].cols());
      const Eigen::ArrayXXd hi = (out.value.array() - cspec_.head_max).max(0.0);
      const Eigen::ArrayXXd lo = (cspec_.head_min - out.value.array()).max(0.0);
      p.sum = hi.square().sum() + lo.square().sum();
      p.sum_lin = hi.sum() + lo.sum();
      if (want_grad) {
        if (fixed) {
          cot.value = ((2.0 * obj.weights[5] / n_total) * (hi - lo)).matrix();
        } else {
          const Eigen::ArrayXXd s =
              (hi > 0.0).cast<double>() - (lo > 0.0).cast<double>();
          cot.value = ((obj.lambda_ek / n_total) * s).matrix();
        }
      }
      break;
    }
  }

  if (want_grad) ev.backward(params, cot, task_grads_[ti]);
}

double LossAssembler::assemble(const net::NetworkParams& params,
                               const Objective& obj, LossBreakdown& bd,
                               net::Gradient* grad) {
  if (grad) {
    if (task_grads_.empty())
      task_grads_.assign(tasks_.size(), net::Gradient(params.arch));
    for (auto& g : task_grads_) g.set_zero();
  }
  if (evaluators_.empty()) {
    const int n_ev = std::max(1, n_threads_);
    for (int i = 0; i < n_ev; ++i)
      evaluators_.push_back(std::make_unique<net::BatchEvaluator>(params.arch));
  }

  // Dynamic scheduling balances the heavy full-channel blocks against the
  // cheap value-only ones; results stay bit-identical because partials and
  // per-task gradients are merged in task order afterwards.
  const auto n_tasks = static_cast<std::int64_t>(tasks_.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(n_threads_)
#endif
  for (std::int64_t ti = 0; ti < n_tasks; ++ti) {
    int tid = 0;
#ifdef _OPENMP
    tid = omp_get_thread_num();
#endif
    run_task(params, obj, static_cast<std::size_t>(ti), grad != nullptr,
             *evaluators_[static_cast<std::size_t>(tid) % evaluators_.size()]);
  }

  // Combine partials and per-task gradients in task order; the result does
  // not depend on the thread count.
  double sums[6] = {0, 0, 0, 0, 0, 0};
  double sums_lin[6] = {0, 0, 0, 0, 0, 0};
  for (std::size_t ti = 0; ti < tasks_.size(); ++ti) {
    const int c = static_cast<int>(tasks_[ti].cat);
    sums[c] += partials_[ti].sum;
    sums_lin[c] += partials_[ti].sum_lin;
  }
  if (grad) {
    grad->set_zero();
    for (auto& g : task_grads_) grad->axpy(1.0, g);
  }

  bd = LossBreakdown{};
  auto mean = [&](int c, double s) {
    return pts_[c].cols() > 0 ? s / static_cast<double>(pts_[c].cols()) : 0.0;
  };
  bd.mse_data = mean(0, sums[0]);
  bd.mse_ic = mean(1, sums[1]);
  bd.mse_bc = mean(2, sums[2]);
  bd.mse_pde = mean(3, sums[3]);
  bd.mse_ec = mean(4, sums[4]);
  bd.mse_ek = mean(5, sums[5]);
  bd.nu_pde = bd.mse_pde;
  bd.nu_ec = mean(4, sums_lin[4]);
  bd.nu_ek = mean(5, sums_lin[5]);

  if (obj.mode == Objective::Mode::FixedWeights)
    return obj.weights[0] * bd.mse_data + obj.weights[1] * bd.mse_ic +
           obj.weights[2] * bd.mse_bc + obj.weights[3] * bd.mse_pde +
           obj.weights[4] * bd.mse_ec + obj.weights[5] * bd.mse_ek;
  return bd.mse_data + bd.mse_ic + bd.mse_bc + obj.lambda_pde * bd.nu_pde +
         obj.lambda_ec * bd.nu_ec + obj.lambda_ek * bd.nu_ek;
}

LossBreakdown mse_terms(const net::NetworkParams& params,
                        const Dataset& dataset,
                        const kle::FieldRealization& field,
                        const ConstraintSpec& cspec,
                        const PdeCoefficients& pde) {
  LossAssembler a(dataset, field, cspec, pde);
  LossBreakdown bd;
  a.assemble(params, Objective{}, bd, nullptr);
  return bd;
}

ConstraintAggregates constraint_aggregates(const net::NetworkParams& params,
                                           const Dataset& dataset,
                                           const kle::FieldRealization& field,
                                           const ConstraintSpec& cspec,
                                           const PdeCoefficients& pde) {
  const LossBreakdown bd = mse_terms(params, dataset, field, cspec, pde);
  return {bd.nu_pde, bd.nu_ec, bd.nu_ek};
}

namespace {
void write_labeled(std::ostream& out, const char* cat,
                   const std::vector<LabeledPoint>& pts) {
  for (const auto& p : pts)
    out << cat << "," << format_double(p.t) << "," << format_double(p.x) << ","
        << format_double(p.y) << "," << format_double(p.label) << "," << p.step
        << "," << p.ix << "," << p.iy << "\n";
}
void write_colloc(std::ostream& out, const char* cat,
                  const std::vector<CollocationPoint>& pts) {
  for (const auto& p : pts)
    out << cat << "," << format_double(p.t) << "," << format_double(p.x) << ","
        << format_double(p.y) << ",,-1,-1,-1\n";
}
}  // namespace

void export_dataset_csv(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write dataset csv: " + path.string());
  out << "category,t,x,y,label,step,ix,iy\n";
  write_labeled(out, "data", d.data);
  write_labeled(out, "ic", d.ic);
  write_labeled(out, "bc", d.bc);
  write_colloc(out, "pde", d.pde);
  write_colloc(out, "ec", d.ec);
  write_colloc(out, "ek", d.ek);
}

Dataset import_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset csv: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "category,t,x,y,label,step,ix,iy")
    throw ConfigError("dataset csv: unexpected header in " + path.string());
  Dataset d;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field[8];
    for (int i = 0; i < 8; ++i)
      if (!std::getline(row, field[i], ','))
        throw ConfigError("dataset csv: short row at line " +
                          std::to_string(line_no));
    const double t = std::stod(field[1]), x = std::stod(field[2]),
                 y = std::stod(field[3]);
    if (field[0] == "pde" || field[0] == "ec" || field[0] == "ek") {
      CollocationPoint p{t, x, y};
      (field[0] == "pde" ? d.pde : field[0] == "ec" ? d.ec : d.ek).push_back(p);
    } else if (field[0] == "data" || field[0] == "ic" || field[0] == "bc") {
      LabeledPoint p{t,
                     x,
                     y,
                     std::stod(field[4]),
                     std::stoi(field[5]),
                     std::stoi(field[6]),
                     std::stoi(field[7])};
      (field[0] == "data" ? d.data : field[0] == "ic" ? d.ic : d.bc)
          .push_back(p);
    } else {
      throw ConfigError("dataset csv: unknown category '" + field[0] +
                        "' at line " + std::to_string(line_no));
    }
  }
  d.data_on = !d.data.empty();
  d.ic_on = !d.ic.empty();
  d.bc_on = !d.bc.empty();
  d.pde_on = !d.pde.empty();
  d.ec_on = !d.ec.empty();
  d.ek_on = !d.ek.empty();
  return d;
}

}  // namespace tgnn::physics
