// SPDX-License-Identifier: Apache-2.0
#include "tgnn/fdm_sim.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace tgnn::fdm {

void GridSpec::validate() const {
  if (nx < 2 || ny < 2) throw ConfigError("grid: nx and ny must be >= 2");
  if (!(dx > 0.0) || !(dy > 0.0) || !(dt > 0.0))
    throw ConfigError("grid: dx, dy, dt must be positive");
  if (n_steps < 1) throw ConfigError("grid: n_steps must be >= 1");
  if (!(specific_storage > 0.0))
    throw ConfigError("grid: specific storage must be positive");
}

FaceConductivity interface_conductivities(const kle::FieldRealization& field,
                                          const GridSpec& grid) {
  grid.validate();
  Eigen::MatrixXd kc(grid.ny, grid.nx);
  for (int iy = 0; iy < grid.ny; ++iy)
    for (int ix = 0; ix < grid.nx; ++ix)
      kc(iy, ix) = field.k(grid.cell_x(ix), grid.cell_y(iy));

  FaceConductivity f;
  f.kx.resize(grid.ny, grid.nx - 1);
  f.ky.resize(grid.ny - 1, grid.nx);
  for (int iy = 0; iy < grid.ny; ++iy)
    for (int ix = 0; ix + 1 < grid.nx; ++ix)
      f.kx(iy, ix) =
          2.0 * kc(iy, ix) * kc(iy, ix + 1) / (kc(iy, ix) + kc(iy, ix + 1));
  for (int iy = 0; iy + 1 < grid.ny; ++iy)
    for (int ix = 0; ix < grid.nx; ++ix)
      f.ky(iy, ix) =
          2.0 * kc(iy, ix) * kc(iy + 1, ix) / (kc(iy, ix) + kc(iy + 1, ix));
  return f;
}

Eigen::MatrixXd initial_heads(const GridSpec& grid,
                              const BoundaryConditions& bcs) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(grid.ny, grid.nx);
  h.col(0).setConstant(bcs.left_head);
  h.col(grid.nx - 1).setConstant(bcs.right_head);
  return h;
}

ImplicitSolver::ImplicitSolver(const kle::FieldRealization& field,
                               const GridSpec& grid,
                               const BoundaryConditions& bcs, double cg_rtol)
    : grid_(grid),
      bcs_(bcs),
      faces_(interface_conductivities(field, grid)),
      cg_rtol_(cg_rtol) {
  // Diagonal of the backward-Euler operator for the interior unknowns:
  // storage term plus all face transmissibilities (Dirichlet neighbors
  // included; their coupling moves to the right-hand side).
  const double storage = grid_.specific_storage * grid_.dx * grid_.dy / grid_.dt;
  const double tx = grid_.dy / grid_.dx;
  const double ty = grid_.dx / grid_.dy;
  diag_.setZero(grid_.ny, grid_.nx);
  for (int iy = 0; iy < grid_.ny; ++iy) {
    for (int ix = 1; ix + 1 < grid_.nx; ++ix) {
      double d = storage;
      d += tx * faces_.kx(iy, ix - 1) + tx * faces_.kx(iy, ix);
      if (iy > 0) d += ty * faces_.ky(iy - 1, ix);
      if (iy + 1 < grid_.ny) d += ty * faces_.ky(iy, ix);
      diag_(iy, ix) = d;
    }
  }
}

Eigen::MatrixXd ImplicitSolver::step(const Eigen::MatrixXd& heads_n) const {
  const int nx = grid_.nx, ny = grid_.ny;
  const int n_unknown = (nx - 2) * ny;
  const double storage = grid_.specific_storage * grid_.dx * grid_.dy / grid_.dt;
  const double tx = grid_.dy / grid_.dx;
  const double ty = grid_.dx / grid_.dy;

  // A*h acting on the interior columns; Dirichlet values held in h itself.
  auto apply = [&](const Eigen::MatrixXd& h, Eigen::MatrixXd& out) {
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 1; ix + 1 < nx; ++ix) {
        double v = diag_(iy, ix) * h(iy, ix);
        if (ix > 1) v -= tx * faces_.kx(iy, ix - 1) * h(iy, ix - 1);
        if (ix + 2 < nx) v -= tx * faces_.kx(iy, ix) * h(iy, ix + 1);
        if (iy > 0) v -= ty * faces_.ky(iy - 1, ix) * h(iy - 1, ix);
        if (iy + 1 < ny) v -= ty * faces_.ky(iy, ix) * h(iy + 1, ix);
        out(iy, ix) = v;
      }
    }
  };

  // Right-hand side: storage * h^n plus the pinned-column couplings.
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(ny, nx);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 1; ix + 1 < nx; ++ix) rhs(iy, ix) = storage * heads_n(iy, ix);
    rhs(iy, 1) += tx * faces_.kx(iy, 0) * bcs_.left_head;
    rhs(iy, nx - 2) += tx * faces_.kx(iy, nx - 2) * bcs_.right_head;
  }

  // Jacobi-preconditioned CG, warm-started from h^n.
  Eigen::MatrixXd h = heads_n;
  h.col(0).setConstant(bcs_.left_head);
  h.col(nx - 1).setConstant(bcs_.right_head);

  Eigen::MatrixXd Ah(ny, nx), r(ny, nx), z(ny, nx), p(ny, nx), Ap(ny, nx);
  Ah.setZero();
  Ap.setZero();
  apply(h, Ah);
  r.setZero();
  z.setZero();
  auto interior = [&](Eigen::MatrixXd& m) {
    return m.block(0, 1, ny, nx - 2);
  };
  interior(r) = rhs.block(0, 1, ny, nx - 2) - Ah.block(0, 1, ny, nx - 2);

  const double bnorm = rhs.block(0, 1, ny, nx - 2).norm();
  const double target = cg_rtol_ * (bnorm > 0.0 ? bnorm : 1.0);
  double rnorm = interior(r).norm();
  if (rnorm > target) {
    interior(z) = (r.block(0, 1, ny, nx - 2).array() /
                   diag_.block(0, 1, ny, nx - 2).array())
                      .matrix();
    p = z;
    p.col(0).setZero();
    p.col(nx - 1).setZero();
    double rz = (interior(r).array() * interior(z).array()).sum();
    const int max_iter = 10 * nx * ny;
    int it = 0;
    for (; it < max_iter; ++it) {
      apply(p, Ap);
      const double pAp = (interior(p).array() * interior(Ap).array()).sum();
      const double alpha = rz / pAp;
      interior(h) += alpha * interior(p);
      interior(r) -= alpha * interior(Ap);
      rnorm = interior(r).norm();
      if (rnorm <= target) break;
      interior(z) = (r.block(0, 1, ny, nx - 2).array() /
                     diag_.block(0, 1, ny, nx - 2).array())
                        .matrix();
      const double rz_new = (interior(r).array() * interior(z).array()).sum();
      interior(p) = interior(z) + (rz_new / rz) * interior(p);
      rz = rz_new;
    }
    if (rnorm > target) {
      std::ostringstream msg;
      msg << "implicit step: CG did not converge in " << max_iter
          << " iterations over " << n_unknown
          << " unknowns; achieved relative residual "
          << (bnorm > 0.0 ? rnorm / bnorm : rnorm);
      throw NumericError(msg.str());
    }
  }
  return h;
}

ReferenceSolution simulate(const kle::FieldRealization& field,
                           const GridSpec& grid, const BoundaryConditions& bcs,
                           double cg_rtol) {
  grid.validate();
  ImplicitSolver solver(field, grid, bcs, cg_rtol);
  ReferenceSolution sol;
  sol.grid = grid;
  sol.bcs = bcs;
  sol.field_fingerprint = field.fingerprint();
  sol.heads.reserve(static_cast<std::size_t>(grid.n_steps) + 1);
  sol.heads.push_back(initial_heads(grid, bcs));
  for (int s = 0; s < grid.n_steps; ++s)
    sol.heads.push_back(solver.step(sol.heads.back()));
  return sol;
}

Eigen::MatrixXd ReferenceSolution::head_range() const {
  Eigen::MatrixXd lo = heads.front(), hi = heads.front();
  for (const auto& h : heads) {
    lo = lo.cwiseMin(h);
    hi = hi.cwiseMax(h);
  }
  return hi - lo;
}

std::string serialize_solution(const ReferenceSolution& sol) {
  std::ostringstream out;
  out << "tgnn-solution 1\n";
  out << "nx " << sol.grid.nx << " ny " << sol.grid.ny << "\n";
  out << "dx " << format_double(sol.grid.dx) << " dy "
      << format_double(sol.grid.dy) << "\n";
  out << "dt " << format_double(sol.grid.dt) << " n_steps " << sol.grid.n_steps
      << "\n";
  out << "specific_storage " << format_double(sol.grid.specific_storage)
      << "\n";
  out << "left_head " << format_double(sol.bcs.left_head) << " right_head "
      << format_double(sol.bcs.right_head) << "\n";
  out << "field_fingerprint " << to_hex(sol.field_fingerprint) << "\n";
  for (std::size_t s = 0; s < sol.heads.size(); ++s) {
    for (int iy = 0; iy < sol.grid.ny; ++iy) {
      out << s << " " << iy;
      for (int ix = 0; ix < sol.grid.nx; ++ix)
        out << " " << format_double(sol.heads[s](iy, ix));
      out << "\n";
    }
  }
  return out.str();
}

void save_solution(const std::filesystem::path& path,
                   const ReferenceSolution& sol) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write solution file: " + path.string());
  out << serialize_solution(sol);
}

ReferenceSolution load_solution(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open solution file: " + path.string());
  std::string magic, key;
  int version = 0;
  in >> magic >> version;
  if (magic != "tgnn-solution" || version != 1)
    throw ConfigError("solution file: bad header in " + path.string());

  ReferenceSolution sol;
  std::string fp;
  in >> key >> sol.grid.nx >> key >> sol.grid.ny;
  in >> key >> sol.grid.dx >> key >> sol.grid.dy;
  in >> key >> sol.grid.dt >> key >> sol.grid.n_steps;
  in >> key >> sol.grid.specific_storage;
  in >> key >> sol.bcs.left_head >> key >> sol.bcs.right_head;
  in >> key >> fp;
  if (!in) throw ConfigError("solution file: malformed header");
  sol.field_fingerprint = from_hex(fp);

  sol.heads.assign(static_cast<std::size_t>(sol.grid.n_steps) + 1,
                   Eigen::MatrixXd::Zero(sol.grid.ny, sol.grid.nx));
  for (std::size_t s = 0; s < sol.heads.size(); ++s) {
    for (int iy = 0; iy < sol.grid.ny; ++iy) {
      std::size_t s_read;
      int iy_read;
      in >> s_read >> iy_read;
      if (!in || s_read != s || iy_read != iy)
        throw ConfigError("solution file: unexpected record order");
      for (int ix = 0; ix < sol.grid.nx; ++ix) in >> sol.heads[s](iy, ix);
    }
  }
  if (!in) throw ConfigError("solution file: truncated records");
  return sol;
}

void export_csv(const std::filesystem::path& path,
                const ReferenceSolution& sol) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write csv file: " + path.string());
  out << "t,x,y,h\n";
  for (std::size_t s = 0; s < sol.heads.size(); ++s) {
    const double t = static_cast<double>(s) * sol.grid.dt;
    for (int iy = 0; iy < sol.grid.ny; ++iy)
      for (int ix = 0; ix < sol.grid.nx; ++ix)
        out << format_double(t) << "," << format_double(sol.grid.cell_x(ix))
            << "," << format_double(sol.grid.cell_y(iy)) << ","
            << format_double(sol.heads[s](iy, ix)) << "\n";
  }
}

}  // namespace tgnn::fdm
