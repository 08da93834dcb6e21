// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "tgnn/fdm_sim.hpp"

using namespace tgnn;
using namespace tgnn::fdm;

namespace {

kle::CovarianceSpec default_cov() { return {1020.0, 1020.0, 408.0, 1.0, 0.0}; }

kle::FieldRealization homogeneous_field() {
  auto cov = default_cov();
  cov.variance = 0.0;
  return kle::generate_field(cov, 20, 0);
}

// Net flux balance of one implicit step, derived by summing the discrete
// cell equations over the interior: storage change equals boundary influx
// through the faces adjacent to the pinned columns.
double mass_balance_residual(const ImplicitSolver& solver,
                             const Eigen::MatrixXd& h_old,
                             const Eigen::MatrixXd& h_new) {
  const auto& g = solver.grid();
  const auto& f = solver.faces();
  const double tx = g.dy / g.dx;
  double storage = 0.0;
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 1; ix + 1 < g.nx; ++ix)
      storage += g.specific_storage * g.dx * g.dy *
                 (h_new(iy, ix) - h_old(iy, ix));
  double influx = 0.0;
  for (int iy = 0; iy < g.ny; ++iy) {
    influx += tx * f.kx(iy, 0) * (h_new(iy, 0) - h_new(iy, 1));
    influx += tx * f.kx(iy, g.nx - 2) * (h_new(iy, g.nx - 1) - h_new(iy, g.nx - 2));
  }
  influx *= g.dt;
  return std::abs(storage - influx) / std::max(std::abs(influx), 1e-30);
}

}  // namespace

TEST_CASE("interface conductivities: harmonic means") {
  GridSpec grid;
  const auto hom = homogeneous_field();
  const auto faces_h = interface_conductivities(hom, grid);
  CHECK(faces_h.kx.minCoeff() == 1.0);
  CHECK(faces_h.kx.maxCoeff() == 1.0);
  CHECK(faces_h.ky.minCoeff() == 1.0);

  // Harmonic mean of K=1 and K=4 is 2/(1 + 1/4) = 1.6.
  CHECK(2.0 * 1.0 * 4.0 / (1.0 + 4.0) == doctest::Approx(1.6).epsilon(1e-15));

  const auto het = kle::generate_field(default_cov(), 20, 3);
  const auto faces = interface_conductivities(het, grid);
  CHECK(faces.kx.minCoeff() > 0.0);
  CHECK(faces.ky.minCoeff() > 0.0);
  const double ka = het.k(grid.cell_x(10), grid.cell_y(7));
  const double kb = het.k(grid.cell_x(11), grid.cell_y(7));
  CHECK(faces.kx(7, 10) == doctest::Approx(2.0 * ka * kb / (ka + kb)).epsilon(1e-14));
}

TEST_CASE("step: the discrete steady state is a fixed point") {
  GridSpec grid;
  BoundaryConditions bcs;
  ImplicitSolver solver(homogeneous_field(), grid, bcs);
  Eigen::MatrixXd h(grid.ny, grid.nx);
  for (int iy = 0; iy < grid.ny; ++iy)
    for (int ix = 0; ix < grid.nx; ++ix)
      h(iy, ix) = 1.0 - static_cast<double>(ix) / (grid.nx - 1);
  const Eigen::MatrixXd h1 = solver.step(h);
  CHECK((h1 - h).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("step: maximum principle and mass balance") {
  GridSpec grid;
  BoundaryConditions bcs;
  const auto field = kle::generate_field(default_cov(), 20, 42);
  ImplicitSolver solver(field, grid, bcs);
  Eigen::MatrixXd h = initial_heads(grid, bcs);
  for (int s = 0; s < 10; ++s) {
    const Eigen::MatrixXd h1 = solver.step(h);
    CHECK(h1.minCoeff() >= -1e-12);
    CHECK(h1.maxCoeff() <= 1.0 + 1e-12);
    CHECK(mass_balance_residual(solver, h, h1) < 1e-8);
    h = h1;
  }
}

TEST_CASE("simulate: transient Fourier oracle at default resolution") {
  GridSpec grid;  // dt = 0.2, 50 steps to t = 10
  BoundaryConditions bcs;
  const auto sol = simulate(homogeneous_field(), grid, bcs);
  const double diff = 1.0 / grid.specific_storage;
  const double span = (grid.nx - 1) * grid.dx;  // between the pinned columns
  double max_err = 0.0;
  for (int ix = 1; ix + 1 < grid.nx; ++ix) {
    const double xi = ix * grid.dx;
    const double ref = oracles::diffusion_series(xi, 10.0, span, diff,
                                                 bcs.left_head, bcs.right_head);
    max_err = std::max(max_err, std::abs(sol.heads[50](25, ix) - ref));
  }
  CHECK(max_err < 5e-3);
}

TEST_CASE("simulate: steady state reaches the linear profile") {
  GridSpec grid;
  grid.n_steps = 5000;  // t = 1000
  BoundaryConditions bcs;
  const auto sol = simulate(homogeneous_field(), grid, bcs);
  double max_err = 0.0;
  for (int iy = 0; iy < grid.ny; ++iy)
    for (int ix = 1; ix + 1 < grid.nx; ++ix) {
      const double lin = 1.0 - static_cast<double>(ix) / (grid.nx - 1);
      max_err = std::max(max_err, std::abs(sol.heads.back()(iy, ix) - lin));
    }
  CHECK(max_err < 1e-6);
}

TEST_CASE("simulate: determinism and Dirichlet invariants") {
  GridSpec grid;
  grid.n_steps = 5;
  BoundaryConditions bcs;
  const auto field = kle::generate_field(default_cov(), 20, 42);
  const auto a = simulate(field, grid, bcs);
  const auto b = simulate(field, grid, bcs);
  CHECK(serialize_solution(a) == serialize_solution(b));
  for (const auto& h : a.heads) {
    CHECK((h.col(0).array() == bcs.left_head).all());
    CHECK((h.col(grid.nx - 1).array() == bcs.right_head).all());
    CHECK(h.minCoeff() >= -1e-12);
    CHECK(h.maxCoeff() <= 1.0 + 1e-12);
  }
}

TEST_CASE("simulate: first-order convergence in dt") {
  BoundaryConditions bcs;
  const auto field = kle::generate_field(default_cov(), 20, 1);
  auto run = [&](double dt) {
    GridSpec g;
    g.dt = dt;
    g.n_steps = static_cast<int>(std::lround(2.0 / dt));
    return simulate(field, g, bcs).heads.back();
  };
  const auto h4 = run(0.4), h2 = run(0.2), h1 = run(0.1);
  const double e21 = (h4 - h2).norm();
  const double e10 = (h2 - h1).norm();
  const double order = std::log2(e21 / e10);
  CHECK(order > 0.8);
  CHECK(order < 1.2);
}

TEST_CASE("solution file: bit-exact round trip and csv export") {
  namespace fs = std::filesystem;
  GridSpec grid;
  grid.n_steps = 3;
  const auto field = kle::generate_field(default_cov(), 20, 9);
  const auto sol = simulate(field, grid, BoundaryConditions{});
  const auto path = fs::temp_directory_path() / "tgnn_test_solution.txt";
  save_solution(path, sol);
  const auto back = load_solution(path);
  CHECK(serialize_solution(sol) == serialize_solution(back));
  CHECK(back.field_fingerprint == field.fingerprint());
  const auto csv = fs::temp_directory_path() / "tgnn_test_solution.csv";
  export_csv(csv, sol);
  CHECK(fs::file_size(csv) > 0);
  fs::remove(path);
  fs::remove(csv);
}

TEST_CASE("head_range covers the transient span") {
  GridSpec grid;
  grid.n_steps = 5;
  const auto sol = simulate(homogeneous_field(), grid, BoundaryConditions{});
  const auto range = sol.head_range();
  CHECK(range(25, 0) == 0.0);  // pinned column never moves
  CHECK(range(25, 1) > 0.0);
}
