// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "tgnn/kle_field.hpp"

namespace tgnn::fdm {

/// Cell-centered grid: nx*ny cells of size dx*dy, cell (ix,iy) centered at
/// ((ix+0.5)dx, (iy+0.5)dy). The first and last cell columns carry the
/// prescribed heads; the lateral rows are no-flow.
struct GridSpec {
  int nx = 51, ny = 51;
  double dx = 20.0, dy = 20.0;
  double dt = 0.2;
  int n_steps = 50;
  double specific_storage = 1e-4;  // S_s

  double cell_x(int ix) const { return (ix + 0.5) * dx; }
  double cell_y(int iy) const { return (iy + 0.5) * dy; }
  double domain_length_x() const { return nx * dx; }
  double domain_length_y() const { return ny * dy; }
  double total_time() const { return n_steps * dt; }
  void validate() const;
};

struct BoundaryConditions {
  double left_head = 1.0;
  double right_head = 0.0;
  // top/bottom are homogeneous Neumann, always.
};

/// Face conductivities: harmonic means of the two adjacent cell-center K
/// values. kx(iy, ix) sits between cells ix and ix+1; ky(iy, ix) between
/// rows iy and iy+1.
struct FaceConductivity {
  Eigen::MatrixXd kx;  // ny x (nx-1)
  Eigen::MatrixXd ky;  // (ny-1) x nx
};

FaceConductivity interface_conductivities(const kle::FieldRealization& field,
                                          const GridSpec& grid);

struct ReferenceSolution {
  GridSpec grid;
  BoundaryConditions bcs;
  std::uint64_t field_fingerprint = 0;
  /// heads[step] is ny x nx; heads[0] is the initial condition.
  std::vector<Eigen::MatrixXd> heads;

  /// Per-column max_t - min_t over the whole record (the noise amplitude
  /// field of the measurement-noise model).
  Eigen::MatrixXd head_range() const;
};

/// Backward-Euler five-point solver. The linear system over the
/// non-Dirichlet cells is SPD and solved by Jacobi-preconditioned CG to a
/// relative residual of cg_rtol (default tighter than 1e-10 so that the
/// per-step mass balance closes to 1e-8).
class ImplicitSolver {
 public:
  ImplicitSolver(const kle::FieldRealization& field, const GridSpec& grid,
                 const BoundaryConditions& bcs, double cg_rtol = 1e-12);

  /// One implicit step; heads_n must satisfy the Dirichlet columns.
  /// Throws NumericError if CG fails to converge within 10*nx*ny iterations.
  Eigen::MatrixXd step(const Eigen::MatrixXd& heads_n) const;

  const GridSpec& grid() const { return grid_; }
  const FaceConductivity& faces() const { return faces_; }

 private:
  GridSpec grid_;
  BoundaryConditions bcs_;
  FaceConductivity faces_;
  double cg_rtol_;
  Eigen::ArrayXXd diag_;  // assembled diagonal, ny x nx (interior columns)
};

/// Initial condition from the scenario: prescribed head on the first
/// column, right-boundary head on the last, zero elsewhere.
Eigen::MatrixXd initial_heads(const GridSpec& grid,
                              const BoundaryConditions& bcs);

ReferenceSolution simulate(const kle::FieldRealization& field,
                           const GridSpec& grid, const BoundaryConditions& bcs,
                           double cg_rtol = 1e-12);

void save_solution(const std::filesystem::path& path,
                   const ReferenceSolution& sol);
ReferenceSolution load_solution(const std::filesystem::path& path);
std::string serialize_solution(const ReferenceSolution& sol);
/// Flat (t, x, y, h) table for external plotting.
void export_csv(const std::filesystem::path& path,
                const ReferenceSolution& sol);

}  // namespace tgnn::fdm
