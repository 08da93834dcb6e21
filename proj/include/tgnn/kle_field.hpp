// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "tgnn/common.hpp"

namespace tgnn::kle {

/// Separable exponential covariance
///   C(x1,y1; x2,y2) = sigma2 * exp(-|x1-x2|/eta - |y1-y2|/eta)
/// on the rectangle [0, length_x] x [0, length_y].
struct CovarianceSpec {
  double length_x = 1020.0;
  double length_y = 1020.0;
  double correlation_length = 408.0;  // eta, same in both directions
  double variance = 1.0;              // sigma_K^2 of ln K
  double mean_log_k = 0.0;            // <ln K>

  void validate() const;
};

/// One root of the 1-D characteristic equation
///   (eta^2 w^2 - 1) sin(wL) = 2 eta w cos(wL)
/// with unit-variance eigenvalue lambda = 2 eta / (eta^2 w^2 + 1).
struct EigenPair1D {
  double lambda;
  double w;
};

/// Solves the n smallest-frequency eigenpairs; root k is bracketed in
/// ((k-1)pi/L, k pi/L) and refined by bisection. The lambda sequence is
/// strictly decreasing because lambda(w) decreases in w.
std::vector<EigenPair1D> solve_1d_eigenpairs(double length, double corr_len,
                                             int n);

/// One retained tensor-product mode. m, n are the 1-based 1-D mode indices
/// in x and y; lambda already carries the sigma2 factor.
struct Mode2D {
  double lambda;
  int m, n;
  double w_m, w_n;
};

struct KLEBasis {
  CovarianceSpec cov;
  std::vector<Mode2D> modes;  // sorted by descending lambda, ties by (m,n)

  int n_terms() const { return static_cast<int>(modes.size()); }
  /// Sum of retained eigenvalues over sigma2 * Lx * Ly (the full trace).
  double retained_energy_ratio() const;
};

/// Builds the 2-D basis from precomputed 1-D pairs. lambda_ij =
/// sigma2 * lambda_i * lambda_j; since each unit-variance 1-D family sums
/// to its domain length, the full product family sums to sigma2*Lx*Ly.
KLEBasis build_2d_basis(const CovarianceSpec& cov,
                        const std::vector<EigenPair1D>& pairs_x,
                        const std::vector<EigenPair1D>& pairs_y, int n_terms);

/// Convenience overload solving max(30, n_terms) pairs per direction.
KLEBasis build_2d_basis(const CovarianceSpec& cov, int n_terms);

/// n_terms independent standard-normal draws; same seed, same vector.
Eigen::VectorXd sample_xi(std::uint64_t seed, int n_terms);

struct LogKEval {
  double z;      // ln K
  double dz_dx;
  double dz_dy;
};

/// A log-conductivity field Z(x,y) = mean + sum_i sqrt(lambda_i) f_i(x,y) xi_i.
/// Immutable after construction; evaluation is thread-safe.
class FieldRealization {
 public:
  FieldRealization(KLEBasis basis, Eigen::VectorXd xi, std::uint64_t seed = 0);

  /// Z and its analytic spatial gradient at (x,y); throws std::out_of_range
  /// outside the closed domain.
  LogKEval eval_logK(double x, double y) const;

  /// K = exp(Z).
  double k(double x, double y) const;

  const KLEBasis& basis() const { return basis_; }
  const Eigen::VectorXd& xi() const { return xi_; }
  std::uint64_t seed() const { return seed_; }

  /// FNV-1a over the serialized representation; stable on a given build.
  std::uint64_t fingerprint() const;

 private:
  KLEBasis basis_;
  Eigen::VectorXd xi_;
  std::uint64_t seed_;
};

/// Full pipeline: solve 1-D pairs, build the basis, draw xi from the seed.
FieldRealization generate_field(const CovarianceSpec& cov, int n_terms,
                                std::uint64_t seed);

/// Versioned text format, 17-significant-digit decimals, bit-exact
/// round trip.
void save_field(const std::filesystem::path& path, const FieldRealization& f);
FieldRealization load_field(const std::filesystem::path& path);
std::string serialize_field(const FieldRealization& f);

}  // namespace tgnn::kle
