// SPDX-License-Identifier: Apache-2.0
#include "tgnn/kle_field.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace tgnn::kle {

namespace {

// Characteristic function, scaled by 1/(eta^2 w^2 + 1) so its magnitude
// stays O(1) across the whole frequency range.
double char_eqn(double w, double length, double eta) {
  const double ew = eta * w;
  return ((ew * ew - 1.0) * std::sin(w * length) -
          2.0 * eta * w * std::cos(w * length)) /
         (ew * ew + 1.0);
}

// Orthonormal 1-D eigenfunction on [0, L] and its derivative.
double norm_factor(double w, double length, double eta) {
  return std::sqrt((eta * eta * w * w + 1.0) * length / 2.0 + eta);
}

inline double eigfun(double w, double x, double eta, double norm) {
  return (eta * w * std::cos(w * x) + std::sin(w * x)) / norm;
}

inline double eigfun_deriv(double w, double x, double eta, double norm) {
  return (-eta * w * w * std::sin(w * x) + w * std::cos(w * x)) / norm;
}

}  // namespace

void CovarianceSpec::validate() const {
  if (!(length_x > 0.0) || !(length_y > 0.0))
    throw ConfigError("covariance: domain lengths must be positive");
  if (!(correlation_length > 0.0))
    throw ConfigError("covariance: correlation length must be positive");
  if (!(variance >= 0.0))
    throw ConfigError("covariance: variance must be nonnegative");
}

std::vector<EigenPair1D> solve_1d_eigenpairs(double length, double corr_len,
                                             int n) {
  if (!(length > 0.0) || !(corr_len > 0.0) || n < 1)
    throw ConfigError("solve_1d_eigenpairs: require L > 0, eta > 0, n >= 1");

  const double pi = std::numbers::pi;
  const double tol = 1e-14 * pi / length;
  std::vector<EigenPair1D> out;
  out.reserve(static_cast<std::size_t>(n));

  for (int k = 1; k <= n; ++k) {
    // One root per interval ((k-1)pi/L, k pi/L); the scaled characteristic
    // function changes sign across it. Nudge off the endpoints where it
    // vanishes or flips sign exactly at the multiples of pi/L.
    double a = (static_cast<double>(k) - 1.0) * pi / length;
    double b = static_cast<double>(k) * pi / length;
    const double nudge = (b - a) * 1e-9;
    a += nudge;
    b -= nudge;
    double fa = char_eqn(a, length, corr_len);
    double fb = char_eqn(b, length, corr_len);
    if (fa == 0.0) {
      out.push_back({2.0 * corr_len / (corr_len * corr_len * a * a + 1.0), a});
      continue;
    }
    if (fa * fb > 0.0) {
      std::ostringstream msg;
      msg << "solve_1d_eigenpairs: no sign change in interval " << k << " [("
          << k - 1 << ")pi/L, " << k << "pi/L] for L=" << length
          << ", eta=" << corr_len;
      throw NumericError(msg.str());
    }
    // Bisection: guaranteed convergence, cost irrelevant at n <= 100;
    // terminates at the requested width or at machine resolution.
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (a + b);
      if (mid <= a || mid >= b || (b - a) < tol) break;
      const double fm = char_eqn(mid, length, corr_len);
      if (fm == 0.0) {
        a = b = mid;
        break;
      }
      if (fa * fm < 0.0) {
        b = mid;
      } else {
        a = mid;
        fa = fm;
      }
    }
    const double w = 0.5 * (a + b);
    out.push_back({2.0 * corr_len / (corr_len * corr_len * w * w + 1.0), w});
  }
  return out;
}

KLEBasis build_2d_basis(const CovarianceSpec& cov,
                        const std::vector<EigenPair1D>& pairs_x,
                        const std::vector<EigenPair1D>& pairs_y, int n_terms) {
  cov.validate();
  if (n_terms < 1) throw ConfigError("build_2d_basis: n_terms must be >= 1");
  const auto nx = static_cast<int>(pairs_x.size());
  const auto ny = static_cast<int>(pairs_y.size());
  if (static_cast<long long>(nx) * ny < n_terms)
    throw ConfigError("build_2d_basis: not enough 1-D pairs for n_terms");

  std::vector<Mode2D> all;
  all.reserve(static_cast<std::size_t>(nx) * ny);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      all.push_back({cov.variance * pairs_x[i].lambda * pairs_y[j].lambda,
                     i + 1, j + 1, pairs_x[i].w, pairs_y[j].w});

  std::sort(all.begin(), all.end(), [](const Mode2D& a, const Mode2D& b) {
    if (a.lambda != b.lambda) return a.lambda > b.lambda;
    if (a.m != b.m) return a.m < b.m;
    return a.n < b.n;
  });
  all.resize(static_cast<std::size_t>(n_terms));

  KLEBasis basis;
  basis.cov = cov;
  basis.modes = std::move(all);
  return basis;
}

KLEBasis build_2d_basis(const CovarianceSpec& cov, int n_terms) {
  const int n1d = std::max(30, n_terms);
  const auto px = solve_1d_eigenpairs(cov.length_x, cov.correlation_length, n1d);
  const auto py = solve_1d_eigenpairs(cov.length_y, cov.correlation_length, n1d);
  return build_2d_basis(cov, px, py, n_terms);
}

double KLEBasis::retained_energy_ratio() const {
  const double total = cov.variance * cov.length_x * cov.length_y;
  if (total == 0.0) return 0.0;
  double sum = 0.0;
  for (const auto& m : modes) sum += m.lambda;
  return sum / total;
}

Eigen::VectorXd sample_xi(std::uint64_t seed, int n_terms) {
  if (n_terms < 1) throw ConfigError("sample_xi: n_terms must be >= 1");
  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd xi(n_terms);
  for (int i = 0; i < n_terms; ++i) xi[i] = gauss(rng);
  return xi;
}

FieldRealization::FieldRealization(KLEBasis basis, Eigen::VectorXd xi,
                                   std::uint64_t seed)
    : basis_(std::move(basis)), xi_(std::move(xi)), seed_(seed) {
  if (xi_.size() != basis_.n_terms())
    throw ConfigError("FieldRealization: xi length must equal n_terms");
}

LogKEval FieldRealization::eval_logK(double x, double y) const {
  const auto& cov = basis_.cov;
  if (x < 0.0 || x > cov.length_x || y < 0.0 || y > cov.length_y) {
    std::ostringstream msg;
    msg << "eval_logK: point (" << x << ", " << y << ") outside domain [0, "
        << cov.length_x << "] x [0, " << cov.length_y << "]";
    throw std::out_of_range(msg.str());
  }
  const double eta = cov.correlation_length;
  double z = cov.mean_log_k, zx = 0.0, zy = 0.0;
  for (int i = 0; i < basis_.n_terms(); ++i) {
    const auto& m = basis_.modes[static_cast<std::size_t>(i)];
    const double nx = norm_factor(m.w_m, cov.length_x, eta);
    const double ny = norm_factor(m.w_n, cov.length_y, eta);
    const double fx = eigfun(m.w_m, x, eta, nx);
    const double fy = eigfun(m.w_n, y, eta, ny);
    const double amp = std::sqrt(m.lambda) * xi_[i];
    z += amp * fx * fy;
    zx += amp * eigfun_deriv(m.w_m, x, eta, nx) * fy;
    zy += amp * fx * eigfun_deriv(m.w_n, y, eta, ny);
  }
  return {z, zx, zy};
}

double FieldRealization::k(double x, double y) const {
  return std::exp(eval_logK(x, y).z);
}

std::uint64_t FieldRealization::fingerprint() const {
  const std::string s = serialize_field(*this);
  return fnv1a(s.data(), s.size());
}

FieldRealization generate_field(const CovarianceSpec& cov, int n_terms,
                                std::uint64_t seed) {
  KLEBasis basis = build_2d_basis(cov, n_terms);
  return FieldRealization(std::move(basis), sample_xi(seed, n_terms), seed);
}

std::string serialize_field(const FieldRealization& f) {
  const auto& b = f.basis();
  std::ostringstream out;
  out << "tgnn-field 1\n";
  out << "length_x " << format_double(b.cov.length_x) << "\n";
  out << "length_y " << format_double(b.cov.length_y) << "\n";
  out << "correlation_length " << format_double(b.cov.correlation_length)
      << "\n";
  out << "variance " << format_double(b.cov.variance) << "\n";
  out << "mean_log_k " << format_double(b.cov.mean_log_k) << "\n";
  out << "n_terms " << b.n_terms() << "\n";
  out << "seed " << f.seed() << "\n";
  for (int i = 0; i < b.n_terms(); ++i) {
    const auto& m = b.modes[static_cast<std::size_t>(i)];
    out << format_double(m.lambda) << " " << m.m << " " << m.n << " "
        << format_double(m.w_m) << " " << format_double(m.w_n) << " "
        << format_double(f.xi()[i]) << "\n";
  }
  return out.str();
}

void save_field(const std::filesystem::path& path, const FieldRealization& f) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write field file: " + path.string());
  out << serialize_field(f);
}

FieldRealization load_field(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open field file: " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "tgnn-field" || version != 1)
    throw ConfigError("field file: bad header in " + path.string());

  CovarianceSpec cov;
  int n_terms = 0;
  std::uint64_t seed = 0;
  for (int i = 0; i < 7; ++i) {
    std::string key;
    in >> key;
    if (key == "length_x") in >> cov.length_x;
    else if (key == "length_y") in >> cov.length_y;
    else if (key == "correlation_length") in >> cov.correlation_length;
    else if (key == "variance") in >> cov.variance;
    else if (key == "mean_log_k") in >> cov.mean_log_k;
    else if (key == "n_terms") in >> n_terms;
    else if (key == "seed") in >> seed;
    else throw ConfigError("field file: unknown header key '" + key + "'");
  }
  if (!in || n_terms < 1)
    throw ConfigError("field file: malformed header in " + path.string());

  KLEBasis basis;
  basis.cov = cov;
  Eigen::VectorXd xi(n_terms);
  for (int i = 0; i < n_terms; ++i) {
    Mode2D m{};
    in >> m.lambda >> m.m >> m.n >> m.w_m >> m.w_n >> xi[i];
    if (!in)
      throw ConfigError("field file: truncated mode table in " + path.string());
    basis.modes.push_back(m);
  }
  return FieldRealization(std::move(basis), std::move(xi), seed);
}

}  // namespace tgnn::kle
