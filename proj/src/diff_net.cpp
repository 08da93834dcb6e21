// SPDX-License-Identifier: Apache-2.0
#include "tgnn/diff_net.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace tgnn::net {

namespace {
constexpr int kValue = 0, kT = 1, kX = 2, kY = 3, kXX = 4, kYY = 5;
}

void Architecture::validate() const {
  if (n_hidden < 0) throw ConfigError("architecture: n_hidden must be >= 0");
  if (n_hidden > 0 && width < 1)
    throw ConfigError("architecture: width must be >= 1");
  for (double s : input_scale)
    if (!(s > 0.0)) throw ConfigError("architecture: input scales must be > 0");
}

int Channels::count() const {
  return 1 + (d_t ? 1 : 0) + (d_x ? 1 : 0) + (d_y ? 1 : 0) + (d_xx ? 1 : 0) +
         (d_yy ? 1 : 0);
}

std::size_t NetworkParams::n_scalars() const {
  std::size_t n = 0;
  for (int l = 0; l < arch.n_layers(); ++l)
    n += static_cast<std::size_t>(arch.layer_out(l)) *
             static_cast<std::size_t>(arch.layer_in(l)) +
         static_cast<std::size_t>(arch.layer_out(l));
  return n;
}

namespace {
// Maps a flat parameter index to (layer, row, col) with col == -1 for a
// bias entry. Layout: W0 row-major, b0, W1, b1, ...
template <typename W, typename B>
double* locate(const Architecture& arch, std::vector<W>& weights,
               std::vector<B>& biases, std::size_t i) {
  for (int l = 0; l < arch.n_layers(); ++l) {
    const std::size_t nw = static_cast<std::size_t>(arch.layer_out(l)) *
                           static_cast<std::size_t>(arch.layer_in(l));
    if (i < nw) {
      const auto r = static_cast<Eigen::Index>(i / arch.layer_in(l));
      const auto c = static_cast<Eigen::Index>(i % arch.layer_in(l));
      return &weights[static_cast<std::size_t>(l)](r, c);
    }
    i -= nw;
    const auto nb = static_cast<std::size_t>(arch.layer_out(l));
    if (i < nb) return &biases[static_cast<std::size_t>(l)](static_cast<Eigen::Index>(i));
    i -= nb;
  }
  throw std::out_of_range("parameter index out of range");
}
}  // namespace

double NetworkParams::get_scalar(std::size_t i) const {
  auto& self = const_cast<NetworkParams&>(*this);
  return *locate(arch, self.weights, self.biases, i);
}

void NetworkParams::add_scalar(std::size_t i, double delta) {
  *locate(arch, weights, biases, i) += delta;
}

bool NetworkParams::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

NetworkParams init_params(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  NetworkParams p;
  p.arch = arch;
  p.init_seed = seed;
  auto rng = make_rng(seed);
  for (int l = 0; l < arch.n_layers(); ++l) {
    const int fan_in = arch.layer_in(l), fan_out = arch.layer_out(l);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> uni(-bound, bound);
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) w(r, c) = uni(rng);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(Eigen::VectorXd::Zero(fan_out));
  }
  return p;
}

Gradient::Gradient(const Architecture& arch) {
  for (int l = 0; l < arch.n_layers(); ++l) {
    weights.emplace_back(
        Eigen::MatrixXd::Zero(arch.layer_out(l), arch.layer_in(l)));
    biases.emplace_back(Eigen::VectorXd::Zero(arch.layer_out(l)));
  }
}

void Gradient::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

void Gradient::axpy(double a, const Gradient& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += a * other.weights[l];
    biases[l] += a * other.biases[l];
  }
}

double Gradient::dot(const Gradient& other) const {
  double s = 0.0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    s += (weights[l].array() * other.weights[l].array()).sum();
    s += (biases[l].array() * other.biases[l].array()).sum();
  }
  return s;
}

std::size_t Gradient::n_scalars() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    n += static_cast<std::size_t>(weights[l].size()) +
         static_cast<std::size_t>(biases[l].size());
  return n;
}

double Gradient::get_scalar(std::size_t i) const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const auto nw = static_cast<std::size_t>(weights[l].size());
    if (i < nw) {
      const auto cols = static_cast<std::size_t>(weights[l].cols());
      return weights[l](static_cast<Eigen::Index>(i / cols),
                        static_cast<Eigen::Index>(i % cols));
    }
    i -= nw;
    const auto nb = static_cast<std::size_t>(biases[l].size());
    if (i < nb) return biases[l](static_cast<Eigen::Index>(i));
    i -= nb;
  }
  throw std::out_of_range("gradient index out of range");
}

bool Gradient::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

void BundleBatch::resize(Channels c, Eigen::Index n) {
  channels = c;
  value.resize(n);
  dt.resize(c.d_t ? n : 0);
  dx.resize(c.d_x ? n : 0);
  dy.resize(c.d_y ? n : 0);
  dxx.resize(c.d_xx ? n : 0);
  dyy.resize(c.d_yy ? n : 0);
}

void BundleBatch::set_zero() {
  value.setZero();
  dt.setZero();
  dx.setZero();
  dy.setZero();
  dxx.setZero();
  dyy.setZero();
}

namespace {
// Grow-only resize: keeps capacity across channel-configuration switches
// so no reallocation happens after the first full-size pass.
void ensure(Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() != rows || m.cols() < cols) m.resize(rows, cols);
}
}  // namespace

BatchEvaluator::BatchEvaluator(const Architecture& arch) : arch_(arch) {
  arch.validate();
  acts_.resize(static_cast<std::size_t>(arch.n_layers()) + 1);
  pre_.resize(static_cast<std::size_t>(arch.n_layers()));
}

const BundleBatch& BatchEvaluator::forward(const NetworkParams& params,
                                           const Eigen::Matrix3Xd& points,
                                           Channels ch) {
  // Second-order channels ride on the matching first-order channel.
  if (ch.d_xx) ch.d_x = true;
  if (ch.d_yy) ch.d_y = true;
  ch_ = ch;
  n_ = points.cols();
  const Eigen::Index n = n_;

  slot_.assign(6, -1);
  slot_[kValue] = 0;
  int s = 1;
  if (ch.d_t) slot_[kT] = s++;
  if (ch.d_x) slot_[kX] = s++;
  if (ch.d_y) slot_[kY] = s++;
  if (ch.d_xx) slot_[kXX] = s++;
  if (ch.d_yy) slot_[kYY] = s++;
  n_slices_ = s;
  const Eigen::Index total = static_cast<Eigen::Index>(n_slices_) * n;

  // Input layer: value slice holds normalized coordinates, first-order
  // slices hold the constant chain factors d(normalized)/d(raw), so every
  // downstream derivative comes out in raw units.
  Eigen::MatrixXd& in = acts_[0];
  ensure(in, 3, total);
  in.leftCols(total).setZero();
  for (int r = 0; r < 3; ++r)
    in.row(r).segment(0, n) =
        points.row(r) / arch_.input_scale[static_cast<std::size_t>(r)];
  if (ch.d_t)
    in.row(0).segment(slot_[kT] * n, n).setConstant(1.0 / arch_.input_scale[0]);
  if (ch.d_x)
    in.row(1).segment(slot_[kX] * n, n).setConstant(1.0 / arch_.input_scale[1]);
  if (ch.d_y)
    in.row(2).segment(slot_[kY] * n, n).setConstant(1.0 / arch_.input_scale[2]);

  for (int l = 0; l < arch_.n_layers(); ++l) {
    const auto lu = static_cast<std::size_t>(l);
    Eigen::MatrixXd& z = pre_[lu];
    ensure(z, arch_.layer_out(l), total);
    z.leftCols(total).noalias() =
        params.weights[lu] * acts_[lu].leftCols(total);
    z.middleCols(0, n).colwise() += params.biases[lu];

    Eigen::MatrixXd& a = acts_[lu + 1];
    ensure(a, arch_.layer_out(l), total);
    if (l == arch_.n_layers() - 1) {
      a.leftCols(total) = z.leftCols(total);  // linear output layer
      continue;
    }
    auto av = a.middleCols(0, n);
    // tanh through the vectorized exp kernel; the library tanh takes a
    // scalar path for doubles and dominates the epoch time otherwise.
    av = (2.0 / (1.0 + (-2.0 * z.middleCols(0, n).array()).exp()) - 1.0)
             .matrix();
    ensure(phi1_, a.rows(), n);
    auto phi1 = phi1_.leftCols(n).array();
    phi1 = 1.0 - av.array().square();
    for (int c : {kT, kX, kY})
      if (slot_[c] >= 0)
        a.middleCols(slot_[c] * n, n) =
            (phi1 * z.middleCols(slot_[c] * n, n).array()).matrix();
    // phi'' = -2 a phi'; h = phi''*(zg)^2 + phi'*zh
    if (slot_[kXX] >= 0 || slot_[kYY] >= 0) {
      ensure(phi2_, a.rows(), n);
      auto phi2 = phi2_.leftCols(n).array();
      phi2 = -2.0 * av.array() * phi1;
      for (auto [c2, c1] : {std::pair{kXX, kX}, std::pair{kYY, kY}})
        if (slot_[c2] >= 0)
          a.middleCols(slot_[c2] * n, n) =
              (phi2 * z.middleCols(slot_[c1] * n, n).array().square() +
               phi1 * z.middleCols(slot_[c2] * n, n).array())
                  .matrix();
    }
  }

  const Eigen::MatrixXd& last =
      acts_[static_cast<std::size_t>(arch_.n_layers())];
  out_.resize(ch_, n);
  out_.value = last.middleCols(0, n).row(0);
  if (ch_.d_t) out_.dt = last.middleCols(slot_[kT] * n, n).row(0);
  if (ch_.d_x) out_.dx = last.middleCols(slot_[kX] * n, n).row(0);
  if (ch_.d_y) out_.dy = last.middleCols(slot_[kY] * n, n).row(0);
  if (ch_.d_xx) out_.dxx = last.middleCols(slot_[kXX] * n, n).row(0);
  if (ch_.d_yy) out_.dyy = last.middleCols(slot_[kYY] * n, n).row(0);
  return out_;
}

void BatchEvaluator::backward(const NetworkParams& params,
                              const BundleBatch& cotangent, Gradient& accum) {
  const Eigen::Index n = n_;
  const int L = arch_.n_layers();
  const Eigen::Index total = static_cast<Eigen::Index>(n_slices_) * n;

  // Cotangent on the output row, one slice per channel.
  ensure(bar_, 1, total);
  bar_.leftCols(total).setZero();
  bar_.middleCols(0, n).row(0) = cotangent.value;
  if (ch_.d_t) bar_.middleCols(slot_[kT] * n, n).row(0) = cotangent.dt;
  if (ch_.d_x) bar_.middleCols(slot_[kX] * n, n).row(0) = cotangent.dx;
  if (ch_.d_y) bar_.middleCols(slot_[kY] * n, n).row(0) = cotangent.dy;
  if (ch_.d_xx) bar_.middleCols(slot_[kXX] * n, n).row(0) = cotangent.dxx;
  if (ch_.d_yy) bar_.middleCols(slot_[kYY] * n, n).row(0) = cotangent.dyy;

  for (int l = L - 1; l >= 0; --l) {
    const auto lu = static_cast<std::size_t>(l);
    const Eigen::Index rows = arch_.layer_out(l);
    // bar_ arrives as the cotangent of this layer's post-activation
    // channels; convert to the pre-activation cotangent.
    if (l < L - 1) {
      const auto av = acts_[lu + 1].middleCols(0, n);
      ensure(phi1_, rows, n);
      ensure(phi2_, rows, n);
      auto phi1 = phi1_.leftCols(n).array();
      auto phi2 = phi2_.leftCols(n).array();
      phi1 = 1.0 - av.array().square();
      phi2 = -2.0 * av.array() * phi1;
      ensure(zbar_, rows, total);

      auto zb_val = zbar_.middleCols(0, n);
      zb_val = (phi1 * bar_.middleCols(0, n).array()).matrix();
      for (int c : {kT, kX, kY}) {
        if (slot_[c] < 0) continue;
        const auto zg = pre_[lu].middleCols(slot_[c] * n, n).array();
        const auto gbar = bar_.middleCols(slot_[c] * n, n).array();
        zb_val += (phi2 * zg * gbar).matrix();
        zbar_.middleCols(slot_[c] * n, n) = (phi1 * gbar).matrix();
      }
      if (slot_[kXX] >= 0 || slot_[kYY] >= 0) {
        ensure(phi3_, rows, n);
        auto phi3 = phi3_.leftCols(n).array();
        phi3 = -2.0 * phi1 * (1.0 - 3.0 * av.array().square());
        for (auto [c2, c1] : {std::pair{kXX, kX}, std::pair{kYY, kY}}) {
          if (slot_[c2] < 0) continue;
          const auto zg = pre_[lu].middleCols(slot_[c1] * n, n).array();
          const auto zh = pre_[lu].middleCols(slot_[c2] * n, n).array();
          const auto hbar = bar_.middleCols(slot_[c2] * n, n).array();
          zb_val += ((phi3 * zg.square() + phi2 * zh) * hbar).matrix();
          zbar_.middleCols(slot_[c1] * n, n) +=
              (2.0 * phi2 * zg * hbar).matrix();
          zbar_.middleCols(slot_[c2] * n, n) = (phi1 * hbar).matrix();
        }
      }
      bar_.swap(zbar_);
    }

    accum.weights[lu].noalias() +=
        bar_.leftCols(total) * acts_[lu].leftCols(total).transpose();
    accum.biases[lu] += bar_.middleCols(0, n).rowwise().sum();
    if (l > 0) {
      ensure(bar_prev_, arch_.layer_in(l), total);
      bar_prev_.leftCols(total).noalias() =
          params.weights[lu].transpose() * bar_.leftCols(total);
      bar_.swap(bar_prev_);
    }
  }
}

EvalBundle forward_with_derivs(const NetworkParams& params, double t, double x,
                               double y) {
  BatchEvaluator ev(params.arch);
  Eigen::Matrix3Xd pts(3, 1);
  pts << t, x, y;
  const BundleBatch& b = ev.forward(params, pts, Channels::full());
  return {b.value[0], b.dt[0], b.dx[0], b.dy[0], b.dxx[0], b.dyy[0]};
}

double param_grad(const NetworkParams& params, const Eigen::Matrix3Xd& points,
                  Channels ch,
                  const std::function<double(const BundleBatch&, BundleBatch&)>& loss,
                  Gradient& grad) {
  BatchEvaluator ev(params.arch);
  const BundleBatch& out = ev.forward(params, points, ch);
  BundleBatch cot;
  cot.resize(out.channels, points.cols());
  cot.set_zero();
  const double value = loss(out, cot);
  if (!std::isfinite(value))
    throw NumericError("param_grad: loss evaluated to a non-finite value");
  ev.backward(params, cot, grad);
  return value;
}

void save_checkpoint(const std::filesystem::path& path,
                     const NetworkParams& params, std::int64_t iteration) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint: " + path.string());
  out << "tgnn-checkpoint 1\n";
  out << "n_hidden " << params.arch.n_hidden << " width " << params.arch.width
      << " activation tanh\n";
  out << "input_scale " << format_double(params.arch.input_scale[0]) << " "
      << format_double(params.arch.input_scale[1]) << " "
      << format_double(params.arch.input_scale[2]) << "\n";
  out << "seed " << params.init_seed << " iteration " << iteration << "\n";
  for (int l = 0; l < params.arch.n_layers(); ++l) {
    const auto& w = params.weights[static_cast<std::size_t>(l)];
    const auto& b = params.biases[static_cast<std::size_t>(l)];
    out << "layer " << l << " " << w.rows() << " " << w.cols() << "\n";
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        out << (c ? " " : "") << format_double(w(r, c));
      out << "\n";
    }
    for (Eigen::Index r = 0; r < b.size(); ++r)
      out << (r ? " " : "") << format_double(b[r]);
    out << "\n";
  }
}

NetworkParams load_checkpoint(const std::filesystem::path& path,
                              std::int64_t* iteration) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint: " + path.string());
  std::string magic, key, act;
  int version = 0;
  in >> magic >> version;
  if (magic != "tgnn-checkpoint" || version != 1)
    throw ConfigError("checkpoint: bad header in " + path.string());
  NetworkParams p;
  std::int64_t iter = 0;
  in >> key >> p.arch.n_hidden >> key >> p.arch.width >> key >> act;
  in >> key >> p.arch.input_scale[0] >> p.arch.input_scale[1] >>
      p.arch.input_scale[2];
  in >> key >> p.init_seed >> key >> iter;
  if (!in || act != "tanh")
    throw ConfigError("checkpoint: malformed header in " + path.string());
  for (int l = 0; l < p.arch.n_layers(); ++l) {
    int lid = 0;
    Eigen::Index rows = 0, cols = 0;
    in >> key >> lid >> rows >> cols;
    if (!in || key != "layer" || lid != l ||
        rows != p.arch.layer_out(l) || cols != p.arch.layer_in(l))
      throw ConfigError("checkpoint: bad layer record in " + path.string());
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) in >> w(r, c);
    Eigen::VectorXd b(rows);
    for (Eigen::Index r = 0; r < rows; ++r) in >> b[r];
    if (!in) throw ConfigError("checkpoint: truncated in " + path.string());
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  if (iteration) *iteration = iter;
  return p;
}

}  // namespace tgnn::net
