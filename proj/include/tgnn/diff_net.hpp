// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "tgnn/common.hpp"

namespace tgnn::net {

enum class Activation { Tanh };

/// Dense feed-forward approximator N(t,x,y). Inputs are normalized to
/// [0,1] by the per-input scales; all reported derivatives are with
/// respect to the raw inputs (the chain factors are seeded at the input
/// layer). The activation must be three times differentiable: the reverse
/// pass through the pure second-derivative channels needs phi'''.
struct Architecture {
  int n_hidden = 4;
  int width = 50;
  Activation activation = Activation::Tanh;
  std::array<double, 3> input_scale{10.0, 1020.0, 1020.0};  // t, x, y divisors

  int n_layers() const { return n_hidden + 1; }
  int layer_in(int l) const { return l == 0 ? 3 : width; }
  int layer_out(int l) const { return l == n_hidden ? 1 : width; }
  void validate() const;
  bool operator==(const Architecture&) const = default;
};

/// Weights and biases, 64-bit floats. Flat-index accessors expose the
/// parameters as one vector in layer order (W0 row-major, b0, W1, ...).
struct NetworkParams {
  Architecture arch;
  std::uint64_t init_seed = 0;
  std::vector<Eigen::MatrixXd> weights;  // layer_out x layer_in
  std::vector<Eigen::VectorXd> biases;

  std::size_t n_scalars() const;
  double get_scalar(std::size_t i) const;
  void add_scalar(std::size_t i, double delta);
  bool all_finite() const;
};

/// Glorot-uniform weights, zero biases, reproducible from the seed.
NetworkParams init_params(const Architecture& arch, std::uint64_t seed);

/// Parameter-shaped accumulator (gradients, Adam moments).
struct Gradient {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  explicit Gradient(const Architecture& arch);
  Gradient() = default;
  void set_zero();
  void axpy(double a, const Gradient& other);  // *this += a * other
  double get_scalar(std::size_t i) const;
  std::size_t n_scalars() const;
  bool all_finite() const;
  double dot(const Gradient& other) const;
};

/// Value and raw-unit input derivatives at one point. Mixed second
/// derivatives are out of contract and not produced.
struct EvalBundle {
  double value = 0.0;
  double dt = 0.0, dx = 0.0, dy = 0.0;
  double dxx = 0.0, dyy = 0.0;
};

/// Which derivative channels a batch evaluation propagates. Second-order
/// channels imply the matching first-order channel.
struct Channels {
  bool d_t = false, d_x = false, d_y = false;
  bool d_xx = false, d_yy = false;

  static Channels value_only() { return {}; }
  static Channels full() { return {true, true, true, true, true}; }
  int count() const;
};

/// Batched outputs; each enabled row vector has one entry per point.
struct BundleBatch {
  Channels channels;
  Eigen::RowVectorXd value, dt, dx, dy, dxx, dyy;

  void resize(Channels c, Eigen::Index n);
  void set_zero();
};

/// Forward/reverse engine for batches of points. forward() propagates the
/// value and the enabled tangent channels through every layer and keeps
/// the trace; backward() reverse-accumulates a cotangent on the outputs
/// into a parameter gradient. One instance is not thread-safe; use one
/// evaluator per thread. Fixed evaluation order makes results independent
/// of how callers partition points into batches only up to floating-point
/// summation order, so callers that need reproducibility must keep their
/// partitioning fixed.
class BatchEvaluator {
 public:
  explicit BatchEvaluator(const Architecture& arch);

  /// points: 3 x n (rows t, x, y in raw units).
  const BundleBatch& forward(const NetworkParams& params,
                             const Eigen::Matrix3Xd& points, Channels ch);

  /// cotangent must match the channels of the last forward() call.
  void backward(const NetworkParams& params, const BundleBatch& cotangent,
                Gradient& accum);

  const BundleBatch& last() const { return out_; }

 private:
  Architecture arch_;
  Channels ch_;
  Eigen::Index n_ = 0;
  // Per layer: post-activation channels (acts_) and pre-activation tangent
  // channels (pre_), both width x (n_channels * n) with channel-major slices.
  std::vector<Eigen::MatrixXd> acts_;
  std::vector<Eigen::MatrixXd> pre_;
  Eigen::MatrixXd bar_, bar_prev_, zbar_;
  Eigen::MatrixXd phi1_, phi2_, phi3_;  // activation derivative buffers
  BundleBatch out_;
  std::vector<int> slot_;  // slice offsets: value, t, x, y, xx, yy or -1
  int n_slices_ = 1;
};

/// Single-point evaluation with every derivative channel.
EvalBundle forward_with_derivs(const NetworkParams& params, double t, double x,
                               double y);

/// Reverse-accumulated gradient of a scalar built from bundle evaluations.
/// The callback receives the batch bundles and must return the scalar's
/// value while filling the cotangent (d scalar / d bundle entry); the
/// engine handles all flow through the network, including through the
/// second-derivative outputs. Throws NumericError on a non-finite loss.
double param_grad(const NetworkParams& params, const Eigen::Matrix3Xd& points,
                  Channels ch,
                  const std::function<double(const BundleBatch&, BundleBatch&)>& loss,
                  Gradient& grad);

/// Checkpoint: versioned decimal-text layout, bit-exact round trip.
void save_checkpoint(const std::filesystem::path& path,
                     const NetworkParams& params, std::int64_t iteration);
NetworkParams load_checkpoint(const std::filesystem::path& path,
                              std::int64_t* iteration = nullptr);

}  // namespace tgnn::net
