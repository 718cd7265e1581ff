// Copyright 2026 The PredProp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Network data model: layer stack, backward predictors, per-layer precision
// state, construction, clamping and activity initialization.
//
// Layer convention used throughout: layers are numbered 0 (data) to L
// (causes). predictors[l] maps layer l+1 activities to a prediction of
// layer l, so prediction flows downward (deep to shallow) and errors flow
// upward. The deepest layer carries a Gaussian prior (mean + precision);
// its precision is the layer-L precision state.

#ifndef PREDPROP_NETWORK_HPP_
#define PREDPROP_NETWORK_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "predprop/linalg.hpp"

namespace predprop {

// Eigenvalue clamps maintained on every precision matrix after every
// mutation. Precision dynamics can otherwise drive eigenvalues negative or
// unbounded.
inline constexpr double kLambdaMin = 1e-6;
inline constexpr double kLambdaMax = 1e6;

// Default stddev of the Gaussian noise added to activities in prior-mode
// initialization; breaks ReLU dead-zone symmetry.
inline constexpr double kDefaultSigmaInit = 0.01;

enum class Activation { kLinear, kRelu, kTanh };

Activation activation_from_string(const std::string& s);
std::string activation_to_string(Activation a);

double apply_activation(Activation a, double x);
double activation_derivative(Activation a, double pre);  // ReLU subgradient at 0 is 0.

enum class PrecisionMode { kFull, kDiagonal };

PrecisionMode precision_mode_from_string(const std::string& s);
std::string precision_mode_to_string(PrecisionMode m);

struct SublayerSpec {
  int output_dim = 0;
  Activation activation = Activation::kLinear;
};

struct PriorSpec {
  Vector mean;       // dim d_L; empty means "zeros" until resolved at build time
  Matrix precision;  // SPD d_L x d_L; empty means "identity"

  bool empty() const { return mean.size() == 0 && precision.size() == 0; }
};

struct NetworkSpec {
  std::vector<int> layer_dims;  // [d_0 ... d_L], all >= 1, L >= 1
  // One entry per gap (l, l+1); each entry is the ordered sublayer chain of
  // the backward predictor. sublayers[0] is the output side (produces the
  // layer-l prediction), sublayers.back() consumes layer l+1 activities.
  std::vector<std::vector<SublayerSpec>> predictor_specs;
  PrecisionMode precision_mode = PrecisionMode::kFull;
  PriorSpec prior;
  std::uint64_t seed = 0;
  bool use_bias = false;

  int depth() const { return static_cast<int>(layer_dims.size()) - 1; }
  void validate() const;  // throws ConfigError / DimensionError
};

/// Spec for a dense stack with one sublayer per gap: predictions of hidden
/// layers use `hidden`, the prediction of the data layer uses `output`.
NetworkSpec make_dense_spec(const std::vector<int>& layer_dims,
                            Activation hidden = Activation::kRelu,
                            Activation output = Activation::kLinear);

/// Symmetric positive definite matrix with eigenvalues kept in
/// [kLambdaMin, kLambdaMax]. In diagonal mode only the diagonal is stored
/// and every operation specializes to it.
class Precision {
 public:
  Precision() = default;

  static Precision identity(int dim, PrecisionMode mode);
  /// Adopts `m` after SPD projection (symmetrize + eigenvalue clamp; in
  /// diagonal mode the off-diagonal entries are discarded).
  static Precision projected(const Matrix& m, PrecisionMode mode,
                             double lambda_min = kLambdaMin,
                             double lambda_max = kLambdaMax);
  /// Adopts `m` as-is (symmetrized, no eigenvalue clamp, no SPD check).
  /// Use sites that need an invalid precision to be rejected rely on
  /// log_det() throwing. Normal construction paths use projected().
  static Precision from_dense_unchecked(const Matrix& m, PrecisionMode mode);

  int dim() const { return mode_ == PrecisionMode::kFull ? static_cast<int>(dense_.rows())
                                                         : static_cast<int>(diag_.size()); }
  PrecisionMode mode() const { return mode_; }

  Matrix dense() const;

  /// Row-wise weighting: row b of the result is (Pi eps_b)^T.
  Matrix weighted(const Matrix& eps) const;

  /// Per-row quadratic form eps_b^T Pi eps_b.
  Vector quad_form(const Matrix& eps) const;

  /// ln det Pi. Throws NumericalError when the matrix is not positive
  /// definite.
  double log_det() const;

  /// Sigma = Pi^{-1}, materialized dense.
  Matrix covariance_dense() const;

  double max_eigenvalue() const;
  double min_eigenvalue() const;

  /// Pi <- project_spd(Pi + alpha * delta). `delta` is dense; in diagonal
  /// mode only its diagonal is used.
  void apply_update(const Matrix& delta, double alpha,
                    double lambda_min = kLambdaMin, double lambda_max = kLambdaMax);

  bool operator==(const Precision& other) const;

 private:
  PrecisionMode mode_ = PrecisionMode::kFull;
  Matrix dense_;  // used iff mode_ == kFull
  Vector diag_;   // used iff mode_ == kDiagonal
};

struct Sublayer {
  Matrix weights;  // out x in
  Vector bias;     // size out, present iff has_bias
  Activation activation = Activation::kLinear;
  bool has_bias = false;

  int input_dim() const { return static_cast<int>(weights.cols()); }
  int output_dim() const { return static_cast<int>(weights.rows()); }
};

struct Predictor {
  std::vector<Sublayer> sublayers;  // sublayers[0] = output side

  int input_dim() const { return sublayers.back().input_dim(); }
  int output_dim() const { return sublayers.front().output_dim(); }
};

struct LayerState {
  Matrix mu;       // batch x d_l
  Matrix epsilon;  // batch x d_l; derived data, refreshed by the backward pass
  Precision precision;
  bool clamped = false;

  int dim() const { return static_cast<int>(mu.cols()); }
};

struct PCNetwork {
  NetworkSpec spec;
  Vector prior_mean;                 // live prior over layer L (precision lives in layers[L])
  std::vector<LayerState> layers;    // length L+1
  std::vector<Predictor> predictors; // length L; predictors[l]: layer l+1 -> layer l

  int depth() const { return static_cast<int>(predictors.size()); }
  int layer_dim(int l) const { return spec.layer_dims[static_cast<std::size_t>(l)]; }
  int batch_size() const { return static_cast<int>(layers.front().mu.rows()); }

  /// Resizes every layer's mu/epsilon to `batch` rows, zero-filled.
  /// Clamped layers may not be resized; unclamp first.
  void set_batch_size(int batch);
};

/// Builds a network from a validated spec: activities zeroed (batch 1),
/// precisions identity except the deepest layer which takes the prior
/// precision, weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] from the
/// spec seed, biases (when enabled) zero, clamped flags false.
PCNetwork build_network(const NetworkSpec& spec);

/// Fixes a layer's activities to `values` (batch x d_layer) and marks it
/// clamped; clamped layers receive no activity updates. Resizes the network
/// batch when no other layer is clamped at a different batch size.
void clamp_layer(PCNetwork& net, int layer, const Matrix& values);

/// Releases a clamp; the layer resumes updating from its current values.
void unclamp_layer(PCNetwork& net, int layer);

enum class ActivityInit { kPrior, kFeedforward };

ActivityInit activity_init_from_string(const std::string& s);
std::string activity_init_to_string(ActivityInit m);

/// Initializes unclamped activities. Prior mode: deepest layer gets the
/// prior mean, the rest zeros, all plus N(0, sigma_init^2) noise.
/// Feedforward mode reproduces a forward pass of the reversed network from
/// the clamped data end: when the deepest layer is clamped the predictor
/// chain is applied downward as-is; when only layer 0 is clamped the
/// transposed stack is swept upward. Clamped layers are never touched.
void init_activities(PCNetwork& net, ActivityInit mode, std::uint64_t seed,
                     double sigma_init = kDefaultSigmaInit);

}  // namespace predprop

#endif  // PREDPROP_NETWORK_HPP_
