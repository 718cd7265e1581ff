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

#include "predprop/network.hpp"

#include <cmath>
#include <sstream>

#include "predprop/errors.hpp"
#include "predprop/rng.hpp"

namespace predprop {

Activation activation_from_string(const std::string& s) {
  if (s == "linear") return Activation::kLinear;
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation: " + s);
}

std::string activation_to_string(Activation a) {
  switch (a) {
    case Activation::kLinear: return "linear";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  throw ConfigError("invalid activation enum value");
}

double apply_activation(Activation a, double x) {
  switch (a) {
    case Activation::kLinear: return x;
    case Activation::kRelu: return x > 0.0 ? x : 0.0;
    case Activation::kTanh: return std::tanh(x);
  }
  return x;
}

double activation_derivative(Activation a, double pre) {
  switch (a) {
    case Activation::kLinear: return 1.0;
    case Activation::kRelu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

PrecisionMode precision_mode_from_string(const std::string& s) {
  if (s == "full") return PrecisionMode::kFull;
  if (s == "diagonal") return PrecisionMode::kDiagonal;
  throw ConfigError("unknown precision mode: " + s);
}

std::string precision_mode_to_string(PrecisionMode m) {
  return m == PrecisionMode::kFull ? "full" : "diagonal";
}

ActivityInit activity_init_from_string(const std::string& s) {
  if (s == "prior") return ActivityInit::kPrior;
  if (s == "feedforward") return ActivityInit::kFeedforward;
  throw ConfigError("unknown activity init mode: " + s);
}

std::string activity_init_to_string(ActivityInit m) {
  return m == ActivityInit::kPrior ? "prior" : "feedforward";
}

void NetworkSpec::validate() const {
  if (layer_dims.size() < 2) {
    throw ConfigError("network needs at least two layers (data and causes)");
  }
  for (std::size_t i = 0; i < layer_dims.size(); ++i) {
    if (layer_dims[i] < 1) {
      std::ostringstream os;
      os << "layer " << i << " has non-positive dimension " << layer_dims[i];
      throw ConfigError(os.str());
    }
  }
  if (predictor_specs.size() != layer_dims.size() - 1) {
    throw ConfigError("predictor_specs must have one entry per layer gap");
  }
  const int L = depth();
  for (int gap = 0; gap < L; ++gap) {
    const auto& chain = predictor_specs[static_cast<std::size_t>(gap)];
    if (chain.empty()) {
      std::ostringstream os;
      os << "empty sublayer chain at gap " << gap;
      throw ConfigError(os.str());
    }
    // sublayers[0] produces the layer-`gap` prediction; the chain is applied
    // back to front, so consecutive dims must agree and the ends must match
    // the adjacent layers.
    for (std::size_t k = 0; k < chain.size(); ++k) {
      if (chain[k].output_dim < 1) {
        std::ostringstream os;
        os << "sublayer dimension mismatch at gap " << gap
           << ": non-positive output dim";
        throw DimensionError(os.str());
      }
    }
    if (chain.front().output_dim != layer_dims[static_cast<std::size_t>(gap)]) {
      std::ostringstream os;
      os << "sublayer dimension mismatch at gap " << gap << ": chain output "
         << chain.front().output_dim << " != layer dim "
         << layer_dims[static_cast<std::size_t>(gap)];
      throw DimensionError(os.str());
    }
  }
  // Prior shape, when given explicitly.
  const int d_top = layer_dims.back();
  if (prior.mean.size() != 0 && prior.mean.size() != d_top) {
    throw DimensionError("prior mean dimension does not match the deepest layer");
  }
  if (prior.precision.size() != 0 &&
      (prior.precision.rows() != d_top || prior.precision.cols() != d_top)) {
    throw DimensionError("prior precision shape does not match the deepest layer");
  }
}

NetworkSpec make_dense_spec(const std::vector<int>& layer_dims, Activation hidden,
                            Activation output) {
  NetworkSpec spec;
  spec.layer_dims = layer_dims;
  const int L = static_cast<int>(layer_dims.size()) - 1;
  for (int gap = 0; gap < L; ++gap) {
    SublayerSpec s;
    s.output_dim = layer_dims[static_cast<std::size_t>(gap)];
    s.activation = (gap == 0) ? output : hidden;
    spec.predictor_specs.push_back({s});
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Precision

Precision Precision::identity(int dim, PrecisionMode mode) {
  Precision p;
  p.mode_ = mode;
  if (mode == PrecisionMode::kFull) {
    p.dense_ = Matrix::Identity(dim, dim);
  } else {
    p.diag_ = Vector::Ones(dim);
  }
  return p;
}

Precision Precision::projected(const Matrix& m, PrecisionMode mode, double lambda_min,
                               double lambda_max) {
  Precision p;
  p.mode_ = mode;
  if (mode == PrecisionMode::kFull) {
    p.dense_ = project_spd(m, lambda_min, lambda_max);
  } else {
    p.diag_ = m.diagonal().cwiseMax(lambda_min).cwiseMin(lambda_max);
  }
  return p;
}

Precision Precision::from_dense_unchecked(const Matrix& m, PrecisionMode mode) {
  Precision p;
  p.mode_ = mode;
  if (mode == PrecisionMode::kFull) {
    p.dense_ = symmetrize(m);
  } else {
    p.diag_ = m.diagonal();
  }
  return p;
}

Matrix Precision::dense() const {
  if (mode_ == PrecisionMode::kFull) return dense_;
  return Matrix(diag_.asDiagonal());
}

Matrix Precision::weighted(const Matrix& eps) const {
  if (eps.cols() != dim()) {
    throw DimensionError("error matrix width does not match precision dimension");
  }
  if (mode_ == PrecisionMode::kFull) return eps * dense_;  // Pi symmetric
  return eps * diag_.asDiagonal();
}

Vector Precision::quad_form(const Matrix& eps) const {
  const Matrix w = weighted(eps);
  return (w.array() * eps.array()).rowwise().sum();
}

double Precision::log_det() const {
  if (mode_ == PrecisionMode::kDiagonal) {
    if ((diag_.array() <= 0.0).any()) {
      throw NumericalError("precision is not positive definite");
    }
    return diag_.array().log().sum();
  }
  Eigen::LLT<Matrix> llt(dense_);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("precision is not positive definite");
  }
  const Matrix l = llt.matrixL();
  return 2.0 * l.diagonal().array().log().sum();
}

Matrix Precision::covariance_dense() const {
  if (mode_ == PrecisionMode::kDiagonal) {
    if ((diag_.array() <= 0.0).any()) {
      throw NumericalError("precision is not invertible");
    }
    return Matrix(diag_.cwiseInverse().asDiagonal());
  }
  Eigen::LLT<Matrix> llt(dense_);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("precision is not invertible");
  }
  return llt.solve(Matrix::Identity(dense_.rows(), dense_.cols()));
}

double Precision::max_eigenvalue() const {
  if (mode_ == PrecisionMode::kDiagonal) return diag_.maxCoeff();
  return max_eigenvalue_sym(dense_);
}

double Precision::min_eigenvalue() const {
  if (mode_ == PrecisionMode::kDiagonal) return diag_.minCoeff();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(dense_);
  return eig.eigenvalues().minCoeff();
}

void Precision::apply_update(const Matrix& delta, double alpha, double lambda_min,
                             double lambda_max) {
  if (mode_ == PrecisionMode::kFull) {
    dense_ = project_spd(dense_ + alpha * delta, lambda_min, lambda_max);
  } else {
    diag_ = (diag_ + alpha * delta.diagonal()).cwiseMax(lambda_min).cwiseMin(lambda_max);
  }
}

bool Precision::operator==(const Precision& other) const {
  if (mode_ != other.mode_) return false;
  if (mode_ == PrecisionMode::kFull) {
    return dense_.rows() == other.dense_.rows() && dense_ == other.dense_;
  }
  return diag_.size() == other.diag_.size() && diag_ == other.diag_;
}

// ---------------------------------------------------------------------------
// PCNetwork

void PCNetwork::set_batch_size(int batch) {
  if (batch < 1) throw DimensionError("batch size must be >= 1");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& layer = layers[l];
    if (static_cast<int>(layer.mu.rows()) == batch) continue;
    if (layer.clamped) {
      std::ostringstream os;
      os << "cannot resize clamped layer " << l << " to batch " << batch;
      throw DimensionError(os.str());
    }
    layer.mu = Matrix::Zero(batch, layer.dim());
    layer.epsilon = Matrix::Zero(batch, layer.dim());
  }
}

PCNetwork build_network(const NetworkSpec& spec) {
  spec.validate();
  PCNetwork net;
  net.spec = spec;
  const int L = spec.depth();
  const int d_top = spec.layer_dims.back();

  net.prior_mean = spec.prior.mean.size() != 0 ? spec.prior.mean : Vector::Zero(d_top);

  Rng rng(mix_seed(spec.seed, 0x57e16475ULL));  // weight-init stream
  for (int gap = 0; gap < L; ++gap) {
    const auto& chain = spec.predictor_specs[static_cast<std::size_t>(gap)];
    Predictor pred;
    // The chain is applied back to front, so fan-in of sublayer k is the
    // output dim of sublayer k+1 (or the upper layer's dim at the back).
    for (std::size_t k = 0; k < chain.size(); ++k) {
      const int out = chain[k].output_dim;
      const int in = (k + 1 < chain.size()) ? chain[k + 1].output_dim
                                            : spec.layer_dims[static_cast<std::size_t>(gap) + 1];
      Sublayer sub;
      sub.activation = chain[k].activation;
      sub.weights = Matrix(out, in);
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      for (int r = 0; r < out; ++r) {
        for (int c = 0; c < in; ++c) {
          sub.weights(r, c) = rng.uniform(-bound, bound);
        }
      }
      sub.has_bias = spec.use_bias;
      if (sub.has_bias) sub.bias = Vector::Zero(out);
      pred.sublayers.push_back(std::move(sub));
    }
    net.predictors.push_back(std::move(pred));
  }

  for (int l = 0; l <= L; ++l) {
    LayerState layer;
    const int d = spec.layer_dims[static_cast<std::size_t>(l)];
    layer.mu = Matrix::Zero(1, d);
    layer.epsilon = Matrix::Zero(1, d);
    if (l == L && spec.prior.precision.size() != 0) {
      layer.precision = Precision::projected(spec.prior.precision, spec.precision_mode);
    } else {
      layer.precision = Precision::identity(d, spec.precision_mode);
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

void clamp_layer(PCNetwork& net, int layer, const Matrix& values) {
  if (layer < 0 || layer > net.depth()) {
    std::ostringstream os;
    os << "layer index " << layer << " out of range [0, " << net.depth() << "]";
    throw DimensionError(os.str());
  }
  auto& target = net.layers[static_cast<std::size_t>(layer)];
  if (values.cols() != target.dim()) {
    std::ostringstream os;
    os << "clamp values have " << values.cols() << " columns, layer " << layer
       << " has dimension " << target.dim();
    throw DimensionError(os.str());
  }
  if (values.rows() < 1) throw DimensionError("clamp values must have at least one row");
  if (!all_finite(values)) throw NumericalError("clamp values contain non-finite entries");

  const int batch = static_cast<int>(values.rows());
  if (batch != net.batch_size()) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      if (static_cast<int>(l) == layer) continue;
      const auto& other = net.layers[l];
      if (other.clamped && static_cast<int>(other.mu.rows()) != batch) {
        std::ostringstream os;
        os << "layer " << l << " is clamped at batch " << other.mu.rows()
           << ", cannot clamp layer " << layer << " at batch " << batch;
        throw DimensionError(os.str());
      }
    }
    target.clamped = false;
    net.set_batch_size(batch);
  }
  target.mu = values;
  target.epsilon = Matrix::Zero(batch, target.dim());
  target.clamped = true;
}

void unclamp_layer(PCNetwork& net, int layer) {
  if (layer < 0 || layer > net.depth()) {
    throw DimensionError("layer index out of range");
  }
  net.layers[static_cast<std::size_t>(layer)].clamped = false;
}

namespace {

// Upward sweep through one predictor: applies the transposed sublayers in
// reverse chain order (output side first), with each sublayer's activation.
Matrix transposed_sweep(const Predictor& pred, const Matrix& mu_lower) {
  Matrix v = mu_lower;
  for (const auto& sub : pred.sublayers) {
    Matrix pre = v * sub.weights;  // rows: W^T v
    v = pre.unaryExpr([&](double x) { return apply_activation(sub.activation, x); });
  }
  return v;
}

// Downward sweep: the predictor applied as-is (deepest sublayer first).
Matrix prediction_sweep(const Predictor& pred, const Matrix& mu_upper) {
  Matrix x = mu_upper;
  for (auto it = pred.sublayers.rbegin(); it != pred.sublayers.rend(); ++it) {
    Matrix pre = x * it->weights.transpose();
    if (it->has_bias) pre.rowwise() += it->bias.transpose();
    x = pre.unaryExpr([&](double v2) { return apply_activation(it->activation, v2); });
  }
  return x;
}

}  // namespace

void init_activities(PCNetwork& net, ActivityInit mode, std::uint64_t seed,
                     double sigma_init) {
  const int L = net.depth();
  const int batch = net.batch_size();
  if (mode == ActivityInit::kPrior) {
    Rng rng(mix_seed(seed, 0xac71f17eULL));
    for (int l = 0; l <= L; ++l) {
      auto& layer = net.layers[static_cast<std::size_t>(l)];
      if (layer.clamped) continue;
      Matrix mu = Matrix::Zero(batch, layer.dim());
      if (l == L) mu.rowwise() += net.prior_mean.transpose();
      if (sigma_init > 0.0) {
        for (int r = 0; r < batch; ++r) {
          for (int c = 0; c < layer.dim(); ++c) {
            mu(r, c) += sigma_init * rng.normal();
          }
        }
      }
      layer.mu = mu;
    }
    return;
  }

  // Feedforward: reproduce a forward pass of the reversed network from the
  // clamped data end. With data at the deepest layer (discriminative
  // orientation) that is the predictor chain itself, applied downward; with
  // data at layer 0 it is the transposed stack, applied upward.
  if (net.layers.back().clamped) {
    for (int l = L - 1; l >= 0; --l) {
      const Matrix swept =
          prediction_sweep(net.predictors[static_cast<std::size_t>(l)],
                           net.layers[static_cast<std::size_t>(l) + 1].mu);
      auto& lower = net.layers[static_cast<std::size_t>(l)];
      if (!lower.clamped) lower.mu = swept;
    }
    return;
  }
  if (!net.layers.front().clamped) {
    throw ConfigError("feedforward activity init requires a clamped data layer");
  }
  for (int l = 0; l < L; ++l) {
    const Matrix swept =
        transposed_sweep(net.predictors[static_cast<std::size_t>(l)],
                         net.layers[static_cast<std::size_t>(l)].mu);
    auto& upper = net.layers[static_cast<std::size_t>(l) + 1];
    if (!upper.clamped) upper.mu = swept;
  }
}

}  // namespace predprop
