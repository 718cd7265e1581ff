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

#include "predprop/dynamics.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "predprop/errors.hpp"

namespace predprop {

namespace {

constexpr double kLn2Pi = 1.8378770664093454836;

Matrix apply_activation_matrix(Activation a, const Matrix& pre) {
  if (a == Activation::kLinear) return pre;
  return pre.unaryExpr([a](double x) { return apply_activation(a, x); });
}

Matrix activation_derivative_matrix(Activation a, const Matrix& pre) {
  return pre.unaryExpr([a](double x) { return activation_derivative(a, x); });
}

void check_input_dim(const Predictor& pred, const Matrix& mu_upper) {
  if (static_cast<int>(mu_upper.cols()) != pred.input_dim()) {
    std::ostringstream os;
    os << "predictor expects input dim " << pred.input_dim() << ", got "
       << mu_upper.cols();
    throw DimensionError(os.str());
  }
}

/// Vector-Jacobian product through a traced predictor: returns the
/// cotangent at the predictor input, i.e. row b of the result is
/// J_b^T g_b for cotangent rows g_b at the output.
Matrix predictor_vjp(const Predictor& pred, const PredictorTrace& trace,
                     const Matrix& cotangent) {
  Matrix g = cotangent;
  for (std::size_t k = 0; k < pred.sublayers.size(); ++k) {
    const auto& sub = pred.sublayers[k];
    const Matrix gz =
        g.cwiseProduct(activation_derivative_matrix(sub.activation, trace.preacts[k]));
    g = gz * sub.weights;  // rows: W_k^T gz_b
  }
  return g;
}

WeightGradient weight_gradient_from_trace(const Predictor& pred,
                                          const PredictorTrace& trace,
                                          const Matrix& weighted_error) {
  const double batch = static_cast<double>(weighted_error.rows());
  WeightGradient grad;
  grad.d_weights.resize(pred.sublayers.size());
  grad.d_biases.resize(pred.sublayers.size());
  Matrix g = weighted_error;
  for (std::size_t k = 0; k < pred.sublayers.size(); ++k) {
    const auto& sub = pred.sublayers[k];
    const Matrix gz =
        g.cwiseProduct(activation_derivative_matrix(sub.activation, trace.preacts[k]));
    grad.d_weights[k] = (gz.transpose() * trace.inputs[k]) / batch;
    if (sub.has_bias) {
      grad.d_biases[k] = gz.colwise().sum().transpose() / batch;
    } else {
      grad.d_biases[k] = Vector();
    }
    g = gz * sub.weights;
  }
  return grad;
}

/// Error of layer l recomputed from current state: the gap prediction error
/// for l < L, the prior error for l = L (zeros when clamped).
Matrix layer_error(const PCNetwork& net, int l, const PredictorTrace* trace) {
  const int L = net.depth();
  if (l < L) {
    const Matrix pred_out =
        trace ? trace->output
              : predict(net.predictors[static_cast<std::size_t>(l)],
                        net.layers[static_cast<std::size_t>(l) + 1].mu);
    return net.layers[static_cast<std::size_t>(l)].mu - pred_out;
  }
  const auto& top = net.layers.back();
  if (top.clamped) return Matrix::Zero(top.mu.rows(), top.mu.cols());
  return top.mu.rowwise() - net.prior_mean.transpose();
}

}  // namespace

Matrix predict(const Predictor& pred, const Matrix& mu_upper) {
  check_input_dim(pred, mu_upper);
  Matrix x = mu_upper;
  for (auto it = pred.sublayers.rbegin(); it != pred.sublayers.rend(); ++it) {
    Matrix pre = x * it->weights.transpose();
    if (it->has_bias) pre.rowwise() += it->bias.transpose();
    x = apply_activation_matrix(it->activation, pre);
  }
  return x;
}

PredictorTrace predict_trace(const Predictor& pred, const Matrix& mu_upper) {
  check_input_dim(pred, mu_upper);
  const std::size_t n = pred.sublayers.size();
  PredictorTrace trace;
  trace.inputs.resize(n);
  trace.preacts.resize(n);
  Matrix x = mu_upper;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = n - 1 - i;  // deepest sublayer first
    const auto& sub = pred.sublayers[k];
    trace.inputs[k] = x;
    Matrix pre = x * sub.weights.transpose();
    if (sub.has_bias) pre.rowwise() += sub.bias.transpose();
    trace.preacts[k] = pre;
    x = apply_activation_matrix(sub.activation, pre);
  }
  trace.output = std::move(x);
  return trace;
}

Matrix compute_error(const Matrix& mu, const Matrix& mu_hat) {
  if (mu.rows() != mu_hat.rows() || mu.cols() != mu_hat.cols()) {
    std::ostringstream os;
    os << "error shapes differ: " << mu.rows() << "x" << mu.cols() << " vs "
       << mu_hat.rows() << "x" << mu_hat.cols();
    throw DimensionError(os.str());
  }
  return mu - mu_hat;
}

double layer_energy(const Matrix& epsilon, const Precision& precision,
                    bool include_logdet) {
  const double logdet = precision.log_det();  // rejects non-SPD precisions
  const double d = static_cast<double>(epsilon.cols());
  const double quad = precision.quad_form(epsilon).mean();
  double e = 0.5 * (quad + d * kLn2Pi);
  if (include_logdet) e -= 0.5 * logdet;
  return e;
}

double layer_energy_dense(const Matrix& epsilon, const Matrix& precision,
                          bool include_logdet) {
  const double batch = static_cast<double>(epsilon.rows());
  const double d = static_cast<double>(epsilon.cols());
  const double quad =
      ((epsilon * precision).array() * epsilon.array()).sum() / batch;
  double e = 0.5 * (quad + d * kLn2Pi);
  if (include_logdet) {
    const double det = precision.partialPivLu().determinant();
    if (!(det > 0.0)) throw NumericalError("precision determinant is not positive");
    e -= 0.5 * std::log(det);
  }
  return e;
}

void backward_pass(PCNetwork& net) {
  const int L = net.depth();
  for (int l = 0; l < L; ++l) {
    auto& layer = net.layers[static_cast<std::size_t>(l)];
    layer.epsilon = layer_error(net, l, nullptr);
  }
  net.layers.back().epsilon = layer_error(net, L, nullptr);
}

std::vector<Matrix> current_errors(const PCNetwork& net) {
  std::vector<Matrix> errors;
  errors.reserve(net.layers.size());
  for (int l = 0; l <= net.depth(); ++l) {
    errors.push_back(layer_error(net, l, nullptr));
  }
  return errors;
}

EnergyReport total_free_energy(const PCNetwork& net, bool include_logdet) {
  const int L = net.depth();
  EnergyReport report;
  report.includes_logdet = include_logdet;
  report.per_layer.resize(static_cast<std::size_t>(L) + 1, 0.0);
  for (int l = 0; l < L; ++l) {
    const Matrix eps = layer_error(net, l, nullptr);
    report.per_layer[static_cast<std::size_t>(l)] =
        layer_energy(eps, net.layers[static_cast<std::size_t>(l)].precision,
                     include_logdet);
  }
  if (!net.layers.back().clamped) {
    const Matrix eps = layer_error(net, L, nullptr);
    report.per_layer.back() =
        layer_energy(eps, net.layers.back().precision, include_logdet);
  }
  report.total = std::accumulate(report.per_layer.begin(), report.per_layer.end(), 0.0);
  return report;
}

Vector per_row_energy(const PCNetwork& net, bool include_logdet) {
  const int L = net.depth();
  const int batch = net.batch_size();
  Vector total = Vector::Zero(batch);
  for (int l = 0; l <= L; ++l) {
    if (l == L && net.layers.back().clamped) continue;
    const auto& precision = net.layers[static_cast<std::size_t>(l)].precision;
    const Matrix eps = layer_error(net, l, nullptr);
    const double d = static_cast<double>(eps.cols());
    Vector e = (0.5 * precision.quad_form(eps).array() + 0.5 * d * kLn2Pi).matrix();
    if (include_logdet) e.array() -= 0.5 * precision.log_det();
    total += e;
  }
  return total;
}

std::vector<Matrix> predictor_jacobian(const Predictor& pred, const Matrix& mu_upper) {
  const PredictorTrace trace = predict_trace(pred, mu_upper);
  const int batch = static_cast<int>(mu_upper.rows());
  std::vector<Matrix> jacobians;
  jacobians.reserve(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    // J_b = D_0 W_0 * D_1 W_1 * ... * D_{K-1} W_{K-1}
    Matrix j;
    bool first = true;
    for (std::size_t k = 0; k < pred.sublayers.size(); ++k) {
      const auto& sub = pred.sublayers[k];
      const Vector deriv =
          activation_derivative_matrix(sub.activation, trace.preacts[k].row(b))
              .transpose();
      const Matrix dk = deriv.asDiagonal() * sub.weights;
      j = first ? dk : Matrix(j * dk);
      first = false;
    }
    jacobians.push_back(std::move(j));
  }
  return jacobians;
}

ActivityGradient activity_gradient(const PCNetwork& net, int gap) {
  const int L = net.depth();
  if (gap < 0 || gap >= L) throw DimensionError("gap index out of range");
  const auto& lower = net.layers[static_cast<std::size_t>(gap)];
  const auto& upper = net.layers[static_cast<std::size_t>(gap) + 1];
  const auto& pred = net.predictors[static_cast<std::size_t>(gap)];

  const PredictorTrace trace = predict_trace(pred, upper.mu);
  const Matrix eps = lower.mu - trace.output;
  const Matrix weighted = lower.precision.weighted(eps);

  ActivityGradient grad;
  grad.d_mu_lower = lower.clamped ? Matrix::Zero(eps.rows(), eps.cols())
                                  : Matrix(-weighted);
  if (upper.clamped) {
    grad.d_mu_upper = Matrix::Zero(upper.mu.rows(), upper.mu.cols());
    return grad;
  }
  Matrix up = predictor_vjp(pred, trace, weighted);
  // Own-error term of the upper layer: its gap error, or the prior error
  // when gap+1 = L (layer_error returns zeros only in the clamped case,
  // which was handled above).
  up -= upper.precision.weighted(layer_error(net, gap + 1, nullptr));
  grad.d_mu_upper = std::move(up);
  return grad;
}

WeightGradient weight_gradient(const PCNetwork& net, int gap) {
  const int L = net.depth();
  if (gap < 0 || gap >= L) throw DimensionError("gap index out of range");
  const auto& lower = net.layers[static_cast<std::size_t>(gap)];
  const auto& upper = net.layers[static_cast<std::size_t>(gap) + 1];
  const auto& pred = net.predictors[static_cast<std::size_t>(gap)];

  const PredictorTrace trace = predict_trace(pred, upper.mu);
  const Matrix eps = lower.mu - trace.output;
  const Matrix weighted = lower.precision.weighted(eps);
  return weight_gradient_from_trace(pred, trace, weighted);
}

Matrix precision_gradient(const Matrix& epsilon, const Precision& precision) {
  const double batch = static_cast<double>(epsilon.rows());
  const Matrix sample_cov = symmetrize((epsilon.transpose() * epsilon) / batch);
  if (precision.mode() == PrecisionMode::kDiagonal) {
    Vector d = precision.covariance_dense().diagonal() - sample_cov.diagonal();
    return Matrix(d.asDiagonal());
  }
  return symmetrize(precision.covariance_dense() - sample_cov);
}

LayerGradients gap_gradients(const PCNetwork& net, int gap) {
  LayerGradients grads;
  ActivityGradient act = activity_gradient(net, gap);
  grads.d_mu_lower = std::move(act.d_mu_lower);
  grads.d_mu_upper = std::move(act.d_mu_upper);
  grads.d_weights = weight_gradient(net, gap);
  const Matrix eps = layer_error(net, gap, nullptr);
  grads.d_precision =
      precision_gradient(eps, net.layers[static_cast<std::size_t>(gap)].precision);
  return grads;
}

NetworkGradients network_gradients(const PCNetwork& net) {
  const int L = net.depth();
  const int batch = net.batch_size();
  NetworkGradients grads;
  grads.d_mu.resize(static_cast<std::size_t>(L) + 1);
  grads.d_theta.resize(static_cast<std::size_t>(L));
  grads.d_precision.resize(static_cast<std::size_t>(L) + 1);
  grads.precision_defined.assign(static_cast<std::size_t>(L) + 1, true);

  // One trace and one error per gap, shared by every gradient below, so the
  // whole snapshot is taken at a single state.
  std::vector<PredictorTrace> traces(static_cast<std::size_t>(L));
  std::vector<Matrix> errors(static_cast<std::size_t>(L) + 1);
  std::vector<Matrix> weighted(static_cast<std::size_t>(L) + 1);
  for (int l = 0; l < L; ++l) {
    traces[static_cast<std::size_t>(l)] =
        predict_trace(net.predictors[static_cast<std::size_t>(l)],
                      net.layers[static_cast<std::size_t>(l) + 1].mu);
    errors[static_cast<std::size_t>(l)] =
        layer_error(net, l, &traces[static_cast<std::size_t>(l)]);
    weighted[static_cast<std::size_t>(l)] =
        net.layers[static_cast<std::size_t>(l)].precision.weighted(
            errors[static_cast<std::size_t>(l)]);
  }
  errors[static_cast<std::size_t>(L)] = layer_error(net, L, nullptr);
  weighted[static_cast<std::size_t>(L)] =
      net.layers.back().precision.weighted(errors[static_cast<std::size_t>(L)]);

  // Activities. Layer 0 takes only its own error term; layer m >= 1 takes
  // the gap (m-1) vector-Jacobian term minus its own error term.
  for (int m = 0; m <= L; ++m) {
    const auto& layer = net.layers[static_cast<std::size_t>(m)];
    if (layer.clamped) {
      grads.d_mu[static_cast<std::size_t>(m)] = Matrix::Zero(batch, layer.dim());
      continue;
    }
    if (m == 0) {
      grads.d_mu[0] = -weighted[0];
      continue;
    }
    Matrix d = predictor_vjp(net.predictors[static_cast<std::size_t>(m) - 1],
                             traces[static_cast<std::size_t>(m) - 1],
                             weighted[static_cast<std::size_t>(m) - 1]);
    d -= weighted[static_cast<std::size_t>(m)];
    grads.d_mu[static_cast<std::size_t>(m)] = std::move(d);
  }

  // Weights.
  for (int l = 0; l < L; ++l) {
    grads.d_theta[static_cast<std::size_t>(l)] = weight_gradient_from_trace(
        net.predictors[static_cast<std::size_t>(l)], traces[static_cast<std::size_t>(l)],
        weighted[static_cast<std::size_t>(l)]);
  }

  // Precisions. The deepest layer's precision weights the prior error and
  // has no defined update when that layer is clamped (its error term is
  // absent from the objective).
  for (int l = 0; l <= L; ++l) {
    const auto& layer = net.layers[static_cast<std::size_t>(l)];
    if (l == L && layer.clamped) {
      grads.d_precision[static_cast<std::size_t>(l)] =
          Matrix::Zero(layer.dim(), layer.dim());
      grads.precision_defined[static_cast<std::size_t>(l)] = false;
      continue;
    }
    grads.d_precision[static_cast<std::size_t>(l)] =
        precision_gradient(errors[static_cast<std::size_t>(l)], layer.precision);
  }
  return grads;
}

double NetworkGradients::mu_norm() const {
  double sq = 0.0;
  for (const auto& m : d_mu) sq += m.squaredNorm();
  return std::sqrt(sq);
}

double NetworkGradients::theta_norm() const {
  double sq = 0.0;
  for (const auto& g : d_theta) {
    for (const auto& w : g.d_weights) sq += w.squaredNorm();
    for (const auto& b : g.d_biases) sq += b.squaredNorm();
  }
  return std::sqrt(sq);
}

double NetworkGradients::precision_norm() const {
  double sq = 0.0;
  for (std::size_t l = 0; l < d_precision.size(); ++l) {
    if (!precision_defined[l]) continue;
    sq += d_precision[l].squaredNorm();
  }
  return std::sqrt(sq);
}

Matrix fisher_activity(const PCNetwork& net, int layer) {
  if (layer < 0 || layer > net.depth()) throw DimensionError("layer index out of range");
  return net.layers[static_cast<std::size_t>(layer)].precision.dense();
}

Matrix fisher_weights(const PCNetwork& net, int gap) {
  const int L = net.depth();
  if (gap < 0 || gap >= L) throw DimensionError("gap index out of range");
  const auto& pred = net.predictors[static_cast<std::size_t>(gap)];
  if (pred.sublayers.size() != 1 ||
      pred.sublayers.front().activation != Activation::kLinear) {
    throw ConfigError(
        "fisher_weights is defined only for a single linear sublayer");
  }
  const Matrix& mu_upper = net.layers[static_cast<std::size_t>(gap) + 1].mu;
  const double batch = static_cast<double>(mu_upper.rows());
  const Matrix second_moment = (mu_upper.transpose() * mu_upper) / batch;
  const Matrix pi = net.layers[static_cast<std::size_t>(gap)].precision.dense();

  const Eigen::Index p = pi.rows();
  const Eigen::Index q = second_moment.rows();
  Matrix kron(p * q, p * q);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      kron.block(i * q, j * q, q, q) = pi(i, j) * second_moment;
    }
  }
  return kron;
}

double descent_step_bound(const PCNetwork& net) {
  const int L = net.depth();
  double max_precision_eig = 0.0;
  for (int l = 0; l <= L; ++l) {
    if (l == L && net.layers.back().clamped) continue;
    max_precision_eig =
        std::max(max_precision_eig,
                 net.layers[static_cast<std::size_t>(l)].precision.max_eigenvalue());
  }
  double max_jac_sq = 0.0;
  for (int l = 0; l < L; ++l) {
    double norm_bound = 1.0;
    for (const auto& sub : net.predictors[static_cast<std::size_t>(l)].sublayers) {
      norm_bound *= operator_norm(sub.weights);
    }
    max_jac_sq = std::max(max_jac_sq, norm_bound * norm_bound);
  }
  return 1.0 / (max_precision_eig * (1.0 + max_jac_sq));
}

}  // namespace predprop
