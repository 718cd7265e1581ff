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

#include "predprop/oracle.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "predprop/errors.hpp"
#include "predprop/rng.hpp"

namespace predprop {

namespace {

double rel_error(double a, double b) {
  const double denom = std::max({std::fabs(a), std::fabs(b), 1e-8});
  return std::fabs(a - b) / denom;
}

/// All ReLU pre-activations of the network at its current state, flattened
/// in a fixed order; used to detect kink crossings between fd probes.
std::vector<double> relu_preactivations(const PCNetwork& net) {
  std::vector<double> out;
  for (int gap = 0; gap < net.depth(); ++gap) {
    const auto& pred = net.predictors[static_cast<std::size_t>(gap)];
    const PredictorTrace trace =
        predict_trace(pred, net.layers[static_cast<std::size_t>(gap) + 1].mu);
    for (std::size_t k = 0; k < pred.sublayers.size(); ++k) {
      if (pred.sublayers[k].activation != Activation::kRelu) continue;
      const Matrix& pre = trace.preacts[k];
      for (Eigen::Index r = 0; r < pre.rows(); ++r) {
        for (Eigen::Index c = 0; c < pre.cols(); ++c) out.push_back(pre(r, c));
      }
    }
  }
  return out;
}

/// True when perturbing the probed coordinate moved some ReLU
/// pre-activation that sits within `radius` of its kink.
bool near_kink(const std::vector<double>& plus, const std::vector<double>& minus,
               double radius) {
  for (std::size_t i = 0; i < plus.size(); ++i) {
    if (plus[i] == minus[i]) continue;  // coordinate does not influence this unit
    if (std::min(std::fabs(plus[i]), std::fabs(minus[i])) < radius) return true;
  }
  return false;
}

struct Probe {
  double fd = 0.0;
  bool kink = false;
};

/// Central difference of the total free energy w.r.t. *coord, with kink
/// detection at both probe points.
Probe probe_coordinate(PCNetwork& net, double* coord, double h, double kink_radius) {
  const double base = *coord;
  const bool track_kinks = kink_radius > 0.0;
  Probe probe;
  *coord = base + h;
  const double f_plus = total_free_energy(net).total;
  const std::vector<double> pre_plus =
      track_kinks ? relu_preactivations(net) : std::vector<double>{};
  *coord = base - h;
  const double f_minus = total_free_energy(net).total;
  const std::vector<double> pre_minus =
      track_kinks ? relu_preactivations(net) : std::vector<double>{};
  *coord = base;
  probe.fd = (f_plus - f_minus) / (2.0 * h);
  probe.kink = track_kinks && near_kink(pre_plus, pre_minus, kink_radius);
  return probe;
}

Matrix fd_matrix(PCNetwork& net, Matrix& target, double h, double kink_radius,
                 int* excluded, std::vector<bool>* kink_mask) {
  Matrix out(target.rows(), target.cols());
  if (kink_mask) kink_mask->assign(static_cast<std::size_t>(target.size()), false);
  std::size_t flat = 0;
  for (Eigen::Index r = 0; r < target.rows(); ++r) {
    for (Eigen::Index c = 0; c < target.cols(); ++c, ++flat) {
      const Probe probe = probe_coordinate(net, &target(r, c), h, kink_radius);
      out(r, c) = probe.fd;
      if (probe.kink) {
        if (excluded) ++*excluded;
        if (kink_mask) (*kink_mask)[flat] = true;
      }
    }
  }
  return out;
}

/// fd of the free energy w.r.t. one layer's precision entries. The error of
/// that layer does not depend on its precision, so the difference of totals
/// reduces exactly to the difference of that layer's energy; evaluating only
/// it avoids cancellation against the other layers' terms. Probes perturb
/// single dense entries (momentarily non-symmetric), hence the LU-based
/// energy.
Matrix fd_precision_matrix(const PCNetwork& net, int layer, double h) {
  const std::vector<Matrix> errors = current_errors(net);
  const Matrix& eps = errors[static_cast<std::size_t>(layer)];
  const auto& precision = net.layers[static_cast<std::size_t>(layer)].precision;
  Matrix pi = precision.dense();
  const bool diagonal = precision.mode() == PrecisionMode::kDiagonal;
  Matrix out = Matrix::Zero(pi.rows(), pi.cols());
  for (Eigen::Index r = 0; r < pi.rows(); ++r) {
    for (Eigen::Index c = 0; c < pi.cols(); ++c) {
      if (diagonal && r != c) continue;
      const double base = pi(r, c);
      pi(r, c) = base + h;
      const double f_plus = layer_energy_dense(eps, pi);
      pi(r, c) = base - h;
      const double f_minus = layer_energy_dense(eps, pi);
      pi(r, c) = base;
      out(r, c) = (f_plus - f_minus) / (2.0 * h);
    }
  }
  return out;
}

double act_deriv_local(Activation a, double pre) {
  // Local on purpose: the reference must not lean on the analytic module's
  // derivative plumbing.
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

}  // namespace

FdGradient fd_gradient(const PCNetwork& net, const VariableSelector& selector, double h) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step h must be positive");
  PCNetwork work = net;
  FdGradient result;
  switch (selector.kind) {
    case VariableKind::kActivity: {
      if (selector.index < 0 || selector.index > work.depth()) {
        throw DimensionError("activity selector layer out of range");
      }
      auto& layer = work.layers[static_cast<std::size_t>(selector.index)];
      result.applied = !layer.clamped;
      result.values = fd_matrix(work, layer.mu, h, 0.0, nullptr, nullptr);
      break;
    }
    case VariableKind::kWeights: {
      if (selector.index < 0 || selector.index >= work.depth()) {
        throw DimensionError("weight selector gap out of range");
      }
      auto& pred = work.predictors[static_cast<std::size_t>(selector.index)];
      if (selector.sublayer < 0 ||
          selector.sublayer >= static_cast<int>(pred.sublayers.size())) {
        throw DimensionError("weight selector sublayer out of range");
      }
      result.values = fd_matrix(
          work, pred.sublayers[static_cast<std::size_t>(selector.sublayer)].weights, h,
          0.0, nullptr, nullptr);
      break;
    }
    case VariableKind::kBias: {
      if (selector.index < 0 || selector.index >= work.depth()) {
        throw DimensionError("bias selector gap out of range");
      }
      auto& sub = work.predictors[static_cast<std::size_t>(selector.index)]
                      .sublayers.at(static_cast<std::size_t>(selector.sublayer));
      if (!sub.has_bias) throw ConfigError("selected sublayer has no bias");
      Matrix out(sub.bias.size(), 1);
      for (Eigen::Index i = 0; i < sub.bias.size(); ++i) {
        const Probe probe = probe_coordinate(work, &sub.bias[i], h, 0.0);
        out(i, 0) = probe.fd;
      }
      result.values = out;
      break;
    }
    case VariableKind::kPrecision: {
      if (selector.index < 0 || selector.index > work.depth()) {
        throw DimensionError("precision selector layer out of range");
      }
      result.values = fd_precision_matrix(work, selector.index, h);
      break;
    }
  }
  return result;
}

GradCheckReport check_gradients(const PCNetwork& net, const GradCheckConfig& config) {
  GradCheckReport report;
  report.h = config.h;
  report.tolerance = config.tolerance;

  PCNetwork work = net;
  const double batch = static_cast<double>(work.batch_size());
  const NetworkGradients analytic = network_gradients(work);
  const int L = work.depth();

  auto add_entry = [&](const std::string& name, const Matrix& analytic_values,
                       const Matrix& fd_reference, const std::vector<bool>& kink_mask,
                       int excluded_here) {
    GradCheckEntry entry;
    entry.variable = name;
    entry.excluded = excluded_here;
    std::size_t flat = 0;
    for (Eigen::Index r = 0; r < analytic_values.rows(); ++r) {
      for (Eigen::Index c = 0; c < analytic_values.cols(); ++c, ++flat) {
        if (!kink_mask.empty() && kink_mask[flat]) continue;
        entry.max_rel_error = std::max(
            entry.max_rel_error, rel_error(analytic_values(r, c), fd_reference(r, c)));
      }
    }
    entry.ok = entry.max_rel_error <= config.tolerance;
    report.excluded_coordinates += excluded_here;
    report.entries.push_back(std::move(entry));
  };

  // Activities: analytic per-row descent gradients equal -batch * fd of the
  // batch-mean total (see the convention note in dynamics.hpp).
  for (int m = 0; m <= L; ++m) {
    auto& layer = work.layers[static_cast<std::size_t>(m)];
    if (layer.clamped) continue;
    int excluded = 0;
    std::vector<bool> kink_mask;
    const Matrix fd =
        fd_matrix(work, layer.mu, config.h, config.kink_radius, &excluded, &kink_mask);
    std::ostringstream name;
    name << "mu[" << m << "]";
    add_entry(name.str(), analytic.d_mu[static_cast<std::size_t>(m)],
              Matrix(-batch * fd), kink_mask, excluded);
  }

  // Weights and biases: analytic descent gradients equal -fd.
  for (int gap = 0; gap < L; ++gap) {
    auto& pred = work.predictors[static_cast<std::size_t>(gap)];
    for (std::size_t k = 0; k < pred.sublayers.size(); ++k) {
      int excluded = 0;
      std::vector<bool> kink_mask;
      const Matrix fd = fd_matrix(work, pred.sublayers[k].weights, config.h,
                                  config.kink_radius, &excluded, &kink_mask);
      Matrix analytic_w =
          analytic.d_theta[static_cast<std::size_t>(gap)].d_weights[k] *
          (1.0 + config.weight_fault);
      std::ostringstream name;
      name << "theta[" << gap << "][" << k << "]";
      add_entry(name.str(), analytic_w, Matrix(-fd), kink_mask, excluded);

      if (pred.sublayers[k].has_bias) {
        auto& bias = pred.sublayers[k].bias;
        Matrix fd_bias(bias.size(), 1);
        std::vector<bool> bias_mask(static_cast<std::size_t>(bias.size()), false);
        int bias_excluded = 0;
        for (Eigen::Index i = 0; i < bias.size(); ++i) {
          const Probe probe =
              probe_coordinate(work, &bias[i], config.h, config.kink_radius);
          fd_bias(i, 0) = probe.fd;
          if (probe.kink) {
            bias_mask[static_cast<std::size_t>(i)] = true;
            ++bias_excluded;
          }
        }
        std::ostringstream bias_name;
        bias_name << "bias[" << gap << "][" << k << "]";
        add_entry(bias_name.str(),
                  Matrix(analytic.d_theta[static_cast<std::size_t>(gap)].d_biases[k]),
                  Matrix(-fd_bias), bias_mask, bias_excluded);
      }
    }
  }

  // Precisions: analytic d_Pi equals -2x the symmetrized fd gradient (the
  // 1/2 in the energy is absorbed into the update).
  for (int l = 0; l <= L; ++l) {
    if (!analytic.precision_defined[static_cast<std::size_t>(l)]) continue;
    const Matrix fd = fd_precision_matrix(work, l, config.h);
    const Matrix reference = -2.0 * symmetrize(fd);
    std::ostringstream name;
    name << "pi[" << l << "]";
    add_entry(name.str(), analytic.d_precision[static_cast<std::size_t>(l)], reference,
              {}, 0);
  }

  report.pass = true;
  for (const auto& entry : report.entries) report.pass = report.pass && entry.ok;
  return report;
}

BackpropGradients backprop_reference(const PCNetwork& net, const Matrix& input,
                                     const Matrix& target) {
  const int L = net.depth();
  for (const auto& pred : net.predictors) {
    if (pred.sublayers.size() != 1) {
      throw ConfigError(
          "backprop reference supports single-sublayer predictors only");
    }
  }
  if (static_cast<int>(input.cols()) != net.layer_dim(L)) {
    throw DimensionError("backprop reference input must match the deepest layer");
  }
  if (static_cast<int>(target.cols()) != net.layer_dim(0)) {
    throw DimensionError("backprop reference target must match the data layer");
  }
  if (input.rows() != target.rows()) {
    throw DimensionError("input/target batch sizes differ");
  }
  const double batch = static_cast<double>(input.rows());

  // Forward pass from the deep end; own bookkeeping, no trace reuse.
  std::vector<Matrix> acts(static_cast<std::size_t>(L) + 1);
  std::vector<Matrix> pres(static_cast<std::size_t>(L));
  acts[static_cast<std::size_t>(L)] = input;
  for (int l = L - 1; l >= 0; --l) {
    const auto& sub = net.predictors[static_cast<std::size_t>(l)].sublayers.front();
    Matrix pre = acts[static_cast<std::size_t>(l) + 1] * sub.weights.transpose();
    if (sub.has_bias) pre.rowwise() += sub.bias.transpose();
    pres[static_cast<std::size_t>(l)] = pre;
    acts[static_cast<std::size_t>(l)] = pre.unaryExpr(
        [&](double x) { return apply_activation(sub.activation, x); });
  }

  BackpropGradients out;
  const Matrix diff = acts[0] - target;
  out.loss = 0.5 * diff.squaredNorm() / batch;
  out.output_error_norm = diff.norm();
  out.d_weights.resize(static_cast<std::size_t>(L));
  out.d_biases.resize(static_cast<std::size_t>(L));

  // Backward pass: explicit chain rule of the half-MSE loss.
  Matrix g = diff;
  for (int l = 0; l < L; ++l) {
    const auto& sub = net.predictors[static_cast<std::size_t>(l)].sublayers.front();
    const Matrix deriv = pres[static_cast<std::size_t>(l)].unaryExpr(
        [&](double x) { return act_deriv_local(sub.activation, x); });
    const Matrix gz = g.cwiseProduct(deriv);
    out.d_weights[static_cast<std::size_t>(l)] =
        (gz.transpose() * acts[static_cast<std::size_t>(l) + 1]) / batch;
    if (sub.has_bias) {
      out.d_biases[static_cast<std::size_t>(l)] = gz.colwise().sum().transpose() / batch;
    }
    g = gz * sub.weights;
  }
  return out;
}

EquivalenceReport compare_with_backprop(PCNetwork net, const Matrix& input,
                                        const Matrix& target,
                                        const EquivalenceConfig& config) {
  const int L = net.depth();
  for (const auto& pred : net.predictors) {
    if (pred.sublayers.size() != 1) {
      throw ConfigError("backprop comparison requires single-sublayer predictors");
    }
  }
  // Identity precisions, both ends clamped (data at the deep end: this is
  // the exchanged, discriminative orientation), hidden activities set by a
  // forward pass of the reversed network.
  for (auto& layer : net.layers) {
    layer.precision = Precision::identity(layer.dim(), net.spec.precision_mode);
  }
  clamp_layer(net, L, input);
  clamp_layer(net, 0, target);
  for (int l = L - 1; l >= 1; --l) {
    net.layers[static_cast<std::size_t>(l)].mu =
        predict(net.predictors[static_cast<std::size_t>(l)],
                net.layers[static_cast<std::size_t>(l) + 1].mu);
  }

  EquivalenceReport report;
  const double alpha = descent_step_bound(net);
  int iterations = 0;
  while (iterations < config.max_iterations) {
    const NetworkGradients grads = network_gradients(net);
    if (grads.mu_norm() <= config.grad_tolerance) {
      report.converged = true;
      break;
    }
    for (int m = 0; m <= L; ++m) {
      auto& layer = net.layers[static_cast<std::size_t>(m)];
      if (layer.clamped) continue;
      layer.mu += alpha * grads.d_mu[static_cast<std::size_t>(m)];
    }
    ++iterations;
  }
  if (iterations >= config.max_iterations) {
    const NetworkGradients grads = network_gradients(net);
    report.converged = grads.mu_norm() <= config.grad_tolerance;
  }
  report.iterations = iterations;

  const BackpropGradients bp = backprop_reference(net, input, target);
  report.output_error_norm = bp.output_error_norm;
  report.cosines.resize(static_cast<std::size_t>(L), 0.0);
  report.exact_match.resize(static_cast<std::size_t>(L), false);
  for (int gap = 0; gap < L; ++gap) {
    const Matrix pc = weight_gradient(net, gap).d_weights[0];
    const Matrix ref = -bp.d_weights[static_cast<std::size_t>(gap)];
    const double pc_norm = pc.norm();
    const double ref_norm = ref.norm();
    if (pc_norm < 1e-300 && ref_norm < 1e-300) {
      report.cosines[static_cast<std::size_t>(gap)] = 1.0;
      report.exact_match[static_cast<std::size_t>(gap)] = true;
      continue;
    }
    report.cosines[static_cast<std::size_t>(gap)] = cosine_similarity(pc, ref);
  }
  return report;
}

Matrix empirical_error_covariance(const Matrix& errors) {
  if (errors.rows() < 1) throw DimensionError("empty error batch");
  const double batch = static_cast<double>(errors.rows());
  return symmetrize((errors.transpose() * errors) / batch);
}

PCNetwork random_network(std::uint64_t seed, const RandomNetOptions& options) {
  Rng rng(mix_seed(seed, 0x0bacab0bULL));
  const int L = options.min_layers +
                static_cast<int>(rng.below(
                    static_cast<std::uint64_t>(options.max_layers - options.min_layers + 1)));
  std::vector<int> dims;
  for (int l = 0; l <= L; ++l) {
    dims.push_back(options.min_dim +
                   static_cast<int>(rng.below(static_cast<std::uint64_t>(
                       options.max_dim - options.min_dim + 1))));
  }

  std::vector<Activation> allowed = {Activation::kLinear};
  if (options.allow_relu) allowed.push_back(Activation::kRelu);
  if (options.allow_tanh) allowed.push_back(Activation::kTanh);

  NetworkSpec spec;
  spec.layer_dims = dims;
  spec.precision_mode = options.precision_mode;
  spec.seed = mix_seed(seed, 0x5eedULL);
  spec.use_bias = options.use_bias;
  for (int gap = 0; gap < L; ++gap) {
    std::vector<SublayerSpec> chain;
    const bool two = options.multi_sublayer && rng.uniform() < 0.5;
    if (two) {
      const int mid = options.min_dim +
                      static_cast<int>(rng.below(static_cast<std::uint64_t>(
                          options.max_dim - options.min_dim + 1)));
      SublayerSpec inner;
      inner.output_dim = mid;
      inner.activation = allowed[rng.below(allowed.size())];
      SublayerSpec outer;
      outer.output_dim = dims[static_cast<std::size_t>(gap)];
      outer.activation = allowed[rng.below(allowed.size())];
      chain = {outer, inner};
    } else {
      SublayerSpec s;
      s.output_dim = dims[static_cast<std::size_t>(gap)];
      s.activation = allowed[rng.below(allowed.size())];
      chain = {s};
    }
    spec.predictor_specs.push_back(std::move(chain));
  }

  PCNetwork net = build_network(spec);
  net.set_batch_size(options.batch);
  for (auto& layer : net.layers) {
    for (Eigen::Index r = 0; r < layer.mu.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.mu.cols(); ++c) layer.mu(r, c) = rng.normal();
    }
  }
  for (Eigen::Index i = 0; i < net.prior_mean.size(); ++i) {
    net.prior_mean[i] = 0.5 * rng.normal();
  }

  if (options.random_precisions) {
    for (auto& layer : net.layers) {
      const int d = layer.dim();
      Matrix a(d, d);
      for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) a(r, c) = rng.normal();
      }
      const Matrix q = Eigen::HouseholderQR<Matrix>(a).householderQ();
      Vector eigs(d);
      for (int i = 0; i < d; ++i) eigs[i] = rng.uniform(0.5, 2.0);
      const Matrix pi = q * eigs.asDiagonal() * q.transpose();
      layer.precision = Precision::projected(pi, options.precision_mode);
    }
  }

  if (options.weight_scale != 1.0) {
    for (auto& pred : net.predictors) {
      for (auto& sub : pred.sublayers) sub.weights *= options.weight_scale;
    }
  }

  if (options.clamp_data) {
    Matrix data(options.batch, dims.front());
    for (Eigen::Index r = 0; r < data.rows(); ++r) {
      for (Eigen::Index c = 0; c < data.cols(); ++c) data(r, c) = rng.normal();
    }
    clamp_layer(net, 0, data);
  }
  return net;
}

EquivalenceCase make_equivalence_case(std::uint64_t seed, bool relu,
                                      double weight_scale, double delta) {
  RandomNetOptions options;
  options.allow_relu = relu;
  options.random_precisions = false;
  options.clamp_data = false;
  options.min_dim = 2;
  options.batch = 1;
  options.weight_scale = weight_scale;

  EquivalenceCase out;
  out.net = random_network(seed, options);
  const int L = out.net.depth();
  Rng rng(mix_seed(seed, 0xec1a1ULL));

  // Sample inputs and keep the one whose ReLU pre-activations sit furthest
  // from their kinks; stop early once the margin is comfortable.
  Matrix prediction;
  double best_margin = -1.0;
  for (int attempt = 0; attempt < 256; ++attempt) {
    Matrix input(1, out.net.layer_dim(L));
    for (Eigen::Index c = 0; c < input.cols(); ++c) input(0, c) = rng.normal();
    // Margin of this input: every ReLU unit well off its kink AND at least
    // one live unit per ReLU layer (a fully dead layer zeroes the backprop
    // path while inference still leaks a tiny update through it).
    double margin = std::numeric_limits<double>::infinity();
    Matrix x = input;
    for (int l = L - 1; l >= 0; --l) {
      const auto& sub = out.net.predictors[static_cast<std::size_t>(l)].sublayers.front();
      const Matrix pre = x * sub.weights.transpose();
      if (sub.activation == Activation::kRelu) {
        margin = std::min(margin, pre.cwiseAbs().minCoeff());
        margin = std::min(margin, pre.maxCoeff());
      }
      x = pre.unaryExpr([&](double v) { return apply_activation(sub.activation, v); });
    }
    if (margin > best_margin) {
      best_margin = margin;
      out.input = input;
      prediction = x;
    }
    if (best_margin >= 0.05) break;
  }
  // Perturbation with exactly ||delta|| total norm; the relaxed output
  // error can only shrink from there.
  Matrix direction(1, prediction.cols());
  for (Eigen::Index c = 0; c < direction.cols(); ++c) direction(0, c) = rng.normal();
  direction /= direction.norm();
  out.target = prediction + delta * direction;
  return out;
}

nlohmann::json to_json(const GradCheckReport& report) {
  nlohmann::json j;
  j["h"] = report.h;
  j["tolerance"] = report.tolerance;
  j["excluded_coordinates"] = report.excluded_coordinates;
  j["pass"] = report.pass;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& entry : report.entries) {
    entries.push_back({{"variable", entry.variable},
                       {"max_rel_error", entry.max_rel_error},
                       {"excluded", entry.excluded},
                       {"ok", entry.ok}});
  }
  j["entries"] = std::move(entries);
  return j;
}

nlohmann::json to_json(const EquivalenceReport& report) {
  nlohmann::json j;
  j["cosines"] = report.cosines;
  j["exact_match"] = report.exact_match;
  j["output_error_norm"] = report.output_error_norm;
  j["iterations"] = report.iterations;
  j["converged"] = report.converged;
  return j;
}

}  // namespace predprop
