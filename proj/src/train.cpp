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

#include "predprop/train.hpp"

#include <chrono>
#include <numeric>
#include <sstream>

#include "predprop/errors.hpp"
#include "predprop/rng.hpp"

namespace predprop {

namespace {

void check_finite_state(const PCNetwork& net) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    if (!all_finite(net.layers[l].mu)) {
      std::ostringstream os;
      os << "non-finite activity in layer " << l;
      throw NumericalError(os.str());
    }
    if (!all_finite(net.layers[l].precision.dense())) {
      std::ostringstream os;
      os << "non-finite precision in layer " << l;
      throw NumericalError(os.str());
    }
  }
  for (std::size_t gap = 0; gap < net.predictors.size(); ++gap) {
    const auto& pred = net.predictors[gap];
    for (std::size_t k = 0; k < pred.sublayers.size(); ++k) {
      if (!all_finite(pred.sublayers[k].weights) ||
          (pred.sublayers[k].has_bias && !all_finite(pred.sublayers[k].bias))) {
        std::ostringstream os;
        os << "non-finite weights at gap " << gap << ", sublayer " << k;
        throw NumericalError(os.str());
      }
    }
  }
}

/// One forward pass of the schedule: gradients are computed as a single
/// snapshot and applied in parallel. Returns the snapshot for reporting.
NetworkGradients apply_parallel_update(PCNetwork& net, double alpha_m, double alpha_s,
                                       double alpha_t, bool update_precision) {
  const NetworkGradients grads = network_gradients(net);
  const int L = net.depth();

  if (alpha_m != 0.0) {
    for (int m = 0; m <= L; ++m) {
      auto& layer = net.layers[static_cast<std::size_t>(m)];
      if (layer.clamped) continue;
      layer.mu += alpha_m * grads.d_mu[static_cast<std::size_t>(m)];
    }
  }
  if (alpha_t != 0.0) {
    for (int gap = 0; gap < L; ++gap) {
      auto& pred = net.predictors[static_cast<std::size_t>(gap)];
      const auto& g = grads.d_theta[static_cast<std::size_t>(gap)];
      for (std::size_t k = 0; k < pred.sublayers.size(); ++k) {
        pred.sublayers[k].weights += alpha_t * g.d_weights[k];
        if (pred.sublayers[k].has_bias && g.d_biases[k].size() != 0) {
          pred.sublayers[k].bias += alpha_t * g.d_biases[k];
        }
      }
    }
  }
  if (update_precision && alpha_s != 0.0) {
    for (int l = 0; l <= L; ++l) {
      if (!grads.precision_defined[static_cast<std::size_t>(l)]) continue;
      net.layers[static_cast<std::size_t>(l)].precision.apply_update(
          grads.d_precision[static_cast<std::size_t>(l)], alpha_s);
    }
  }
  return grads;
}

/// Clamp + init + u_m parallel updates. Shared by training, inference and
/// evaluation; inference paths pass alpha_t = 0. `data_layer` selects the
/// clamping orientation: 0 for the generative modes (observations at the
/// data layer), depth() for the discriminative supervised mode
/// (observations at the deepest layer, targets at layer 0).
StepReport run_inner_loop(PCNetwork& net, const Matrix& features, const Matrix* labels,
                          const TrainingConfig& config, double alpha_t, int data_layer,
                          int step_index, const MetricsSink& sink, int epoch,
                          int batch_index) {
  // Release both ends before re-clamping so a batch-size change (e.g. the
  // last partial minibatch) does not trip the clamp-conflict check.
  unclamp_layer(net, 0);
  unclamp_layer(net, net.depth());
  clamp_layer(net, data_layer, features);
  if (labels != nullptr) {
    clamp_layer(net, data_layer == 0 ? net.depth() : 0, *labels);
  }
  check_finite_state(net);
  init_activities(net, config.activity_init, mix_seed(config.seed, 0x1417 + static_cast<std::uint64_t>(step_index)),
                  config.sigma_init);

  StepReport report;
  report.step_index = step_index;
  report.energy_before = total_free_energy(net).total;

  for (int iter = 0; iter < config.u_m; ++iter) {
    const NetworkGradients grads = apply_parallel_update(
        net, config.alpha_m, config.alpha_s, alpha_t, config.update_precision);
    check_finite_state(net);
    report.grad_norm_mu = grads.mu_norm();
    report.grad_norm_theta = grads.theta_norm();
    report.grad_norm_pi = grads.precision_norm();
    report.inner_iterations = iter + 1;

    if (sink) {
      const EnergyReport energy = total_free_energy(net);
      MetricsRow row;
      row.epoch = epoch;
      row.batch = batch_index;
      row.inner_iter = iter;
      row.total_energy = energy.total;
      row.per_layer_energy = energy.per_layer;
      row.grad_norm_mu = report.grad_norm_mu;
      row.grad_norm_theta = report.grad_norm_theta;
      row.grad_norm_pi = report.grad_norm_pi;
      sink(row);
    }
    if (config.early_stop_grad_norm > 0.0 &&
        report.grad_norm_mu <= config.early_stop_grad_norm) {
      break;
    }
  }

  const EnergyReport final_energy = total_free_energy(net);
  report.energy_after = final_energy.total;
  report.per_layer_energy = final_energy.per_layer;
  backward_pass(net);  // leave stored errors in sync with final state
  return report;
}

double argmax_accuracy(const Matrix& cause, const Matrix& labels) {
  int hits = 0;
  for (Eigen::Index r = 0; r < cause.rows(); ++r) {
    Eigen::Index predicted = 0;
    Eigen::Index truth = 0;
    cause.row(r).maxCoeff(&predicted);
    labels.row(r).maxCoeff(&truth);
    if (predicted == truth) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(cause.rows());
}

}  // namespace

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "supervised") return TrainMode::kSupervised;
  if (s == "unsupervised") return TrainMode::kUnsupervised;
  if (s == "inference_only") return TrainMode::kInferenceOnly;
  throw ConfigError("unknown training mode: " + s);
}

std::string train_mode_to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kSupervised: return "supervised";
    case TrainMode::kUnsupervised: return "unsupervised";
    case TrainMode::kInferenceOnly: return "inference_only";
  }
  return "supervised";
}

void TrainingConfig::validate() const {
  if (alpha_m < 0.0 || alpha_s < 0.0 || alpha_t < 0.0) {
    throw ConfigError("learning rates must be non-negative");
  }
  if (u_m < 1) throw ConfigError("u_m must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (sigma_init < 0.0) throw ConfigError("sigma_init must be non-negative");
  if (early_stop_grad_norm < 0.0) {
    throw ConfigError("early_stop_grad_norm must be non-negative");
  }
}

StepReport step_minibatch(PCNetwork& net, const Matrix& features, const Matrix* labels,
                          const TrainingConfig& config, int step_index,
                          const MetricsSink& sink, int epoch, int batch_index) {
  config.validate();
  // Supervised training runs the discriminative orientation (data and
  // targets exchanged): observations clamp the deepest layer, one-hot
  // targets clamp layer 0, whose error becomes the label prediction error.
  const int data_layer = config.mode == TrainMode::kSupervised ? net.depth() : 0;
  if (static_cast<int>(features.cols()) != net.layer_dim(data_layer)) {
    throw DimensionError("minibatch width does not match the data layer");
  }
  if (config.mode == TrainMode::kSupervised) {
    if (labels == nullptr) throw ConfigError("supervised mode needs labels");
    if (static_cast<int>(labels->cols()) != net.layer_dim(0)) {
      throw DimensionError("label width does not match the label layer");
    }
    if (labels->rows() != features.rows()) {
      throw DimensionError("label rows do not match feature rows");
    }
  }
  const Matrix* used_labels =
      config.mode == TrainMode::kSupervised ? labels : nullptr;
  const double alpha_t =
      config.mode == TrainMode::kInferenceOnly ? 0.0 : config.alpha_t;
  return run_inner_loop(net, features, used_labels, config, alpha_t, data_layer,
                        step_index, sink, epoch, batch_index);
}

TrainReport train(PCNetwork& net, const Dataset& dataset, const TrainingConfig& config,
                  const MetricsSink& sink) {
  config.validate();
  dataset.validate();
  if (dataset.size() == 0) throw ConfigError("dataset is empty");
  const auto started = std::chrono::steady_clock::now();

  TrainReport report;
  Rng shuffle_rng(mix_seed(config.seed, 0x5f0ff1eULL));
  int step_index = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Seeded Fisher-Yates; std::shuffle is implementation-defined and would
    // break cross-platform determinism.
    std::vector<int> order(static_cast<std::size_t>(dataset.size()));
    std::iota(order.begin(), order.end(), 0);
    for (int i = dataset.size() - 1; i > 0; --i) {
      const int j = static_cast<int>(
          shuffle_rng.below(static_cast<std::uint64_t>(i) + 1));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }

    double energy_sum = 0.0;
    int batches = 0;
    for (int begin = 0; begin < dataset.size(); begin += config.batch_size) {
      const int count = std::min(config.batch_size, dataset.size() - begin);
      Matrix features(count, dataset.dim());
      Matrix labels;
      if (dataset.has_labels()) labels = Matrix(count, dataset.label_dim());
      for (int i = 0; i < count; ++i) {
        const int src = order[static_cast<std::size_t>(begin + i)];
        features.row(i) = dataset.features.row(src);
        if (dataset.has_labels()) labels.row(i) = dataset.labels.row(src);
      }
      StepReport step = step_minibatch(
          net, features, dataset.has_labels() ? &labels : nullptr, config, step_index,
          sink, epoch, batches);
      energy_sum += step.energy_after;
      report.steps.push_back(std::move(step));
      ++step_index;
      ++batches;
    }

    EpochSummary summary;
    summary.epoch = epoch;
    summary.mean_energy = batches > 0 ? energy_sum / batches : 0.0;
    if (config.epoch_metrics) {
      const Metrics metrics = evaluate(net, dataset, config);
      summary.metric = metrics.accuracy.has_value() ? metrics.accuracy
                                                    : metrics.reconstruction_error;
    }
    report.epochs.push_back(summary);
  }

  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

InferResult infer(PCNetwork& net, const Matrix& data, const TrainingConfig& config,
                  int data_layer) {
  config.validate();
  if (config.mode != TrainMode::kInferenceOnly) {
    throw ConfigError("infer requires mode = inference_only");
  }
  if (data.rows() < 1) throw ConfigError("inference needs at least one datum");
  if (data_layer != 0 && data_layer != net.depth()) {
    throw DimensionError("inference clamps either the data layer or the deepest layer");
  }
  run_inner_loop(net, data, nullptr, config, /*alpha_t=*/0.0, data_layer,
                 /*step_index=*/0, nullptr, 0, 0);
  InferResult result;
  for (const auto& layer : net.layers) result.activities.push_back(layer.mu);
  result.energy = total_free_energy(net);
  result.row_energy = per_row_energy(net);
  return result;
}

Metrics evaluate(PCNetwork net, const Dataset& dataset, const TrainingConfig& config) {
  Metrics metrics;
  metrics.mode = config.mode;
  metrics.n = dataset.size();
  if (dataset.size() == 0) throw ConfigError("cannot evaluate an empty dataset");

  if (config.mode == TrainMode::kSupervised) {
    if (!dataset.has_labels()) {
      throw ConfigError("accuracy requested on an unlabeled dataset");
    }
    if (dataset.label_dim() != net.layer_dim(0)) {
      throw DimensionError("label width does not match the label layer");
    }
  }

  // Inference with frozen weights and precisions: clamp the data, relax
  // activities, read the converged state. Supervised nets clamp at the
  // deepest layer and read the inferred label layer.
  TrainingConfig inference = config;
  inference.mode = TrainMode::kInferenceOnly;
  inference.update_precision = false;
  const int data_layer = config.mode == TrainMode::kSupervised ? net.depth() : 0;
  const InferResult result = infer(net, dataset.features, inference, data_layer);

  if (config.mode == TrainMode::kSupervised) {
    metrics.accuracy = argmax_accuracy(result.activities.front(), dataset.labels);
  } else {
    const Matrix reconstruction =
        predict(net.predictors.front(), net.layers[1].mu);
    const Matrix diff = dataset.features - reconstruction;
    metrics.reconstruction_error =
        diff.squaredNorm() / static_cast<double>(dataset.size());
  }
  return metrics;
}

}  // namespace predprop
