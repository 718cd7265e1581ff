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
// Training schedule: minibatch loop, one backward prediction pass, u_m
// forward error-propagation passes per minibatch. Within one forward pass
// all variables (activities, precisions, weights) step in parallel from the
// same error snapshot (Jacobi style); precisions are SPD-projected after
// every update. Clamped layers never receive activity updates.
//
// Orientations. Unsupervised and inference-only modes clamp observations at
// layer 0, the generative orientation, and the deepest layer carries the
// inferred causes. Supervised mode is discriminative: data and targets are
// exchanged, observations clamp the deepest layer and one-hot targets clamp
// layer 0, so the layer-0 error is the label prediction error and the
// reversed network reads as an ordinary classifier (ReLU hidden, linear
// label readout). Classification infers layer 0 from data clamped at the
// deep end.

#ifndef PREDPROP_TRAIN_HPP_
#define PREDPROP_TRAIN_HPP_

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "predprop/data.hpp"
#include "predprop/dynamics.hpp"
#include "predprop/network.hpp"

namespace predprop {

enum class TrainMode { kSupervised, kUnsupervised, kInferenceOnly };

TrainMode train_mode_from_string(const std::string& s);
std::string train_mode_to_string(TrainMode m);

struct TrainingConfig {
  double alpha_m = 1.0;   // activity learning rate
  double alpha_s = 1.0;   // precision learning rate
  double alpha_t = 0.01;  // weight learning rate
  int u_m = 20;           // inner updates per minibatch
  int batch_size = 32;
  int epochs = 10;
  TrainMode mode = TrainMode::kSupervised;
  bool update_precision = true;
  ActivityInit activity_init = ActivityInit::kPrior;
  double sigma_init = kDefaultSigmaInit;
  std::uint64_t seed = 0;
  // 0 disables; set > 0 (e.g. 1e-8) to stop the inner loop early once the
  // activity gradient norm falls below it.
  double early_stop_grad_norm = 0.0;
  // Recompute the train-set metric (accuracy / reconstruction error) after
  // each epoch; costs one extra inference pass per epoch.
  bool epoch_metrics = false;

  void validate() const;  // throws ConfigError
};

struct StepReport {
  double energy_before = 0.0;
  double energy_after = 0.0;
  std::vector<double> per_layer_energy;  // at the end of the step
  double grad_norm_mu = 0.0;             // norms of the last applied snapshot
  double grad_norm_theta = 0.0;
  double grad_norm_pi = 0.0;
  int step_index = 0;
  int inner_iterations = 0;
};

struct MetricsRow {
  int epoch = 0;
  int batch = 0;
  int inner_iter = 0;
  double total_energy = 0.0;
  std::vector<double> per_layer_energy;
  double grad_norm_mu = 0.0;
  double grad_norm_theta = 0.0;
  double grad_norm_pi = 0.0;
};

/// Receives one row per inner step; the CLI routes this into the metrics
/// CSV. Rows arrive in deterministic order.
using MetricsSink = std::function<void(const MetricsRow&)>;

struct EpochSummary {
  int epoch = 0;
  double mean_energy = 0.0;
  // Train-set accuracy (supervised) or reconstruction error (unsupervised)
  // when epoch_metrics is enabled.
  std::optional<double> metric;
};

struct TrainReport {
  std::vector<StepReport> steps;
  std::vector<EpochSummary> epochs;
  double wall_clock_seconds = 0.0;
  std::string checkpoint_path;  // filled by the CLI
};

/// One minibatch of the schedule: clamps data (and labels in supervised
/// mode), initializes activities, then runs u_m inner iterations. Labels
/// may be null outside supervised mode. Throws NumericalError naming the
/// offending variable when any state turns non-finite.
StepReport step_minibatch(PCNetwork& net, const Matrix& features, const Matrix* labels,
                          const TrainingConfig& config, int step_index = 0,
                          const MetricsSink& sink = nullptr, int epoch = 0,
                          int batch_index = 0);

/// Shuffles per epoch (seeded Fisher-Yates), iterates step_minibatch over
/// minibatches for config.epochs.
TrainReport train(PCNetwork& net, const Dataset& dataset, const TrainingConfig& config,
                  const MetricsSink& sink = nullptr);

struct InferResult {
  std::vector<Matrix> activities;  // converged activities of all layers
  EnergyReport energy;
  Vector row_energy;  // per-datum total energy
};

/// Inference-only pass: clamps the data, runs u_m activity (and optional
/// precision) updates with the weight learning rate forced to zero, and
/// returns the converged activities (the deepest being the inferred cause
/// or embedding). Requires config.mode == kInferenceOnly. `data_layer`
/// selects the clamped end: 0 (default, embeddings) or depth()
/// (discriminative nets, label inference at layer 0).
InferResult infer(PCNetwork& net, const Matrix& data, const TrainingConfig& config,
                  int data_layer = 0);

struct Metrics {
  TrainMode mode = TrainMode::kSupervised;
  std::optional<double> accuracy;
  std::optional<double> reconstruction_error;
  int n = 0;
};

/// Supervised: accuracy via argmax over the inferred label layer after
/// inference on data clamped at the deep end. Unsupervised: mean squared
/// reconstruction error ||o - f(theta, mu_converged)||^2 / n. Works on a
/// copy; the caller's network is untouched.
Metrics evaluate(PCNetwork net, const Dataset& dataset, const TrainingConfig& config);

}  // namespace predprop

#endif  // PREDPROP_TRAIN_HPP_
