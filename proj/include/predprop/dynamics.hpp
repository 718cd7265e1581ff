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
// Per-layer quantities and gradients: predictions, errors, free energy,
// activity/weight/precision update directions, SPD projection and Fisher
// diagnostics.
//
// Conventions (documented once, relied on everywhere):
//  * The free energy of one layer is the Gaussian negative log-density
//      E_l = mean_b 1/2 [ eps_b^T Pi eps_b - ln det Pi + d ln 2pi ],
//    a batch MEAN, and the network total is the sum over gap layers plus,
//    when the deepest layer is unclamped, the prior term for layer L.
//    Minimizing this total is the single objective of every update.
//  * All returned gradients are DESCENT directions on the total (i.e.
//    ascent on the negative free energy): apply as x += alpha * d_x.
//  * Weight and precision gradients are batch means, so learning rates are
//    batch-size invariant. Activity gradients are per-row gradients of the
//    per-row energy (each row is its own inference problem); relative to a
//    finite difference of the batch-mean total they carry a factor equal to
//    the batch size.
//  * 1/2 factors are absorbed into the learning rates.
//  * Every function here recomputes predictions and errors from the current
//    activities and weights; the stored epsilons are a reporting
//    convenience refreshed by backward_pass, so stale errors cannot leak
//    into a gradient.

#ifndef PREDPROP_DYNAMICS_HPP_
#define PREDPROP_DYNAMICS_HPP_

#include <vector>

#include "predprop/network.hpp"

namespace predprop {

struct EnergyReport {
  double total = 0.0;
  // One entry per layer 0..L; entry l < L is the gap-l error energy, entry L
  // is the prior energy (0 when layer L is clamped). total is their sum in
  // index order.
  std::vector<double> per_layer;
  bool includes_logdet = true;
};

/// Forward pass through one predictor with all intermediates retained.
/// Sublayers are applied back to front: inputs[k] feeds sublayer k,
/// preacts[k] = inputs[k] W_k^T (+ bias), and the output of sublayer k is
/// the input of sublayer k-1.
struct PredictorTrace {
  std::vector<Matrix> inputs;   // batch x in_k
  std::vector<Matrix> preacts;  // batch x out_k
  Matrix output;                // batch x d_l
};

/// Composition of the predictor's sublayers applied right-to-left (deepest
/// first): the backward prediction of the lower layer.
Matrix predict(const Predictor& pred, const Matrix& mu_upper);

PredictorTrace predict_trace(const Predictor& pred, const Matrix& mu_upper);

/// eps = mu - mu_hat, elementwise.
Matrix compute_error(const Matrix& mu, const Matrix& mu_hat);

/// Batch mean of 1/2 [eps^T Pi eps - ln det Pi + d ln 2pi]. Throws
/// NumericalError when the precision is not positive definite.
double layer_energy(const Matrix& epsilon, const Precision& precision,
                    bool include_logdet = true);

/// Same energy over a raw dense (possibly non-symmetric) precision matrix;
/// the determinant is taken by LU so off-symmetric probes are well defined.
double layer_energy_dense(const Matrix& epsilon, const Matrix& precision,
                          bool include_logdet = true);

/// Recomputes all prediction errors from the current activities and weights
/// and stores them in the layers (the backward pass of the schedule). The
/// deepest layer's error is taken against the prior when unclamped, zero
/// when clamped.
void backward_pass(PCNetwork& net);

/// Current prediction errors without mutating the network; index l < L is
/// the gap error, index L the prior error (zeros when layer L is clamped).
std::vector<Matrix> current_errors(const PCNetwork& net);

/// Free energy of the whole network, recomputed from scratch (stored
/// epsilons are ignored).
EnergyReport total_free_energy(const PCNetwork& net, bool include_logdet = true);

/// Per-row total energy (same terms as total_free_energy, without the batch
/// mean); used for per-datum reporting.
Vector per_row_energy(const PCNetwork& net, bool include_logdet = true);

/// Jacobian of the predictor output w.r.t. mu_upper at the current point,
/// one d_l x d_{l+1} matrix per batch row. ReLU contributes a {0,1}
/// diagonal mask per sublayer (subgradient 0 at exactly 0).
std::vector<Matrix> predictor_jacobian(const Predictor& pred, const Matrix& mu_upper);

struct ActivityGradient {
  Matrix d_mu_lower;  // batch x d_l
  Matrix d_mu_upper;  // batch x d_{l+1}
};

/// Descent directions contributed by gap l:
///   d_mu_lower = -Pi_l eps_l                    (layer l's own error term)
///   d_mu_upper = J^T (Pi_l eps_l) - Pi_{l+1} eps_{l+1}
/// where eps_{l+1} is the gap-(l+1) error, or the prior error when l+1 = L
/// and that layer is unclamped. Clamped layers receive zeros. The full
/// update for a layer m >= 1 is gap (m-1)'s d_mu_upper; layer 0's is gap
/// 0's d_mu_lower (summing both per-gap outputs would double-count).
ActivityGradient activity_gradient(const PCNetwork& net, int gap);

struct WeightGradient {
  std::vector<Matrix> d_weights;  // per sublayer, matching shapes
  std::vector<Vector> d_biases;   // per sublayer; empty vectors when no bias
};

/// Descent direction for gap l's predictor: the precision-weighted error
/// Pi_l eps_l chained backward through the sublayer stack (local chain rule
/// inside the predictor only), batch-averaged. For a single linear sublayer
/// this is exactly mean_b (Pi_l eps_l) mu_{l+1}^T.
WeightGradient weight_gradient(const PCNetwork& net, int gap);

/// d_Pi = Sigma - mean_b(eps eps^T) with Sigma = Pi^{-1}, symmetrized (in
/// diagonal mode the off-diagonal entries are zero). Applying
/// Pi <- project_spd(Pi + alpha_s d_Pi) has fixed point
/// Pi = (mean eps eps^T)^{-1}, the error-covariance MLE.
Matrix precision_gradient(const Matrix& epsilon, const Precision& precision);

/// Per-gap gradient bundle: both activity directions, the predictor's
/// weight gradients and the lower layer's precision gradient.
struct LayerGradients {
  Matrix d_mu_lower;
  Matrix d_mu_upper;
  WeightGradient d_weights;
  Matrix d_precision;
};

LayerGradients gap_gradients(const PCNetwork& net, int gap);

/// Snapshot of every update direction, all computed from the same state so
/// the schedule can apply them in parallel (Jacobi style).
struct NetworkGradients {
  std::vector<Matrix> d_mu;              // per layer 0..L; zeros for clamped layers
  std::vector<WeightGradient> d_theta;   // per gap 0..L-1
  std::vector<Matrix> d_precision;       // per layer 0..L; layer L <- prior error
  std::vector<bool> precision_defined;   // false when the layer has no error term

  double mu_norm() const;
  double theta_norm() const;
  double precision_norm() const;
};

NetworkGradients network_gradients(const PCNetwork& net);

/// Fisher information of the free energy w.r.t. a layer's activities: the
/// layer's stored precision, returned as a dense matrix.
Matrix fisher_activity(const PCNetwork& net, int layer);

/// Fisher information w.r.t. a single linear sublayer's weights, assembled
/// as the Kronecker product Pi_l (x) mean_b(mu_{l+1} mu_{l+1}^T). Diagnostic
/// only; throws ConfigError for multi-sublayer or nonlinear predictors.
Matrix fisher_weights(const PCNetwork& net, int gap);

/// Conservative activity step size 1 / (max_l lambda_max(Pi_l) *
/// (1 + max_l ||J_l||^2)), with ||J_l|| bounded by the product of sublayer
/// operator norms so the bound holds for every ReLU mask configuration.
/// Pure activity steps no larger than this do not increase the total free
/// energy.
double descent_step_bound(const PCNetwork& net);

}  // namespace predprop

#endif  // PREDPROP_DYNAMICS_HPP_
