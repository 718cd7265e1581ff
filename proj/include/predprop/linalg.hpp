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

#ifndef PREDPROP_LINALG_HPP_
#define PREDPROP_LINALG_HPP_

#include <Eigen/Dense>

namespace predprop {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

bool all_finite(const Matrix& m);

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Symmetrize, eigendecompose, clamp eigenvalues to [lambda_min, lambda_max],
/// reconstruct. Total on square matrices; the result is SPD whenever
/// lambda_min > 0.
Matrix project_spd(const Matrix& m, double lambda_min, double lambda_max);

/// Largest eigenvalue of a symmetric matrix.
double max_eigenvalue_sym(const Matrix& m);

/// Largest singular value.
double operator_norm(const Matrix& m);

/// Cosine of the angle between two matrices viewed as flat vectors.
/// Returns 0 when either norm is below `eps`; callers that care about the
/// all-zero case must test for it themselves.
double cosine_similarity(const Matrix& a, const Matrix& b, double eps = 1e-300);

}  // namespace predprop

#endif  // PREDPROP_LINALG_HPP_
