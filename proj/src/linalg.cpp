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

#include "predprop/linalg.hpp"

#include <cmath>

namespace predprop {

bool all_finite(const Matrix& m) {
  return m.allFinite();
}

Matrix project_spd(const Matrix& m, double lambda_min, double lambda_max) {
  const Matrix sym = symmetrize(m);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  Vector vals = eig.eigenvalues();
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    vals[i] = std::min(std::max(vals[i], lambda_min), lambda_max);
  }
  Matrix out = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
  // Mirror the upper triangle so the result is symmetric exactly, not just
  // up to rounding of the two reconstruction orders.
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = r + 1; c < out.cols(); ++c) out(c, r) = out(r, c);
  }
  return out;
}

double max_eigenvalue_sym(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(m));
  return eig.eigenvalues().maxCoeff();
}

double operator_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()[0];
}

double cosine_similarity(const Matrix& a, const Matrix& b, double eps) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na < eps || nb < eps) return 0.0;
  const double dot = (a.array() * b.array()).sum();
  return dot / (na * nb);
}

}  // namespace predprop
