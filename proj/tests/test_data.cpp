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

#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "predprop/data.hpp"
#include "predprop/errors.hpp"

using namespace predprop;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("gen_xor: noiseless corners with correct labels") {
  const Dataset ds = gen_xor(4, 0.0, 1);
  REQUIRE(ds.size() == 4);
  // Corners cycle in a fixed order: (0,0), (0,1), (1,0), (1,1).
  CHECK(ds.features(0, 0) == 0.0);
  CHECK(ds.features(3, 1) == 1.0);
  // XOR labels, one-hot: class of (0,0) and (1,1) is 0, the others 1.
  CHECK(ds.labels(0, 0) == 1.0);
  CHECK(ds.labels(1, 1) == 1.0);
  CHECK(ds.labels(2, 1) == 1.0);
  CHECK(ds.labels(3, 0) == 1.0);
  ds.validate();
}

TEST_CASE("gen_xor: determinism and class balance") {
  const Dataset a = gen_xor(1000, 0.05, 9);
  const Dataset b = gen_xor(1000, 0.05, 9);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);

  int class1 = 0;
  for (int i = 0; i < a.size(); ++i) {
    if (a.labels(i, 1) == 1.0) ++class1;
  }
  CHECK(class1 >= 499);
  CHECK(class1 <= 501);

  CHECK_THROWS_AS(gen_xor(4, -0.1, 0), ConfigError);
  CHECK_THROWS_AS(gen_xor(3, 0.0, 0), ConfigError);
}

TEST_CASE("gen_gaussian_clusters: separation, labels, degenerate cases") {
  const Dataset ds = gen_gaussian_clusters(2, 2, 50, 10.0, 1.0, 3);
  REQUIRE(ds.size() == 100);
  CHECK(ds.labels.cols() == 2);
  ds.validate();

  // Midpoint-hyperplane oracle between the true means: with 10 sigma
  // separation, essentially every point lands on its own side.
  Vector mean0 = Vector::Zero(2), mean1 = Vector::Zero(2);
  int n0 = 0, n1 = 0;
  for (int i = 0; i < ds.size(); ++i) {
    if (ds.labels(i, 0) == 1.0) {
      mean0 += ds.features.row(i).transpose();
      ++n0;
    } else {
      mean1 += ds.features.row(i).transpose();
      ++n1;
    }
  }
  mean0 /= n0;
  mean1 /= n1;
  const Vector w = mean1 - mean0;
  const double mid = w.dot((mean0 + mean1) / 2.0);
  int correct = 0;
  for (int i = 0; i < ds.size(); ++i) {
    const double side = w.dot(ds.features.row(i).transpose()) - mid;
    const int predicted = side > 0 ? 1 : 0;
    const int truth = ds.labels(i, 1) == 1.0 ? 1 : 0;
    if (predicted == truth) ++correct;
  }
  CHECK(static_cast<double>(correct) / ds.size() >= 0.999);

  // k = 1: all labels identical.
  const Dataset one = gen_gaussian_clusters(1, 2, 10, 1.0, 0.5, 4);
  CHECK(one.labels.col(0).sum() == doctest::Approx(10.0));

  // sigma = 0: all points sit on their cluster mean.
  const Dataset degenerate = gen_gaussian_clusters(2, 2, 5, 3.0, 0.0, 5);
  for (int i = 2; i < degenerate.size(); ++i) {
    CHECK((degenerate.features.row(i) - degenerate.features.row(i % 2)).norm() == 0.0);
  }

  // Infeasible packing: many clusters at huge separation in 1d within the
  // sampling box.
  CHECK_THROWS_AS(gen_gaussian_clusters(64, 1, 1, 1000.0, 0.1, 6), ConfigError);
}

TEST_CASE("gen_two_factor: generative consistency and linear recoverability") {
  const Dataset ds = gen_two_factor(200, 12);
  REQUIRE(ds.size() == 200);
  REQUIRE(ds.has_factors());
  CHECK(ds.features.cols() == kTwoFactorObservationDim);

  // Stored factors reproduce the observations through the stored map.
  const Matrix a = two_factor_map(12);
  const Matrix reconstructed = (ds.factors * a.transpose()).cwiseMax(0.0);
  CHECK((reconstructed - ds.features).cwiseAbs().maxCoeff() == 0.0);

  // Determinism.
  const Dataset again = gen_two_factor(200, 12);
  CHECK(again.features == ds.features);

  // Least-squares oracle: observations linearly recover the factors.
  Matrix design(ds.size(), kTwoFactorObservationDim + 1);
  design.leftCols(kTwoFactorObservationDim) = ds.features;
  design.col(kTwoFactorObservationDim).setOnes();
  for (int f = 0; f < 2; ++f) {
    const Vector target = ds.factors.col(f);
    const Vector beta =
        design.colPivHouseholderQr().solve(target);
    const Vector residual = target - design * beta;
    const double ss_res = residual.squaredNorm();
    const double ss_tot = (target.array() - target.mean()).square().sum();
    const double r2 = 1.0 - ss_res / ss_tot;
    INFO("factor ", f, " R2 = ", r2);
    CHECK(r2 >= 0.9);
  }
}

TEST_CASE("CSV round-trip preserves every value") {
  const Dataset ds = gen_xor(4, 0.0, 1);
  const auto path = temp_file("predprop_test_xor.csv");
  save_csv(ds, path);
  const Dataset loaded = load_csv(path);
  CHECK(loaded.features == ds.features);
  CHECK(loaded.labels == ds.labels);
  CHECK(loaded.feature_names == ds.feature_names);
  std::filesystem::remove(path);
}

TEST_CASE("CSV round-trip keeps factor columns") {
  const Dataset ds = gen_two_factor(20, 3);
  const auto path = temp_file("predprop_test_factors.csv");
  save_csv(ds, path);
  const Dataset loaded = load_csv(path);
  CHECK(loaded.has_factors());
  CHECK(loaded.factors == ds.factors);
  CHECK(loaded.features == ds.features);
  CHECK_FALSE(loaded.has_labels());
  std::filesystem::remove(path);
}

TEST_CASE("CSV round-trip is exact for irrational values") {
  Dataset ds;
  ds.features = Matrix(2, 2);
  ds.features << 1.0 / 3.0, M_PI, -2.0 / 7.0, 1e-300;
  ds.feature_names = {"x_0", "x_1"};
  const auto path = temp_file("predprop_test_decimals.csv");
  save_csv(ds, path);
  const Dataset loaded = load_csv(path);
  CHECK(loaded.features == ds.features);  // bitwise, via shortest round-trip decimals
  std::filesystem::remove(path);
}

TEST_CASE("load_csv: errors carry line numbers; schema comes from the header") {
  const auto path = temp_file("predprop_test_bad.csv");
  {
    std::ofstream out(path);
    out << "x_0,x_1\n1.0,2.0\nabc,3.0\n";
  }
  try {
    load_csv(path);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 3);
    CHECK(e.offset_is_line());
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  {
    std::ofstream out(path);
    out << "x_0,x_1\n1.0\n";
  }
  CHECK_THROWS_AS(load_csv(path), ParseError);

  // No y_ columns: labels absent.
  {
    std::ofstream out(path);
    out << "x_0,x_1\n1.0,2.0\n";
  }
  const Dataset unlabeled = load_csv(path);
  CHECK_FALSE(unlabeled.has_labels());
  std::filesystem::remove(path);
}

TEST_CASE("normalize: standardize and minmax with inverse round trip") {
  const Dataset ds = gen_gaussian_clusters(2, 3, 40, 6.0, 1.5, 21);
  auto [standardized, params] = normalize(ds, NormalizeMode::kStandardize);
  for (int c = 0; c < standardized.dim(); ++c) {
    const auto col = standardized.features.col(c);
    CHECK(std::fabs(col.mean()) <= 1e-12);
    const double var =
        (col.array() - col.mean()).square().sum() / (standardized.size() - 1);
    CHECK(std::fabs(var - 1.0) <= 1e-12);
  }
  const Dataset restored = denormalize(standardized, params);
  CHECK((restored.features - ds.features).cwiseAbs().maxCoeff() <= 1e-12);

  auto [scaled, minmax_params] = normalize(ds, NormalizeMode::kMinmax);
  CHECK(scaled.features.minCoeff() >= 0.0);
  CHECK(scaled.features.maxCoeff() <= 1.0);

  // Constant column passes through with a warning.
  Dataset constant;
  constant.features = Matrix::Ones(5, 2);
  constant.feature_names = {"x_0", "x_1"};
  auto [unchanged, warn_params] = normalize(constant, NormalizeMode::kStandardize);
  CHECK(unchanged.features == constant.features);
  CHECK(warn_params.warnings.size() == 2);
}
