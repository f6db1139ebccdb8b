/* Copyright 2026 The JDND Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Shared helpers: random tensors and finite-difference gradient checks.

#ifndef JDND_TESTS_TEST_UTIL_HPP_
#define JDND_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include "jdnd/autograd.hpp"
#include "jdnd/layers.hpp"
#include "jdnd/ops.hpp"
#include "jdnd/tensor.hpp"

namespace jdnd::test {

template <typename Scalar = double>
Tensor<Scalar> random_tensor(Shape shape, std::uint64_t seed, Scalar stddev = Scalar(1)) {
  Rng rng(seed);
  return Tensor<Scalar>::normal(std::move(shape), rng, stddev);
}

/// Σ y ⊙ R for a fixed random R: reduces any output to a scalar whose
/// gradient exercises every output element.
template <typename Scalar>
Var<Scalar> project(const Var<Scalar>& y, std::uint64_t seed = 99) {
  return sum(y * Var<Scalar>(random_tensor<Scalar>(y.shape(), seed)));
}

/// ‖g_analytic − g_central‖ / max(‖g_analytic‖, ‖g_central‖) for the
/// scalar `loss()` with respect to the leaf `x`.
template <typename F>
double gradient_error(F&& loss, Var<double> x, double eps = 1e-6) {
  x.zero_grad();
  backward(loss());
  const Tensor<double> analytic = x.grad();
  double diff = 0, na = 0, nn = 0;
  for (Index i = 0; i < x.size(); ++i) {
    const double v = x.value()[i];
    x.mutable_value()[i] = v + eps;
    const double lp = loss().value()[0];
    x.mutable_value()[i] = v - eps;
    const double lm = loss().value()[0];
    x.mutable_value()[i] = v;
    const double numeric = (lp - lm) / (2 * eps);
    diff += (numeric - analytic[i]) * (numeric - analytic[i]);
    na += analytic[i] * analytic[i];
    nn += numeric * numeric;
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-300});
}

template <typename Scalar>
Scalar max_abs_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return (a.array() - b.array()).abs().maxCoeff();
}

inline bool bit_equal(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() &&
         std::equal(a.data(), a.data() + a.size(), b.data(), [](float x, float y) {
           return std::memcmp(&x, &y, sizeof(float)) == 0;
         });
}

/// Fresh empty directory under the system temp dir.
inline std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("jdnd_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace jdnd::test

#endif  // JDND_TESTS_TEST_UTIL_HPP_
