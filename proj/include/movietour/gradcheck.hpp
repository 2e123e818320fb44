#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "movietour/tensor.hpp"

namespace movietour {

template <typename T>
struct GradCheckResult {
  T max_rel_error = T(0);
  std::size_t worst_index = 0;
  T worst_analytic = T(0);
  T worst_numeric = T(0);
  std::size_t checked = 0;
};

template <typename T>
using ScalarFn = std::function<T(const Tensor<T>&)>;

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) compared
/// with `analytic` element by element, scored as
/// |a - n| / max(1e-8, |a| + |n|). Checks every element unless `indices`
/// restricts the sweep. Throws NumericError if f is non-finite anywhere.
template <typename T>
GradCheckResult<T> finite_diff_check(const ScalarFn<T>& f, const Tensor<T>& x, std::span<const T> analytic, T eps,
                                     std::optional<std::span<const std::size_t>> indices = std::nullopt);

/// Relative error metric used by finite_diff_check.
template <typename T>
T relative_error(T analytic, T numeric);

extern template GradCheckResult<float> finite_diff_check(const ScalarFn<float>&, const Tensor<float>&,
                                                         std::span<const float>, float,
                                                         std::optional<std::span<const std::size_t>>);
extern template GradCheckResult<double> finite_diff_check(const ScalarFn<double>&, const Tensor<double>&,
                                                          std::span<const double>, double,
                                                          std::optional<std::span<const std::size_t>>);

}  // namespace movietour
