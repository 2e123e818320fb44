#include "movietour/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "movietour/errors.hpp"

namespace movietour {

template <typename T>
T relative_error(T analytic, T numeric) {
  const T denom = std::max(T(1e-8), std::abs(analytic) + std::abs(numeric));
  return std::abs(analytic - numeric) / denom;
}

template <typename T>
GradCheckResult<T> finite_diff_check(const ScalarFn<T>& f, const Tensor<T>& x, std::span<const T> analytic, T eps,
                                     std::optional<std::span<const std::size_t>> indices) {
  if (!(eps > T(0))) throw UsageError("finite_diff_check needs eps > 0");
  if (analytic.size() != x.numel()) {
    throw DimensionError(fmt::format("analytic gradient length {} does not match tensor length {}",
                                     analytic.size(), x.numel()));
  }
  GradCheckResult<T> res;
  Tensor<T> probe = x;
  auto eval = [&](std::size_t i) {
    const T v = f(probe);
    if (!std::isfinite(v)) throw NumericError(fmt::format("function value is not finite when perturbing element {}", i));
    return v;
  };
  auto check_one = [&](std::size_t i) {
    if (i >= x.numel()) throw UsageError(fmt::format("gradient check index {} out of range", i));
    const T orig = probe[i];
    probe[i] = orig + eps;
    const T plus = eval(i);
    probe[i] = orig - eps;
    const T minus = eval(i);
    probe[i] = orig;
    const T numeric = (plus - minus) / (T(2) * eps);
    const T err = relative_error(analytic[i], numeric);
    if (err > res.max_rel_error || res.checked == 0) {
      res.max_rel_error = err;
      res.worst_index = i;
      res.worst_analytic = analytic[i];
      res.worst_numeric = numeric;
    }
    ++res.checked;
  };
  if (indices) {
    for (std::size_t i : *indices) check_one(i);
  } else {
    for (std::size_t i = 0; i < x.numel(); ++i) check_one(i);
  }
  return res;
}

template float relative_error(float, float);
template double relative_error(double, double);
template GradCheckResult<float> finite_diff_check(const ScalarFn<float>&, const Tensor<float>&,
                                                  std::span<const float>, float,
                                                  std::optional<std::span<const std::size_t>>);
template GradCheckResult<double> finite_diff_check(const ScalarFn<double>&, const Tensor<double>&,
                                                   std::span<const double>, double,
                                                   std::optional<std::span<const std::size_t>>);

}  // namespace movietour
