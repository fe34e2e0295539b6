#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "msamil/numcore/tensor.hpp"

namespace msamil::numcore {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

/// Compares reverse-mode gradients of f against central differences
/// (f(x+h) - f(x-h)) / 2h, coordinate by coordinate. Relative error uses the
/// denominator max(|analytic|, |numeric|, 1e-8). f must rebuild its graph from
/// the current parameter values on every call.
///
/// max_coords_per_param = 0 checks every coordinate; otherwise a seeded subset.
GradCheckResult finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                                  double h = 1e-4, std::size_t max_coords_per_param = 0,
                                  std::uint64_t seed = 0);

}  // namespace msamil::numcore
