#include "msamil/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <vector>

#include "msamil/errors.hpp"
#include "msamil/rng.hpp"

namespace msamil::numcore {

GradCheckResult finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> params, double h,
                                  std::size_t max_coords_per_param, std::uint64_t seed) {
  if (!(h > 0)) throw Error(ErrorKind::Config, "finite_diff_check: h must be positive");

  for (auto& p : params) p.clear_grad();
  std::vector<std::vector<double>> analytic;
  {
    RecordGraph rec;
    const Tensor loss = f();
    loss.backward();
  }
  for (auto& p : params) {
    analytic.emplace_back(p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                       : std::vector<double>(p.size(), 0.0));
    p.clear_grad();
  }

  NoGraph quiet;
  const double base1 = f().item();
  const double base2 = f().item();
  if (std::memcmp(&base1, &base2, sizeof(double)) != 0) {
    throw Error(ErrorKind::Determinism, "objective returned different values on repeated evaluation");
  }

  GradCheckResult result;
  Rng rng(seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].mutable_data();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords_per_param > 0 && coords.size() > max_coords_per_param) {
      rng.shuffle(coords);
      coords.resize(max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t idx : coords) {
      const double saved = values[idx];
      values[idx] = saved + h;
      const double plus = f().item();
      values[idx] = saved - h;
      const double minus = f().item();
      values[idx] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic[pi][idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      ++result.coords_checked;
      if (!(err <= result.max_rel_error)) {
        result.max_rel_error = std::isnan(err) ? INFINITY : err;
        result.worst_param = pi;
        result.worst_index = idx;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace msamil::numcore
