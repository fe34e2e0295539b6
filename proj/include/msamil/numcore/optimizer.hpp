#pragma once

#include <cstddef>
#include <vector>

#include "msamil/numcore/tensor.hpp"

namespace msamil::numcore {

/// Plain SGD with gradient accumulation.
///
/// accumulate() folds each parameter's current grad into a pending buffer and
/// clears the grad; parameters themselves are untouched. step() requires exactly
/// accum_steps accumulations and applies param -= lr * (pending / accum_steps),
/// i.e. the mean of the accumulated gradients.
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, double learning_rate, std::size_t accum_steps = 1);

  void accumulate();
  void step();
  // accumulate(), then step() once accum_steps gradients are pending. Returns true if it stepped.
  bool accumulate_and_step();

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  std::size_t accum_steps() const { return accum_steps_; }
  std::size_t pending_count() const { return count_; }
  const std::vector<std::vector<double>>& pending() const { return pending_; }

 private:
  std::vector<Tensor> params_;
  double lr_;
  std::size_t accum_steps_;
  std::size_t count_ = 0;
  std::vector<std::vector<double>> pending_;
};

}  // namespace msamil::numcore
