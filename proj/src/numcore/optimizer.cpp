#include "msamil/numcore/optimizer.hpp"

#include <algorithm>

#include "msamil/errors.hpp"

namespace msamil::numcore {

Sgd::Sgd(std::vector<Tensor> params, double learning_rate, std::size_t accum_steps)
    : params_(std::move(params)), lr_(learning_rate), accum_steps_(accum_steps) {
  if (accum_steps_ == 0) throw Error(ErrorKind::Config, "accum_steps must be positive");
  pending_.reserve(params_.size());
  for (const auto& p : params_) pending_.emplace_back(p.size(), 0.0);
}

void Sgd::accumulate() {
  if (count_ >= accum_steps_) {
    throw Error(ErrorKind::Protocol, "accumulate() called " + std::to_string(count_ + 1) +
                                         " times with accum_steps=" + std::to_string(accum_steps_));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto& acc = pending_[i];
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g[j];
    p.clear_grad();
  }
  ++count_;
}

void Sgd::step() {
  if (count_ != accum_steps_) {
    throw Error(ErrorKind::Protocol, "step() after " + std::to_string(count_) + " accumulations; expected " +
                                         std::to_string(accum_steps_));
  }
  const double k = static_cast<double>(accum_steps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto values = params_[i].mutable_data();
    auto& acc = pending_[i];
    for (std::size_t j = 0; j < acc.size(); ++j) values[j] -= lr_ * (acc[j] / k);
    std::fill(acc.begin(), acc.end(), 0.0);
  }
  count_ = 0;
}

bool Sgd::accumulate_and_step() {
  accumulate();
  if (count_ < accum_steps_) return false;
  step();
  return true;
}

}  // namespace msamil::numcore
