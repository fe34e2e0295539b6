#include "msamil/numcore/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "msamil/errors.hpp"

namespace msamil::numcore {

namespace {
thread_local bool g_recording = false;
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::vector<double>& TensorImpl::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor() : impl_(std::make_shared<TensorImpl>()) { impl_->data.assign(1, 0.0); }

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<TensorImpl>()) {
  impl_->data.assign(shape_size(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<TensorImpl>()) {
  if (values.size() != shape_size(shape)) {
    throw Error(ErrorKind::Dimension, "data length " + std::to_string(values.size()) +
                                          " does not match shape " + shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor({}, std::vector<double>{value}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw Error(ErrorKind::Dimension, "ragged matrix literal");
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(v));
}

Tensor Tensor::row(std::span<const double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::wrap(std::shared_ptr<TensorImpl> impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::size() const { return impl_->data.size(); }

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= impl_->shape.size()) {
    throw Error(ErrorKind::Dimension, "axis " + std::to_string(i) + " out of range for " +
                                          shape_str(impl_->shape));
  }
  return impl_->shape[i];
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw Error(ErrorKind::Dimension, "expected matrix, got " + shape_str(shape()));
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw Error(ErrorKind::Dimension, "expected matrix, got " + shape_str(shape()));
  return impl_->shape[1];
}

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::at(std::size_t i, std::size_t j) const { return impl_->data[i * cols() + j]; }

double Tensor::item() const {
  if (size() != 1) throw Error(ErrorKind::Dimension, "item() on " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }
void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }
void Tensor::clear_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data); }

void Tensor::backward() const {
  if (size() != 1) throw Error(ErrorKind::Dimension, "backward() needs a scalar, got " + shape_str(shape()));

  // Iterative post-order DFS gives a topological order with each node once.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    if (t->node && next < t->node->inputs.size()) {
      TensorImpl* child = t->node->inputs[next++].get();
      if (seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(t);
    stack.pop_back();
  }

  for (TensorImpl* t : order) {
    if (t->requires_grad) t->ensure_grad();
  }
  impl_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    if (t->node && t->node->backward) t->node->backward(*t);
  }
}

bool recording() { return g_recording; }

RecordGraph::RecordGraph() : previous_(g_recording) { g_recording = true; }
RecordGraph::~RecordGraph() { g_recording = previous_; }
NoGraph::NoGraph() : previous_(g_recording) { g_recording = false; }
NoGraph::~NoGraph() { g_recording = previous_; }

namespace detail {

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward) {
  Tensor out(std::move(shape), std::move(data));
  if (!g_recording) return out;
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (!needs) return out;
  auto node = std::make_shared<Node>();
  node->inputs.reserve(inputs.size());
  for (const auto& in : inputs) node->inputs.push_back(in.impl());
  node->backward = std::move(backward);
  out.impl()->node = std::move(node);
  out.impl()->requires_grad = true;
  return out;
}

}  // namespace detail

}  // namespace msamil::numcore
