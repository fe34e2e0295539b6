#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace msamil::numcore {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

// One recorded op: the inputs it read and the rule that pushes the output's
// gradient back into them.
struct Node {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty when absent
  bool requires_grad = false;
  std::shared_ptr<Node> node;

  std::vector<double>& ensure_grad();
};

/// Dense row-major float64 array with an optional gradient.
///
/// Tensor is a handle: copies alias the same storage, which is how parameters
/// are shared between a parameter store and the graphs that read them. Use
/// clone() or detach() for an independent copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row(std::span<const double> values);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t dim(std::size_t i) const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double at(std::size_t i, std::size_t j) const;
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();
  void clear_grad();

  // Reverse-mode sweep from this scalar; every requires_grad tensor reached
  // ends with a populated grad.
  void backward() const;

  Tensor detach() const;
  Tensor clone() const { return detach(); }

  bool defined() const { return static_cast<bool>(impl_); }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  static Tensor wrap(std::shared_ptr<TensorImpl> impl);

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Graph recording is per thread and off by default. Training code opens a
// RecordGraph scope; inference runs with nothing recorded.
bool recording();

class RecordGraph {
 public:
  RecordGraph();
  ~RecordGraph();
  RecordGraph(const RecordGraph&) = delete;
  RecordGraph& operator=(const RecordGraph&) = delete;

 private:
  bool previous_;
};

class NoGraph {
 public:
  NoGraph();
  ~NoGraph();
  NoGraph(const NoGraph&) = delete;
  NoGraph& operator=(const NoGraph&) = delete;

 private:
  bool previous_;
};

namespace detail {
// Builds an op result; attaches a graph node when recording and any input needs a gradient.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward);
}  // namespace detail

}  // namespace msamil::numcore
