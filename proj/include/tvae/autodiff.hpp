#pragma once

// Reverse-mode automatic differentiation over dense row-major tensors.
//
// A Tensor is a cheap handle onto a graph node. Operations build the graph
// as they compute forward values; backward() linearizes the graph reachable
// from a scalar loss into a Tape (topological order) and replays the adjoint
// rules in reverse. A graph is single-use: after backward() the interior
// nodes drop their adjoint closures, and a second backward() on the same
// loss raises ContractError. Leaf parameters keep their values and
// accumulate gradients (+=) until zero_grad() is called.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tvae/rng.hpp"

namespace tvae::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until needed
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  /// Non-differentiable input.
  static Tensor constant(Shape shape, std::vector<double> data);
  static Tensor constant(Shape shape, double fill);
  /// Trainable leaf.
  static Tensor parameter(Shape shape, std::vector<double> data);
  static Tensor scalar(double v) { return constant({1, 1}, v); }
  /// Row vector (1 x n) from values.
  static Tensor row(std::vector<double> data);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  /// Leading extent for rank-2 tensors.
  std::size_t rows() const;
  /// Trailing extent for rank-2 tensors.
  std::size_t cols() const;

  std::span<const double> value() const { return node_->value; }
  std::span<double> mutable_value() { return node_->value; }
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad();

  /// Same values, detached from the graph.
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Topological record of the graph reachable from a root.
class Tape {
 public:
  static Tape record(const Tensor& root);
  std::size_t size() const { return order_.size(); }
  std::span<Node* const> order() const { return order_; }

 private:
  std::vector<Node*> order_;  // inputs precede consumers
};

/// d loss / d theta into every requires_grad leaf reachable from loss.
void backward(const Tensor& loss);

/// Creates a graph node from a forward value and adjoint rule; used by
/// modules that register their own primitives (e.g. implicit gamma samples).
Tensor make_result(Shape shape, std::vector<double> value,
                   std::vector<Tensor> inputs,
                   std::function<void(Node& out, std::span<Node* const> in)> adjoint);

// ---- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
/// a (m x n) + b (1 x n), row-broadcast.
Tensor add_row(const Tensor& a, const Tensor& b);
/// a (m x n) * c (m x 1), column-broadcast.
Tensor mul_col(const Tensor& a, const Tensor& c);

Tensor concat(std::span<const Tensor> parts);  // along last axis
Tensor concat(std::initializer_list<Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);  // along first axis
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor lgamma(const Tensor& a);
Tensor digamma(const Tensor& a);
/// Elementwise clamp; gradient passes only strictly inside [lo, hi].
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor softmax(const Tensor& a);      // along last axis
Tensor log_softmax(const Tensor& a);  // along last axis
/// Rows divided by their sums.
Tensor normalize_rows(const Tensor& a);

Tensor sum(const Tensor& a);   // -> 1 x 1
Tensor mean(const Tensor& a);  // -> 1 x 1
Tensor sum_rows(const Tensor& a);  // m x n -> m x 1
Tensor sum_cols(const Tensor& a);  // m x n -> 1 x n

/// Rows of table (V x d) selected by ids; throws on out-of-range id.
Tensor embedding(const Tensor& table, std::span<const int> ids);
/// out[i] = a[i, idx[i]]; result m x 1.
Tensor gather_cols(const Tensor& a, std::span<const int> idx);

/// mask * a + (1 - mask) * b with a constant mask of a's shape.
Tensor blend(std::span<const double> mask, const Tensor& a, const Tensor& b);

/// Inverted dropout with keep-probability 1-p. Identity when !train.
Tensor dropout(const Tensor& a, double p, bool train, Rng* rng);

// Operator sugar for the arithmetic above.
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace tvae::ad
