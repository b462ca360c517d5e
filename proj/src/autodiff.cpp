#include "tvae/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "tvae/errors.hpp"
#include "tvae/special_functions.hpp"

namespace tvae::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

void Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_str(shape));
  }
}

void check_finite(std::span<const double> v, const char* where) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value in ") + where);
  }
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(a.shape()));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// Shorthand for grad buffers inside adjoint rules.
inline std::vector<double>& g(Node* n) {
  n->ensure_grad();
  return n->grad;
}

// C (m x n) += A (m x k) * B (k x n)
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C (m x k) += A (m x n) * B^T, B is (k x n)
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * n;
    double* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += ai[j] * bp[j];
      ci[p] += acc;
    }
  }
}

// C (k x n) += A^T * B, A is (m x k), B is (m x n)
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.size());
  auto av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  return make_result(a.shape(), std::move(out), {a}, [deriv](Node& o, std::span<Node* const> in) {
    Node* x = in[0];
    if (!x->requires_grad) return;
    auto& gx = g(x);
    for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i] * deriv(x->value[i], o.value[i]);
  });
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
  check_shape(shape);
  if (numel(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
  }
  check_finite(data, "constant");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  return Tensor(std::move(n));
}

Tensor Tensor::constant(Shape shape, double fill) {
  const auto n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, fill));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  Tensor t = constant(std::move(shape), std::move(data));
  t.node_->requires_grad = true;
  return t;
}

Tensor Tensor::row(std::vector<double> data) {
  const auto n = data.size();
  return constant({1, n}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows(): tensor is not rank 2: " + shape_str(shape()));
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols(): tensor is not rank 2: " + shape_str(shape()));
  return shape()[1];
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item(): tensor is not a scalar: " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return constant(shape(), node_->value); }

// ---- graph ----------------------------------------------------------------

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node& out, std::span<Node* const> in)> adjoint) {
  check_shape(shape);
  if (numel(shape) != value.size()) throw DimensionError("make_result: value size does not match shape");
  check_finite(value, "operation output");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->leaf = false;
  bool any = false;
  for (const auto& t : inputs) {
    if (t.node()->consumed) throw ContractError("operation input belongs to a graph that was already differentiated");
    any = any || t.requires_grad();
  }
  if (any) {
    n->requires_grad = true;
    std::vector<Node*> raw;
    raw.reserve(inputs.size());
    for (auto& t : inputs) {
      raw.push_back(t.node());
      n->parents.push_back(t.node_ptr());
    }
    n->backward = [adjoint = std::move(adjoint), raw = std::move(raw)](Node& self) { adjoint(self, raw); };
  }
  return Tensor(std::move(n));
}

Tape Tape::record(const Tensor& root) {
  Tape tape;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS: every node appears after all of its inputs.
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      tape.order_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward: undefined loss");
  if (loss.size() != 1) throw ContractError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
  Node* root = loss.node();
  if (root->consumed) throw ContractError("backward: graph already differentiated; re-run the forward pass");
  if (!root->requires_grad) throw ContractError("backward: loss does not depend on any parameter");
  check_finite(root->value, "loss");

  Tape tape = Tape::record(loss);
  for (Node* n : tape.order()) {
    if (!n->leaf) n->grad.assign(n->value.size(), 0.0);
  }
  root->grad[0] += 1.0;
  auto order = tape.order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
  // Clearing parents frees interior nodes that `order` still points at, so
  // the leaves are collected (and kept alive) before the graph is released.
  std::vector<Node*> leaves;
  for (Node* n : order) {
    if (n->leaf) leaves.push_back(n);
  }
  std::vector<std::shared_ptr<Node>> keep;
  for (Node* n : order) {
    for (const auto& p : n->parents) {
      if (p->leaf) keep.push_back(p);
    }
  }
  for (Node* n : order) {
    if (!n->leaf) {
      n->consumed = true;
      n->backward = nullptr;
      n->parents.clear();
    }
  }
  for (Node* n : leaves) check_finite(n->grad, "gradient");
}

// ---- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.value().data(), b.value().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& o, std::span<Node* const> in) {
    Node* x = in[0];
    Node* y = in[1];
    if (x->requires_grad) gemm_nt(o.grad.data(), y->value.data(), g(x).data(), m, n, k);
    if (y->requires_grad) gemm_tn(x->value.data(), o.grad.data(), g(y).data(), m, k, n);
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const auto m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto av = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_result({n, m}, std::move(out), {a}, [m, n](Node& o, std::span<Node* const> in) {
    if (!in[0]->requires_grad) return;
    auto& gx = g(in[0]);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += o.grad[j * m + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(a.value().begin(), a.value().end());
  return make_result(std::move(shape), std::move(out), {a}, [](Node& o, std::span<Node* const> in) {
    if (!in[0]->requires_grad) return;
    auto& gx = g(in[0]);
    for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o, std::span<Node* const> in) {
    for (Node* x : in) {
      if (!x->requires_grad) continue;
      auto& gx = g(x);
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o, std::span<Node* const> in) {
    if (in[0]->requires_grad) {
      auto& gx = g(in[0]);
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
    }
    if (in[1]->requires_grad) {
      auto& gy = g(in[1]);
      for (std::size_t i = 0; i < o.grad.size(); ++i) gy[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o, std::span<Node* const> in) {
    Node* x = in[0];
    Node* y = in[1];
    if (x->requires_grad) {
      auto& gx = g(x);
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i] * y->value[i];
    }
    if (y->requires_grad) {
      auto& gy = g(y);
      for (std::size_t i = 0; i < o.grad.size(); ++i) gy[i] += o.grad[i] * x->value[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same(a, b, "div");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o, std::span<Node* const> in) {
    Node* x = in[0];
    Node* y = in[1];
    if (x->requires_grad) {
      auto& gx = g(x);
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i] / y->value[i];
    }
    if (y->requires_grad) {
      auto& gy = g(y);
      for (std::size_t i = 0; i < o.grad.size(); ++i) gy[i] -= o.grad[i] * o.value[i] / y->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor add_row(const Tensor& a, const Tensor& b) {
  require_rank2(a, "add_row");
  const auto m = a.rows(), n = a.cols();
  if (b.size() != n) throw DimensionError("add_row: bias length does not match " + shape_str(a.shape()));
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.value()[i * n + j] + b.value()[j];
  return make_result(a.shape(), std::move(out), {a, b}, [m, n](Node& o, std::span<Node* const> in) {
    if (in[0]->requires_grad) {
      auto& gx = g(in[0]);
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
    }
    if (in[1]->requires_grad) {
      auto& gb = g(in[1]);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += o.grad[i * n + j];
    }
  });
}

Tensor mul_col(const Tensor& a, const Tensor& c) {
  require_rank2(a, "mul_col");
  const auto m = a.rows(), n = a.cols();
  if (c.size() != m) throw DimensionError("mul_col: column length does not match " + shape_str(a.shape()));
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.value()[i * n + j] * c.value()[i];
  return make_result(a.shape(), std::move(out), {a, c}, [m, n](Node& o, std::span<Node* const> in) {
    Node* x = in[0];
    Node* col = in[1];
    if (x->requires_grad) {
      auto& gx = g(x);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += o.grad[i * n + j] * col->value[i];
    }
    if (col->requires_grad) {
      auto& gc = g(col);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gc[i] += o.grad[i * n + j] * x->value[i * n + j];
    }
  });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const auto m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat");
    if (p.rows() != m) throw DimensionError("concat: row counts differ");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto w = widths[k];
    auto pv = parts[k].value();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(pv.begin() + i * w, w, out.begin() + i * total + off);
    off += w;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result({m, total}, std::move(out), std::move(inputs),
                     [m, total, widths](Node& o, std::span<Node* const> in) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < in.size(); ++k) {
                         const auto w = widths[k];
                         if (in[k]->requires_grad) {
                           auto& gx = g(in[k]);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < w; ++j) gx[i * w + j] += o.grad[i * total + off + j];
                         }
                         off += w;
                       }
                     });
}

Tensor concat(std::initializer_list<Tensor> parts) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const auto n = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != n) throw DimensionError("concat_rows: column counts differ");
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * n);
  for (const auto& p : parts) out.insert(out.end(), p.value().begin(), p.value().end());
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result({total, n}, std::move(out), std::move(inputs), [](Node& o, std::span<Node* const> in) {
    std::size_t off = 0;
    for (Node* x : in) {
      const auto len = x->value.size();
      if (x->requires_grad) {
        auto& gx = g(x);
        for (std::size_t i = 0; i < len; ++i) gx[i] += o.grad[off + i];
      }
      off += len;
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank2(a, "slice_cols");
  const auto m = a.rows(), n = a.cols();
  if (count == 0 || begin + count > n) throw DimensionError("slice_cols: range outside " + shape_str(a.shape()));
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(a.value().begin() + i * n + begin, count, out.begin() + i * count);
  return make_result({m, count}, std::move(out), {a}, [m, n, begin, count](Node& o, std::span<Node* const> in) {
    if (!in[0]->requires_grad) return;
    auto& gx = g(in[0]);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) gx[i * n + begin + j] += o.grad[i * count + j];
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank2(a, "slice_rows");
  const auto m = a.rows(), n = a.cols();
  if (count == 0 || begin + count > m) throw DimensionError("slice_rows: range outside " + shape_str(a.shape()));
  std::vector<double> out(a.value().begin() + begin * n, a.value().begin() + (begin + count) * n);
  return make_result({count, n}, std::move(out), {a}, [n, begin](Node& o, std::span<Node* const> in) {
    if (!in[0]->requires_grad) return;
    auto& gx = g(in[0]);
    for (std::size_t i = 0; i < o.grad.size(); ++i) gx[begin * n + i] += o.grad[i];
  });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double x : a.value()) {
    if (!(x > 0.0)) throw NumericError("log: non-positive argument");
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor lgamma(const Tensor& a) {
  return unary(a, [](double x) { return special::lgamma(x); }, [](double x, double) { return special::digamma(x); });
}

Tensor digamma(const Tensor& a) {
  return unary(a, [](double x) { return special::digamma(x); }, [](double x, double) { return special::trigamma(x); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor softmax(const Tensor& a) {
  const auto n = a.shape().back();
  const auto m = a.size() / n;
  std::vector<double> out(a.size());
  auto av = a.value();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = av.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (out[i * n + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return make_result(a.shape(), std::move(out), {a}, [m, n](Node& o, std::span<Node* const> in) {
    if (!in[0]->requires_grad) return;
    auto& gx = g(in[0]);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += o.grad[i * n + j] * o.value[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += o.value[i * n + j] * (o.grad[i * n + j] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& a) {
  const auto n = a.shape().back();
  const auto m = a.size() / n;
  std::vector<double> out(a.size());
  auto av = a.value();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = av.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lz;
  }
  return make_result(a.shape(), std::move(out), {a}, [m, n](Node& o, std::span<Node* const> in) {
    if (!in[0]->requires_grad) return;
    auto& gx = g(in[0]);
    for (std::size_t i = 0; i < m; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < n; ++j) gs += o.grad[i * n + j];
      if (gs == 0.0) {
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += o.grad[i * n + j];
        continue;
      }
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += o.grad[i * n + j] - std::exp(o.value[i * n + j]) * gs;
    }
  });
}

Tensor normalize_rows(const Tensor& a) {
  require_rank2(a, "normalize_rows");
  const auto m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  std::vector<double> sums(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) sums[i] += a.value()[i * n + j];
    if (!(sums[i] > 0.0)) throw NumericError("normalize_rows: row sum must be positive");
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.value()[i * n + j] / sums[i];
  }
  return make_result(a.shape(), std::move(out), {a}, [m, n, sums](Node& o, std::span<Node* const> in) {
    if (!in[0]->requires_grad) return;
    auto& gx = g(in[0]);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += o.grad[i * n + j] * o.value[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += (o.grad[i * n + j] - dot) / sums[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.value()) s += x;
  return make_result({1, 1}, {s}, {a}, [](Node& o, std::span<Node* const> in) {
    if (!in[0]->requires_grad) return;
    auto& gx = g(in[0]);
    for (auto& v : gx) v += o.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor sum_rows(const Tensor& a) {
  require_rank2(a, "sum_rows");
  const auto m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += a.value()[i * n + j];
  return make_result({m, 1}, std::move(out), {a}, [m, n](Node& o, std::span<Node* const> in) {
    if (!in[0]->requires_grad) return;
    auto& gx = g(in[0]);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += o.grad[i];
  });
}

Tensor sum_cols(const Tensor& a) {
  require_rank2(a, "sum_cols");
  const auto m = a.rows(), n = a.cols();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += a.value()[i * n + j];
  return make_result({1, n}, std::move(out), {a}, [m, n](Node& o, std::span<Node* const> in) {
    if (!in[0]->requires_grad) return;
    auto& gx = g(in[0]);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += o.grad[j];
  });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_rank2(table, "embedding");
  const auto v = table.rows(), d = table.cols();
  if (ids.empty()) throw DimensionError("embedding: no ids");
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw DimensionError("embedding: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(v));
    }
    std::copy_n(table.value().begin() + ids[i] * d, d, out.begin() + i * d);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return make_result({ids.size(), d}, std::move(out), {table}, [d, idv](Node& o, std::span<Node* const> in) {
    if (!in[0]->requires_grad) return;
    auto& gt = g(in[0]);
    for (std::size_t i = 0; i < idv.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[idv[i] * d + j] += o.grad[i * d + j];
  });
}

Tensor gather_cols(const Tensor& a, std::span<const int> idx) {
  require_rank2(a, "gather_cols");
  const auto m = a.rows(), n = a.cols();
  if (idx.size() != m) throw DimensionError("gather_cols: index count does not match rows");
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= n) throw DimensionError("gather_cols: index out of range");
    out[i] = a.value()[i * n + idx[i]];
  }
  std::vector<int> iv(idx.begin(), idx.end());
  return make_result({m, 1}, std::move(out), {a}, [n, iv](Node& o, std::span<Node* const> in) {
    if (!in[0]->requires_grad) return;
    auto& gx = g(in[0]);
    for (std::size_t i = 0; i < iv.size(); ++i) gx[i * n + iv[i]] += o.grad[i];
  });
}

Tensor blend(std::span<const double> mask, const Tensor& a, const Tensor& b) {
  require_same(a, b, "blend");
  if (mask.size() != a.size()) throw DimensionError("blend: mask size does not match");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask[i] * a.value()[i] + (1.0 - mask[i]) * b.value()[i];
  std::vector<double> mv(mask.begin(), mask.end());
  return make_result(a.shape(), std::move(out), {a, b}, [mv](Node& o, std::span<Node* const> in) {
    if (in[0]->requires_grad) {
      auto& ga = g(in[0]);
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += mv[i] * o.grad[i];
    }
    if (in[1]->requires_grad) {
      auto& gb = g(in[1]);
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] += (1.0 - mv[i]) * o.grad[i];
    }
  });
}

Tensor dropout(const Tensor& a, double p, bool train, Rng* rng) {
  if (!(p >= 0.0 && p < 1.0)) throw DomainError("dropout: probability must lie in [0, 1)");
  if (!train || p == 0.0) return a;
  if (!rng) throw ContractError("dropout: training mode requires a random stream");
  std::vector<double> mask(a.size());
  const double keep = 1.0 - p;
  std::bernoulli_distribution coin(keep);
  for (auto& m : mask) m = coin(*rng) ? 1.0 / keep : 0.0;
  return mul(a, Tensor::constant(a.shape(), std::move(mask)));
}

}  // namespace tvae::ad
