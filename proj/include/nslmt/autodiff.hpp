#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "nslmt/kernels.hpp"
#include "nslmt/tensor.hpp"

namespace nslmt {

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Shape& shape() const;
  std::span<const double> value() const;
  double item() const;
  std::size_t numel() const;
  std::size_t rows() const;
  std::size_t cols() const;
};

/// Reverse-mode tape. Nodes are appended in creation order, which is a
/// topological order; backward walks it in reverse once.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor value);
  Var constant(Shape shape, std::vector<double> values);
  /// Reads the parameter's data in place; backward accumulates into p.grad.
  Var parameter(Tensor& p);

  /// Requires a single-element loss. Gradients accumulate into parameters.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Primitive-implementation interface.
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    Tensor* param = nullptr;
    bool needs_grad = false;
    std::function<void()> backward;
  };
  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::span<const double> value(std::size_t id) const;
  std::vector<double>& grad(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  Var push(Shape shape, std::vector<double> value, bool needs_grad);

 private:
  bool grad_enabled_;
  std::vector<Node> nodes_;
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var multiply(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
/// a: (..., K) viewed as rows x K; b: (K, N).
Var matmul(Var a, Var b);
/// a: (..., K); b: (N, K). Computes a b^T.
Var matmul_transposed(Var a, Var b);
/// Adds a length-cols vector to every row.
Var add_row_vector(Var a, Var bias);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var log(Var a);
Var exp(Var a);
/// log(1 - exp(a)) for a <= 0, floored at log(kLog1mExpFloor).
Var log1m_exp(Var a);
inline constexpr double kLog1mExpFloor = 1e-12;
Var sum(Var a);
Var mean(Var a);
Var reshape(Var a, Shape shape);
/// Stacks rank-2 (or row-compatible) inputs along the first axis.
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var embedding_lookup(Var table, const std::vector<std::size_t>& ids);
/// mask has numel(a) entries, or cols(a) entries applied to every row.
Var masked_fill(Var a, const std::vector<bool>& mask, double value);
Var gelu(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// out[i] = a(rows[i], cols[i]).
Var gather(Var a, const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols);
/// Scalar sum_i weights[i] * a[i].
Var weighted_sum(Var a, const std::vector<double>& weights);
/// Multi-head scaled dot-product attention over packed groups.
Var attention(Var q, Var k, Var v, const kernels::AttentionShape& shape);

}  // namespace nslmt
