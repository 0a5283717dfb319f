#include "nslmt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace nslmt {

const Shape& Var::shape() const { return tape->node(id).shape; }
std::span<const double> Var::value() const { return tape->value(id); }
std::size_t Var::numel() const { return shape_numel(shape()); }
std::size_t Var::rows() const {
  const Shape& s = shape();
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}
std::size_t Var::cols() const { return shape().empty() ? 1 : shape().back(); }
double Var::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return value()[0];
}

std::span<const double> Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.param) return n.param->data;
  return n.value;
}

std::vector<double>& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(shape_numel(n.shape), 0.0);
  return n.grad;
}

Var Tape::push(Shape shape, std::vector<double> value, bool needs_grad) {
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.needs_grad = needs_grad && grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) { return push(std::move(value.shape), std::move(value.data), false); }

Var Tape::constant(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size())
    throw ShapeError("constant: shape " + shape_string(shape) + " does not hold " + std::to_string(values.size()) +
                     " values");
  return push(std::move(shape), std::move(values), false);
}

Var Tape::parameter(Tensor& p) {
  Node n;
  n.shape = p.shape;
  n.param = &p;
  n.needs_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: loss belongs to another tape");
  if (loss.numel() != 1) throw ShapeError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  for (auto& n : nodes_) n.grad.clear();
  if (!nodes_[loss.id].needs_grad) return;
  grad(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.param) {
      n.param->ensure_grad();
      for (std::size_t j = 0; j < n.grad.size(); ++j) n.param->grad[j] += n.grad[j];
    } else if (n.backward) {
      n.backward();
    }
  }
}

namespace {

void same_tape(Var a, Var b, const char* op) {
  if (a.tape != b.tape) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

[[noreturn]] void mismatch(const char* op, Var a, Var b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                   shape_string(b.shape()));
}

Var make(Tape* t, Shape shape, std::vector<double> value, std::initializer_list<Var> inputs) {
  bool ng = false;
  for (Var v : inputs) ng = ng || t->needs_grad(v.id);
  return t->push(std::move(shape), std::move(value), ng);
}

void set_backward(Var out, std::function<void()> fn) {
  auto& n = out.tape->node(out.id);
  if (n.needs_grad) n.backward = std::move(fn);
}

enum class Binary { add, sub, mul };

Var binary(Var a, Var b, Binary op, const char* name) {
  same_tape(a, b, name);
  const bool a_scalar = a.numel() == 1 && b.numel() != 1;
  const bool b_scalar = b.numel() == 1 && a.numel() != 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) mismatch(name, a, b);
  Tape* t = a.tape;
  const Shape shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(shape);
  auto av = a.value();
  auto bv = b.value();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[a_scalar ? 0 : i];
    const double y = bv[b_scalar ? 0 : i];
    out[i] = op == Binary::add ? x + y : op == Binary::sub ? x - y : x * y;
  }
  Var r = make(t, shape, std::move(out), {a, b});
  set_backward(r, [t, a, b, r, op, a_scalar, b_scalar, n] {
    const auto& g = t->node(r.id).grad;
    auto av = t->value(a.id);
    auto bv = t->value(b.id);
    if (t->needs_grad(a.id)) {
      auto& ga = t->grad(a.id);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = op == Binary::mul ? g[i] * bv[b_scalar ? 0 : i] : g[i];
        ga[a_scalar ? 0 : i] += d;
      }
    }
    if (t->needs_grad(b.id)) {
      auto& gb = t->grad(b.id);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = op == Binary::mul ? g[i] * av[a_scalar ? 0 : i] : op == Binary::sub ? -g[i] : g[i];
        gb[b_scalar ? 0 : i] += d;
      }
    }
  });
  return r;
}

template <typename F, typename D>
Var unary(Var a, F f, D df) {
  Tape* t = a.tape;
  auto av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  Var r = make(t, a.shape(), std::move(out), {a});
  set_backward(r, [t, a, r, df] {
    const auto& g = t->node(r.id).grad;
    auto av = t->value(a.id);
    const auto& rv = t->node(r.id).value;
    auto& ga = t->grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(av[i], rv[i]);
  });
  return r;
}

Shape with_last(const Shape& s, std::size_t last) {
  Shape out = s.empty() ? Shape{1} : s;
  out.back() = last;
  return out;
}

}  // namespace

Var add(Var a, Var b) { return binary(a, b, Binary::add, "add"); }
Var sub(Var a, Var b) { return binary(a, b, Binary::sub, "sub"); }
Var multiply(Var a, Var b) { return binary(a, b, Binary::mul, "multiply"); }

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log1m_exp(Var a) {
  const double floor_log = std::log(kLog1mExpFloor);
  auto f = [floor_log](double x) {
    double r;
    if (x >= 0.0) return floor_log;
    if (x > -std::numbers::ln2)
      r = std::log(-std::expm1(x));
    else
      r = std::log1p(-std::exp(x));
    return std::max(r, floor_log);
  };
  auto df = [floor_log](double x, double y) {
    if (x >= 0.0 || y <= floor_log) return 0.0;
    return -1.0 / std::expm1(-x);
  };
  return unary(a, f, df);
}

Var gelu(Var a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [](double x, double) { return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x); });
}

Var matmul(Var a, Var b) {
  same_tape(a, b, "matmul");
  if (b.shape().size() != 2 || a.shape().empty() || a.cols() != b.shape()[0]) mismatch("matmul", a, b);
  Tape* t = a.tape;
  const std::size_t M = a.rows(), K = a.cols(), N = b.shape()[1];
  std::vector<double> out(M * N);
  kernels::gemm_nn(M, N, K, a.value(), b.value(), out, false);
  Var r = make(t, with_last(a.shape(), N), std::move(out), {a, b});
  set_backward(r, [t, a, b, r, M, N, K] {
    const auto& g = t->node(r.id).grad;
    if (t->needs_grad(a.id)) kernels::gemm_nt(M, K, N, g, t->value(b.id), t->grad(a.id), true);
    if (t->needs_grad(b.id)) kernels::gemm_tn(K, N, M, t->value(a.id), g, t->grad(b.id), true);
  });
  return r;
}

Var matmul_transposed(Var a, Var b) {
  same_tape(a, b, "matmul_transposed");
  if (b.shape().size() != 2 || a.shape().empty() || a.cols() != b.shape()[1]) mismatch("matmul_transposed", a, b);
  Tape* t = a.tape;
  const std::size_t M = a.rows(), K = a.cols(), N = b.shape()[0];
  std::vector<double> out(M * N);
  kernels::gemm_nt(M, N, K, a.value(), b.value(), out, false);
  Var r = make(t, with_last(a.shape(), N), std::move(out), {a, b});
  set_backward(r, [t, a, b, r, M, N, K] {
    const auto& g = t->node(r.id).grad;
    if (t->needs_grad(a.id)) kernels::gemm_nn(M, K, N, g, t->value(b.id), t->grad(a.id), true);
    if (t->needs_grad(b.id)) kernels::gemm_tn(N, K, M, g, t->value(a.id), t->grad(b.id), true);
  });
  return r;
}

Var add_row_vector(Var a, Var bias) {
  same_tape(a, bias, "add_row_vector");
  if (bias.numel() != a.cols()) mismatch("add_row_vector", a, bias);
  Tape* t = a.tape;
  const std::size_t R = a.rows(), C = a.cols();
  auto av = a.value();
  auto bv = bias.value();
  std::vector<double> out(R * C);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[r * C + c] = av[r * C + c] + bv[c];
  Var res = make(t, a.shape(), std::move(out), {a, bias});
  set_backward(res, [t, a, bias, res, R, C] {
    const auto& g = t->node(res.id).grad;
    if (t->needs_grad(a.id)) {
      auto& ga = t->grad(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t->needs_grad(bias.id)) {
      auto& gb = t->grad(bias.id);
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) gb[c] += g[r * C + c];
    }
  });
  return res;
}

Var softmax_rows(Var a) {
  Tape* t = a.tape;
  const std::size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R * C);
  kernels::softmax_rows(R, C, a.value(), out);
  Var r = make(t, a.shape(), std::move(out), {a});
  set_backward(r, [t, a, r, R, C] {
    const auto& g = t->node(r.id).grad;
    const auto& y = t->node(r.id).value;
    auto& ga = t->grad(a.id);
    for (std::size_t i = 0; i < R; ++i) {
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += g[i * C + c] * y[i * C + c];
      for (std::size_t c = 0; c < C; ++c) ga[i * C + c] += y[i * C + c] * (g[i * C + c] - dot);
    }
  });
  return r;
}

Var log_softmax_rows(Var a) {
  Tape* t = a.tape;
  const std::size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R * C);
  kernels::log_softmax_rows(R, C, a.value(), out);
  Var r = make(t, a.shape(), std::move(out), {a});
  set_backward(r, [t, a, r, R, C] {
    const auto& g = t->node(r.id).grad;
    const auto& y = t->node(r.id).value;
    auto& ga = t->grad(a.id);
    for (std::size_t i = 0; i < R; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < C; ++c) s += g[i * C + c];
      for (std::size_t c = 0; c < C; ++c) {
        const double yc = y[i * C + c];
        const double p = yc == -std::numeric_limits<double>::infinity() ? 0.0 : std::exp(yc);
        ga[i * C + c] += g[i * C + c] - p * s;
      }
    }
  });
  return r;
}

Var sum(Var a) {
  Tape* t = a.tape;
  double s = 0.0;
  for (double x : a.value()) s += x;
  Var r = make(t, Shape{}, {s}, {a});
  set_backward(r, [t, a, r] {
    const double g = t->node(r.id).grad[0];
    for (auto& x : t->grad(a.id)) x += g;
  });
  return r;
}

Var mean(Var a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Var reshape(Var a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  Tape* t = a.tape;
  auto av = a.value();
  Var r = make(t, std::move(shape), std::vector<double>(av.begin(), av.end()), {a});
  set_backward(r, [t, a, r] {
    const auto& g = t->node(r.id).grad;
    auto& ga = t->grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
  return r;
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape* t = parts[0].tape;
  const std::size_t C = parts[0].cols();
  std::size_t R = 0;
  bool ng = false;
  for (Var p : parts) {
    same_tape(parts[0], p, "concat_rows");
    if (p.cols() != C) mismatch("concat_rows", parts[0], p);
    R += p.rows();
    ng = ng || t->needs_grad(p.id);
  }
  std::vector<double> out;
  out.reserve(R * C);
  for (Var p : parts) {
    auto v = p.value();
    out.insert(out.end(), v.begin(), v.end());
  }
  Var r = t->push(Shape{R, C}, std::move(out), ng);
  set_backward(r, [t, parts, r] {
    const auto& g = t->node(r.id).grad;
    std::size_t off = 0;
    for (Var p : parts) {
      const std::size_t n = p.numel();
      if (t->needs_grad(p.id)) {
        auto& gp = t->grad(p.id);
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
      }
      off += n;
    }
  });
  return r;
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const std::size_t R = a.rows(), C = a.cols();
  if (begin + count > R)
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for shape " + shape_string(a.shape()));
  Tape* t = a.tape;
  auto av = a.value();
  std::vector<double> out(av.begin() + begin * C, av.begin() + (begin + count) * C);
  Var r = make(t, Shape{count, C}, std::move(out), {a});
  set_backward(r, [t, a, r, begin, C] {
    const auto& g = t->node(r.id).grad;
    auto& ga = t->grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * C + i] += g[i];
  });
  return r;
}

Var embedding_lookup(Var table, const std::vector<std::size_t>& ids) {
  if (table.shape().size() != 2) throw ShapeError("embedding_lookup: table must be rank 2, got " + shape_string(table.shape()));
  const std::size_t V = table.shape()[0], D = table.shape()[1];
  Tape* t = table.tape;
  auto tv = table.value();
  std::vector<double> out(ids.size() * D);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= V)
      throw std::out_of_range("embedding_lookup: id " + std::to_string(ids[i]) + " outside vocabulary of size " +
                              std::to_string(V));
    std::copy_n(tv.begin() + ids[i] * D, D, out.begin() + i * D);
  }
  Var r = make(t, Shape{ids.size(), D}, std::move(out), {table});
  set_backward(r, [t, table, r, ids, D] {
    const auto& g = t->node(r.id).grad;
    auto& gt = t->grad(table.id);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t d = 0; d < D; ++d) gt[ids[i] * D + d] += g[i * D + d];
  });
  return r;
}

Var masked_fill(Var a, const std::vector<bool>& mask, double value) {
  const std::size_t n = a.numel(), C = a.cols();
  const bool per_col = mask.size() == C && mask.size() != n;
  if (!per_col && mask.size() != n)
    throw ShapeError("masked_fill: mask of " + std::to_string(mask.size()) + " entries for shape " +
                     shape_string(a.shape()));
  Tape* t = a.tape;
  auto av = a.value();
  std::vector<double> out(av.begin(), av.end());
  for (std::size_t i = 0; i < n; ++i)
    if (mask[per_col ? i % C : i]) out[i] = value;
  Var r = make(t, a.shape(), std::move(out), {a});
  set_backward(r, [t, a, r, mask, per_col, C] {
    const auto& g = t->node(r.id).grad;
    auto& ga = t->grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!mask[per_col ? i % C : i]) ga[i] += g[i];
  });
  return r;
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  same_tape(x, gain, "layer_norm");
  same_tape(x, bias, "layer_norm");
  const std::size_t R = x.rows(), C = x.cols();
  if (gain.numel() != C) mismatch("layer_norm", x, gain);
  if (bias.numel() != C) mismatch("layer_norm", x, bias);
  Tape* t = x.tape;
  std::vector<double> out(R * C), mu(R), rstd(R);
  kernels::layer_norm(R, C, x.value(), gain.value(), bias.value(), eps, out, mu, rstd);
  Var r = make(t, x.shape(), std::move(out), {x, gain, bias});
  set_backward(r, [t, x, gain, bias, r, R, C, mu = std::move(mu), rstd = std::move(rstd)] {
    const auto& g = t->node(r.id).grad;
    auto xv = t->value(x.id);
    auto gv = t->value(gain.id);
    const bool gx = t->needs_grad(x.id), gg = t->needs_grad(gain.id), gb = t->needs_grad(bias.id);
    std::vector<double> dxhat(C);
    for (std::size_t i = 0; i < R; ++i) {
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        const double xhat = (xv[i * C + c] - mu[i]) * rstd[i];
        const double gi = g[i * C + c];
        if (gg) t->grad(gain.id)[c] += gi * xhat;
        if (gb) t->grad(bias.id)[c] += gi;
        dxhat[c] = gi * gv[c];
        m1 += dxhat[c];
        m2 += dxhat[c] * xhat;
      }
      if (!gx) continue;
      m1 /= static_cast<double>(C);
      m2 /= static_cast<double>(C);
      auto& gxv = t->grad(x.id);
      for (std::size_t c = 0; c < C; ++c) {
        const double xhat = (xv[i * C + c] - mu[i]) * rstd[i];
        gxv[i * C + c] += rstd[i] * (dxhat[c] - m1 - xhat * m2);
      }
    }
  });
  return r;
}

Var gather(Var a, const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols) {
  if (rows.size() != cols.size()) throw ShapeError("gather: rows and cols differ in length");
  const std::size_t R = a.rows(), C = a.cols();
  Tape* t = a.tape;
  auto av = a.value();
  std::vector<double> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= R || cols[i] >= C)
      throw std::out_of_range("gather: index (" + std::to_string(rows[i]) + ", " + std::to_string(cols[i]) +
                              ") outside shape " + shape_string(a.shape()));
    out[i] = av[rows[i] * C + cols[i]];
  }
  Var r = make(t, Shape{rows.size()}, std::move(out), {a});
  set_backward(r, [t, a, r, rows, cols, C] {
    const auto& g = t->node(r.id).grad;
    auto& ga = t->grad(a.id);
    for (std::size_t i = 0; i < rows.size(); ++i) ga[rows[i] * C + cols[i]] += g[i];
  });
  return r;
}

Var weighted_sum(Var a, const std::vector<double>& weights) {
  if (weights.size() != a.numel())
    throw ShapeError("weighted_sum: " + std::to_string(weights.size()) + " weights for shape " +
                     shape_string(a.shape()));
  Tape* t = a.tape;
  auto av = a.value();
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (weights[i] != 0.0) s += weights[i] * av[i];
  Var r = make(t, Shape{}, {s}, {a});
  set_backward(r, [t, a, r, weights] {
    const double g = t->node(r.id).grad[0];
    auto& ga = t->grad(a.id);
    for (std::size_t i = 0; i < weights.size(); ++i) ga[i] += g * weights[i];
  });
  return r;
}

Var attention(Var q, Var k, Var v, const kernels::AttentionShape& shape) {
  same_tape(q, k, "attention");
  same_tape(q, v, "attention");
  const std::size_t D = shape.dim;
  if (shape.heads == 0 || D % shape.heads != 0) throw ShapeError("attention: dim not divisible by heads");
  if (q.cols() != D || q.rows() != shape.query_groups() * shape.query_len) mismatch("attention", q, k);
  if (k.cols() != D || k.rows() != shape.key_groups() * shape.key_len) mismatch("attention", q, k);
  if (v.shape() != k.shape()) mismatch("attention", k, v);
  for (auto g : shape.key_group_of)
    if (g >= shape.key_groups()) throw ShapeError("attention: key group index out of range");
  Tape* t = q.tape;
  std::vector<double> out(q.numel());
  std::vector<double> probs(shape.query_groups() * shape.heads * shape.query_len * shape.key_len);
  kernels::attention_forward(shape, q.value(), k.value(), v.value(), out, probs);
  Var r = make(t, q.shape(), std::move(out), {q, k, v});
  if (t->needs_grad(r.id)) {
    set_backward(r, [t, q, k, v, r, shape, probs = std::move(probs)] {
      const auto& g = t->node(r.id).grad;
      std::span<double> dq, dk, dv;
      if (t->needs_grad(q.id)) dq = t->grad(q.id);
      if (t->needs_grad(k.id)) dk = t->grad(k.id);
      if (t->needs_grad(v.id)) dv = t->grad(v.id);
      kernels::attention_backward(shape, t->value(q.id), t->value(k.id), t->value(v.id), probs, g, dq, dk, dv);
    });
  }
  return r;
}

}  // namespace nslmt
