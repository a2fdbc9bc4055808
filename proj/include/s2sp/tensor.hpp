#pragma once

// Reverse-mode autodiff over dense row-major tensors.
//
// Templated on the scalar type: the training stack runs on float, the test
// oracles instantiate the same graph code with double so finite differences
// are evaluated at f64 precision. Sequences are stored two-dimensionally with
// the convention that a [B x T x d] activation lives in a [B*T, d] tensor
// whose row b*T+t holds timestep t of batch row b.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "s2sp/common.hpp"

namespace s2sp {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

template <typename S>
struct TensorT {
  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;  // empty until backward touches this tensor
  bool requires_grad = false;

  TensorT() = default;
  TensorT(Shape sh, std::vector<S> values, bool rg = false)
      : shape(std::move(sh)), data(std::move(values)), requires_grad(rg) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape))
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    for (int64_t d : shape)
      if (d <= 0) throw ShapeError("non-positive dim in shape " + shape_str(shape));
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
  int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), S(0));
  }
  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), S(0));
  }
  S scalar() const {
    if (numel() != 1) throw ContractError("expected scalar tensor, got shape " + shape_str(shape));
    return data[0];
  }
};

template <typename S>
using TensorPtr = std::shared_ptr<TensorT<S>>;

template <typename S>
TensorPtr<S> make_tensor(Shape shape, std::vector<S> values, bool requires_grad = false) {
  return std::make_shared<TensorT<S>>(std::move(shape), std::move(values), requires_grad);
}

template <typename S>
TensorPtr<S> zeros(Shape shape, bool requires_grad = false) {
  std::vector<S> v(static_cast<size_t>(shape_numel(shape)), S(0));
  return make_tensor<S>(std::move(shape), std::move(v), requires_grad);
}

template <typename S>
TensorPtr<S> full(Shape shape, S value, bool requires_grad = false) {
  std::vector<S> v(static_cast<size_t>(shape_numel(shape)), value);
  return make_tensor<S>(std::move(shape), std::move(v), requires_grad);
}

template <typename S>
TensorPtr<S> uniform_tensor(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = true) {
  std::vector<S> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<S>(rng.uniform(lo, hi));
  return make_tensor<S>(std::move(shape), std::move(v), requires_grad);
}

// Records one backward closure per op, runs them in exact reverse order.
// A tape lives for one forward/backward pass on one thread.
template <typename S>
class TapeT {
 public:
  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
  size_t size() const { return nodes_.size(); }

  void backward(const TensorPtr<S>& loss) {
    if (loss->numel() != 1)
      throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss->shape));
    loss->ensure_grad();
    loss->grad[0] += S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> nodes_;
};

using Tensor = TensorT<float>;
using Tape = TapeT<float>;
using TensorF = TensorPtr<float>;

namespace detail {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<Mat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const Mat<S>>;

template <typename S>
ConstMatMap<S> as_mat(const TensorPtr<S>& t) {
  return ConstMatMap<S>(t->data.data(), t->rows(), t->cols());
}
template <typename S>
MatMap<S> grad_mat(const TensorPtr<S>& t) {
  t->ensure_grad();
  return MatMap<S>(t->grad.data(), t->rows(), t->cols());
}

template <typename S>
bool want_grad(TapeT<S>* tape, std::initializer_list<TensorPtr<S>> inputs) {
  if (!tape) return false;
  for (const auto& in : inputs)
    if (in->requires_grad) return true;
  return false;
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Core ops
// ---------------------------------------------------------------------------

template <typename S>
TensorPtr<S> matmul(TapeT<S>* tape, const TensorPtr<S>& a, const TensorPtr<S>& b) {
  detail::require(a->shape.size() == 2 && b->shape.size() == 2 && a->shape[1] == b->shape[0],
                  "matmul: incompatible shapes " + shape_str(a->shape) + " and " + shape_str(b->shape));
  auto out = zeros<S>({a->shape[0], b->shape[1]});
  detail::MatMap<S>(out->data.data(), out->rows(), out->cols()).noalias() =
      detail::as_mat(a) * detail::as_mat(b);
  if (detail::want_grad(tape, {a, b})) {
    out->requires_grad = true;
    tape->record([a, b, out] {
      if (out->grad.empty()) return;
      detail::ConstMatMap<S> dc(out->grad.data(), out->rows(), out->cols());
      detail::grad_mat(a).noalias() += dc * detail::as_mat(b).transpose();
      detail::grad_mat(b).noalias() += detail::as_mat(a).transpose() * dc;
    });
  }
  return out;
}

namespace detail {

// Elementwise binary ops support exact shape match or broadcasting the second
// argument across leading dims (b's shape must be a suffix of a's shape).
template <typename S>
int broadcast_check(const TensorPtr<S>& a, const TensorPtr<S>& b, const char* name) {
  if (a->shape == b->shape) return 0;
  const auto& as = a->shape;
  const auto& bs = b->shape;
  const bool suffix = bs.size() < as.size() && std::equal(bs.rbegin(), bs.rend(), as.rbegin());
  if (!suffix)
    throw ShapeError(std::string(name) + ": incompatible shapes " + shape_str(as) + " and " +
                     shape_str(bs));
  return 1;
}

}  // namespace detail

template <typename S>
TensorPtr<S> add(TapeT<S>* tape, const TensorPtr<S>& a, const TensorPtr<S>& b) {
  int mode = detail::broadcast_check(a, b, "add");
  auto out = zeros<S>(a->shape);
  const int64_t n = a->numel(), bn = b->numel();
  if (mode == 0) {
    for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] + b->data[i];
  } else {
    for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] + b->data[i % bn];
  }
  if (detail::want_grad(tape, {a, b})) {
    out->requires_grad = true;
    tape->record([a, b, out, mode, n, bn] {
      if (out->grad.empty()) return;
      a->ensure_grad();
      b->ensure_grad();
      for (int64_t i = 0; i < n; ++i) a->grad[i] += out->grad[i];
      if (mode == 0) {
        for (int64_t i = 0; i < n; ++i) b->grad[i] += out->grad[i];
      } else {
        for (int64_t i = 0; i < n; ++i) b->grad[i % bn] += out->grad[i];
      }
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> mul(TapeT<S>* tape, const TensorPtr<S>& a, const TensorPtr<S>& b) {
  int mode = detail::broadcast_check(a, b, "mul");
  auto out = zeros<S>(a->shape);
  const int64_t n = a->numel(), bn = b->numel();
  if (mode == 0) {
    for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] * b->data[i];
  } else {
    for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] * b->data[i % bn];
  }
  if (detail::want_grad(tape, {a, b})) {
    out->requires_grad = true;
    tape->record([a, b, out, mode, n, bn] {
      if (out->grad.empty()) return;
      a->ensure_grad();
      b->ensure_grad();
      if (mode == 0) {
        for (int64_t i = 0; i < n; ++i) {
          a->grad[i] += out->grad[i] * b->data[i];
          b->grad[i] += out->grad[i] * a->data[i];
        }
      } else {
        for (int64_t i = 0; i < n; ++i) {
          a->grad[i] += out->grad[i] * b->data[i % bn];
          b->grad[i % bn] += out->grad[i] * a->data[i];
        }
      }
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> scale(TapeT<S>* tape, const TensorPtr<S>& a, S c) {
  auto out = zeros<S>(a->shape);
  const int64_t n = a->numel();
  for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] * c;
  if (detail::want_grad(tape, {a})) {
    out->requires_grad = true;
    tape->record([a, out, c, n] {
      if (out->grad.empty()) return;
      a->ensure_grad();
      for (int64_t i = 0; i < n; ++i) a->grad[i] += out->grad[i] * c;
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> tanh_op(TapeT<S>* tape, const TensorPtr<S>& a) {
  auto out = zeros<S>(a->shape);
  const int64_t n = a->numel();
  for (int64_t i = 0; i < n; ++i) out->data[i] = std::tanh(a->data[i]);
  if (detail::want_grad(tape, {a})) {
    out->requires_grad = true;
    tape->record([a, out, n] {
      if (out->grad.empty()) return;
      a->ensure_grad();
      for (int64_t i = 0; i < n; ++i) {
        const S y = out->data[i];
        a->grad[i] += out->grad[i] * (S(1) - y * y);
      }
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> sigmoid_op(TapeT<S>* tape, const TensorPtr<S>& a) {
  auto out = zeros<S>(a->shape);
  const int64_t n = a->numel();
  for (int64_t i = 0; i < n; ++i) {
    const S x = a->data[i];
    out->data[i] = x >= S(0) ? S(1) / (S(1) + std::exp(-x))
                             : std::exp(x) / (S(1) + std::exp(x));
  }
  if (detail::want_grad(tape, {a})) {
    out->requires_grad = true;
    tape->record([a, out, n] {
      if (out->grad.empty()) return;
      a->ensure_grad();
      for (int64_t i = 0; i < n; ++i) {
        const S y = out->data[i];
        a->grad[i] += out->grad[i] * y * (S(1) - y);
      }
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> sum_all(TapeT<S>* tape, const TensorPtr<S>& a) {
  double acc = 0;
  for (const S& v : a->data) acc += static_cast<double>(v);
  auto out = make_tensor<S>({1}, {static_cast<S>(acc)});
  if (detail::want_grad(tape, {a})) {
    out->requires_grad = true;
    const int64_t n = a->numel();
    tape->record([a, out, n] {
      if (out->grad.empty()) return;
      a->ensure_grad();
      const S g = out->grad[0];
      for (int64_t i = 0; i < n; ++i) a->grad[i] += g;
    });
  }
  return out;
}

// Row-stable softmax over the last dim of a [m, n] tensor.
template <typename S>
TensorPtr<S> softmax_rows(TapeT<S>* tape, const TensorPtr<S>& x) {
  detail::require(x->shape.size() == 2 && x->shape[1] >= 1,
                  "softmax_rows: need [m,n] input, got " + shape_str(x->shape));
  for (const S& v : x->data)
    if (!std::isfinite(v)) throw NumericError("softmax_rows: non-finite input");
  const int64_t m = x->shape[0], n = x->shape[1];
  auto out = zeros<S>(x->shape);
  for (int64_t r = 0; r < m; ++r) {
    const S* in = x->data.data() + r * n;
    S* o = out->data.data() + r * n;
    S mx = in[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    S denom = S(0);
    for (int64_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      denom += o[j];
    }
    for (int64_t j = 0; j < n; ++j) o[j] /= denom;
  }
  if (detail::want_grad(tape, {x})) {
    out->requires_grad = true;
    tape->record([x, out, m, n] {
      if (out->grad.empty()) return;
      x->ensure_grad();
      for (int64_t r = 0; r < m; ++r) {
        const S* y = out->data.data() + r * n;
        const S* dy = out->grad.data() + r * n;
        S* dx = x->grad.data() + r * n;
        S dot = S(0);
        for (int64_t j = 0; j < n; ++j) dot += y[j] * dy[j];
        for (int64_t j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
      }
    });
  }
  return out;
}

// Mean negative log-likelihood over unmasked rows of [m, V] logits.
// mask[i] != 0 marks row i as a real (non-padding) prediction.
template <typename S>
TensorPtr<S> cross_entropy(TapeT<S>* tape, const TensorPtr<S>& logits, const std::vector<int32_t>& targets,
                           const std::vector<uint8_t>& mask) {
  detail::require(logits->shape.size() == 2, "cross_entropy: logits must be [m,V], got " + shape_str(logits->shape));
  const int64_t m = logits->shape[0], v = logits->shape[1];
  detail::require(static_cast<int64_t>(targets.size()) == m && static_cast<int64_t>(mask.size()) == m,
                  "cross_entropy: targets/mask length must match logit rows");
  int64_t live = 0;
  for (uint8_t f : mask) live += (f != 0);
  if (live == 0) throw ContractError("cross_entropy: all positions masked");

  // log-sum-exp per row with max shift; probabilities kept for backward.
  auto probs = zeros<S>(logits->shape);
  double total = 0;
  for (int64_t r = 0; r < m; ++r) {
    const S* in = logits->data.data() + r * v;
    S* p = probs->data.data() + r * v;
    S mx = in[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, in[j]);
    S denom = S(0);
    for (int64_t j = 0; j < v; ++j) {
      p[j] = std::exp(in[j] - mx);
      denom += p[j];
    }
    for (int64_t j = 0; j < v; ++j) p[j] /= denom;
    if (mask[r]) {
      const int32_t t = targets[r];
      if (t < 0 || t >= v)
        throw ContractError("cross_entropy: target id " + std::to_string(t) + " outside [0," +
                            std::to_string(v) + ")");
      total += -(static_cast<double>(in[t] - mx) - std::log(static_cast<double>(denom)));
    }
  }
  auto out = make_tensor<S>({1}, {static_cast<S>(total / static_cast<double>(live))});
  if (detail::want_grad(tape, {logits})) {
    out->requires_grad = true;
    tape->record([logits, probs, out, targets, mask, m, v, live] {
      if (out->grad.empty()) return;
      logits->ensure_grad();
      const S g = out->grad[0] / static_cast<S>(live);
      for (int64_t r = 0; r < m; ++r) {
        if (!mask[r]) continue;
        const S* p = probs->data.data() + r * v;
        S* dl = logits->grad.data() + r * v;
        for (int64_t j = 0; j < v; ++j) dl[j] += g * p[j];
        dl[targets[r]] -= g;
      }
    });
  }
  return out;
}

// Forward-only total NLL with f64 log-sum-exp accumulation, for perplexity
// evaluation. Same masking contract as cross_entropy.
template <typename S>
double masked_nll_f64(const TensorPtr<S>& logits, const std::vector<int32_t>& targets,
                      const std::vector<uint8_t>& mask) {
  const int64_t m = logits->shape[0], v = logits->shape[1];
  detail::require(static_cast<int64_t>(targets.size()) == m && static_cast<int64_t>(mask.size()) == m,
                  "masked_nll_f64: targets/mask length must match logit rows");
  double total = 0;
  for (int64_t r = 0; r < m; ++r) {
    if (!mask[r]) continue;
    const S* in = logits->data.data() + r * v;
    double mx = static_cast<double>(in[0]);
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, static_cast<double>(in[j]));
    double denom = 0;
    for (int64_t j = 0; j < v; ++j) denom += std::exp(static_cast<double>(in[j]) - mx);
    total += -(static_cast<double>(in[targets[r]]) - mx - std::log(denom));
  }
  return total;
}

// out[i] = x[rows[i]] (row gather). Backward scatter-adds, so it doubles as
// the embedding lookup and the per-timestep slice of stacked activations.
template <typename S>
TensorPtr<S> take_rows(TapeT<S>* tape, const TensorPtr<S>& x, const std::vector<int32_t>& rows) {
  detail::require(x->shape.size() == 2, "take_rows: need [n,d] input, got " + shape_str(x->shape));
  const int64_t n = x->shape[0], d = x->shape[1];
  for (int32_t r : rows)
    if (r < 0 || r >= n)
      throw ContractError("take_rows: row index " + std::to_string(r) + " outside [0," + std::to_string(n) + ")");
  auto out = zeros<S>({static_cast<int64_t>(rows.size()), d});
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy_n(x->data.data() + static_cast<int64_t>(rows[i]) * d, d, out->data.data() + i * d);
  if (detail::want_grad(tape, {x})) {
    out->requires_grad = true;
    tape->record([x, out, rows, d] {
      if (out->grad.empty()) return;
      x->ensure_grad();
      for (size_t i = 0; i < rows.size(); ++i) {
        const S* src = out->grad.data() + i * d;
        S* dst = x->grad.data() + static_cast<int64_t>(rows[i]) * d;
        for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> slice_cols(TapeT<S>* tape, const TensorPtr<S>& x, int64_t start, int64_t len) {
  detail::require(x->shape.size() == 2 && start >= 0 && len >= 1 && start + len <= x->shape[1],
                  "slice_cols: bad range [" + std::to_string(start) + "," + std::to_string(start + len) +
                      ") for shape " + shape_str(x->shape));
  const int64_t m = x->shape[0], n = x->shape[1];
  auto out = zeros<S>({m, len});
  for (int64_t r = 0; r < m; ++r)
    std::copy_n(x->data.data() + r * n + start, len, out->data.data() + r * len);
  if (detail::want_grad(tape, {x})) {
    out->requires_grad = true;
    tape->record([x, out, start, len, m, n] {
      if (out->grad.empty()) return;
      x->ensure_grad();
      for (int64_t r = 0; r < m; ++r) {
        const S* src = out->grad.data() + r * len;
        S* dst = x->grad.data() + r * n + start;
        for (int64_t j = 0; j < len; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> concat_cols(TapeT<S>* tape, const TensorPtr<S>& a, const TensorPtr<S>& b) {
  detail::require(a->shape.size() == 2 && b->shape.size() == 2 && a->shape[0] == b->shape[0],
                  "concat_cols: row counts differ: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  const int64_t m = a->shape[0], na = a->shape[1], nb = b->shape[1];
  auto out = zeros<S>({m, na + nb});
  for (int64_t r = 0; r < m; ++r) {
    std::copy_n(a->data.data() + r * na, na, out->data.data() + r * (na + nb));
    std::copy_n(b->data.data() + r * nb, nb, out->data.data() + r * (na + nb) + na);
  }
  if (detail::want_grad(tape, {a, b})) {
    out->requires_grad = true;
    tape->record([a, b, out, m, na, nb] {
      if (out->grad.empty()) return;
      a->ensure_grad();
      b->ensure_grad();
      for (int64_t r = 0; r < m; ++r) {
        const S* src = out->grad.data() + r * (na + nb);
        S* da = a->grad.data() + r * na;
        S* db = b->grad.data() + r * nb;
        for (int64_t j = 0; j < na; ++j) da[j] += src[j];
        for (int64_t j = 0; j < nb; ++j) db[j] += src[na + j];
      }
    });
  }
  return out;
}

// Stacks T per-step [B, d] tensors into [B*T, d] with row b*T + t.
template <typename S>
TensorPtr<S> stack_steps(TapeT<S>* tape, const std::vector<TensorPtr<S>>& steps) {
  detail::require(!steps.empty(), "stack_steps: empty step list");
  const int64_t b = steps[0]->shape[0], d = steps[0]->shape[1];
  const int64_t t_len = static_cast<int64_t>(steps.size());
  for (const auto& s : steps)
    detail::require(s->shape.size() == 2 && s->shape[0] == b && s->shape[1] == d,
                    "stack_steps: inconsistent step shape " + shape_str(s->shape));
  auto out = zeros<S>({b * t_len, d});
  for (int64_t t = 0; t < t_len; ++t)
    for (int64_t r = 0; r < b; ++r)
      std::copy_n(steps[t]->data.data() + r * d, d, out->data.data() + (r * t_len + t) * d);
  bool rg = false;
  for (const auto& s : steps) rg |= s->requires_grad;
  if (tape && rg) {
    out->requires_grad = true;
    tape->record([steps, out, b, d, t_len] {
      if (out->grad.empty()) return;
      for (int64_t t = 0; t < t_len; ++t) {
        steps[t]->ensure_grad();
        for (int64_t r = 0; r < b; ++r) {
          const S* src = out->grad.data() + (r * t_len + t) * d;
          S* dst = steps[t]->grad.data() + r * d;
          for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
        }
      }
    });
  }
  return out;
}

// Row select: out[r] = take[r] ? a[r] : b[r]. Used to freeze RNN state on
// padding timesteps; the kept side passes through bit-exactly.
template <typename S>
TensorPtr<S> select_rows(TapeT<S>* tape, const TensorPtr<S>& a, const TensorPtr<S>& b,
                         const std::vector<uint8_t>& take_a) {
  detail::require(a->shape == b->shape && a->shape.size() == 2,
                  "select_rows: shapes differ: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  const int64_t m = a->shape[0], d = a->shape[1];
  detail::require(static_cast<int64_t>(take_a.size()) == m, "select_rows: mask length mismatch");
  auto out = zeros<S>(a->shape);
  for (int64_t r = 0; r < m; ++r)
    std::copy_n((take_a[r] ? a : b)->data.data() + r * d, d, out->data.data() + r * d);
  if (detail::want_grad(tape, {a, b})) {
    out->requires_grad = true;
    tape->record([a, b, out, take_a, m, d] {
      if (out->grad.empty()) return;
      a->ensure_grad();
      b->ensure_grad();
      for (int64_t r = 0; r < m; ++r) {
        const S* src = out->grad.data() + r * d;
        S* dst = (take_a[r] ? a : b)->grad.data() + r * d;
        for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

// Inverted dropout on non-recurrent connections. rate == 0 returns the input
// tensor unchanged; eval mode never calls this.
template <typename S>
TensorPtr<S> dropout(TapeT<S>* tape, const TensorPtr<S>& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  detail::require(rate < 1.0, "dropout: rate must be in [0,1)");
  const int64_t n = x->numel();
  auto mask = std::make_shared<std::vector<S>>(n);
  const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
  for (int64_t i = 0; i < n; ++i) (*mask)[i] = rng.next_unit() < rate ? S(0) : keep_scale;
  auto out = zeros<S>(x->shape);
  for (int64_t i = 0; i < n; ++i) out->data[i] = x->data[i] * (*mask)[i];
  if (detail::want_grad(tape, {x})) {
    out->requires_grad = true;
    tape->record([x, out, mask, n] {
      if (out->grad.empty()) return;
      x->ensure_grad();
      for (int64_t i = 0; i < n; ++i) x->grad[i] += out->grad[i] * (*mask)[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Attention primitives (batched over B query rows against T keyed positions;
// keys/values stored [B*T, p] per the stacking convention).
// ---------------------------------------------------------------------------

// Dot products of query rows against their batch item's keyed positions.
// q holds Q = q_rows / batch queries per batch item (query row b*Q + i), so a
// whole decoder unroll can attend in one op. Output is [B*Q, T].
template <typename S>
TensorPtr<S> attn_scores(TapeT<S>* tape, const TensorPtr<S>& q, const TensorPtr<S>& keys, int64_t batch,
                         int64_t time) {
  const int64_t p = q->shape[1];
  detail::require(q->shape.size() == 2 && q->shape[0] % batch == 0,
                  "attn_scores: query rows " + shape_str(q->shape) + " not divisible by batch " +
                      std::to_string(batch));
  detail::require(keys->shape.size() == 2 && keys->shape[0] == batch * time && keys->shape[1] == p,
                  "attn_scores: keys shape " + shape_str(keys->shape) + " does not match B=" +
                      std::to_string(batch) + " T=" + std::to_string(time) + " p=" + std::to_string(p));
  const int64_t queries = q->shape[0] / batch;
  auto out = zeros<S>({batch * queries, time});
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t i = 0; i < queries; ++i) {
      const S* qr = q->data.data() + (b * queries + i) * p;
      S* orow = out->data.data() + (b * queries + i) * time;
      for (int64_t t = 0; t < time; ++t) {
        const S* kr = keys->data.data() + (b * time + t) * p;
        S acc = S(0);
        for (int64_t j = 0; j < p; ++j) acc += qr[j] * kr[j];
        orow[t] = acc;
      }
    }
  }
  if (detail::want_grad(tape, {q, keys})) {
    out->requires_grad = true;
    tape->record([q, keys, out, batch, queries, time, p] {
      if (out->grad.empty()) return;
      q->ensure_grad();
      keys->ensure_grad();
      for (int64_t b = 0; b < batch; ++b) {
        for (int64_t i = 0; i < queries; ++i) {
          const S* qr = q->data.data() + (b * queries + i) * p;
          S* dq = q->grad.data() + (b * queries + i) * p;
          const S* grow = out->grad.data() + (b * queries + i) * time;
          for (int64_t t = 0; t < time; ++t) {
            const S g = grow[t];
            if (g == S(0)) continue;
            const S* kr = keys->data.data() + (b * time + t) * p;
            S* dk = keys->grad.data() + (b * time + t) * p;
            for (int64_t j = 0; j < p; ++j) {
              dq[j] += g * kr[j];
              dk[j] += g * qr[j];
            }
          }
        }
      }
    });
  }
  return out;
}

// Softmax over rows with masked positions pinned to exactly zero probability.
// mask is [batch*time]; a fully masked row is a contract violation.
template <typename S>
TensorPtr<S> masked_softmax_rows(TapeT<S>* tape, const TensorPtr<S>& x, const std::vector<uint8_t>& mask) {
  detail::require(x->shape.size() == 2, "masked_softmax_rows: need [m,n], got " + shape_str(x->shape));
  const int64_t m = x->shape[0], n = x->shape[1];
  detail::require(static_cast<int64_t>(mask.size()) == m * n, "masked_softmax_rows: mask length mismatch");
  for (int64_t i = 0; i < m * n; ++i)
    if (mask[i] && !std::isfinite(x->data[i])) throw NumericError("masked_softmax_rows: non-finite input");
  auto out = zeros<S>(x->shape);
  for (int64_t r = 0; r < m; ++r) {
    const S* in = x->data.data() + r * n;
    const uint8_t* mk = mask.data() + r * n;
    S* o = out->data.data() + r * n;
    S mx = -std::numeric_limits<S>::infinity();
    for (int64_t j = 0; j < n; ++j)
      if (mk[j]) mx = std::max(mx, in[j]);
    if (mx == -std::numeric_limits<S>::infinity())
      throw ContractError("masked_softmax_rows: fully masked row " + std::to_string(r));
    S denom = S(0);
    for (int64_t j = 0; j < n; ++j) {
      o[j] = mk[j] ? std::exp(in[j] - mx) : S(0);
      denom += o[j];
    }
    for (int64_t j = 0; j < n; ++j) o[j] /= denom;
  }
  if (detail::want_grad(tape, {x})) {
    out->requires_grad = true;
    tape->record([x, out, m, n] {
      if (out->grad.empty()) return;
      x->ensure_grad();
      for (int64_t r = 0; r < m; ++r) {
        const S* y = out->data.data() + r * n;
        const S* dy = out->grad.data() + r * n;
        S* dx = x->grad.data() + r * n;
        S dot = S(0);
        for (int64_t j = 0; j < n; ++j) dot += y[j] * dy[j];
        for (int64_t j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
      }
    });
  }
  return out;
}

// context[b*Q + i] = sum_t alpha[b*Q + i, t] * values[b*T + t]; the mirror of
// attn_scores' query batching.
template <typename S>
TensorPtr<S> attn_context(TapeT<S>* tape, const TensorPtr<S>& alpha, const TensorPtr<S>& values,
                          int64_t batch) {
  detail::require(alpha->shape.size() == 2 && alpha->shape[0] % batch == 0,
                  "attn_context: alpha shape " + shape_str(alpha->shape));
  const int64_t queries = alpha->shape[0] / batch, time = alpha->shape[1];
  const int64_t p = values->shape[1];
  detail::require(values->shape.size() == 2 && values->shape[0] == batch * time,
                  "attn_context: values shape " + shape_str(values->shape) + " does not match alpha " +
                      shape_str(alpha->shape));
  auto out = zeros<S>({batch * queries, p});
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t i = 0; i < queries; ++i) {
      S* o = out->data.data() + (b * queries + i) * p;
      const S* arow = alpha->data.data() + (b * queries + i) * time;
      for (int64_t t = 0; t < time; ++t) {
        const S a = arow[t];
        if (a == S(0)) continue;
        const S* vr = values->data.data() + (b * time + t) * p;
        for (int64_t j = 0; j < p; ++j) o[j] += a * vr[j];
      }
    }
  }
  if (detail::want_grad(tape, {alpha, values})) {
    out->requires_grad = true;
    tape->record([alpha, values, out, batch, queries, time, p] {
      if (out->grad.empty()) return;
      alpha->ensure_grad();
      values->ensure_grad();
      for (int64_t b = 0; b < batch; ++b) {
        for (int64_t i = 0; i < queries; ++i) {
          const S* go = out->grad.data() + (b * queries + i) * p;
          const S* arow = alpha->data.data() + (b * queries + i) * time;
          S* darow = alpha->grad.data() + (b * queries + i) * time;
          for (int64_t t = 0; t < time; ++t) {
            const S a = arow[t];
            const S* vr = values->data.data() + (b * time + t) * p;
            S* dv = values->grad.data() + (b * time + t) * p;
            S dota = S(0);
            for (int64_t j = 0; j < p; ++j) {
              dota += go[j] * vr[j];
              dv[j] += a * go[j];
            }
            darow[t] += dota;
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle
// ---------------------------------------------------------------------------

// Max relative error between the analytic gradient of f at x and f64-style
// central differences, with denominator max(|a|,|b|,1e-8). f must be
// deterministic; it is called with a tape for the analytic pass and without
// one for the numeric evaluations.
template <typename S>
double finite_diff_check(const std::function<TensorPtr<S>(TapeT<S>*, const TensorPtr<S>&)>& f,
                         const TensorPtr<S>& x, double eps) {
  x->requires_grad = true;
  x->grad.clear();
  TapeT<S> tape;
  auto loss = f(&tape, x);
  tape.backward(loss);
  std::vector<double> analytic(x->data.size(), 0.0);
  for (size_t i = 0; i < x->grad.size(); ++i) analytic[i] = static_cast<double>(x->grad[i]);

  double max_rel = 0.0;
  for (size_t i = 0; i < x->data.size(); ++i) {
    const S keep = x->data[i];
    x->data[i] = keep + static_cast<S>(eps);
    const double up = static_cast<double>(f(nullptr, x)->scalar());
    x->data[i] = keep - static_cast<S>(eps);
    const double down = static_cast<double>(f(nullptr, x)->scalar());
    x->data[i] = keep;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
  }
  return max_rel;
}

}  // namespace s2sp
