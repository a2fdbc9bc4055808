#pragma once

// Model building blocks: embedding, LSTM cell with optional hidden-state
// projection, output projection layer and dropout. Gate block order is
// [i, f, g, o] everywhere; checkpoints depend on it.

#include <optional>
#include <span>
#include <vector>

#include "s2sp/data.hpp"
#include "s2sp/tensor.hpp"

namespace s2sp {

// Non-recurrent dropout. The recurrent h_{t-1} -> h_t path is never masked.
struct DropoutSpec {
  double rate = 0.0;

  explicit DropoutSpec(double r = 0.0) : rate(r) {
    if (r < 0.0 || r >= 1.0) throw ContractError("dropout rate must be in [0,1)");
  }
};

template <typename S>
struct EmbeddingT {
  TensorPtr<S> table;  // [V, d_emb]

  int64_t vocab_size() const { return table->shape[0]; }
  int64_t dim() const { return table->shape[1]; }
};

template <typename S>
struct LstmT {
  TensorPtr<S> w_x;     // [d_in, 4h]
  TensorPtr<S> w_h;     // [p, 4h]
  TensorPtr<S> b;       // [4h]
  TensorPtr<S> w_proj;  // [h, p], null when the cell has no projection (p == h)

  int64_t input_dim() const { return w_x->shape[0]; }
  int64_t hidden_dim() const { return w_x->shape[1] / 4; }
  int64_t output_dim() const { return w_proj ? w_proj->shape[1] : hidden_dim(); }
};

template <typename S>
struct SoftmaxT {
  TensorPtr<S> w;  // [d, V]
  TensorPtr<S> b;  // [V]

  int64_t input_dim() const { return w->shape[0]; }
  int64_t vocab_size() const { return w->shape[1]; }
};

template <typename S>
struct LstmStateT {
  TensorPtr<S> h;  // [B, p]
  TensorPtr<S> c;  // [B, h]
};

inline constexpr double kInitRange = 0.05;  // uniform(-0.05, 0.05) random init
inline constexpr double kForgetBias = 1.0;

template <typename S>
EmbeddingT<S> make_embedding(int64_t vocab, int64_t dim, Rng& rng) {
  if (vocab < kNumReservedIds)
    throw ContractError("embedding vocab must hold the reserved ids");
  return {uniform_tensor<S>({vocab, dim}, rng, -kInitRange, kInitRange)};
}

// proj == 0 builds a vanilla cell (output dim == hidden dim).
template <typename S>
LstmT<S> make_lstm(int64_t input_dim, int64_t hidden, int64_t proj, Rng& rng) {
  LstmT<S> layer;
  layer.w_x = uniform_tensor<S>({input_dim, 4 * hidden}, rng, -kInitRange, kInitRange);
  const int64_t p = proj > 0 ? proj : hidden;
  layer.w_h = uniform_tensor<S>({p, 4 * hidden}, rng, -kInitRange, kInitRange);
  layer.b = zeros<S>({4 * hidden}, true);
  for (int64_t j = hidden; j < 2 * hidden; ++j) layer.b->data[j] = static_cast<S>(kForgetBias);
  if (proj > 0) layer.w_proj = uniform_tensor<S>({hidden, proj}, rng, -kInitRange, kInitRange);
  return layer;
}

template <typename S>
SoftmaxT<S> make_softmax(int64_t input_dim, int64_t vocab, Rng& rng) {
  return {uniform_tensor<S>({input_dim, vocab}, rng, -kInitRange, kInitRange),
          uniform_tensor<S>({vocab}, rng, -kInitRange, kInitRange)};
}

template <typename S>
LstmStateT<S> zero_state(const LstmT<S>& layer, int64_t batch) {
  return {zeros<S>({batch, layer.output_dim()}), zeros<S>({batch, layer.hidden_dim()})};
}

// Row lookup; ids are row indices into the table and gradients scatter back
// into only the looked-up rows.
template <typename S>
TensorPtr<S> embed(TapeT<S>* tape, const EmbeddingT<S>& layer, const std::vector<int32_t>& ids) {
  for (int32_t id : ids)
    if (id < 0 || id >= layer.vocab_size())
      throw ContractError("embed: token id " + std::to_string(id) + " outside vocabulary of size " +
                          std::to_string(layer.vocab_size()));
  return take_rows(tape, layer.table, ids);
}

template <typename S>
TensorPtr<S> embed(TapeT<S>* tape, const EmbeddingT<S>& layer, const Batch& batch) {
  return embed(tape, layer, batch.ids);
}

namespace detail {

// Core cell update from precomputed input projection xw_t = x_t * W_x.
template <typename S>
LstmStateT<S> lstm_from_gates(TapeT<S>* tape, const LstmT<S>& layer, const TensorPtr<S>& xw_t,
                              const LstmStateT<S>& prev) {
  const int64_t h = layer.hidden_dim();
  auto gates = add(tape, add(tape, xw_t, matmul(tape, prev.h, layer.w_h)), layer.b);
  auto i_gate = sigmoid_op(tape, slice_cols(tape, gates, 0, h));
  auto f_gate = sigmoid_op(tape, slice_cols(tape, gates, h, h));
  auto g_gate = tanh_op(tape, slice_cols(tape, gates, 2 * h, h));
  auto o_gate = sigmoid_op(tape, slice_cols(tape, gates, 3 * h, h));
  auto c_t = add(tape, mul(tape, f_gate, prev.c), mul(tape, i_gate, g_gate));
  auto h_raw = mul(tape, o_gate, tanh_op(tape, c_t));
  auto h_t = layer.w_proj ? matmul(tape, h_raw, layer.w_proj) : h_raw;
  return {h_t, c_t};
}

}  // namespace detail

// One cell step. Dropout (inverted scaling) hits only the non-recurrent
// input x_t and only when train is set.
template <typename S>
LstmStateT<S> lstm_step(TapeT<S>* tape, const LstmT<S>& layer, const TensorPtr<S>& x_t,
                        const LstmStateT<S>& prev, const DropoutSpec& drop, bool train, Rng* rng) {
  auto x_in = train && drop.rate > 0.0 ? dropout(tape, x_t, drop.rate, *rng) : x_t;
  return detail::lstm_from_gates(tape, layer, matmul(tape, x_in, layer.w_x), prev);
}

// Unrolls a stack of layers over a [B*T, d] input (row b*T + t). Initial
// state is zeros; on masked (padding) timesteps the state is carried forward
// unchanged. Returns each layer's output sequence as [B*T, p].
template <typename S>
std::vector<TensorPtr<S>> unroll(TapeT<S>* tape, std::span<const LstmT<S>> layers,
                                 const TensorPtr<S>& inputs, int64_t batch, int64_t time,
                                 const std::vector<uint8_t>& live_mask, const DropoutSpec& drop,
                                 bool train, Rng* rng) {
  if (time < 1) throw ContractError("unroll: need at least one timestep");
  if (inputs->shape[0] != batch * time)
    throw ShapeError("unroll: input rows " + shape_str(inputs->shape) + " do not match B*T");
  if (static_cast<int64_t>(live_mask.size()) != batch * time)
    throw ContractError("unroll: mask length mismatch");

  std::vector<TensorPtr<S>> outputs;
  TensorPtr<S> layer_in = inputs;
  for (const auto& layer : layers) {
    auto x_d = train && drop.rate > 0.0 ? dropout(tape, layer_in, drop.rate, *rng) : layer_in;
    auto xw = matmul(tape, x_d, layer.w_x);
    auto state = zero_state(layer, batch);
    std::vector<TensorPtr<S>> steps(time);
    std::vector<int32_t> rows(batch);
    std::vector<uint8_t> live(batch);
    for (int64_t t = 0; t < time; ++t) {
      for (int64_t b = 0; b < batch; ++b) {
        rows[b] = static_cast<int32_t>(b * time + t);
        live[b] = live_mask[b * time + t];
      }
      auto xw_t = take_rows(tape, xw, rows);
      auto next = detail::lstm_from_gates(tape, layer, xw_t, state);
      state.h = select_rows(tape, next.h, state.h, live);
      state.c = select_rows(tape, next.c, state.c, live);
      steps[t] = state.h;
    }
    auto stacked = stack_steps(tape, steps);
    outputs.push_back(stacked);
    layer_in = stacked;
  }
  return outputs;
}

// h * W + b.
template <typename S>
TensorPtr<S> project_logits(TapeT<S>* tape, const SoftmaxT<S>& layer, const TensorPtr<S>& h) {
  return add(tape, matmul(tape, h, layer.w), layer.b);
}

using Embedding = EmbeddingT<float>;
using Lstm = LstmT<float>;
using SoftmaxLayer = SoftmaxT<float>;
using LstmState = LstmStateT<float>;

}  // namespace s2sp
