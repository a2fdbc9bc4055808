#include <doctest.h>

#include <cmath>

#include "s2sp/layers.hpp"

using namespace s2sp;

namespace {

template <typename S>
LstmT<S> zeroed_lstm(int64_t d_in, int64_t h, int64_t proj) {
  Rng rng(0);
  auto layer = make_lstm<S>(d_in, h, proj, rng);
  std::fill(layer.w_x->data.begin(), layer.w_x->data.end(), S(0));
  std::fill(layer.w_h->data.begin(), layer.w_h->data.end(), S(0));
  std::fill(layer.b->data.begin(), layer.b->data.end(), S(0));
  if (layer.w_proj) std::fill(layer.w_proj->data.begin(), layer.w_proj->data.end(), S(0));
  return layer;
}

}  // namespace

TEST_SUITE_BEGIN("layers");

TEST_CASE("embed with identity table returns one-hot rows") {
  Rng rng(1);
  auto emb = make_embedding<float>(4, 4, rng);
  std::fill(emb.table->data.begin(), emb.table->data.end(), 0.0f);
  for (int i = 0; i < 4; ++i) emb.table->data[i * 4 + i] = 1.0f;
  auto out = embed<float>(nullptr, emb, std::vector<int32_t>{2, 0});
  CHECK(out->data == std::vector<float>{0, 0, 1, 0, 1, 0, 0, 0});
  CHECK_THROWS_AS(embed<float>(nullptr, emb, std::vector<int32_t>{4}), ContractError);
}

TEST_CASE("embedding gradient scatters only into looked-up rows") {
  Rng rng(2);
  auto emb = make_embedding<double>(6, 3, rng);
  emb.table->requires_grad = true;
  TapeT<double> tape;
  auto out = embed(&tape, emb, std::vector<int32_t>{5, 5, 1});
  tape.backward(sum_all(&tape, out));
  for (int j = 0; j < 3; ++j) {
    CHECK(emb.table->grad[5 * 3 + j] == 2.0);  // two upstream rows for id 5
    CHECK(emb.table->grad[1 * 3 + j] == 1.0);
    CHECK(emb.table->grad[0 * 3 + j] == 0.0);
  }
}

TEST_CASE("lstm_step at the zero fixed point") {
  auto layer = zeroed_lstm<float>(2, 3, 0);
  auto x = zeros<float>({1, 2});
  auto state = zero_state(layer, 1);
  Rng rng(0);
  auto next = lstm_step<float>(nullptr, layer, x, state, DropoutSpec(0.0), false, &rng);
  for (float v : next.h->data) CHECK(v == 0.0f);
  for (float v : next.c->data) CHECK(v == 0.0f);
}

TEST_CASE("fresh cells carry forget bias 1 and uniform small weights") {
  Rng rng(9);
  auto layer = make_lstm<float>(4, 8, 2, rng);
  for (int64_t j = 0; j < 8; ++j) {
    CHECK(layer.b->data[j] == 0.0f);           // i block
    CHECK(layer.b->data[8 + j] == 1.0f);       // f block
    CHECK(layer.b->data[16 + j] == 0.0f);      // g block
    CHECK(layer.b->data[24 + j] == 0.0f);      // o block
  }
  for (float v : layer.w_x->data) CHECK(std::abs(v) <= 0.05f);
  CHECK(layer.output_dim() == 2);
  CHECK(layer.hidden_dim() == 8);
}

TEST_CASE("one-unit cell against a hand f64 computation") {
  auto layer = zeroed_lstm<double>(1, 1, 0);
  layer.w_x->data = {0.5, -0.25, 0.8, 1.0};   // [i,f,g,o]
  layer.w_h->data = {0.1, 0.2, -0.3, 0.4};
  layer.b->data = {0.01, 1.0, -0.02, 0.03};
  auto x = make_tensor<double>({1, 1}, {0.7});
  LstmStateT<double> prev{make_tensor<double>({1, 1}, {0.3}), make_tensor<double>({1, 1}, {-0.2})};
  Rng rng(0);
  auto next = lstm_step<double>(nullptr, layer, x, prev, DropoutSpec(0.0), false, &rng);

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double i = sig(0.5 * 0.7 + 0.1 * 0.3 + 0.01);
  const double f = sig(-0.25 * 0.7 + 0.2 * 0.3 + 1.0);
  const double g = std::tanh(0.8 * 0.7 + -0.3 * 0.3 + -0.02);
  const double o = sig(1.0 * 0.7 + 0.4 * 0.3 + 0.03);
  const double c = f * -0.2 + i * g;
  const double h = o * std::tanh(c);
  CHECK(next.c->data[0] == doctest::Approx(c).epsilon(1e-12));
  CHECK(next.h->data[0] == doctest::Approx(h).epsilon(1e-12));
}

TEST_CASE("projection with identity matrix reduces to the vanilla cell") {
  Rng rng(5);
  auto proj_layer = make_lstm<float>(3, 4, 4, rng);
  for (int64_t r = 0; r < 4; ++r)
    for (int64_t col = 0; col < 4; ++col) proj_layer.w_proj->data[r * 4 + col] = r == col ? 1.0f : 0.0f;
  auto vanilla = proj_layer;
  vanilla.w_proj = nullptr;

  Rng data_rng(6);
  auto x = uniform_tensor<float>({2, 3}, data_rng, -1, 1, false);
  auto state = zero_state(proj_layer, 2);
  Rng r1(0), r2(0);
  auto a = lstm_step<float>(nullptr, proj_layer, x, state, DropoutSpec(0.0), false, &r1);
  auto b = lstm_step<float>(nullptr, vanilla, x, state, DropoutSpec(0.0), false, &r2);
  CHECK(a.h->data == b.h->data);
  CHECK(a.c->data == b.c->data);
}

TEST_CASE("dropout rate zero makes train and eval identical") {
  Rng rng(7);
  auto layer = make_lstm<float>(2, 3, 0, rng);
  auto x = uniform_tensor<float>({2, 2}, rng, -1, 1, false);
  auto state = zero_state(layer, 2);
  Rng ra(1), rb(2);
  auto train_out = lstm_step<float>(nullptr, layer, x, state, DropoutSpec(0.0), true, &ra);
  auto eval_out = lstm_step<float>(nullptr, layer, x, state, DropoutSpec(0.0), false, &rb);
  CHECK(train_out.h->data == eval_out.h->data);
}

TEST_CASE("eval mode ignores the rng entirely") {
  Rng rng(8);
  std::vector<LstmT<float>> stack = {make_lstm<float>(2, 3, 0, rng)};
  auto x = uniform_tensor<float>({4, 2}, rng, -1, 1, false);
  std::vector<uint8_t> mask(4, 1);
  Rng ra(111), rb(999);
  auto a = unroll<float>(nullptr, stack, x, 2, 2, mask, DropoutSpec(0.5), false, &ra);
  auto b = unroll<float>(nullptr, stack, x, 2, 2, mask, DropoutSpec(0.5), false, &rb);
  CHECK(a.back()->data == b.back()->data);
}

TEST_CASE("inverted dropout is unbiased: mean train activation equals eval") {
  // 10^4 masks over 16 units, rate 0.3; the sample mean of the kept/scaled
  // values must sit within 3 sigma of 1.0.
  Rng rng(12345);
  const double rate = 0.3;
  auto x = full<float>({1, 16}, 1.0f);
  const int n_masks = 10000;
  double sum = 0;
  for (int it = 0; it < n_masks; ++it) {
    auto y = dropout<float>(nullptr, x, rate, rng);
    for (float v : y->data) sum += v;
  }
  const double n = n_masks * 16.0;
  const double mean = sum / n;
  const double var_one = rate / (1.0 - rate);  // variance of a single kept/scaled unit
  const double sigma = std::sqrt(var_one / n);
  CHECK(std::abs(mean - 1.0) < 3.0 * sigma);
}

TEST_CASE("unroll with T=1 equals a single lstm_step") {
  Rng rng(3);
  std::vector<LstmT<float>> stack = {make_lstm<float>(3, 5, 2, rng)};
  auto x = uniform_tensor<float>({2, 3}, rng, -1, 1, false);
  std::vector<uint8_t> mask(2, 1);
  auto outs = unroll<float>(nullptr, stack, x, 2, 1, mask, DropoutSpec(0.0), false, nullptr);
  auto state = zero_state(stack[0], 2);
  Rng r0(0);
  auto step = lstm_step<float>(nullptr, stack[0], x, state, DropoutSpec(0.0), false, &r0);
  CHECK(outs[0]->data == step.h->data);
}

TEST_CASE("padding suffix freezes the state bit-exactly") {
  Rng rng(4);
  std::vector<LstmT<float>> stack = {make_lstm<float>(2, 4, 0, rng), make_lstm<float>(4, 4, 0, rng)};

  auto run = [&](int64_t time, const std::vector<uint8_t>& mask) {
    std::vector<float> vals(static_cast<size_t>(time) * 2);
    Rng data_rng(99);
    for (auto& v : vals) v = static_cast<float>(data_rng.uniform(-1, 1));
    // pad rows hold zeros to mimic PAD embeddings, mask switches them off
    for (int64_t t = 0; t < time; ++t)
      if (!mask[t]) vals[t * 2] = vals[t * 2 + 1] = 0.0f;
    auto x = make_tensor<float>({time, 2}, vals);
    return unroll<float>(nullptr, stack, x, 1, time, mask, DropoutSpec(0.0), false, nullptr);
  };

  auto plain = run(3, {1, 1, 1});
  auto padded = run(5, {1, 1, 1, 0, 0});
  // final state visible at the last live row equals the padded run's last row
  std::vector<float> last_plain(plain[1]->data.end() - 4, plain[1]->data.end());
  std::vector<float> last_padded(padded[1]->data.end() - 4, padded[1]->data.end());
  CHECK(last_plain == last_padded);
}

TEST_CASE("two-step unroll gradient vs central differences") {
  Rng rng(31);
  for (int it = 0; it < 3; ++it) {
    std::vector<LstmT<double>> stack = {make_lstm<double>(2, 3, 2, rng)};
    std::vector<uint8_t> mask = {1, 1, 1, 1};
    auto f = [&](TapeT<double>* tape, const TensorPtr<double>& x) {
      auto outs = unroll(tape, std::span<const LstmT<double>>(stack), x, 2, 2, mask,
                         DropoutSpec(0.0), false, nullptr);
      return sum_all(tape, mul(tape, outs[0], outs[0]));
    };
    auto x = uniform_tensor<double>({4, 2}, rng, -1, 1);
    CHECK(finite_diff_check<double>(f, x, 1e-5) < 1e-4);
  }
}

TEST_CASE("unroll gradient w.r.t. recurrent weights") {
  Rng rng(37);
  std::vector<LstmT<double>> stack = {make_lstm<double>(2, 3, 0, rng)};
  auto x_fixed = uniform_tensor<double>({6, 2}, rng, -1, 1, false);
  std::vector<uint8_t> mask = {1, 1, 1, 1, 1, 0};
  auto f = [&](TapeT<double>* tape, const TensorPtr<double>& wh) {
    auto layers_copy = stack;
    layers_copy[0].w_h = wh;
    auto outs = unroll(tape, std::span<const LstmT<double>>(layers_copy), x_fixed, 2, 3, mask,
                       DropoutSpec(0.0), false, nullptr);
    return sum_all(tape, mul(tape, outs[0], outs[0]));
  };
  CHECK(finite_diff_check<double>(f, stack[0].w_h, 1e-5) < 1e-4);
}

TEST_CASE("project_logits basics") {
  Rng rng(41);
  auto layer = make_softmax<float>(3, 5, rng);
  std::fill(layer.w->data.begin(), layer.w->data.end(), 0.0f);
  std::fill(layer.b->data.begin(), layer.b->data.end(), 0.0f);
  auto h = uniform_tensor<float>({2, 3}, rng, -1, 1, false);
  auto logits = project_logits<float>(nullptr, layer, h);
  auto probs = softmax_rows<float>(nullptr, logits);
  for (float v : probs->data) CHECK(v == doctest::Approx(0.2));

  layer.b->data[3] = 2.5f;
  auto shifted = project_logits<float>(nullptr, layer, h);
  for (int64_t r = 0; r < 2; ++r)
    for (int64_t j = 0; j < 5; ++j) CHECK(shifted->data[r * 5 + j] == (j == 3 ? 2.5f : 0.0f));
}

TEST_CASE("project_logits gradient") {
  Rng rng(43);
  auto layer = make_softmax<double>(3, 4, rng);
  std::vector<int32_t> targets = {1, 3};
  std::vector<uint8_t> mask = {1, 1};
  auto f = [&](TapeT<double>* tape, const TensorPtr<double>& h) {
    return cross_entropy(tape, project_logits(tape, layer, h), targets, mask);
  };
  auto h = uniform_tensor<double>({2, 3}, rng, -1, 1);
  CHECK(finite_diff_check<double>(f, h, 1e-5) < 1e-4);
}

TEST_SUITE_END();
