#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "longreg/kernels.hpp"
#include "longreg/seq_head.hpp"
#include "support.hpp"

using namespace longreg;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void randomize(SeqHeadParams& p, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& v : p.values()) v = u(rng);
}

// Direct transcription of the cell equations, one layer, one sequence.
std::vector<double> oracle_layer(const SeqHeadParams& p, std::size_t l, const std::vector<double>& xs, std::size_t in,
                                 std::size_t steps) {
  const std::size_t h = p.config().hidden;
  const auto wi = p.block("gru." + std::to_string(l) + ".w_input");
  const auto wh = p.block("gru." + std::to_string(l) + ".w_hidden");
  const auto bi = p.block("gru." + std::to_string(l) + ".b_input");
  const auto bh = p.block("gru." + std::to_string(l) + ".b_hidden");
  std::vector<double> state(h, 0.0), out;
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<double> gi(3 * h), gh(3 * h);
    for (std::size_t r = 0; r < 3 * h; ++r) {
      gi[r] = bi[r];
      for (std::size_t j = 0; j < in; ++j) gi[r] += wi[r * in + j] * xs[t * in + j];
      gh[r] = bh[r];
      for (std::size_t j = 0; j < h; ++j) gh[r] += wh[r * h + j] * state[j];
    }
    std::vector<double> next(h);
    for (std::size_t j = 0; j < h; ++j) {
      const double z = sigmoid(gi[j] + gh[j]);
      const double r = sigmoid(gi[h + j] + gh[h + j]);
      const double n = std::tanh(gi[2 * h + j] + r * gh[2 * h + j]);
      next[j] = (1.0 - z) * n + z * state[j];
    }
    state = next;
    out.insert(out.end(), state.begin(), state.end());
  }
  return out;
}

double oracle_predict(const SeqHeadParams& p, const EmbeddingSequence& seq) {
  std::vector<double> xs(seq.data().begin(), seq.data().end());
  std::size_t in = seq.dim();
  for (std::size_t l = 0; l < p.config().layers; ++l) {
    xs = oracle_layer(p, l, xs, in, seq.length());
    in = p.config().hidden;
  }
  const auto a = p.attention();
  std::vector<double> s(seq.length());
  for (std::size_t t = 0; t < seq.length(); ++t) {
    s[t] = 0.0;
    for (std::size_t j = 0; j < in; ++j) s[t] += a[j] * xs[t * in + j];
  }
  const double m = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double& v : s) z += (v = std::exp(v - m));
  double y = p.output_bias()[0];
  for (std::size_t j = 0; j < in; ++j) {
    double c = 0.0;
    for (std::size_t t = 0; t < seq.length(); ++t) c += s[t] / z * xs[t * in + j];
    y += p.output_weight()[j] * c;
  }
  return y;
}

SeqHeadConfig small_config(std::size_t d, std::size_t h, std::size_t layers) {
  SeqHeadConfig c;
  c.input_dim = d;
  c.hidden = h;
  c.layers = layers;
  c.dropout = 0.0;
  return c;
}

}  // namespace

TEST_CASE("one-unit GRU matches hand-computed states") {
  // Values from an independent evaluation of the cell equations:
  // x = (1, -0.5), gate rows (update, reset, candidate).
  SeqHeadParams p(small_config(1, 1, 1));
  auto set = [&](const char* name, std::vector<double> v) {
    auto b = p.block(name);
    std::copy(v.begin(), v.end(), b.begin());
  };
  set("gru.0.w_input", {0.5, -1.0, 2.0});
  set("gru.0.w_hidden", {0.3, 0.7, -0.4});
  set("gru.0.b_input", {0.1, 0.0, -0.2});
  set("gru.0.b_hidden", {0.0, 0.2, 0.5});
  EmbeddingSequence seq("h", 1, {1.0f, -0.5f});
  const EmbeddingSequence* one[] = {&seq};
  const auto hs = gru_forward(p, make_padded_batch(one));
  REQUIRE(hs.size() == 2);
  CHECK(hs[0] == doctest::Approx(0.3404206240311791).epsilon(1e-14));
  CHECK(hs[1] == doctest::Approx(-0.20991752586903606).epsilon(1e-14));
}

TEST_CASE("forward pass agrees with a direct transcription of the equations") {
  std::mt19937_64 rng(11);
  for (std::size_t layers : {1u, 2u, 3u}) {
    SeqHeadParams p(small_config(5, 3, layers));
    randomize(p, rng, 0.8);
    for (std::size_t t : {1u, 4u, 9u}) {
      const auto seq = testsupport::random_sequence("s", t, 5, rng);
      CHECK(predict(p, seq).prediction[0] == doctest::Approx(oracle_predict(p, seq)).epsilon(1e-12));
    }
  }
}

TEST_CASE("softmax hand example") {
  const std::vector<double> hidden{std::log(2.0), 0.0};
  const std::vector<double> a{1.0};
  const auto r = attention_pool(hidden, 2, {}, a);
  CHECK(r.alpha[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.alpha[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(r.context[0] == doctest::Approx(2.0 / 3.0 * std::log(2.0)).epsilon(1e-15));
  const std::vector<std::uint8_t> none{0, 0};
  CHECK_THROWS_AS(attention_pool(hidden, 2, none, a), std::invalid_argument);
}

TEST_CASE("attention invariants over randomized cases") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::size_t> len(1, 12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = 1 + trial % 6;
    const std::size_t steps = len(rng);
    std::normal_distribution<double> n(0.0, 3.0);
    std::vector<double> hidden(steps * h), a(h);
    for (double& v : hidden) v = n(rng);
    for (double& v : a) v = n(rng);
    std::vector<std::uint8_t> mask(steps, 1);
    for (auto& m : mask) m = rng() % 4 != 0;
    mask[rng() % steps] = 1;
    const auto r = attention_pool(hidden, steps, mask, a);
    double sum = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      sum += r.alpha[t];
      if (!mask[t]) CHECK(r.alpha[t] == 0.0);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);

    // Adding delta * a / |a|^2 to every step shifts every score by delta.
    double aa = 0.0;
    for (double v : a) aa += v * v;
    const double delta = n(rng) * 10.0;
    auto shifted = hidden;
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t j = 0; j < h; ++j) shifted[t * h + j] += delta * a[j] / aa;
    }
    const auto rs = attention_pool(shifted, steps, mask, a);
    for (std::size_t t = 0; t < steps; ++t) CHECK(std::abs(rs.alpha[t] - r.alpha[t]) <= 1e-12);
  }
}

TEST_CASE("padding never changes a prediction") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    SeqHeadParams p(small_config(4, 3, 1 + trial % 3));
    randomize(p, rng, 1.0);
    const auto a = testsupport::random_sequence("a", 1 + trial % 7, 4, rng);
    const auto b = testsupport::random_sequence("b", 9, 4, rng);
    const EmbeddingSequence* both[] = {&a, &b};
    const auto batch = make_padded_batch(both, 12);
    const auto solo = predict(p, a);
    const auto padded = predict_padded(p, batch, 0);
    CHECK(padded.prediction == solo.prediction);
    CHECK(padded.alpha.size() == batch.cap);
    for (std::size_t t = a.length(); t < batch.cap; ++t) CHECK(padded.alpha[t] == 0.0);
    for (std::size_t t = 0; t < a.length(); ++t) CHECK(padded.alpha[t] == solo.alpha[t]);
  }
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 12; ++trial) {
    SeqHeadConfig cfg = small_config(8, 4, 2);
    cfg.output_dim = 1 + trial % 2;
    SeqHeadParams p(cfg);
    randomize(p, rng, 0.7);
    std::vector<EmbeddingSequence> seqs;
    for (std::size_t b = 0; b < 3; ++b) seqs.push_back(testsupport::random_sequence("x", 2 + (b + trial) % 4, 8, rng));
    std::vector<const EmbeddingSequence*> ptrs;
    for (const auto& s : seqs) ptrs.push_back(&s);
    std::normal_distribution<double> n;
    std::vector<double> y(3 * cfg.output_dim);
    for (double& v : y) v = n(rng);
    DropoutMasks masks;
    if (trial % 3 == 2) masks = sample_dropout(3, cfg.hidden, 0.3, rng);

    const auto g = backward(p, ptrs, y, masks);
    const double eps = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p.values()[i];
      p.values()[i] = keep + eps;
      const double up = backward(p, ptrs, y, masks).loss;
      p.values()[i] = keep - eps;
      const double down = backward(p, ptrs, y, masks).loss;
      p.values()[i] = keep;
      const double num = (up - down) / (2 * eps);
      const double rel = std::abs(g.grad[i] - num) / std::max({std::abs(g.grad[i]), std::abs(num), 1e-6});
      worst = std::max(worst, rel);
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("loss and backward input checks") {
  CHECK(loss_mse(std::vector<double>{1, 3}, std::vector<double>{2, 1}) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK_THROWS_AS(loss_mse(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
  SeqHeadParams p = init_params(small_config(2, 2, 1));
  EmbeddingSequence s("s", 2, {1, 2});
  const EmbeddingSequence* one[] = {&s};
  CHECK_THROWS_AS(backward(p, one, std::vector<double>{1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(backward(p, one, std::vector<double>{std::nan("")}), DivergenceError);
  EmbeddingSequence wrong("w", 3, {1, 2, 3});
  CHECK_THROWS_AS(predict(p, wrong), std::invalid_argument);
}

TEST_CASE("initialization is deterministic and bounded") {
  SeqHeadConfig c = small_config(6, 5, 2);
  c.seed = 9;
  const auto a = init_params(c);
  const auto b = init_params(c);
  CHECK(a == b);
  c.seed = 10;
  CHECK_FALSE(init_params(c) == a);
  const double bound = 1.0 / std::sqrt(5.0);
  for (const auto& blk : a.layout()) {
    const auto v = a.block(blk.name);
    const bool bias = blk.cols == 1 && blk.name != "attention.vector";
    for (double x : v) {
      if (bias) {
        CHECK(x == 0.0);
      } else {
        CHECK(std::abs(x) <= bound);
      }
    }
  }
  CHECK(a.layout().front().name == "gru.0.w_input");
  CHECK(a.layout().back().name == "output.bias");
}

TEST_CASE("dropout masks are inverted and seeded") {
  std::mt19937_64 r1(5), r2(5);
  const auto m1 = sample_dropout(4, 50, 0.2, r1);
  CHECK(m1 == sample_dropout(4, 50, 0.2, r2));
  for (double v : m1) CHECK((v == 0.0 || v == doctest::Approx(1.25)));
  std::mt19937_64 r3(5);
  CHECK(sample_dropout(4, 50, 0.0, r3).empty());
}

TEST_CASE("a small set is memorized and training is deterministic") {
  std::mt19937_64 rng(51);
  std::vector<EmbeddingSequence> seqs;
  SequenceSet train;
  std::normal_distribution<double> n;
  for (int i = 0; i < 8; ++i) seqs.push_back(testsupport::random_sequence("m" + std::to_string(i), 2 + i % 4, 4, rng));
  for (const auto& s : seqs) {
    train.seqs.push_back(&s);
    train.targets.push_back(n(rng));
  }
  SeqHeadConfig c = small_config(4, 8, 1);
  c.seed = 3;
  TrainConfig t;
  t.learning_rate = 1e-2;
  t.batch_size = 8;
  t.max_epochs = 1500;
  t.target_train_loss = 1e-3;
  t.seed = 3;
  const auto m1 = fit(train, {}, c, t);
  CHECK(m1.history.train_loss.back() < 1e-3);
  CHECK(m1.history.reached_target);
  CHECK(evaluate_mse(m1.params, train) == doctest::Approx(m1.history.train_loss.back()));
  const auto m2 = fit(train, {}, c, t);
  CHECK(m1.params == m2.params);
  CHECK(m1.history.train_loss == m2.history.train_loss);
}

TEST_CASE("early stopping returns the best validation checkpoint") {
  std::mt19937_64 rng(61);
  std::vector<EmbeddingSequence> seqs;
  for (int i = 0; i < 24; ++i) seqs.push_back(testsupport::random_sequence("e" + std::to_string(i), 3, 4, rng));
  SequenceSet train, val;
  std::normal_distribution<double> n;
  for (int i = 0; i < 24; ++i) {
    auto& s = i < 16 ? train : val;
    s.seqs.push_back(&seqs[static_cast<std::size_t>(i)]);
    s.targets.push_back(n(rng));  // pure noise: validation loss must turn up
  }
  SeqHeadConfig c = small_config(4, 8, 1);
  TrainConfig t;
  t.learning_rate = 3e-2;
  t.batch_size = 4;
  t.max_epochs = 300;
  t.patience = 5;
  const auto m = fit(train, val, c, t);
  CHECK(m.history.stopped_early);
  const auto best = std::min_element(m.history.val_loss.begin(), m.history.val_loss.end());
  CHECK(m.history.best_epoch == static_cast<std::size_t>(best - m.history.val_loss.begin()) + 1);
  CHECK(evaluate_mse(m.params, val) == doctest::Approx(*best).epsilon(1e-12));
  CHECK(m.history.val_loss.size() == m.history.best_epoch + t.patience);
}

TEST_CASE("results do not depend on the kernel variant beyond rounding") {
  if (!kernels::supported(kernels::Isa::avx2)) return;
  std::mt19937_64 rng(71);
  SeqHeadParams p(small_config(16, 8, 2));
  randomize(p, rng, 0.5);
  const auto seq = testsupport::random_sequence("k", 6, 16, rng);
  const auto prev = kernels::active_isa();
  kernels::select(kernels::Isa::scalar);
  const double ys = predict(p, seq).prediction[0];
  kernels::select(kernels::Isa::avx2);
  const double yv = predict(p, seq).prediction[0];
  kernels::select(prev);
  CHECK(yv == doctest::Approx(ys).epsilon(1e-12));
}
