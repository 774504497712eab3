#include "longreg/seq_head.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "longreg/kernels.hpp"

namespace longreg {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

void SeqHeadConfig::validate() const {
  if (input_dim == 0) throw std::invalid_argument("input_dim must be >= 1");
  if (hidden == 0) throw std::invalid_argument("hidden must be >= 1");
  if (layers == 0) throw std::invalid_argument("layers must be >= 1");
  if (output_dim == 0) throw std::invalid_argument("output_dim must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
}

SeqHeadParams::SeqHeadParams(const SeqHeadConfig& config) : config_(config) {
  config_.validate();
  const std::size_t h = config_.hidden;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    layout_.push_back({std::move(name), offset, rows, cols});
    offset += rows * cols;
  };
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::size_t in = l == 0 ? config_.input_dim : h;
    const std::string p = "gru." + std::to_string(l) + ".";
    add(p + "w_input", 3 * h, in);
    add(p + "w_hidden", 3 * h, h);
    add(p + "b_input", 3 * h, 1);
    add(p + "b_hidden", 3 * h, 1);
  }
  add("attention.vector", h, 1);
  add("output.weight", config_.output_dim, h);
  add("output.bias", config_.output_dim, 1);
  values_.assign(offset, 0.0);
}

std::span<double> SeqHeadParams::block(std::string_view name) {
  for (const auto& b : layout_) {
    if (b.name == name) return {values_.data() + b.offset, b.size()};
  }
  throw std::out_of_range("no parameter block named " + std::string(name));
}

std::span<const double> SeqHeadParams::block(std::string_view name) const {
  return const_cast<SeqHeadParams*>(this)->block(name);
}

SeqHeadParams::Layer SeqHeadParams::layer(std::size_t l) const {
  const auto& wi = layout_[4 * l];
  const double* base = values_.data();
  return {base + wi.offset, base + layout_[4 * l + 1].offset, base + layout_[4 * l + 2].offset,
          base + layout_[4 * l + 3].offset, wi.cols};
}

std::span<const double> SeqHeadParams::attention() const {
  const auto& b = layout_[4 * config_.layers];
  return {values_.data() + b.offset, b.size()};
}

const double* SeqHeadParams::output_weight() const { return values_.data() + layout_[4 * config_.layers + 1].offset; }

const double* SeqHeadParams::output_bias() const { return values_.data() + layout_[4 * config_.layers + 2].offset; }

SeqHeadParams init_params(const SeqHeadConfig& config) {
  SeqHeadParams p(config);
  std::mt19937_64 rng(config.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.hidden));
  for (const auto& b : p.layout()) {
    if (b.cols == 1 && b.name != "attention.vector") continue;  // biases stay zero
    auto& v = p.values();
    for (std::size_t i = 0; i < b.size(); ++i) v[b.offset + i] = (2.0 * uniform01(rng) - 1.0) * bound;
  }
  return p;
}

AttentionResult attention_pool(std::span<const double> hidden, std::size_t steps, std::span<const std::uint8_t> mask,
                               std::span<const double> a) {
  const std::size_t h = a.size();
  if (hidden.size() < steps * h) throw std::invalid_argument("hidden state buffer too small");
  if (!mask.empty() && mask.size() < steps) throw std::invalid_argument("mask shorter than steps");
  auto valid = [&](std::size_t t) { return mask.empty() || mask[t] != 0; };
  const auto& k = kernels::active();

  AttentionResult out{std::vector<double>(steps, 0.0), std::vector<double>(h, 0.0)};
  double max_score = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t t = 0; t < steps; ++t) {
    if (!valid(t)) continue;
    out.alpha[t] = k.dot(a.data(), hidden.data() + t * h, h);
    max_score = std::max(max_score, out.alpha[t]);
    any = true;
  }
  if (!any) throw std::invalid_argument("attention over a fully masked sequence");
  double total = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    if (!valid(t)) continue;
    out.alpha[t] = std::exp(out.alpha[t] - max_score);
    total += out.alpha[t];
  }
  for (std::size_t t = 0; t < steps; ++t) {
    if (!valid(t)) continue;
    out.alpha[t] /= total;
    k.axpy(out.alpha[t], hidden.data() + t * h, out.context.data(), h);
  }
  return out;
}

namespace {

// Per-layer activations of one sequence, kept for the backward pass.
struct LayerCache {
  std::vector<double> h;     // (steps + 1) x H, row 0 is h_0 = 0
  std::vector<double> z;     // steps x H
  std::vector<double> r;     // steps x H
  std::vector<double> n;     // steps x H
  std::vector<double> gh_n;  // steps x H, U_n h + c_n before the reset gate
};

struct SequenceCache {
  std::size_t steps = 0;
  std::vector<double> input;  // steps x D in double
  std::vector<LayerCache> layers;
};

// Runs the GRU stack over `steps` rows of `input` (steps x D).
void run_gru(const SeqHeadParams& params, std::size_t steps, SequenceCache& cache) {
  const auto& cfg = params.config();
  const std::size_t hs = cfg.hidden;
  const auto& k = kernels::active();
  cache.steps = steps;
  cache.layers.resize(cfg.layers);
  std::vector<double> gx(3 * hs), gh(3 * hs);
  const double* below = cache.input.data();
  std::size_t below_stride = cfg.input_dim;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto w = params.layer(l);
    auto& lc = cache.layers[l];
    lc.h.assign((steps + 1) * hs, 0.0);
    lc.z.resize(steps * hs);
    lc.r.resize(steps * hs);
    lc.n.resize(steps * hs);
    lc.gh_n.resize(steps * hs);
    for (std::size_t t = 0; t < steps; ++t) {
      const double* x = below + t * below_stride;
      const double* hp = lc.h.data() + t * hs;
      double* hn = lc.h.data() + (t + 1) * hs;
      std::copy(w.b_input, w.b_input + 3 * hs, gx.begin());
      std::copy(w.b_hidden, w.b_hidden + 3 * hs, gh.begin());
      k.gemv(w.w_input, 3 * hs, w.in, x, gx.data());
      k.gemv(w.w_hidden, 3 * hs, hs, hp, gh.data());
      for (std::size_t j = 0; j < hs; ++j) {
        const double z = sigmoid(gx[j] + gh[j]);
        const double r = sigmoid(gx[hs + j] + gh[hs + j]);
        const double n = std::tanh(gx[2 * hs + j] + r * gh[2 * hs + j]);
        lc.z[t * hs + j] = z;
        lc.r[t * hs + j] = r;
        lc.n[t * hs + j] = n;
        lc.gh_n[t * hs + j] = gh[2 * hs + j];
        hn[j] = (1.0 - z) * n + z * hp[j];
      }
    }
    below = lc.h.data() + hs;  // skip h_0
    below_stride = hs;
  }
}

void load_input(const EmbeddingSequence& seq, std::size_t steps, SequenceCache& cache) {
  cache.input.assign(seq.data().begin(), seq.data().begin() + static_cast<std::ptrdiff_t>(steps * seq.dim()));
}

std::span<const double> top_hidden(const SequenceCache& cache, std::size_t hs) {
  const auto& top = cache.layers.back().h;
  return {top.data() + hs, cache.steps * hs};
}

void apply_output(const SeqHeadParams& params, std::span<const double> features, std::vector<double>& out) {
  const auto& cfg = params.config();
  out.assign(params.output_bias(), params.output_bias() + cfg.output_dim);
  kernels::active().gemv(params.output_weight(), cfg.output_dim, cfg.hidden, features.data(), out.data());
}

ForwardTrace finish_trace(const SeqHeadParams& params, const SequenceCache& cache, std::size_t length,
                          std::vector<std::uint8_t> mask) {
  const std::size_t hs = params.config().hidden;
  ForwardTrace tr;
  tr.length = length;
  const auto hidden = top_hidden(cache, hs);
  tr.hidden.assign(hidden.begin(), hidden.end());
  auto att = attention_pool(tr.hidden, cache.steps, mask, params.attention());
  tr.alpha = std::move(att.alpha);
  tr.context = std::move(att.context);
  tr.mask = std::move(mask);
  apply_output(params, tr.context, tr.prediction);
  return tr;
}

void check_dim(const SeqHeadParams& params, std::size_t dim) {
  if (dim != params.config().input_dim) {
    throw std::invalid_argument("embedding dim " + std::to_string(dim) + " does not match model input dim " +
                                std::to_string(params.config().input_dim));
  }
}

}  // namespace

std::vector<double> gru_forward(const SeqHeadParams& params, const PaddedBatch& batch) {
  check_dim(params, batch.dim);
  const std::size_t hs = params.config().hidden;
  std::vector<double> out(batch.batch * batch.cap * hs);
  SequenceCache cache;
  for (std::size_t b = 0; b < batch.batch; ++b) {
    const auto first = batch.values.begin() + static_cast<std::ptrdiff_t>(b * batch.cap * batch.dim);
    cache.input.assign(first, first + static_cast<std::ptrdiff_t>(batch.cap * batch.dim));
    run_gru(params, batch.cap, cache);
    const auto top = top_hidden(cache, hs);
    std::copy(top.begin(), top.end(), out.begin() + static_cast<std::ptrdiff_t>(b * batch.cap * hs));
  }
  return out;
}

ForwardTrace predict(const SeqHeadParams& params, const EmbeddingSequence& seq) {
  check_dim(params, seq.dim());
  SequenceCache cache;
  load_input(seq, seq.length(), cache);
  run_gru(params, seq.length(), cache);
  return finish_trace(params, cache, seq.length(), std::vector<std::uint8_t>(seq.length(), 1));
}

ForwardTrace predict_padded(const SeqHeadParams& params, const PaddedBatch& batch, std::size_t b) {
  check_dim(params, batch.dim);
  if (b >= batch.batch) throw std::out_of_range("batch row out of range");
  SequenceCache cache;
  const auto first = batch.values.begin() + static_cast<std::ptrdiff_t>(b * batch.cap * batch.dim);
  cache.input.assign(first, first + static_cast<std::ptrdiff_t>(batch.cap * batch.dim));
  run_gru(params, batch.cap, cache);
  std::vector<std::uint8_t> mask(batch.mask.begin() + static_cast<std::ptrdiff_t>(b * batch.cap),
                                 batch.mask.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch.cap));
  return finish_trace(params, cache, batch.lengths[b], std::move(mask));
}

double loss_mse(std::span<const double> predicted, std::span<const double> target) {
  if (predicted.empty()) throw std::invalid_argument("loss over an empty batch");
  if (predicted.size() != target.size()) throw std::invalid_argument("prediction/target length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(predicted.size());
}

DropoutMasks sample_dropout(std::size_t batch, std::size_t hidden, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return {};
  DropoutMasks m(batch * hidden);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : m) v = uniform01(rng) < rate ? 0.0 : keep_scale;
  return m;
}

GradientResult backward(const SeqHeadParams& params, std::span<const EmbeddingSequence* const> batch,
                        std::span<const double> targets, const DropoutMasks& dropout) {
  const auto& cfg = params.config();
  const std::size_t hs = cfg.hidden;
  const std::size_t od = cfg.output_dim;
  if (batch.empty()) throw std::invalid_argument("backward over an empty batch");
  if (targets.size() != batch.size() * od) throw std::invalid_argument("targets must hold batch x output_dim values");
  if (!dropout.empty() && dropout.size() != batch.size() * hs) throw std::invalid_argument("dropout mask shape mismatch");

  const auto& k = kernels::active();
  const auto& layout = params.layout();
  GradientResult res;
  res.grad.assign(params.size(), 0.0);
  double* g = res.grad.data();
  const std::size_t att_off = layout[4 * cfg.layers].offset;
  const std::size_t ow_off = layout[4 * cfg.layers + 1].offset;
  const std::size_t ob_off = layout[4 * cfg.layers + 2].offset;
  const double scale = 2.0 / static_cast<double>(batch.size() * od);

  SequenceCache cache;
  std::vector<double> features(hs), pred, dpred(od), dfeat(hs), dc(hs), dalpha, ds;
  std::vector<double> dh_layer, dh_below, dh_next(hs), dh(hs), dgx(3 * hs), dgh(3 * hs);
  double loss_sum = 0.0;

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& seq = *batch[b];
    check_dim(params, seq.dim());
    const std::size_t steps = seq.length();
    load_input(seq, steps, cache);
    run_gru(params, steps, cache);
    const auto hidden = top_hidden(cache, hs);
    const auto att = attention_pool(hidden, steps, {}, params.attention());

    for (std::size_t j = 0; j < hs; ++j) features[j] = att.context[j] * (dropout.empty() ? 1.0 : dropout[b * hs + j]);
    apply_output(params, features, pred);
    for (std::size_t o = 0; o < od; ++o) {
      const double diff = pred[o] - targets[b * od + o];
      loss_sum += diff * diff;
      dpred[o] = scale * diff;
      g[ob_off + o] += dpred[o];
    }
    k.ger(dpred.data(), od, features.data(), hs, g + ow_off);
    std::fill(dfeat.begin(), dfeat.end(), 0.0);
    k.gemv_t(params.output_weight(), od, hs, dpred.data(), dfeat.data());
    for (std::size_t j = 0; j < hs; ++j) dc[j] = dfeat[j] * (dropout.empty() ? 1.0 : dropout[b * hs + j]);

    // attention: c = sum alpha_t h_t, alpha = softmax(a . h_t)
    dalpha.assign(steps, 0.0);
    ds.assign(steps, 0.0);
    double weighted = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      dalpha[t] = k.dot(dc.data(), hidden.data() + t * hs, hs);
      weighted += att.alpha[t] * dalpha[t];
    }
    dh_layer.assign(steps * hs, 0.0);
    for (std::size_t t = 0; t < steps; ++t) {
      ds[t] = att.alpha[t] * (dalpha[t] - weighted);
      k.axpy(ds[t], hidden.data() + t * hs, g + att_off, hs);
      k.axpy(att.alpha[t], dc.data(), dh_layer.data() + t * hs, hs);
      k.axpy(ds[t], params.attention().data(), dh_layer.data() + t * hs, hs);
    }

    // back through time, top layer first
    for (std::size_t l = cfg.layers; l-- > 0;) {
      const auto w = params.layer(l);
      const auto& lc = cache.layers[l];
      double* gwi = g + layout[4 * l].offset;
      double* gwh = g + layout[4 * l + 1].offset;
      double* gbi = g + layout[4 * l + 2].offset;
      double* gbh = g + layout[4 * l + 3].offset;
      const double* x_rows = l == 0 ? cache.input.data() : cache.layers[l - 1].h.data() + hs;
      if (l > 0) dh_below.assign(steps * hs, 0.0);
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      for (std::size_t t = steps; t-- > 0;) {
        const double* hp = lc.h.data() + t * hs;
        for (std::size_t j = 0; j < hs; ++j) {
          const std::size_t i = t * hs + j;
          const double dhj = dh_layer[i] + dh_next[j];
          const double z = lc.z[i], r = lc.r[i], n = lc.n[i];
          const double dn_pre = dhj * (1.0 - z) * (1.0 - n * n);
          const double dz_pre = dhj * (hp[j] - n) * z * (1.0 - z);
          const double dr_pre = dn_pre * lc.gh_n[i] * r * (1.0 - r);
          dgx[j] = dz_pre;
          dgx[hs + j] = dr_pre;
          dgx[2 * hs + j] = dn_pre;
          dgh[j] = dz_pre;
          dgh[hs + j] = dr_pre;
          dgh[2 * hs + j] = dn_pre * r;
          dh[j] = dhj * z;
        }
        const double* x = x_rows + t * w.in;
        k.ger(dgx.data(), 3 * hs, x, w.in, gwi);
        k.ger(dgh.data(), 3 * hs, hp, hs, gwh);
        k.axpy(1.0, dgx.data(), gbi, 3 * hs);
        k.axpy(1.0, dgh.data(), gbh, 3 * hs);
        k.gemv_t(w.w_hidden, 3 * hs, hs, dgh.data(), dh.data());
        std::swap(dh_next, dh);
        if (l > 0) k.gemv_t(w.w_input, 3 * hs, w.in, dgx.data(), dh_below.data() + t * hs);
      }
      if (l > 0) std::swap(dh_layer, dh_below);
    }
  }
  res.loss = loss_sum / static_cast<double>(batch.size() * od);
  if (!std::isfinite(res.loss)) throw DivergenceError("non-finite loss in backward pass");
  for (double v : res.grad) {
    if (!std::isfinite(v)) throw DivergenceError("non-finite gradient in backward pass");
  }
  return res;
}

double evaluate_mse(const SeqHeadParams& params, const SequenceSet& set) {
  const std::size_t od = params.config().output_dim;
  std::vector<double> preds;
  preds.reserve(set.targets.size());
  for (const auto* s : set.seqs) {
    const auto tr = predict(params, *s);
    preds.insert(preds.end(), tr.prediction.begin(), tr.prediction.end());
  }
  if (preds.size() != set.seqs.size() * od) throw std::logic_error("prediction count mismatch");
  return loss_mse(preds, set.targets);
}

namespace {

class SeqHeadObjective {
 public:
  SeqHeadObjective(const SeqHeadConfig& cfg, const SequenceSet& train, const SequenceSet& val)
      : cfg_(cfg), train_(train), val_(val), scratch_(cfg) {}

  std::size_t train_size() const { return train_.seqs.size(); }
  std::size_t val_size() const { return val_.seqs.size(); }

  double loss_grad(std::span<const std::size_t> idx, std::span<const double> p, std::span<double> g,
                   std::mt19937_64& rng) {
    load(p);
    batch_.clear();
    targets_.clear();
    for (std::size_t i : idx) {
      batch_.push_back(train_.seqs[i]);
      for (std::size_t o = 0; o < cfg_.output_dim; ++o) targets_.push_back(train_.targets[i * cfg_.output_dim + o]);
    }
    const auto masks = sample_dropout(idx.size(), cfg_.hidden, cfg_.dropout, rng);
    auto res = backward(scratch_, batch_, targets_, masks);
    std::copy(res.grad.begin(), res.grad.end(), g.begin());
    return res.loss;
  }

  double train_loss(std::span<const double> p) {
    load(p);
    return evaluate_mse(scratch_, train_);
  }

  double val_loss(std::span<const double> p) {
    load(p);
    return evaluate_mse(scratch_, val_);
  }

 private:
  void load(std::span<const double> p) { std::copy(p.begin(), p.end(), scratch_.values().begin()); }

  SeqHeadConfig cfg_;
  const SequenceSet& train_;
  const SequenceSet& val_;
  SeqHeadParams scratch_;
  std::vector<const EmbeddingSequence*> batch_;
  std::vector<double> targets_;
};

void check_set(const SequenceSet& set, const SeqHeadConfig& cfg, const char* what) {
  if (set.targets.size() != set.seqs.size() * cfg.output_dim) {
    throw std::invalid_argument(std::string(what) + " set: targets must hold items x output_dim values");
  }
  for (const auto* s : set.seqs) {
    if (s->dim() != cfg.input_dim) throw std::invalid_argument(std::string(what) + " set: embedding dim mismatch");
  }
}

}  // namespace

SeqHeadModel fit(const SequenceSet& train, const SequenceSet& val, const SeqHeadConfig& config,
                 const TrainConfig& train_config) {
  config.validate();
  train_config.validate();
  if (train.seqs.empty()) throw std::invalid_argument("empty training set");
  check_set(train, config, "training");
  check_set(val, config, "validation");

  SeqHeadModel model{init_params(config), {}, train_config};
  SeqHeadObjective objective(config, train, val);
  model.history = longreg::train(objective, model.params.values(), train_config);
  return model;
}

}  // namespace longreg
