#pragma once

// Mini-batch Adam with early stopping on validation MSE, shared by the
// sequence head and the FFN baseline. Parameters live in one flat vector so
// the optimizer, checkpointing and finite-difference checks see one layout.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "longreg/core.hpp"

namespace longreg {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;           // epochs without val improvement; 0 disables
  std::optional<double> clip_norm;    // global L2 gradient clipping
  std::optional<double> target_train_loss;  // stop once full-pass train MSE falls below
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;  // full-pass MSE after each epoch, dropout off
  std::vector<double> val_loss;    // empty without a validation set
  std::size_t best_epoch = 0;      // 1-based epoch of the returned parameters
  bool stopped_early = false;
  bool reached_target = false;
};

class Adam {
 public:
  Adam(std::size_t n, const TrainConfig& cfg);
  void step(std::span<double> params, std::span<const double> grad);
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

/// Scales grad in place so that its L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_gradient(std::span<double> grad, double max_norm);

/// Uniform integer in [0, n) by rejection; independent of the standard
/// library's distribution implementation.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);

/// Fisher-Yates permutation of 0..n-1 driven by uniform_index.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::mt19937_64& rng);

/// What the training loop needs from a model.
template <class T>
concept Objective = requires(T& o, std::span<const std::size_t> idx, std::span<const double> p, std::span<double> g,
                             std::mt19937_64& rng) {
  { o.train_size() } -> std::convertible_to<std::size_t>;
  { o.val_size() } -> std::convertible_to<std::size_t>;
  // Mean loss over the batch; writes its gradient into g (overwritten).
  { o.loss_grad(idx, p, g, rng) } -> std::convertible_to<double>;
  { o.train_loss(p) } -> std::convertible_to<double>;
  { o.val_loss(p) } -> std::convertible_to<double>;
};

namespace detail {
inline void check_finite(double loss, std::span<const double> grad, std::size_t epoch) {
  if (!std::isfinite(loss)) {
    throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch));
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw DivergenceError("non-finite gradient at epoch " + std::to_string(epoch));
  }
}
}  // namespace detail

/// Trains params in place. On return params hold the best-validation
/// checkpoint (or the final iterate when there is no validation set).
template <Objective O>
TrainHistory train(O& objective, std::vector<double>& params, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = objective.train_size();
  if (n == 0) throw std::invalid_argument("empty training set");
  const bool has_val = objective.val_size() > 0;

  std::mt19937_64 order_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Adam adam(params.size(), cfg);
  std::vector<double> grad(params.size());
  std::vector<double> best = params;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  TrainHistory hist;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto order = seeded_permutation(n, order_rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      const double loss = objective.loss_grad(batch, params, grad, dropout_rng);
      detail::check_finite(loss, grad, epoch);
      if (cfg.clip_norm) clip_gradient(grad, *cfg.clip_norm);
      adam.step(params, grad);
    }
    const double train_loss = objective.train_loss(params);
    if (!std::isfinite(train_loss)) throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch));
    hist.train_loss.push_back(train_loss);

    if (has_val) {
      const double val = objective.val_loss(params);
      if (!std::isfinite(val)) throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch));
      hist.val_loss.push_back(val);
      if (val < best_val) {
        best_val = val;
        best = params;
        hist.best_epoch = epoch;
        since_best = 0;
      } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
        hist.stopped_early = true;
        break;
      }
    } else {
      hist.best_epoch = epoch;
    }
    if (cfg.target_train_loss && train_loss < *cfg.target_train_loss) {
      hist.reached_target = true;
      break;
    }
  }
  if (has_val) params = std::move(best);
  return hist;
}

}  // namespace longreg
