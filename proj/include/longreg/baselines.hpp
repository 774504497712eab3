#pragma once

// Reference predictors: median of per-window predictions, a mean-pool
// feed-forward network and a closed-form ridge probe.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "longreg/core.hpp"
#include "longreg/optim.hpp"

namespace longreg {

/// Median; an even count gives the mean of the two middle values.
/// Throws std::invalid_argument on an empty input.
double median_aggregate(std::span<const double> per_window);

/// Mean of the true rows (padding never enters an EmbeddingSequence).
std::vector<double> mean_pool(const EmbeddingSequence& seq);

/// Mean over the unmasked steps of batch row b.
std::vector<double> mean_pool(const PaddedBatch& batch, std::size_t b);

/// Row-major N x D design matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
};

struct RidgeModel {
  std::vector<double> weights;
  double intercept = 0.0;
  double lambda = 0.0;
  bool centered = true;

  double predict(std::span<const double> x) const;
};

struct RidgeOptions {
  double lambda = 1.0;
  bool center = true;  // off: solve (X^T X + lambda I) w = X^T y without intercept
};

/// Solves (Xc^T Xc + lambda I) w = Xc^T yc on column-centered data; the
/// intercept restores the means. Throws std::invalid_argument for a
/// singular system (lambda = 0 with rank-deficient X) or bad shapes.
RidgeModel ridge_fit(const FeatureMatrix& x, std::span<const double> y, const RidgeOptions& options = {});

struct FfnConfig {
  std::size_t input_dim = kDefaultEmbeddingDim;
  std::size_t hidden = 256;
  double dropout = 0.1;  // on the hidden activations
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const FfnConfig&, const FfnConfig&) = default;
};

/// Two-layer ReLU network D -> hidden -> 1. Parameters are laid out as
/// w1 (hidden x D), b1 (hidden), w2 (hidden), b2 (1).
class FfnModel {
 public:
  FfnModel() = default;
  explicit FfnModel(const FfnConfig& config);  // deterministic init from config.seed

  const FfnConfig& config() const { return config_; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double predict(std::span<const double> features) const;

  friend bool operator==(const FfnModel&, const FfnModel&) = default;

 private:
  FfnConfig config_;
  std::vector<double> values_;
};

struct FfnGradient {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Batch-mean MSE and its gradient. keep_masks (batch x hidden, values 0 or
/// 1/(1-p)) apply dropout; empty means off.
FfnGradient ffn_backward(const FfnModel& model, const FeatureMatrix& x, std::span<const double> y,
                         std::span<const double> keep_masks = {});

struct FfnFit {
  FfnModel model;
  TrainHistory history;
};

/// Same optimizer and early-stopping contract as the sequence head.
FfnFit ffn_fit(const FeatureMatrix& train_x, std::span<const double> train_y, const FeatureMatrix& val_x,
               std::span<const double> val_y, const FfnConfig& config, const TrainConfig& train_config);

}  // namespace longreg
