#pragma once

// Model families for cross_validate: the GRU-attention head and the
// baselines it is compared against, plus two reference recipes used to
// check the harness itself.

#include <cstdint>

#include "longreg/baselines.hpp"
#include "longreg/evaluation.hpp"
#include "longreg/seq_head.hpp"

namespace longreg {

class RnnRecipe : public Recipe {
 public:
  RnnRecipe(SeqHeadConfig model, TrainConfig train) : model_(model), train_(train) {}
  std::string name() const override { return "rnn"; }
  nlohmann::ordered_json config() const override;
  std::vector<double> fit_predict(const FoldInput& in) override;

 private:
  SeqHeadConfig model_;
  TrainConfig train_;
};

class FfnRecipe : public Recipe {
 public:
  FfnRecipe(FfnConfig model, TrainConfig train) : model_(model), train_(train) {}
  std::string name() const override { return "ffn"; }
  nlohmann::ordered_json config() const override;
  std::vector<double> fit_predict(const FoldInput& in) override;

 private:
  FfnConfig model_;
  TrainConfig train_;
};

enum class RidgeFeatures { mean_pool, random_window };

class RidgeRecipe : public Recipe {
 public:
  explicit RidgeRecipe(double lambda = 1.0, RidgeFeatures features = RidgeFeatures::mean_pool)
      : lambda_(lambda), features_(features) {}
  std::string name() const override;
  nlohmann::ordered_json config() const override;
  std::vector<double> fit_predict(const FoldInput& in) override;

 private:
  double lambda_;
  RidgeFeatures features_;
};

/// Median of the per-window predictions stored next to each embedding file.
/// Throws DataError when a transcript has no predictions file.
class MedianRecipe : public Recipe {
 public:
  std::string name() const override { return "median"; }
  nlohmann::ordered_json config() const override;
  std::vector<double> fit_predict(const FoldInput& in) override;
};

/// Returns the true standardized test targets.
class OracleRecipe : public Recipe {
 public:
  std::string name() const override { return "oracle"; }
  nlohmann::ordered_json config() const override { return nlohmann::ordered_json::object(); }
  std::vector<double> fit_predict(const FoldInput& in) override { return in.test_y; }
};

/// Predicts the training mean everywhere.
class MeanRecipe : public Recipe {
 public:
  std::string name() const override { return "mean"; }
  nlohmann::ordered_json config() const override { return nlohmann::ordered_json::object(); }
  std::vector<double> fit_predict(const FoldInput& in) override;
};

nlohmann::ordered_json to_json(const SeqHeadConfig& c);
nlohmann::ordered_json to_json(const FfnConfig& c);
nlohmann::ordered_json to_json(const TrainConfig& c);

/// Mean-pooled features of the given items.
FeatureMatrix mean_pool_features(const Dataset& data, std::span<const std::size_t> idx);

/// One uniformly chosen window per item, drawn from rng.
FeatureMatrix random_window_features(const Dataset& data, std::span<const std::size_t> idx, std::mt19937_64& rng);

}  // namespace longreg
