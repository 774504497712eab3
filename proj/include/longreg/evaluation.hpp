#pragma once

// Metrics, target standardization, deterministic fold plans and the
// cross-validation harness.

#include <array>
#include <cstddef>
#include <cstdint>
#include <json.hpp>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "longreg/core.hpp"

namespace longreg {

/// z = (x - mean) / sd with the sample standard deviation of the fitting set.
struct ZScore {
  double mean = 0.0;
  double sd = 1.0;

  double apply(double raw) const { return (raw - mean) / sd; }
  double invert(double z) const { return z * sd + mean; }

  friend bool operator==(const ZScore&, const ZScore&) = default;
};

/// Throws std::invalid_argument with fewer than two values or zero variance.
ZScore zscore_fit(std::span<const double> values);

struct Standardizer {
  std::array<ZScore, 5> traits;

  const ZScore& operator[](TraitId t) const { return traits[static_cast<std::size_t>(t)]; }
  double apply(TraitId t, double raw) const { return (*this)[t].apply(raw); }
  double invert(TraitId t, double z) const { return (*this)[t].invert(z); }
};

Standardizer zscore_fit(std::span<const TraitScores> targets);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

MeanStd mean_std(std::span<const double> values);

/// 1 - SS_res / SS_tot, SS_tot about mean(y) or about reference_mean when
/// given. Throws std::invalid_argument for n < 2 or constant y.
double r2(std::span<const double> y, std::span<const double> y_hat, std::optional<double> reference_mean = {});

struct Correlation {
  double r = 0.0;
  double p = 1.0;  // two-sided, Student-t with n - 2 degrees of freedom
};

/// Throws std::invalid_argument for n < 3 or a constant input.
Correlation pearson_r(std::span<const double> x, std::span<const double> y);

enum class SplitMode { kfold, repeated_holdout };

struct Fold {
  std::vector<std::size_t> train;  // excludes val
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct FoldOptions {
  std::size_t k = 5;
  std::uint64_t seed = 0;
  double val_fraction = 0.05;   // of each fold's training portion
  SplitMode mode = SplitMode::kfold;
  double holdout_fraction = 0.2;  // repeated_holdout only
};

struct FoldPlan {
  FoldOptions options;
  std::size_t n_items = 0;
  std::vector<Fold> folds;
};

/// kfold: seeded shuffle, then contiguous partition into k test blocks.
/// repeated_holdout: k independent seeded 80:20 splits.
/// Throws std::invalid_argument when n_items < k.
FoldPlan make_folds(std::size_t n_items, const FoldOptions& options);
FoldPlan make_folds(const DatasetManifest& manifest, const FoldOptions& options);

/// Manifest plus loaded embeddings and, when present, per-window predictions.
struct Dataset {
  DatasetManifest manifest;
  std::vector<EmbeddingSequence> sequences;
  std::vector<std::optional<std::vector<double>>> window_predictions;

  std::size_t size() const { return sequences.size(); }
};

/// Throws DataError on any unreadable embedding file.
Dataset load_dataset(const DatasetManifest& manifest, bool with_window_predictions = true);

struct FoldInput {
  const Dataset& data;
  TraitId trait;
  std::span<const std::size_t> train;
  std::span<const std::size_t> val;
  std::span<const std::size_t> test;
  ZScore scaler;
  std::vector<double> train_y;  // standardized
  std::vector<double> val_y;    // standardized
  std::vector<double> test_y;   // standardized; for oracle recipes only
  std::uint64_t seed = 0;
};

/// A model family evaluated by cross_validate.
class Recipe {
 public:
  virtual ~Recipe() = default;
  virtual std::string name() const = 0;
  virtual nlohmann::ordered_json config() const = 0;
  /// Standardized predictions for in.test, in order.
  virtual std::vector<double> fit_predict(const FoldInput& in) = 0;
};

struct FoldMetrics {
  std::size_t fold = 0;
  TraitId trait = TraitId::O;
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  std::optional<std::string> error;
  double mse = 0.0;
  double r2 = 0.0;
  double pearson = 0.0;
  double target_variance = 0.0;  // population variance of standardized test targets
  std::optional<Correlation> length_bias;  // prediction vs n_tokens
  std::optional<Correlation> gender_bias;  // prediction vs gender code
};

struct TraitSummary {
  TraitId trait = TraitId::O;
  std::size_t folds_ok = 0;
  MeanStd mse, r2, pearson;
};

struct EvalReport {
  std::string recipe;
  nlohmann::ordered_json config;  // recipe config + cv options
  std::vector<FoldMetrics> folds;
  std::vector<TraitSummary> summary;
};

struct CvOptions {
  FoldOptions folds;
  std::vector<TraitId> traits{kAllTraits.begin(), kAllTraits.end()};
  bool r2_train_mean = false;  // SS_tot about the training mean instead of the test mean
};

/// Per fold and trait: fit the standardizer on the training portion, train
/// the recipe, score the test block on the standardized scale. A failing
/// fold is recorded and the run continues.
EvalReport cross_validate(const Dataset& data, Recipe& recipe, const CvOptions& options);

nlohmann::ordered_json report_to_json(const EvalReport& report);
std::string report_json_text(const EvalReport& report);

/// One row per report; columns trait x {MSE, R2} as mean and std.
std::string reports_to_csv(std::span<const EvalReport> reports);

}  // namespace longreg
