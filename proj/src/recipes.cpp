#include "longreg/recipes.hpp"

#include <stdexcept>

namespace longreg {

nlohmann::ordered_json to_json(const SeqHeadConfig& c) {
  return {{"input_dim", c.input_dim}, {"hidden", c.hidden},   {"layers", c.layers},
          {"output_dim", c.output_dim}, {"dropout", c.dropout}, {"seed", c.seed}};
}

nlohmann::ordered_json to_json(const FfnConfig& c) {
  return {{"input_dim", c.input_dim}, {"hidden", c.hidden}, {"dropout", c.dropout}, {"seed", c.seed}};
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j{{"learning_rate", c.learning_rate},
                           {"batch_size", c.batch_size},
                           {"max_epochs", c.max_epochs},
                           {"patience", c.patience},
                           {"clip_norm", nullptr},
                           {"target_train_loss", nullptr},
                           {"beta1", c.beta1},
                           {"beta2", c.beta2},
                           {"eps", c.eps},
                           {"seed", c.seed}};
  if (c.clip_norm) j["clip_norm"] = *c.clip_norm;
  if (c.target_train_loss) j["target_train_loss"] = *c.target_train_loss;
  return j;
}

FeatureMatrix mean_pool_features(const Dataset& data, std::span<const std::size_t> idx) {
  FeatureMatrix x{idx.size(), data.manifest.dim, {}};
  x.values.reserve(x.rows * x.cols);
  for (std::size_t i : idx) {
    const auto m = mean_pool(data.sequences[i]);
    if (m.size() != x.cols) throw DataError("embedding dim does not match manifest");
    x.values.insert(x.values.end(), m.begin(), m.end());
  }
  return x;
}

FeatureMatrix random_window_features(const Dataset& data, std::span<const std::size_t> idx, std::mt19937_64& rng) {
  FeatureMatrix x{idx.size(), data.manifest.dim, {}};
  x.values.reserve(x.rows * x.cols);
  for (std::size_t i : idx) {
    const auto& seq = data.sequences[i];
    if (seq.dim() != x.cols) throw DataError("embedding dim does not match manifest");
    const auto row = seq.row(uniform_index(rng, seq.length()));
    x.values.insert(x.values.end(), row.begin(), row.end());
  }
  return x;
}

nlohmann::ordered_json RnnRecipe::config() const {
  return {{"model", to_json(model_)}, {"train", to_json(train_)}};
}

std::vector<double> RnnRecipe::fit_predict(const FoldInput& in) {
  SeqHeadConfig mc = model_;
  mc.input_dim = in.data.manifest.dim;
  mc.output_dim = 1;
  mc.seed = model_.seed ^ in.seed;
  TrainConfig tc = train_;
  tc.seed = train_.seed ^ in.seed;
  SequenceSet train_set, val_set;
  for (std::size_t i : in.train) train_set.seqs.push_back(&in.data.sequences[i]);
  train_set.targets = in.train_y;
  for (std::size_t i : in.val) val_set.seqs.push_back(&in.data.sequences[i]);
  val_set.targets = in.val_y;
  const auto model = fit(train_set, val_set, mc, tc);
  std::vector<double> out;
  for (std::size_t i : in.test) out.push_back(predict(model.params, in.data.sequences[i]).prediction[0]);
  return out;
}

nlohmann::ordered_json FfnRecipe::config() const {
  return {{"model", to_json(model_)}, {"train", to_json(train_)}};
}

std::vector<double> FfnRecipe::fit_predict(const FoldInput& in) {
  FfnConfig mc = model_;
  mc.input_dim = in.data.manifest.dim;
  mc.seed = model_.seed ^ in.seed;
  TrainConfig tc = train_;
  tc.seed = train_.seed ^ in.seed;
  const auto tx = mean_pool_features(in.data, in.train);
  const auto vx = mean_pool_features(in.data, in.val);
  const auto fitted = ffn_fit(tx, in.train_y, vx, in.val_y, mc, tc);
  const auto sx = mean_pool_features(in.data, in.test);
  std::vector<double> out;
  for (std::size_t i = 0; i < sx.rows; ++i) out.push_back(fitted.model.predict(sx.row(i)));
  return out;
}

std::string RidgeRecipe::name() const {
  return features_ == RidgeFeatures::mean_pool ? "ridge" : "ridge-random-window";
}

nlohmann::ordered_json RidgeRecipe::config() const {
  return {{"lambda", lambda_}, {"features", features_ == RidgeFeatures::mean_pool ? "mean" : "random-window"}};
}

std::vector<double> RidgeRecipe::fit_predict(const FoldInput& in) {
  std::vector<std::size_t> fit_idx(in.train.begin(), in.train.end());
  fit_idx.insert(fit_idx.end(), in.val.begin(), in.val.end());
  std::vector<double> fit_y = in.train_y;
  fit_y.insert(fit_y.end(), in.val_y.begin(), in.val_y.end());
  std::mt19937_64 rng(in.seed);
  const auto x = features_ == RidgeFeatures::mean_pool ? mean_pool_features(in.data, fit_idx)
                                                       : random_window_features(in.data, fit_idx, rng);
  const auto model = ridge_fit(x, fit_y, {lambda_, true});
  const auto sx = features_ == RidgeFeatures::mean_pool ? mean_pool_features(in.data, in.test)
                                                        : random_window_features(in.data, in.test, rng);
  std::vector<double> out;
  for (std::size_t i = 0; i < sx.rows; ++i) out.push_back(model.predict(sx.row(i)));
  return out;
}

nlohmann::ordered_json MedianRecipe::config() const { return {{"source", "window_predictions"}}; }

std::vector<double> MedianRecipe::fit_predict(const FoldInput& in) {
  std::vector<double> out;
  for (std::size_t i : in.test) {
    const auto& preds = in.data.window_predictions[i];
    if (!preds) throw DataError("no per-window predictions for " + in.data.manifest.entries[i].transcript_id);
    out.push_back(in.scaler.apply(median_aggregate(*preds)));
  }
  return out;
}

std::vector<double> MeanRecipe::fit_predict(const FoldInput& in) {
  double m = 0.0;
  for (double v : in.train_y) m += v;
  m /= static_cast<double>(in.train_y.size());
  return std::vector<double>(in.test.size(), m);
}

}  // namespace longreg
