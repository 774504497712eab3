#include "longreg/evaluation.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>
#include <stdexcept>

#include "longreg/optim.hpp"

namespace longreg {

ZScore zscore_fit(std::span<const double> values) {
  if (values.size() < 2) throw std::invalid_argument("standardizer needs at least two values");
  const auto ms = mean_std(values);
  if (!(ms.std > 0.0)) throw std::invalid_argument("zero variance in standardizer fit");
  return {ms.mean, ms.std};
}

Standardizer zscore_fit(std::span<const TraitScores> targets) {
  Standardizer s;
  std::vector<double> col(targets.size());
  for (TraitId t : kAllTraits) {
    for (std::size_t i = 0; i < targets.size(); ++i) col[i] = targets[i][t];
    s.traits[static_cast<std::size_t>(t)] = zscore_fit(col);
  }
  return s;
}

MeanStd mean_std(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean of an empty list");
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  if (v.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

double r2(std::span<const double> y, std::span<const double> y_hat, std::optional<double> reference_mean) {
  if (y.size() != y_hat.size()) throw std::invalid_argument("r2 length mismatch");
  if (y.size() < 2) throw std::invalid_argument("r2 needs at least two values");
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  const double ref = reference_mean.value_or(mean);
  double ss_res = 0.0, ss_tot = 0.0, spread = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    ss_tot += (y[i] - ref) * (y[i] - ref);
    spread += (y[i] - mean) * (y[i] - mean);
  }
  if (!(spread > 0.0)) throw std::invalid_argument("r2 undefined for constant targets");
  return 1.0 - ss_res / ss_tot;
}

Correlation pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson length mismatch");
  const std::size_t n = x.size();
  if (n < 3) throw std::invalid_argument("pearson needs at least three values");
  const auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
  };
  if (constant(x) || constant(y)) throw std::invalid_argument("pearson undefined for constant input");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw std::invalid_argument("pearson undefined for constant input");
  double r = sxy / std::sqrt(sxx * syy);
  r = std::clamp(r, -1.0, 1.0);
  Correlation c{r, 0.0};
  const double dof = static_cast<double>(n - 2);
  if (std::abs(r) < 1.0) {
    const double t = r * std::sqrt(dof / (1.0 - r * r));
    const boost::math::students_t dist(dof);
    c.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return c;
}

FoldPlan make_folds(std::size_t n, const FoldOptions& opt) {
  if (opt.k < 2) throw std::invalid_argument("need at least two folds");
  if (n < opt.k) throw std::invalid_argument("dataset smaller than the number of folds");
  if (!(opt.val_fraction >= 0.0 && opt.val_fraction < 1.0)) throw std::invalid_argument("val_fraction must be in [0, 1)");
  if (!(opt.holdout_fraction > 0.0 && opt.holdout_fraction < 1.0)) {
    throw std::invalid_argument("holdout_fraction must be in (0, 1)");
  }
  FoldPlan plan{opt, n, {}};
  std::mt19937_64 rng(opt.seed);

  auto finish = [&](const std::vector<std::size_t>& order, std::vector<std::size_t> test) {
    std::vector<std::uint8_t> in_test(n, 0);
    for (std::size_t i : test) in_test[i] = 1;
    std::vector<std::size_t> pool;
    for (std::size_t i : order) {
      if (!in_test[i]) pool.push_back(i);
    }
    std::size_t n_val = 0;
    if (opt.val_fraction > 0.0 && pool.size() >= 2) {
      n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(opt.val_fraction * static_cast<double>(pool.size()))));
      n_val = std::min(n_val, pool.size() - 1);
    }
    Fold f;
    f.val.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_val));
    f.train.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_val), pool.end());
    f.test = std::move(test);
    plan.folds.push_back(std::move(f));
  };

  if (opt.mode == SplitMode::kfold) {
    const auto order = seeded_permutation(n, rng);
    std::size_t start = 0;
    for (std::size_t k = 0; k < opt.k; ++k) {
      const std::size_t size = n / opt.k + (k < n % opt.k ? 1 : 0);
      std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(start + size));
      start += size;
      finish(order, std::move(test));
    }
  } else {
    const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(opt.holdout_fraction * static_cast<double>(n))));
    for (std::size_t k = 0; k < opt.k; ++k) {
      const auto order = seeded_permutation(n, rng);
      finish(order, std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test)));
    }
  }
  return plan;
}

FoldPlan make_folds(const DatasetManifest& manifest, const FoldOptions& options) {
  return make_folds(manifest.entries.size(), options);
}

Dataset load_dataset(const DatasetManifest& manifest, bool with_window_predictions) {
  Dataset d;
  d.manifest = manifest;
  for (const auto& e : manifest.entries) {
    try {
      d.sequences.push_back(load_embedding_file(manifest.resolve(e), manifest.window.cap));
    } catch (const DataError& ex) {
      throw DataError(e.transcript_id + ": " + ex.what());
    }
    std::optional<std::vector<double>> preds;
    const auto ppath = manifest.predictions_path(e);
    if (with_window_predictions && std::filesystem::exists(ppath)) {
      const auto f = load_window_predictions(ppath);
      preds.emplace(f.begin(), f.end());
    }
    d.window_predictions.push_back(std::move(preds));
  }
  return d;
}

namespace {

std::vector<double> gather(const Dataset& d, std::span<const std::size_t> idx, TraitId t) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(d.manifest.entries[i].targets[t]);
  return out;
}

std::optional<Correlation> try_pearson(std::span<const double> x, std::span<const double> y) {
  try {
    return pearson_r(x, y);
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
}

nlohmann::ordered_json correlation_json(const std::optional<Correlation>& c) {
  if (!c) return nullptr;
  return {{"r", c->r}, {"p", c->p}};
}

}  // namespace

EvalReport cross_validate(const Dataset& data, Recipe& recipe, const CvOptions& options) {
  const auto plan = make_folds(data.size(), options.folds);
  EvalReport report;
  report.recipe = recipe.name();
  report.config = {{"recipe", recipe.config()},
                   {"k", options.folds.k},
                   {"seed", options.folds.seed},
                   {"val_fraction", options.folds.val_fraction},
                   {"split_mode", options.folds.mode == SplitMode::kfold ? "kfold" : "repeated_holdout"},
                   {"r2_reference", options.r2_train_mean ? "train_mean" : "test_mean"}};

  for (TraitId trait : options.traits) {
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
      const auto& fold = plan.folds[f];
      FoldMetrics m;
      m.fold = f;
      m.trait = trait;
      m.n_train = fold.train.size();
      m.n_val = fold.val.size();
      m.n_test = fold.test.size();
      try {
        std::vector<std::size_t> fit_idx = fold.train;
        fit_idx.insert(fit_idx.end(), fold.val.begin(), fold.val.end());
        const auto raw_fit = gather(data, fit_idx, trait);
        const ZScore scaler = zscore_fit(raw_fit);
        auto standardize = [&](std::vector<double> v) {
          for (double& x : v) x = scaler.apply(x);
          return v;
        };
        FoldInput in{data,
                     trait,
                     fold.train,
                     fold.val,
                     fold.test,
                     scaler,
                     standardize(gather(data, fold.train, trait)),
                     standardize(gather(data, fold.val, trait)),
                     standardize(gather(data, fold.test, trait)),
                     options.folds.seed * 1000003ULL + f * 31ULL + static_cast<std::uint64_t>(trait)};
        const auto pred = recipe.fit_predict(in);
        if (pred.size() != fold.test.size()) throw std::logic_error("recipe returned wrong number of predictions");
        for (double p : pred) {
          if (!std::isfinite(p)) throw DivergenceError("non-finite prediction");
        }
        const auto& y = in.test_y;
        double ss_res = 0.0, mean = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
          ss_res += (y[i] - pred[i]) * (y[i] - pred[i]);
          mean += y[i];
        }
        mean /= static_cast<double>(y.size());
        double var = 0.0;
        for (double v : y) var += (v - mean) * (v - mean);
        m.mse = ss_res / static_cast<double>(y.size());
        m.target_variance = var / static_cast<double>(y.size());
        std::optional<double> ref;
        if (options.r2_train_mean) {
          double tm = 0.0;
          for (double v : in.train_y) tm += v;
          ref = in.train_y.empty() ? 0.0 : tm / static_cast<double>(in.train_y.size());
        }
        m.r2 = r2(y, pred, ref);
        m.pearson = try_pearson(y, pred).value_or(Correlation{0.0, 1.0}).r;

        std::vector<double> raw_pred, lengths, genders, gender_pred;
        for (std::size_t i = 0; i < fold.test.size(); ++i) {
          const auto& e = data.manifest.entries[fold.test[i]];
          raw_pred.push_back(scaler.invert(pred[i]));
          lengths.push_back(static_cast<double>(e.n_tokens));
          if (e.gender) {
            genders.push_back(*e.gender);
            gender_pred.push_back(raw_pred.back());
          }
        }
        m.length_bias = try_pearson(lengths, raw_pred);
        if (!genders.empty()) m.gender_bias = try_pearson(genders, gender_pred);
      } catch (const DivergenceError& ex) {
        m.error = std::string("divergence: ") + ex.what();
      } catch (const std::invalid_argument& ex) {
        m.error = ex.what();
      }
      report.folds.push_back(std::move(m));
    }

    TraitSummary s;
    s.trait = trait;
    std::vector<double> mse, r2v, pr;
    for (const auto& m : report.folds) {
      if (m.trait != trait || m.error) continue;
      mse.push_back(m.mse);
      r2v.push_back(m.r2);
      pr.push_back(m.pearson);
    }
    s.folds_ok = mse.size();
    if (!mse.empty()) {
      s.mse = mean_std(mse);
      s.r2 = mean_std(r2v);
      s.pearson = mean_std(pr);
    }
    report.summary.push_back(s);
  }
  return report;
}

nlohmann::ordered_json report_to_json(const EvalReport& report) {
  nlohmann::ordered_json folds = nlohmann::ordered_json::array();
  for (const auto& m : report.folds) {
    nlohmann::ordered_json j;
    j["fold"] = m.fold;
    j["trait"] = trait_name(m.trait);
    j["n_train"] = m.n_train;
    j["n_val"] = m.n_val;
    j["n_test"] = m.n_test;
    if (m.error) {
      j["error"] = *m.error;
    } else {
      j["mse"] = m.mse;
      j["r2"] = m.r2;
      j["pearson_r"] = m.pearson;
      j["target_variance"] = m.target_variance;
      j["length_bias"] = correlation_json(m.length_bias);
      j["gender_bias"] = correlation_json(m.gender_bias);
    }
    folds.push_back(std::move(j));
  }
  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  for (const auto& s : report.summary) {
    summary.push_back({{"trait", trait_name(s.trait)},
                       {"folds_ok", s.folds_ok},
                       {"mse", {{"mean", s.mse.mean}, {"std", s.mse.std}}},
                       {"r2", {{"mean", s.r2.mean}, {"std", s.r2.std}}},
                       {"pearson_r", {{"mean", s.pearson.mean}, {"std", s.pearson.std}}}});
  }
  nlohmann::ordered_json j;
  j["recipe"] = report.recipe;
  j["config"] = report.config;
  j["folds"] = std::move(folds);
  j["summary"] = std::move(summary);
  return j;
}

std::string report_json_text(const EvalReport& report) { return report_to_json(report).dump(2) + "\n"; }

std::string reports_to_csv(std::span<const EvalReport> reports) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "recipe";
  for (TraitId t : kAllTraits) {
    const char c = trait_letter(t);
    out << ',' << c << "_MSE_mean," << c << "_MSE_std," << c << "_R2_mean," << c << "_R2_std";
  }
  out << '\n';
  for (const auto& r : reports) {
    out << r.recipe;
    for (TraitId t : kAllTraits) {
      const auto it = std::find_if(r.summary.begin(), r.summary.end(), [t](const TraitSummary& s) { return s.trait == t; });
      if (it == r.summary.end() || it->folds_ok == 0) {
        out << ",,,,";
        continue;
      }
      out << ',' << it->mse.mean << ',' << it->mse.std << ',' << it->r2.mean << ',' << it->r2.std;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace longreg
