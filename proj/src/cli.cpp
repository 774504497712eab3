#include "longreg/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "longreg/checkpoint.hpp"
#include "longreg/interpret.hpp"
#include "longreg/recipes.hpp"
#include "longreg/synth.hpp"
#include "longreg/windowing.hpp"

namespace longreg::cli {
namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

enum class KeyType { string, number, list, optional_number };

struct Key {
  KeyType type;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename T>
T as(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ConfigError(key + ": expected a non-negative integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(key + ": expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(key + ": expected a number");
    } else {
      if (!v.is_string()) throw ConfigError(key + ": expected a string");
    }
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(key + ": wrong type");
  }
}

#define LONGREG_KEY(name, type)                                                  \
  {                                                                              \
    #name, Key {                                                                 \
      type, [](RunConfig& c, const json& v) { c.name = as<decltype(c.name)>(v, #name); } \
    }                                                                            \
  }

const std::map<std::string, Key>& keys() {
  static const std::map<std::string, Key> table = {
      LONGREG_KEY(seed, KeyType::number),
      LONGREG_KEY(trait, KeyType::string),
      LONGREG_KEY(manifest, KeyType::string),
      LONGREG_KEY(out, KeyType::string),
      LONGREG_KEY(models, KeyType::string),
      {"recipe", Key{KeyType::list,
                     [](RunConfig& c, const json& v) {
                       if (v.is_string()) {
                         c.recipe.clear();
                         std::stringstream ss(v.get<std::string>());
                         for (std::string part; std::getline(ss, part, ',');) {
                           if (!part.empty()) c.recipe.push_back(part);
                         }
                       } else if (v.is_array()) {
                         c.recipe.clear();
                         for (const auto& e : v) c.recipe.push_back(as<std::string>(e, "recipe"));
                       } else {
                         throw ConfigError("recipe: expected a string or a list of strings");
                       }
                     }}},
      LONGREG_KEY(tokens, KeyType::number),
      LONGREG_KEY(window, KeyType::number),
      LONGREG_KEY(stride, KeyType::number),
      LONGREG_KEY(cap, KeyType::number),
      LONGREG_KEY(folds, KeyType::number),
      LONGREG_KEY(val_fraction, KeyType::number),
      LONGREG_KEY(split, KeyType::string),
      LONGREG_KEY(r2_reference, KeyType::string),
      LONGREG_KEY(learning_rate, KeyType::number),
      LONGREG_KEY(batch_size, KeyType::number),
      LONGREG_KEY(max_epochs, KeyType::number),
      LONGREG_KEY(patience, KeyType::number),
      {"clip_norm", Key{KeyType::optional_number,
                        [](RunConfig& c, const json& v) {
                          if (v.is_null()) {
                            c.clip_norm.reset();
                          } else {
                            c.clip_norm = as<double>(v, "clip_norm");
                          }
                        }}},
      LONGREG_KEY(hidden, KeyType::number),
      LONGREG_KEY(layers, KeyType::number),
      LONGREG_KEY(dropout, KeyType::number),
      LONGREG_KEY(ffn_hidden, KeyType::number),
      LONGREG_KEY(ridge_lambda, KeyType::number),
      LONGREG_KEY(k, KeyType::number),
      LONGREG_KEY(n, KeyType::number),
      LONGREG_KEY(dim, KeyType::number),
      LONGREG_KEY(t_min, KeyType::number),
      LONGREG_KEY(t_max, KeyType::number),
      LONGREG_KEY(planted, KeyType::number),
      LONGREG_KEY(snr, KeyType::number),
      LONGREG_KEY(kind, KeyType::string),
      LONGREG_KEY(explainable_variance, KeyType::number),
      LONGREG_KEY(raw_mean, KeyType::number),
      LONGREG_KEY(raw_sd, KeyType::number),
  };
  return table;
}

#undef LONGREG_KEY

const std::map<std::string, std::string> kAliases = {{"lr", "learning_rate"}};

const std::vector<std::string> kRecipes = {"rnn", "ffn", "ridge", "ridge-random-window", "median", "mean"};

std::vector<TraitId> selected_traits(const RunConfig& c) {
  if (c.trait == "all") return {kAllTraits.begin(), kAllTraits.end()};
  return {parse_trait(c.trait)};
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.learning_rate = c.learning_rate;
  t.batch_size = c.batch_size;
  t.max_epochs = c.max_epochs;
  t.patience = c.patience;
  t.clip_norm = c.clip_norm;
  t.seed = c.seed;
  return t;
}

SynthSpec synth_spec(const RunConfig& c) {
  SynthSpec s;
  s.n = c.n;
  s.dim = c.dim;
  s.t_min = c.t_min;
  s.t_max = c.t_max;
  s.planted = c.planted;
  s.snr = c.snr;
  s.kind = parse_target_kind(c.kind);
  s.explainable_variance = c.explainable_variance;
  s.seed = c.seed;
  s.traits = selected_traits(c);
  s.raw_mean = c.raw_mean;
  s.raw_sd = c.raw_sd;
  s.window = {static_cast<std::size_t>(c.window), static_cast<std::size_t>(c.stride), static_cast<std::size_t>(c.cap)};
  return s;
}

}  // namespace

void RunConfig::validate() const {
  try {
    train_config(*this).validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (trait != "all") {
    try {
      parse_trait(trait);
    } catch (const std::invalid_argument&) {
      throw ConfigError("trait: expected one of O, C, E, A, N or all");
    }
  }
  if (recipe.empty()) throw ConfigError("recipe: at least one recipe is required");
  for (const auto& r : recipe) {
    if (std::find(kRecipes.begin(), kRecipes.end(), r) == kRecipes.end()) {
      throw ConfigError("recipe: unknown recipe '" + r + "'");
    }
  }
  if (tokens < 0) throw ConfigError("tokens: must be >= 0");
  if (window < 1) throw ConfigError("window: must be >= 1");
  if (stride < 1) throw ConfigError("stride: must be >= 1");
  if (cap < 1) throw ConfigError("cap: must be >= 1");
  if (folds < 2) throw ConfigError("folds: must be >= 2");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction: must be in (0, 1)");
  if (split != "kfold" && split != "repeated_holdout") throw ConfigError("split: expected kfold or repeated_holdout");
  if (r2_reference != "test_mean" && r2_reference != "train_mean") {
    throw ConfigError("r2_reference: expected test_mean or train_mean");
  }
  if (hidden < 1) throw ConfigError("hidden: must be >= 1");
  if (layers < 1) throw ConfigError("layers: must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout: must be in [0, 1)");
  if (ffn_hidden < 1) throw ConfigError("ffn_hidden: must be >= 1");
  if (!(ridge_lambda >= 0.0)) throw ConfigError("ridge_lambda: must be >= 0");
  if (k < 1) throw ConfigError("k: must be >= 1");
  try {
    synth_spec(*this).validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ojson to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"trait", c.trait},
          {"manifest", c.manifest},
          {"out", c.out},
          {"models", c.models},
          {"recipe", c.recipe},
          {"tokens", c.tokens},
          {"window", c.window},
          {"stride", c.stride},
          {"cap", c.cap},
          {"folds", c.folds},
          {"val_fraction", c.val_fraction},
          {"split", c.split},
          {"r2_reference", c.r2_reference},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"clip_norm", c.clip_norm ? ojson(*c.clip_norm) : ojson(nullptr)},
          {"hidden", c.hidden},
          {"layers", c.layers},
          {"dropout", c.dropout},
          {"ffn_hidden", c.ffn_hidden},
          {"ridge_lambda", c.ridge_lambda},
          {"k", c.k},
          {"n", c.n},
          {"dim", c.dim},
          {"t_min", c.t_min},
          {"t_max", c.t_max},
          {"planted", c.planted},
          {"snr", c.snr},
          {"kind", c.kind},
          {"explainable_variance", c.explainable_variance},
          {"raw_mean", c.raw_mean},
          {"raw_sd", c.raw_sd}};
}

void apply_json(RunConfig& c, const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::vector<std::string> unknown;
  for (const auto& [raw_key, value] : j.items()) {
    const auto alias = kAliases.find(raw_key);
    const std::string key = alias == kAliases.end() ? raw_key : alias->second;
    if (keys().count(key) == 0) unknown.push_back(raw_key);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  for (const auto& [raw_key, value] : j.items()) {
    const auto alias = kAliases.find(raw_key);
    const std::string key = alias == kAliases.end() ? raw_key : alias->second;
    keys().at(key).set(c, value);
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  RunConfig c;
  apply_json(c, j);
  c.validate();
  return c;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string letter(TraitId t) { return std::string(1, trait_letter(t)); }

DatasetManifest require_manifest(const RunConfig& c) {
  if (c.manifest.empty()) throw ConfigError("manifest: a manifest path is required");
  return load_manifest(c.manifest);
}

void require_valid(const DatasetManifest& m) {
  const auto report = validate_manifest(m);
  if (!report.ok()) {
    const auto& v = report.violations.front();
    throw DataError("manifest invalid (" + std::to_string(report.violations.size()) + " violations), first: " +
                    std::string(violation_name(v.kind)) + " for '" + v.transcript_id + "': " + v.message);
  }
}

std::unique_ptr<Recipe> make_recipe(const std::string& name, const RunConfig& c, std::size_t dim) {
  if (name == "rnn") {
    SeqHeadConfig m;
    m.input_dim = dim;
    m.hidden = c.hidden;
    m.layers = c.layers;
    m.dropout = c.dropout;
    m.seed = c.seed;
    return std::make_unique<RnnRecipe>(m, train_config(c));
  }
  if (name == "ffn") {
    FfnConfig m;
    m.input_dim = dim;
    m.hidden = c.ffn_hidden;
    m.dropout = c.dropout;
    m.seed = c.seed;
    return std::make_unique<FfnRecipe>(m, train_config(c));
  }
  if (name == "ridge") return std::make_unique<RidgeRecipe>(c.ridge_lambda, RidgeFeatures::mean_pool);
  if (name == "ridge-random-window") return std::make_unique<RidgeRecipe>(c.ridge_lambda, RidgeFeatures::random_window);
  if (name == "median") return std::make_unique<MedianRecipe>();
  if (name == "mean") return std::make_unique<MeanRecipe>();
  throw ConfigError("recipe: unknown recipe '" + name + "'");
}

int cmd_synth(const RunConfig& c, std::ostream& out) {
  const auto spec = synth_spec(c);
  const std::filesystem::path dir = c.out;
  const auto ds = spec.kind == TargetKind::linear ? gen_dataset(spec, dir) : gen_sequential_dataset(spec, dir);
  write_text(dir / "run_config.json", to_json(c).dump(2) + "\n");
  out << "wrote " << ds.sequences.size() << " transcripts (" << target_kind_name(spec.kind) << ", D=" << spec.dim
      << ") to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_plan(const RunConfig& c, std::ostream& out, bool write_file) {
  const auto plan = plan_windows(c.tokens, c.window, c.stride, c.cap);
  for (const auto& s : plan.spans) out << s.start << ' ' << s.end << '\n';
  if (plan.capped()) out << "# capped at " << c.cap << " windows\n";
  if (write_file) write_text(std::filesystem::path(c.out) / "plan.json", plan_to_json(plan) + "\n");
  return kExitOk;
}

int cmd_validate(const RunConfig& c, std::ostream& out) {
  const auto m = require_manifest(c);
  const auto report = validate_manifest(m);
  for (const auto& v : report.violations) {
    out << violation_name(v.kind) << '\t' << v.transcript_id << '\t' << v.message << '\n';
  }
  out << (report.ok() ? "ok" : "invalid") << ": " << m.entries.size() << " entries, " << report.violations.size()
      << " violations\n";
  return report.ok() ? kExitOk : kExitData;
}

int cmd_train(const RunConfig& c, std::ostream& out) {
  if (c.recipe.size() != 1) throw ConfigError("recipe: train takes exactly one recipe");
  const std::string& name = c.recipe.front();
  if (name != "rnn" && name != "ffn" && name != "ridge") throw ConfigError("recipe: train supports rnn, ffn and ridge");
  const auto manifest = require_manifest(c);
  require_valid(manifest);
  const auto data = load_dataset(manifest, false);
  const std::size_t n = data.size();
  if (n < 3) throw DataError("need at least three transcripts to train");
  std::mt19937_64 rng(c.seed);
  const auto perm = seeded_permutation(n, rng);
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(c.val_fraction * static_cast<double>(n))));
  const std::vector<std::size_t> val(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  const std::vector<std::size_t> tr(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  const std::filesystem::path dir = c.out;
  std::filesystem::create_directories(dir);

  for (TraitId trait : selected_traits(c)) {
    std::vector<double> raw;
    for (const auto& e : manifest.entries) raw.push_back(e.targets[trait]);
    const ZScore scaler = zscore_fit(raw);
    auto gather = [&](const std::vector<std::size_t>& idx) {
      SequenceSet s;
      for (std::size_t i : idx) {
        s.seqs.push_back(&data.sequences[i]);
        s.targets.push_back(scaler.apply(raw[i]));
      }
      return s;
    };
    const auto train_set = gather(tr);
    const auto val_set = gather(val);
    Checkpoint ckpt;
    ojson summary;
    if (name == "rnn") {
      SeqHeadConfig m;
      m.input_dim = manifest.dim;
      m.hidden = c.hidden;
      m.layers = c.layers;
      m.dropout = c.dropout;
      m.seed = c.seed;
      TraitModel tm{fit(train_set, val_set, m, train_config(c)), trait, scaler};
      ckpt = to_checkpoint(tm);
      summary["history"] = history_to_json(tm.model.history);
      summary["val_mse"] = evaluate_mse(tm.model.params, val_set);
    } else if (name == "ffn") {
      FfnConfig m;
      m.input_dim = manifest.dim;
      m.hidden = c.ffn_hidden;
      m.dropout = c.dropout;
      m.seed = c.seed;
      const auto tx = mean_pool_features(data, tr);
      const auto vx = mean_pool_features(data, val);
      const auto fitted = ffn_fit(tx, train_set.targets, vx, val_set.targets, m, train_config(c));
      ckpt = to_checkpoint(fitted.model, fitted.history, trait, scaler);
      summary["history"] = history_to_json(fitted.history);
    } else {
      const auto tx = mean_pool_features(data, tr);
      const auto model = ridge_fit(tx, train_set.targets, {c.ridge_lambda, true});
      ckpt = to_checkpoint(model, trait, scaler);
    }
    save_checkpoint(ckpt, dir / ("model_" + letter(trait) + ".ltrm"));
    summary["trait"] = trait_name(trait);
    summary["recipe"] = name;
    summary["n_train"] = tr.size();
    summary["n_val"] = val.size();
    summary["config"] = to_json(c);
    write_text(dir / ("train_" + letter(trait) + ".json"), summary.dump(2) + "\n");
    out << "trained " << name << " for " << trait_name(trait) << " -> " << (dir / ("model_" + letter(trait) + ".ltrm")).string()
        << "\n";
  }
  return kExitOk;
}

int cmd_cv(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto manifest = require_manifest(c);
  require_valid(manifest);
  const bool need_preds = std::find(c.recipe.begin(), c.recipe.end(), "median") != c.recipe.end();
  const auto data = load_dataset(manifest, need_preds);
  CvOptions opt;
  opt.folds.k = c.folds;
  opt.folds.seed = c.seed;
  opt.folds.val_fraction = c.val_fraction;
  opt.folds.mode = c.split == "kfold" ? SplitMode::kfold : SplitMode::repeated_holdout;
  opt.traits = selected_traits(c);
  opt.r2_train_mean = c.r2_reference == "train_mean";
  const std::filesystem::path dir = c.out;
  std::vector<EvalReport> reports;
  bool diverged = false;
  for (const auto& name : c.recipe) {
    auto recipe = make_recipe(name, c, manifest.dim);
    auto report = cross_validate(data, *recipe, opt);
    report.config["run"] = to_json(c);
    report.config["run"].erase("out");
    report.config["run"].erase("models");
    for (const auto& f : report.folds) {
      if (f.error) {
        err << name << " fold " << f.fold << " " << trait_name(f.trait) << ": " << *f.error << "\n";
        if (f.error->rfind("divergence", 0) == 0) diverged = true;
      }
    }
    write_text(dir / ("report_" + name + ".json"), report_json_text(report));
    for (const auto& s : report.summary) {
      out << name << '\t' << trait_name(s.trait) << "\tMSE " << num(s.mse.mean) << " +- " << num(s.mse.std) << "\tR2 "
          << num(s.r2.mean) << " +- " << num(s.r2.std) << '\n';
    }
    reports.push_back(std::move(report));
  }
  write_text(dir / "summary.csv", reports_to_csv(reports));
  return diverged ? kExitDivergence : kExitOk;
}

int cmd_explain(const RunConfig& c, std::ostream& out) {
  const auto manifest = require_manifest(c);
  require_valid(manifest);
  const auto data = load_dataset(manifest, false);
  const std::filesystem::path dir = c.out;
  const std::filesystem::path models = c.models.empty() ? dir : std::filesystem::path(c.models);
  const auto traits = selected_traits(c);
  std::vector<std::vector<AttentionProfile>> by_trait;

  for (TraitId trait : traits) {
    const auto path = models / ("model_" + letter(trait) + ".ltrm");
    if (!std::filesystem::exists(path)) throw DataError("missing model checkpoint: " + path.string());
    const auto tm = trait_model_from(load_checkpoint(path));
    if (tm.trait != trait) throw DataError("checkpoint " + path.string() + " is for another trait");
    if (tm.model.params.config().input_dim != manifest.dim) throw DataError("checkpoint dimension does not match manifest");
    std::vector<AttentionProfile> profiles;
    std::ostringstream removal;
    removal << "transcript_id,length,top_index,before,after_top,delta_top,percent_top,random_index,after_random,"
               "delta_random,percent_random\n";
    std::mt19937_64 rng(c.seed ^ static_cast<std::uint64_t>(trait));
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& e = manifest.entries[i];
      auto plan = plan_windows(e.n_tokens, static_cast<std::int64_t>(manifest.window.w),
                               static_cast<std::int64_t>(manifest.window.s), static_cast<std::int64_t>(manifest.window.cap));
      std::optional<WindowPlan> opt_plan;
      if (plan.spans.size() == data.sequences[i].length()) opt_plan = std::move(plan);
      profiles.push_back(attention_profile(tm.model.params, data.sequences[i], trait, tm.scaler, opt_plan));
      const auto& p = profiles.back();
      removal << p.transcript_id << ',' << p.alpha.size();
      if (p.alpha.size() < 2) {
        removal << ",,,,,,,,,\n";
        continue;
      }
      const std::size_t top = top_k_windows(p, 1).indices.front();
      std::size_t other = uniform_index(rng, p.alpha.size() - 1);
      if (other >= top) ++other;
      const auto a = removal_impact(tm.model.params, data.sequences[i], top, tm.scaler);
      const auto b = removal_impact(tm.model.params, data.sequences[i], other, tm.scaler);
      removal << ',' << top << ',' << num(a.before) << ',' << num(a.after) << ',' << num(a.delta) << ','
              << (a.percent_change ? num(*a.percent_change) : "") << ',' << other << ',' << num(b.after) << ','
              << num(b.delta) << ',' << (b.percent_change ? num(*b.percent_change) : "") << '\n';
    }
    write_text(dir / ("heatmap_" + letter(trait) + ".csv"), heatmap_csv(profiles, c.k));
    write_text(dir / ("heatmap_" + letter(trait) + ".json"), heatmap_json(profiles, c.k));
    write_text(dir / ("topk_" + letter(trait) + ".jsonl"), topk_jsonl(profiles, c.k));
    write_text(dir / ("removal_" + letter(trait) + ".csv"), removal.str());
    out << "explained " << trait_name(trait) << " over " << profiles.size() << " transcripts\n";
    by_trait.push_back(std::move(profiles));
  }

  if (traits.size() >= 2) {
    const std::size_t nt = traits.size();
    std::vector<std::vector<double>> mean(nt, std::vector<double>(nt, 0.0));
    ojson per = ojson::array();
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::vector<AttentionProfile> ps;
      for (const auto& v : by_trait) ps.push_back(v[i]);
      const auto m = trait_overlap(ps, c.k);
      for (std::size_t a = 0; a < nt; ++a) {
        for (std::size_t b = 0; b < nt; ++b) mean[a][b] += m[a][b] / static_cast<double>(data.size());
      }
      per.push_back({{"transcript_id", ps.front().transcript_id}, {"jaccard", m}});
    }
    std::vector<std::string> names;
    for (TraitId t : traits) names.emplace_back(trait_name(t));
    write_text(dir / "overlap.json",
               ojson{{"k", c.k}, {"traits", names}, {"mean_jaccard", mean}, {"transcripts", per}}.dump(2) + "\n");
  }

  std::ostringstream emb;
  emb << "transcript_id";
  for (std::size_t j = 0; j < manifest.dim; ++j) emb << ",e" << j;
  emb << '\n';
  for (const auto& s : data.sequences) {
    emb << s.transcript_id();
    for (double v : mean_pool(s)) emb << ',' << num(v);
    emb << '\n';
  }
  write_text(dir / "mean_embeddings.csv", emb.str());
  write_text(dir / "explain_config.json", to_json(c).dump(2) + "\n");
  return kExitOk;
}

// Flags are collected as text and converted through the same JSON path as
// the config file, so both sources obey one schema.
struct FlagSink {
  std::map<std::string, std::string> values;
  std::map<std::string, std::vector<std::string>> lists;

  void add(CLI::App* app, const std::string& key, const std::string& names, const std::string& help) {
    app->add_option_function<std::string>(names, [this, key](const std::string& v) { values[key] = v; }, help)
        ->type_name(keys().at(key).type == KeyType::string ? "TEXT" : "NUM");
  }
  void add_list(CLI::App* app, const std::string& key, const std::string& names, const std::string& help) {
    app->add_option_function<std::vector<std::string>>(
           names, [this, key](const std::vector<std::string>& v) { lists[key] = v; }, help)
        ->delimiter(',');
  }

  json to_json() const {
    json j = json::object();
    for (const auto& [key, text] : values) {
      const auto& spec = keys().at(key);
      if (spec.type == KeyType::string) {
        j[key] = text;
        continue;
      }
      try {
        j[key] = json::parse(text);
      } catch (const json::exception&) {
        throw ConfigError(key + ": expected a number, got '" + text + "'");
      }
    }
    for (const auto& [key, v] : lists) j[key] = v;
    return j;
  }
};

void add_common(CLI::App* app, FlagSink& f, std::string& config_path) {
  app->add_option("--config", config_path, "JSON config file; flags override its values");
  f.add(app, "seed", "--seed", "random seed");
  f.add(app, "out", "--out", "output directory");
}

void add_window(CLI::App* app, FlagSink& f) {
  f.add(app, "window", "--window", "window size in tokens");
  f.add(app, "stride", "--stride", "stride in tokens");
  f.add(app, "cap", "--cap", "maximum windows per transcript");
}

void add_training(CLI::App* app, FlagSink& f) {
  f.add(app, "learning_rate", "--lr,--learning-rate", "Adam learning rate");
  f.add(app, "batch_size", "--batch-size", "mini-batch size");
  f.add(app, "max_epochs", "--max-epochs", "maximum epochs");
  f.add(app, "patience", "--patience", "early-stopping patience (0 disables)");
  f.add(app, "clip_norm", "--clip-norm", "global gradient norm clip");
  f.add(app, "hidden", "--hidden", "GRU hidden size");
  f.add(app, "layers", "--layers", "GRU layers");
  f.add(app, "dropout", "--dropout", "dropout rate on the regression input");
  f.add(app, "ffn_hidden", "--ffn-hidden", "FFN hidden size");
  f.add(app, "ridge_lambda", "--ridge-lambda", "ridge penalty");
  f.add(app, "val_fraction", "--val-fraction", "validation share of the training pool");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"long-document trait regression over window embeddings", "longreg"};
  app.require_subcommand(1);
  std::string config_path;
  FlagSink flags;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with planted signal windows");
  add_common(synth, flags, config_path);
  add_window(synth, flags);
  flags.add(synth, "trait", "--trait", "signal-carrying traits: O, C, E, A, N or all");
  flags.add(synth, "n", "--n", "number of transcripts");
  flags.add(synth, "dim", "--dim", "embedding dimension");
  flags.add(synth, "t_min", "--t-min", "minimum windows per transcript");
  flags.add(synth, "t_max", "--t-max", "maximum windows per transcript");
  flags.add(synth, "planted", "--planted", "planted windows per trait (linear kind)");
  flags.add(synth, "snr", "--snr", "signal-to-noise ratio");
  flags.add(synth, "kind", "--kind", "linear or sequential");
  flags.add(synth, "explainable_variance", "--explainable-variance", "target variance carried by the signal");
  flags.add(synth, "raw_mean", "--raw-mean", "raw target mean");
  flags.add(synth, "raw_sd", "--raw-sd", "raw target standard deviation");

  auto* plan = app.add_subcommand("plan", "print the sliding-window spans for a token count");
  add_common(plan, flags, config_path);
  add_window(plan, flags);
  flags.add(plan, "tokens", "--tokens", "transcript length in tokens");

  auto* validate = app.add_subcommand("validate", "check a dataset manifest");
  add_common(validate, flags, config_path);
  flags.add(validate, "manifest", "--manifest", "manifest JSON");

  auto* train = app.add_subcommand("train", "fit one model per trait on the whole dataset");
  add_common(train, flags, config_path);
  add_training(train, flags);
  flags.add(train, "manifest", "--manifest", "manifest JSON");
  flags.add(train, "trait", "--trait", "O, C, E, A, N or all");
  flags.add_list(train, "recipe", "--recipe", "rnn, ffn or ridge");

  auto* cv = app.add_subcommand("cv", "cross-validate recipes");
  add_common(cv, flags, config_path);
  add_training(cv, flags);
  flags.add(cv, "manifest", "--manifest", "manifest JSON");
  flags.add(cv, "trait", "--trait", "O, C, E, A, N or all");
  flags.add_list(cv, "recipe", "--recipe", "comma-separated: rnn, ffn, ridge, ridge-random-window, median, mean");
  flags.add(cv, "folds", "--k-folds,--folds", "number of folds");
  flags.add(cv, "split", "--split", "kfold or repeated_holdout");
  flags.add(cv, "r2_reference", "--r2-reference", "test_mean or train_mean");

  auto* explain = app.add_subcommand("explain", "attention heatmaps, top-k windows, removal impact and overlap");
  add_common(explain, flags, config_path);
  flags.add(explain, "manifest", "--manifest", "manifest JSON");
  flags.add(explain, "trait", "--trait", "O, C, E, A, N or all");
  flags.add(explain, "models", "--models", "directory holding model_<L>.ltrm (defaults to --out)");
  flags.add(explain, "k", "--k", "top-k windows");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (const char* env = std::getenv("LONGREG_OUT_DIR"); env && *env && flags.values.count("out") == 0) {
      cfg.out = env;
    }
    apply_json(cfg, flags.to_json());
    cfg.validate();

    auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "synth") return cmd_synth(cfg, out);
    if (name == "plan") return cmd_plan(cfg, out, flags.values.count("out") > 0);
    if (name == "validate") return cmd_validate(cfg, out);
    if (name == "train") return cmd_train(cfg, out);
    if (name == "cv") return cmd_cv(cfg, out, err);
    if (name == "explain") return cmd_explain(cfg, out);
    err << "error: unknown command\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace longreg::cli
