#include "longreg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>
#include <stdexcept>

#include "longreg/optim.hpp"
#include "longreg/windowing.hpp"

namespace longreg {

std::string_view target_kind_name(TargetKind k) { return k == TargetKind::linear ? "linear" : "sequential"; }

TargetKind parse_target_kind(std::string_view s) {
  if (s == "linear") return TargetKind::linear;
  if (s == "sequential") return TargetKind::sequential;
  throw std::invalid_argument("unknown target kind: " + std::string(s));
}

void SynthSpec::validate() const {
  if (n < 2) throw std::invalid_argument("n: need at least two transcripts");
  if (dim == 0) throw std::invalid_argument("dim: must be >= 1");
  if (t_min < 1 || t_min > t_max || t_max > window.cap) throw std::invalid_argument("t_min/t_max: need 1 <= t_min <= t_max <= cap");
  if (!(snr > 0.0) || !std::isfinite(snr)) throw std::invalid_argument("snr: must be positive");
  if (!(explainable_variance > 0.0 && explainable_variance <= 1.0)) {
    throw std::invalid_argument("explainable_variance: must be in (0, 1]");
  }
  if (kind == TargetKind::linear && planted == 0) throw std::invalid_argument("planted: must be >= 1");
  if (traits.empty()) throw std::invalid_argument("traits: at least one trait must carry signal");
  std::vector<TraitId> sorted = traits;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw std::invalid_argument("traits: duplicates");
  if (rows_per_trait() * traits.size() > t_min) {
    throw std::invalid_argument("t_min: too short to hold the planted rows of every trait");
  }
  const std::size_t dirs = (kind == TargetKind::sequential ? 3 : 2) * traits.size();
  if (dirs > dim) throw std::invalid_argument("dim: too small for orthonormal planted directions");
  if (!(raw_sd > 0.0)) throw std::invalid_argument("raw_sd: must be positive");
  if (window.w == 0 || window.s == 0) throw std::invalid_argument("window: w and s must be positive");
}

double sequential_core(double order_sign, double readout) { return (order_sign + readout) / std::sqrt(2.0); }

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform_sym(std::mt19937_64& rng, double half) { return (2.0 * uniform01(rng) - 1.0) * half; }

std::vector<std::vector<double>> orthonormal_directions(std::size_t count, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> out;
  while (out.size() < count) {
    std::vector<double> v(dim);
    for (double& x : v) x = normal(rng);
    for (const auto& q : out) {
      double d = 0.0;
      for (std::size_t j = 0; j < dim; ++j) d += v[j] * q[j];
      for (std::size_t j = 0; j < dim; ++j) v[j] -= d * q[j];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;
    for (double& x : v) x /= norm;
    out.push_back(std::move(v));
  }
  return out;
}

// Mean 0, population variance 1.
void standardize(std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(v.size()));
  if (!(sd > 0.0)) throw std::runtime_error("degenerate synthetic signal: zero variance");
  for (double& x : v) x = (x - m) / sd;
}

// e minus its projection on span{1, core}, then standardized; core has mean 0
// and unit population variance.
void residualize(std::vector<double>& e, const std::vector<double>& core) {
  const double n = static_cast<double>(e.size());
  double m = 0.0, c = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    m += e[i];
    c += e[i] * core[i];
  }
  m /= n;
  c /= n;
  for (std::size_t i = 0; i < e.size(); ++i) e[i] -= m + c * core[i];
  standardize(e);
}

std::int64_t draw_tokens(std::size_t t, const WindowParams& w, std::mt19937_64& rng) {
  const auto ww = static_cast<std::int64_t>(w.w), ss = static_cast<std::int64_t>(w.s);
  std::int64_t lo = 50, hi = ww;
  if (t >= 2) {
    lo = ww + ss * (static_cast<std::int64_t>(t) - 2) + 1;
    hi = ww + ss * (static_cast<std::int64_t>(t) - 1);
  }
  const auto n = lo + static_cast<std::int64_t>(uniform_index(rng, static_cast<std::size_t>(hi - lo + 1)));
  if (window_count(n, ww, ss, static_cast<std::int64_t>(w.cap)) != static_cast<std::int64_t>(t)) {
    throw std::logic_error("token count does not reproduce the window count");
  }
  return n;
}

}  // namespace

SynthDataset synthesize(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal;
  const std::size_t d = spec.dim;
  const double sigma = 1.0 / spec.snr;
  const bool seq = spec.kind == TargetKind::sequential;
  const std::size_t per_trait = spec.rows_per_trait();
  const std::size_t n_sig = spec.traits.size();

  // Per signal trait: marker(s) then readout direction u.
  const std::size_t dirs_per = seq ? 3 : 2;
  const auto dirs = orthonormal_directions(dirs_per * n_sig, d, rng);

  SynthDataset out;
  out.truth.spec = spec;
  out.truth.noise_sigma = sigma;
  out.manifest.dim = d;
  out.manifest.window = spec.window;
  out.manifest.score_scale = ScoreScale::raw;
  out.manifest.encoder_provenance = Provenance::pt;

  std::vector<std::vector<double>> readout(n_sig, std::vector<double>(spec.n));
  std::vector<std::vector<double>> order(n_sig, std::vector<double>(spec.n, 1.0));
  const double zhalf = std::sqrt(3.0);

  for (std::size_t i = 0; i < spec.n; ++i) {
    SynthItem item;
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "synth-%04zu", i);
    item.transcript_id = idbuf;
    const std::size_t t = spec.t_min + uniform_index(rng, spec.t_max - spec.t_min + 1);
    std::vector<double> rows(t * d);
    for (double& x : rows) x = sigma * normal(rng);
    const auto perm = seeded_permutation(t, rng);
    for (std::size_t k = 0; k < n_sig; ++k) {
      const TraitId trait = spec.traits[k];
      const auto& marker = dirs[dirs_per * k];
      const auto& u = dirs[dirs_per * k + dirs_per - 1];
      std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(k * per_trait),
                                   perm.begin() + static_cast<std::ptrdiff_t>((k + 1) * per_trait));
      const double z = uniform_sym(rng, zhalf);
      item.latent[trait] = z;
      // Rows that carry z: every planted row (linear) or motif A (sequential).
      const std::size_t carriers = seq ? 1 : per_trait;
      double s = 0.0;
      for (std::size_t r = 0; r < carriers; ++r) {
        double* row = rows.data() + idx[r] * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += marker[j] + z * u[j];
        for (std::size_t j = 0; j < d; ++j) s += row[j] * u[j];
      }
      readout[k][i] = s / static_cast<double>(carriers);
      if (seq) {
        const auto& marker_b = dirs[dirs_per * k + 1];
        double* row = rows.data() + idx[1] * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += marker_b[j];
        order[k][i] = idx[0] < idx[1] ? 1.0 : -1.0;
        item.order_sign[trait] = order[k][i];
      } else {
        std::sort(idx.begin(), idx.end());
      }
      item.planted_indices[trait] = idx;
    }
    std::vector<float> frows(rows.begin(), rows.end());
    out.sequences.emplace_back(item.transcript_id, d, std::move(frows), spec.window.cap);

    ManifestEntry e;
    e.transcript_id = item.transcript_id;
    e.embedding_file_path = item.transcript_id + ".ltre";
    e.n_tokens = draw_tokens(t, spec.window, rng);
    e.gender = static_cast<int>(uniform_index(rng, 2));
    out.manifest.entries.push_back(std::move(e));
    out.truth.items.push_back(std::move(item));
  }

  // Targets: standardized core mixed with an orthogonal residual so that the
  // core explains exactly explainable_variance of the target variance.
  const double a = std::sqrt(spec.explainable_variance);
  const double b = std::sqrt(1.0 - spec.explainable_variance);
  for (TraitId trait : kAllTraits) {
    std::vector<double> core(spec.n, 0.0);
    const auto it = std::find(spec.traits.begin(), spec.traits.end(), trait);
    const bool signal = it != spec.traits.end();
    if (signal) {
      const auto k = static_cast<std::size_t>(it - spec.traits.begin());
      core = readout[k];
      standardize(core);
      if (seq) {
        for (std::size_t i = 0; i < spec.n; ++i) core[i] = sequential_core(order[k][i], core[i]);
        standardize(core);
      }
      out.truth.core[trait] = core;
    }
    std::vector<double> e(spec.n);
    for (double& x : e) x = uniform_sym(rng, zhalf);
    residualize(e, core);
    for (std::size_t i = 0; i < spec.n; ++i) {
      const double y = signal ? a * core[i] + b * e[i] : e[i];
      const double raw = spec.raw_mean + spec.raw_sd * y;
      out.manifest.entries[i].targets[trait] = raw;
      out.truth.items[i].targets[trait] = raw;
    }
  }
  for (const auto& e : out.manifest.entries) {
    if (auto bad = e.targets.check()) {
      throw std::runtime_error("synthetic target out of range for " + e.transcript_id + ": " + *bad +
                               "; lower raw_sd or move raw_mean");
    }
  }

  // Per-window predictions for the first signal trait: the target on its
  // planted rows, a noisy draw around the mean elsewhere.
  const TraitId first = spec.traits.front();
  for (std::size_t i = 0; i < spec.n; ++i) {
    const auto& planted = out.truth.items[i].planted_indices.at(first);
    const double target = out.manifest.entries[i].targets[first];
    std::vector<float> preds(out.sequences[i].length());
    for (std::size_t t = 0; t < preds.size(); ++t) {
      const bool hit = std::find(planted.begin(), planted.end(), t) != planted.end();
      preds[t] = static_cast<float>(hit ? target : spec.raw_mean + 0.5 * spec.raw_sd * normal(rng));
    }
    out.window_predictions.push_back(std::move(preds));
  }
  return out;
}

std::string sidecar_to_json(const SynthTruth& truth) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& item : truth.items) {
    nlohmann::ordered_json planted = nlohmann::ordered_json::object();
    for (const auto& [t, idx] : item.planted_indices) planted[std::string(trait_name(t))] = idx;
    nlohmann::ordered_json targets = nlohmann::ordered_json::object();
    for (TraitId t : kAllTraits) targets[std::string(trait_name(t))] = item.targets[t];
    nlohmann::ordered_json latent = nlohmann::ordered_json::object();
    for (const auto& [t, z] : item.latent) latent[std::string(trait_name(t))] = z;
    nlohmann::ordered_json j{{"transcript_id", item.transcript_id},
                             {"planted_indices", planted},
                             {"latent_target", targets},
                             {"latent", latent},
                             {"noise_sigma", truth.noise_sigma}};
    if (!item.order_sign.empty()) {
      nlohmann::ordered_json o = nlohmann::ordered_json::object();
      for (const auto& [t, s] : item.order_sign) o[std::string(trait_name(t))] = s;
      j["order_sign"] = o;
    }
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

namespace {

SynthDataset write_dataset(const SynthSpec& spec, const std::filesystem::path& dir) {
  auto ds = synthesize(spec);
  std::filesystem::create_directories(dir);
  ds.manifest.base_dir = dir;
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    const auto& e = ds.manifest.entries[i];
    save_embedding_file(ds.sequences[i], ds.manifest.resolve(e));
    save_window_predictions(ds.window_predictions[i], ds.manifest.predictions_path(e));
  }
  save_manifest(ds.manifest, dir / "manifest.json");
  std::ofstream side(dir / "sidecar.json", std::ios::trunc);
  if (!side) throw std::runtime_error("cannot open for writing: " + (dir / "sidecar.json").string());
  side << sidecar_to_json(ds.truth) << '\n';
  if (!side) throw std::runtime_error("write failed: " + (dir / "sidecar.json").string());
  return ds;
}

}  // namespace

SynthDataset gen_dataset(const SynthSpec& spec, const std::filesystem::path& dir) {
  if (spec.kind != TargetKind::linear) throw std::invalid_argument("gen_dataset needs the linear target kind");
  return write_dataset(spec, dir);
}

SynthDataset gen_sequential_dataset(const SynthSpec& spec, const std::filesystem::path& dir) {
  if (spec.kind != TargetKind::sequential) throw std::invalid_argument("gen_sequential_dataset needs the sequential target kind");
  return write_dataset(spec, dir);
}

std::vector<SidecarEntry> load_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read sidecar: " + path.string());
  std::vector<SidecarEntry> out;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& je : j) {
      SidecarEntry e;
      e.transcript_id = je.at("transcript_id").get<std::string>();
      for (const auto& [k, v] : je.at("planted_indices").items()) {
        e.planted_indices[parse_trait(k)] = v.get<std::vector<std::size_t>>();
      }
      for (const auto& [k, v] : je.at("latent_target").items()) e.latent_target[parse_trait(k)] = v.get<double>();
      e.noise_sigma = je.at("noise_sigma").get<double>();
      out.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError("malformed sidecar " + path.string() + ": " + ex.what());
  } catch (const std::invalid_argument& ex) {
    throw DataError("malformed sidecar " + path.string() + ": " + ex.what());
  }
  return out;
}

}  // namespace longreg
