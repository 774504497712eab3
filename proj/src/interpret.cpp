#include "longreg/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace longreg {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

AttentionProfile attention_profile(const SeqHeadParams& params, const EmbeddingSequence& seq, TraitId trait,
                                   const ZScore& scaler, const std::optional<WindowPlan>& plan) {
  if (params.config().output_dim != 1) throw std::invalid_argument("attention profiles need a single-output model");
  const auto tr = predict(params, seq);
  AttentionProfile p;
  p.transcript_id = seq.transcript_id();
  p.trait = trait;
  p.alpha = tr.alpha;
  p.prediction = scaler.invert(tr.prediction[0]);
  if (plan) {
    if (plan->spans.size() != seq.length()) throw std::invalid_argument("window plan does not match sequence length");
    p.spans = plan->spans;
  }
  return p;
}

TopK top_k_windows(const AttentionProfile& profile, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  const std::size_t n = profile.alpha.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return profile.alpha[a] > profile.alpha[b]; });
  TopK out;
  out.truncated = k > n;
  idx.resize(std::min(k, n));
  out.indices = std::move(idx);
  return out;
}

ImpactResult removal_impact(const SeqHeadParams& params, const EmbeddingSequence& seq, std::size_t j,
                            const ZScore& scaler, double threshold_fraction) {
  if (seq.length() < 2) throw std::invalid_argument("cannot remove the only window");
  if (j >= seq.length()) throw std::invalid_argument("window index out of range");
  ImpactResult r;
  r.removed_index = j;
  r.before = scaler.invert(predict(params, seq).prediction[0]);
  r.after = scaler.invert(predict(params, seq.without_row(j)).prediction[0]);
  r.delta = r.after - r.before;
  if (std::abs(r.before) >= threshold_fraction * scaler.sd) {
    r.percent_change = 100.0 * (r.before - r.after) / std::abs(r.before);
  }
  return r;
}

std::vector<std::vector<double>> trait_overlap(std::span<const AttentionProfile> profiles, std::size_t k) {
  if (profiles.size() < 2) throw std::invalid_argument("overlap needs at least two profiles");
  for (const auto& p : profiles) {
    if (p.transcript_id != profiles[0].transcript_id || p.alpha.size() != profiles[0].alpha.size()) {
      throw std::invalid_argument("profiles must share transcript id and length");
    }
  }
  std::vector<std::set<std::size_t>> sets;
  for (const auto& p : profiles) {
    const auto top = top_k_windows(p, k);
    sets.emplace_back(top.indices.begin(), top.indices.end());
  }
  const std::size_t n = profiles.size();
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 1.0));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      std::size_t inter = 0;
      for (std::size_t i : sets[a]) inter += sets[b].count(i);
      const std::size_t uni = sets[a].size() + sets[b].size() - inter;
      m[a][b] = m[b][a] = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
  }
  return m;
}

std::string heatmap_csv(std::span<const AttentionProfile> profiles, std::size_t k) {
  if (profiles.empty()) throw std::invalid_argument("no profiles to export");
  std::size_t width = 0;
  for (const auto& p : profiles) width = std::max(width, p.alpha.size());
  std::ostringstream out;
  out << "transcript_id,trait,prediction,top_k";
  for (std::size_t t = 0; t < width; ++t) out << ",a" << t;
  out << '\n';
  for (const auto& p : profiles) {
    out << p.transcript_id << ',' << trait_name(p.trait) << ',' << fmt(p.prediction) << ',';
    const auto top = top_k_windows(p, k);
    for (std::size_t i = 0; i < top.indices.size(); ++i) out << (i ? " " : "") << top.indices[i];
    for (std::size_t t = 0; t < width; ++t) {
      out << ',';
      if (t < p.alpha.size()) out << fmt(p.alpha[t]);
    }
    out << '\n';
  }
  return out.str();
}

void export_heatmap(std::span<const AttentionProfile> profiles, const std::filesystem::path& csv_path, std::size_t k) {
  const auto text = heatmap_csv(profiles, k);
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + csv_path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + csv_path.string());
}

std::string heatmap_json(std::span<const AttentionProfile> profiles, std::size_t k) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& p : profiles) {
    nlohmann::ordered_json spans = nlohmann::ordered_json::array();
    for (const auto& s : p.spans) spans.push_back({s.start, s.end});
    arr.push_back({{"transcript_id", p.transcript_id},
                   {"trait", trait_name(p.trait)},
                   {"prediction", p.prediction},
                   {"alpha", p.alpha},
                   {"top_k", top_k_windows(p, k).indices},
                   {"spans", spans}});
  }
  return nlohmann::ordered_json{{"profiles", arr}}.dump(2) + "\n";
}

std::string topk_jsonl(std::span<const AttentionProfile> profiles, std::size_t k) {
  std::string out;
  for (const auto& p : profiles) {
    nlohmann::ordered_json windows = nlohmann::ordered_json::array();
    for (std::size_t i : top_k_windows(p, k).indices) {
      nlohmann::ordered_json w{{"index", i}, {"alpha", p.alpha[i]}, {"span", nullptr}};
      if (i < p.spans.size()) w["span"] = {p.spans[i].start, p.spans[i].end};
      windows.push_back(std::move(w));
    }
    out += nlohmann::ordered_json{{"transcript_id", p.transcript_id}, {"trait", trait_name(p.trait)}, {"top_k", windows}}
               .dump();
    out += '\n';
  }
  return out;
}

std::vector<HeatmapRow> parse_heatmap_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty heatmap CSV");
  std::vector<HeatmapRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() < 4) throw DataError("malformed heatmap row");
    HeatmapRow r;
    r.transcript_id = cells[0];
    r.trait = cells[1];
    r.prediction = std::stod(cells[2]);
    std::istringstream ks(cells[3]);
    for (std::size_t v; ks >> v;) r.top_k.push_back(v);
    for (std::size_t c = 4; c < cells.size(); ++c) {
      if (cells[c].empty()) break;
      r.alpha.push_back(std::stod(cells[c]));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace longreg
