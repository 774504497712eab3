#pragma once

// Attention-based interpretability: per-window attention profiles, top-k
// windows, window-removal impact and cross-trait overlap of top windows.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "longreg/evaluation.hpp"
#include "longreg/seq_head.hpp"
#include "longreg/windowing.hpp"

namespace longreg {

struct AttentionProfile {
  std::string transcript_id;
  TraitId trait = TraitId::O;
  std::vector<double> alpha;   // one per true window, sums to 1
  std::vector<Span> spans;     // token spans of the windows, when known
  double prediction = 0.0;     // raw scale
};

AttentionProfile attention_profile(const SeqHeadParams& params, const EmbeddingSequence& seq, TraitId trait,
                                   const ZScore& scaler, const std::optional<WindowPlan>& plan = std::nullopt);

struct TopK {
  std::vector<std::size_t> indices;  // by descending alpha, ties to the lower index
  bool truncated = false;            // k exceeded the number of windows
};

/// Throws std::invalid_argument for k = 0.
TopK top_k_windows(const AttentionProfile& profile, std::size_t k);

struct ImpactResult {
  std::size_t removed_index = 0;
  double before = 0.0;  // raw scale
  double after = 0.0;   // raw scale
  double delta = 0.0;   // after - before
  /// 100 * (before - after) / |before|; empty when |before| is below the
  /// threshold (see removal_impact).
  std::optional<double> percent_change;
};

/// Re-predicts with window j deleted (later windows shift down). The
/// percentage is undefined when |before| < threshold_fraction * scaler.sd.
/// Throws std::invalid_argument for a single-window sequence or j out of range.
ImpactResult removal_impact(const SeqHeadParams& params, const EmbeddingSequence& seq, std::size_t j,
                            const ZScore& scaler, double threshold_fraction = 0.05);

/// Pairwise Jaccard similarity of the profiles' top-k window sets. Profiles
/// must share transcript id and length; throws std::invalid_argument otherwise.
std::vector<std::vector<double>> trait_overlap(std::span<const AttentionProfile> profiles, std::size_t k);

/// Columns: transcript_id, trait, prediction, top_k (space-separated
/// indices), then a0..a{max_len-1}; shorter rows leave trailing cells empty.
std::string heatmap_csv(std::span<const AttentionProfile> profiles, std::size_t k);
void export_heatmap(std::span<const AttentionProfile> profiles, const std::filesystem::path& csv_path, std::size_t k);

/// {"profiles":[{transcript_id, trait, prediction, alpha:[...], top_k:[...], spans:[[s,e],...]}]}
std::string heatmap_json(std::span<const AttentionProfile> profiles, std::size_t k);

/// One JSON object per line: {transcript_id, trait, top_k:[{index, alpha, span}]}
/// for downstream topic modeling of the top windows' text.
std::string topk_jsonl(std::span<const AttentionProfile> profiles, std::size_t k);

struct HeatmapRow {
  std::string transcript_id;
  std::string trait;
  double prediction = 0.0;
  std::vector<std::size_t> top_k;
  std::vector<double> alpha;
};

std::vector<HeatmapRow> parse_heatmap_csv(const std::string& text);

}  // namespace longreg
