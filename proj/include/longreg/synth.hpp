#pragma once

// Embedding-level synthetic datasets with planted signal windows. The
// sidecar records where the signal sits and what it encodes, so training,
// localization and ablation behaviour can be checked against ground truth.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "longreg/core.hpp"

namespace longreg {

enum class TargetKind { linear, sequential };

std::string_view target_kind_name(TargetKind k);
TargetKind parse_target_kind(std::string_view s);

struct SynthSpec {
  std::size_t n = 200;
  std::size_t dim = 32;
  std::size_t t_min = 5;
  std::size_t t_max = 20;
  /// Planted windows per signal-carrying trait (linear kind). The sequential
  /// kind always plants two motifs per trait.
  std::size_t planted = 1;
  /// Noise sd per coordinate is 1/snr; marker and readout directions have unit norm.
  double snr = 5.0;
  TargetKind kind = TargetKind::linear;
  double explainable_variance = 0.9;
  std::uint64_t seed = 0;
  /// Traits that carry planted signal; the others get pure-noise targets.
  std::vector<TraitId> traits{kAllTraits.begin(), kAllTraits.end()};
  /// Raw targets are raw_mean + raw_sd * (standardized target).
  double raw_mean = 55.0;
  double raw_sd = 20.0;
  WindowParams window;

  std::size_t rows_per_trait() const { return kind == TargetKind::sequential ? 2 : planted; }
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct SynthItem {
  std::string transcript_id;
  /// Planted row indices per trait. Sequential kind: {motif A, motif B}.
  std::map<TraitId, std::vector<std::size_t>> planted_indices;
  std::map<TraitId, double> latent;        // z drawn for the item
  std::map<TraitId, double> order_sign;    // sequential kind: +1 when A precedes B
  TraitScores targets;                     // raw scale, equal to the manifest
};

struct SynthTruth {
  SynthSpec spec;
  double noise_sigma = 0.0;
  std::vector<SynthItem> items;
  /// Per signal-carrying trait: standardized target = a * core + b * residual,
  /// where core is itself standardized. Kept for oracle checks.
  std::map<TraitId, std::vector<double>> core;
};

struct SynthDataset {
  DatasetManifest manifest;
  std::vector<EmbeddingSequence> sequences;
  std::vector<std::vector<float>> window_predictions;  // raw scale, first signal trait
  SynthTruth truth;
};

/// In-memory generation; deterministic under spec.seed.
SynthDataset synthesize(const SynthSpec& spec);

/// Sequential-kind target core before standardization: order sign and the
/// standardized readout weighted equally.
double sequential_core(double order_sign, double readout);

/// Writes <id>.ltre, <id>.preds, manifest.json and sidecar.json under dir.
/// Throws std::invalid_argument for spec.kind != linear.
SynthDataset gen_dataset(const SynthSpec& spec, const std::filesystem::path& dir);
/// Same outputs; throws std::invalid_argument for spec.kind != sequential.
SynthDataset gen_sequential_dataset(const SynthSpec& spec, const std::filesystem::path& dir);

std::string sidecar_to_json(const SynthTruth& truth);

struct SidecarEntry {
  std::string transcript_id;
  std::map<TraitId, std::vector<std::size_t>> planted_indices;
  std::map<TraitId, double> latent_target;
  double noise_sigma = 0.0;
};

std::vector<SidecarEntry> load_sidecar(const std::filesystem::path& path);

}  // namespace longreg
