#pragma once

// Model checkpoint container shared by every model kind:
//   "LTRM" | u8 version (1) | u32 header length | JSON header (UTF-8) |
//   u64 parameter count | f64 little-endian parameters
// The header carries the model kind, its configuration, the trait and
// standardization stats, the training history and the declared parameter
// ordering (name, rows, cols per block).

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "longreg/baselines.hpp"
#include "longreg/evaluation.hpp"
#include "longreg/seq_head.hpp"

namespace longreg {

inline constexpr std::array<char, 4> kCheckpointMagic{'L', 'T', 'R', 'M'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::ordered_json header;
  std::vector<double> params;

  std::string kind() const { return header.at("kind").get<std::string>(); }
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// A trained single-trait sequence head with its target scaler.
struct TraitModel {
  SeqHeadModel model;
  TraitId trait = TraitId::O;
  ZScore scaler;
};

Checkpoint to_checkpoint(const TraitModel& m);
TraitModel trait_model_from(const Checkpoint& ckpt);

Checkpoint to_checkpoint(const FfnModel& m, const TrainHistory& history, TraitId trait, const ZScore& scaler);
FfnModel ffn_from(const Checkpoint& ckpt);

Checkpoint to_checkpoint(const RidgeModel& m, TraitId trait, const ZScore& scaler);
RidgeModel ridge_from(const Checkpoint& ckpt);

nlohmann::ordered_json history_to_json(const TrainHistory& h);
TrainHistory history_from_json(const nlohmann::json& j);

}  // namespace longreg
