#pragma once

// Domain types shared by every stage: trait identifiers, per-transcript
// embedding sequences with their on-disk format, the dataset manifest and
// padded batches.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace longreg {

/// Malformed or inconsistent input data (files, manifests, configs).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TraitId : std::uint8_t { O = 0, C = 1, E = 2, A = 3, N = 4 };

inline constexpr std::array<TraitId, 5> kAllTraits{TraitId::O, TraitId::C, TraitId::E, TraitId::A,
                                                   TraitId::N};

std::string_view trait_name(TraitId t);    // "openness", ...
char trait_letter(TraitId t);              // 'O', ...
TraitId parse_trait(std::string_view s);   // accepts either form; throws std::invalid_argument

enum class ScoreScale : std::uint8_t { raw, standardized };

std::string_view scale_name(ScoreScale s);
ScoreScale parse_scale(std::string_view s);

/// NEO-PI-R raw domain scores lie in [0, 240].
inline constexpr double kRawScoreMin = 0.0;
inline constexpr double kRawScoreMax = 240.0;

struct TraitScores {
  std::array<double, 5> values{};
  ScoreScale scale = ScoreScale::raw;

  double& operator[](TraitId t) { return values[static_cast<std::size_t>(t)]; }
  double operator[](TraitId t) const { return values[static_cast<std::size_t>(t)]; }

  /// Empty when valid; otherwise a description of the first violation.
  std::optional<std::string> check() const;

  friend bool operator==(const TraitScores&, const TraitScores&) = default;
};

inline constexpr std::size_t kDefaultCap = 200;
inline constexpr std::size_t kDefaultEmbeddingDim = 1024;

/// One transcript's window embeddings, row t = window t of the sliding plan.
/// Stored in single precision, matching the on-disk payload, so that a
/// save/load round trip is the identity.
class EmbeddingSequence {
 public:
  EmbeddingSequence() = default;
  /// Throws std::invalid_argument on empty rows, length > cap, size mismatch
  /// or non-finite entries.
  EmbeddingSequence(std::string transcript_id, std::size_t dim, std::vector<float> rows,
                    std::size_t cap = kDefaultCap);

  const std::string& transcript_id() const { return id_; }
  std::size_t dim() const { return dim_; }
  std::size_t length() const { return length_; }
  std::size_t cap() const { return cap_; }

  std::span<const float> row(std::size_t t) const { return {rows_.data() + t * dim_, dim_}; }
  std::span<const float> data() const { return rows_; }

  /// Copy without row t (windows after t shift down by one).
  EmbeddingSequence without_row(std::size_t t) const;

  friend bool operator==(const EmbeddingSequence&, const EmbeddingSequence&) = default;

 private:
  std::string id_;
  std::size_t dim_ = 0;
  std::size_t length_ = 0;
  std::size_t cap_ = kDefaultCap;
  std::vector<float> rows_;
};

// Embedding file layout, all integers little-endian:
//   "LTRE" | u8 version (1) | u16 id length | id bytes (UTF-8) | u32 T | u32 D |
//   T*D f32 row-major
inline constexpr std::array<char, 4> kEmbeddingMagic{'L', 'T', 'R', 'E'};
inline constexpr std::uint8_t kEmbeddingVersion = 1;

std::size_t embedding_header_size(std::string_view transcript_id);
std::vector<std::uint8_t> encode_embedding(const EmbeddingSequence& seq);
EmbeddingSequence decode_embedding(std::span<const std::uint8_t> bytes, std::size_t cap = kDefaultCap);

void save_embedding_file(const EmbeddingSequence& seq, const std::filesystem::path& path);
EmbeddingSequence load_embedding_file(const std::filesystem::path& path, std::size_t cap = kDefaultCap);

/// Per-window scalar predictions written by a window-level predictor:
/// u32 count | count f32 little-endian.
void save_window_predictions(std::span<const float> preds, const std::filesystem::path& path);
std::vector<float> load_window_predictions(const std::filesystem::path& path);

enum class Provenance : std::uint8_t { pt, ft };

std::string_view provenance_name(Provenance p);
Provenance parse_provenance(std::string_view s);

struct WindowParams {
  std::size_t w = 512;
  std::size_t s = 256;
  std::size_t cap = kDefaultCap;

  friend bool operator==(const WindowParams&, const WindowParams&) = default;
};

struct ManifestEntry {
  std::string transcript_id;
  std::filesystem::path embedding_file_path;  // relative paths resolve against the manifest dir
  TraitScores targets;
  std::int64_t n_tokens = 0;
  std::optional<int> gender;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  Provenance encoder_provenance = Provenance::pt;
  WindowParams window;
  ScoreScale score_scale = ScoreScale::raw;
  std::size_t dim = kDefaultEmbeddingDim;
  std::filesystem::path base_dir;  // not serialized

  std::filesystem::path resolve(const ManifestEntry& e) const;
  /// Sibling "<id>.preds" file next to the embedding file.
  std::filesystem::path predictions_path(const ManifestEntry& e) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Throws DataError when the file is unreadable or not a manifest.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(std::string_view text, const std::filesystem::path& base_dir);

enum class ViolationKind {
  duplicate_id,
  invalid_n_tokens,
  below_minimum_length,
  missing_file,
  unreadable_file,
  id_mismatch,
  dim_mismatch,
  window_count_mismatch,
  invalid_targets,
};

std::string_view violation_name(ViolationKind k);

struct Violation {
  ViolationKind kind;
  std::string transcript_id;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationOptions {
  std::int64_t min_words = 50;
  bool check_files = true;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  bool has(ViolationKind k) const;
};

ValidationReport validate_manifest(const DatasetManifest& manifest, const ValidationOptions& options = {});

/// B sequences zero-padded to a common cap, in double precision.
struct PaddedBatch {
  std::size_t batch = 0;
  std::size_t cap = 0;
  std::size_t dim = 0;
  std::vector<double> values;          // batch * cap * dim
  std::vector<std::uint8_t> mask;      // batch * cap, 1 for real windows
  std::vector<std::size_t> lengths;

  std::span<const double> step(std::size_t b, std::size_t t) const {
    return {values.data() + (b * cap + t) * dim, dim};
  }
  bool valid(std::size_t b, std::size_t t) const { return mask[b * cap + t] != 0; }
};

/// cap = 0 uses the longest sequence. Throws std::invalid_argument on
/// dimension mismatch or a sequence longer than cap.
PaddedBatch make_padded_batch(std::span<const EmbeddingSequence* const> seqs, std::size_t cap = 0);

}  // namespace longreg
