#include "longreg/core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "longreg/windowing.hpp"

namespace longreg {

static_assert(std::endian::native == std::endian::little, "byte order helpers assume a little-endian host");

namespace {

constexpr std::array<std::string_view, 5> kTraitNames{"openness", "conscientiousness", "extraversion",
                                                      "agreeableness", "neuroticism"};
constexpr std::array<char, 5> kTraitLetters{'O', 'C', 'E', 'A', 'N'};

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw DataError(std::string("truncated embedding file: missing ") + what);
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

std::string_view trait_name(TraitId t) { return kTraitNames[static_cast<std::size_t>(t)]; }

char trait_letter(TraitId t) { return kTraitLetters[static_cast<std::size_t>(t)]; }

TraitId parse_trait(std::string_view s) {
  for (TraitId t : kAllTraits) {
    if (s == trait_name(t) || (s.size() == 1 && s[0] == trait_letter(t))) return t;
  }
  throw std::invalid_argument("unknown trait: " + std::string(s));
}

std::string_view scale_name(ScoreScale s) { return s == ScoreScale::raw ? "raw" : "standardized"; }

ScoreScale parse_scale(std::string_view s) {
  if (s == "raw") return ScoreScale::raw;
  if (s == "standardized") return ScoreScale::standardized;
  throw std::invalid_argument("unknown score scale: " + std::string(s));
}

std::optional<std::string> TraitScores::check() const {
  for (TraitId t : kAllTraits) {
    const double v = (*this)[t];
    if (!std::isfinite(v)) return std::string(trait_name(t)) + " score is not finite";
    if (scale == ScoreScale::raw && (v < kRawScoreMin || v > kRawScoreMax)) {
      return std::string(trait_name(t)) + " raw score outside [0, 240]";
    }
  }
  return std::nullopt;
}

EmbeddingSequence::EmbeddingSequence(std::string transcript_id, std::size_t dim, std::vector<float> rows,
                                     std::size_t cap)
    : id_(std::move(transcript_id)), dim_(dim), cap_(cap), rows_(std::move(rows)) {
  if (dim_ == 0) throw std::invalid_argument("embedding dim must be positive");
  if (cap_ == 0) throw std::invalid_argument("cap must be positive");
  if (rows_.empty() || rows_.size() % dim_ != 0) {
    throw std::invalid_argument("embedding payload must hold a positive whole number of rows");
  }
  length_ = rows_.size() / dim_;
  if (length_ > cap_) throw std::invalid_argument("sequence length exceeds cap");
  for (float v : rows_) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite embedding");
  }
}

EmbeddingSequence EmbeddingSequence::without_row(std::size_t t) const {
  if (t >= length_) throw std::out_of_range("row index out of range");
  if (length_ == 1) throw std::invalid_argument("cannot remove the only window");
  std::vector<float> rows;
  rows.reserve(rows_.size() - dim_);
  rows.insert(rows.end(), rows_.begin(), rows_.begin() + static_cast<std::ptrdiff_t>(t * dim_));
  rows.insert(rows.end(), rows_.begin() + static_cast<std::ptrdiff_t>((t + 1) * dim_), rows_.end());
  return EmbeddingSequence(id_, dim_, std::move(rows), cap_);
}

std::size_t embedding_header_size(std::string_view transcript_id) {
  return kEmbeddingMagic.size() + 1 + 2 + transcript_id.size() + 4 + 4;
}

std::vector<std::uint8_t> encode_embedding(const EmbeddingSequence& seq) {
  const auto& id = seq.transcript_id();
  if (id.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw std::length_error("transcript id longer than 65535 bytes");
  }
  if (seq.length() > std::numeric_limits<std::uint32_t>::max() ||
      seq.dim() > std::numeric_limits<std::uint32_t>::max()) {
    throw std::length_error("T or D exceeds u32 header field");
  }
  std::vector<std::uint8_t> out;
  out.reserve(embedding_header_size(id) + seq.data().size() * sizeof(float));
  out.insert(out.end(), kEmbeddingMagic.begin(), kEmbeddingMagic.end());
  put<std::uint8_t>(out, kEmbeddingVersion);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
  out.insert(out.end(), id.begin(), id.end());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(seq.length()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(seq.dim()));
  for (float v : seq.data()) put<float>(out, v);
  return out;
}

EmbeddingSequence decode_embedding(std::span<const std::uint8_t> bytes, std::size_t cap) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kEmbeddingMagic.begin())) {
    throw DataError("magic-number mismatch: not an embedding file");
  }
  const auto version = r.get<std::uint8_t>("version");
  if (version != kEmbeddingVersion) throw DataError("unsupported embedding file version " + std::to_string(version));
  const auto id_len = r.get<std::uint16_t>("id length");
  const auto id_bytes = r.take(id_len, "transcript id");
  std::string id(id_bytes.begin(), id_bytes.end());
  const auto t = r.get<std::uint32_t>("T");
  const auto d = r.get<std::uint32_t>("D");
  if (t == 0 || d == 0) throw DataError("embedding file declares an empty matrix");
  const std::uint64_t count = std::uint64_t{t} * d;
  if (r.remaining() < count * sizeof(float)) {
    throw DataError("truncated embedding file: declared " + std::to_string(t) + " rows, payload has " +
                    std::to_string(r.remaining() / (sizeof(float) * d)));
  }
  if (r.remaining() > count * sizeof(float)) throw DataError("trailing bytes after embedding payload");
  if (t > cap) throw DataError("sequence length " + std::to_string(t) + " exceeds cap " + std::to_string(cap));
  std::vector<float> rows(count);
  const auto payload = r.take(count * sizeof(float), "payload");
  std::memcpy(rows.data(), payload.data(), payload.size());
  for (float v : rows) {
    if (!std::isfinite(v)) throw DataError("non-finite embedding");
  }
  return EmbeddingSequence(std::move(id), d, std::move(rows), cap);
}

void save_embedding_file(const EmbeddingSequence& seq, const std::filesystem::path& path) {
  write_all(path, encode_embedding(seq));
}

EmbeddingSequence load_embedding_file(const std::filesystem::path& path, std::size_t cap) {
  const auto bytes = read_all(path);
  return decode_embedding(bytes, cap);
}

void save_window_predictions(std::span<const float> preds, const std::filesystem::path& path) {
  std::vector<std::uint8_t> out;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(preds.size()));
  for (float v : preds) put<float>(out, v);
  write_all(path, out);
}

std::vector<float> load_window_predictions(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  Reader r(bytes);
  const auto n = r.get<std::uint32_t>("prediction count");
  if (r.remaining() != std::size_t{n} * sizeof(float)) throw DataError("prediction file size mismatch: " + path.string());
  std::vector<float> out(n);
  const auto payload = r.take(out.size() * sizeof(float), "predictions");
  std::memcpy(out.data(), payload.data(), payload.size());
  for (float v : out) {
    if (!std::isfinite(v)) throw DataError("non-finite window prediction in " + path.string());
  }
  return out;
}

std::string_view provenance_name(Provenance p) { return p == Provenance::pt ? "PT" : "FT"; }

Provenance parse_provenance(std::string_view s) {
  if (s == "PT") return Provenance::pt;
  if (s == "FT") return Provenance::ft;
  throw std::invalid_argument("unknown encoder provenance: " + std::string(s));
}

std::filesystem::path DatasetManifest::resolve(const ManifestEntry& e) const {
  if (e.embedding_file_path.is_absolute()) return e.embedding_file_path;
  return base_dir / e.embedding_file_path;
}

std::filesystem::path DatasetManifest::predictions_path(const ManifestEntry& e) const {
  return resolve(e).parent_path() / (e.transcript_id + ".preds");
}

std::string manifest_to_json(const DatasetManifest& m) {
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (const auto& e : m.entries) {
    nlohmann::ordered_json targets = nlohmann::ordered_json::object();
    for (TraitId t : kAllTraits) targets[std::string(trait_name(t))] = e.targets[t];
    nlohmann::ordered_json je;
    je["transcript_id"] = e.transcript_id;
    je["embedding_file_path"] = e.embedding_file_path.generic_string();
    je["targets"] = targets;
    je["n_tokens"] = e.n_tokens;
    if (e.gender) je["gender"] = *e.gender;
    entries.push_back(std::move(je));
  }
  nlohmann::ordered_json j;
  j["encoder_provenance"] = provenance_name(m.encoder_provenance);
  j["score_scale"] = scale_name(m.score_scale);
  j["dim"] = m.dim;
  j["window"] = {{"w", m.window.w}, {"s", m.window.s}, {"cap", m.window.cap}};
  j["entries"] = std::move(entries);
  return j.dump(2);
}

DatasetManifest manifest_from_json(std::string_view text, const std::filesystem::path& base_dir) {
  DatasetManifest m;
  m.base_dir = base_dir;
  try {
    const auto j = nlohmann::json::parse(text);
    m.encoder_provenance = parse_provenance(j.at("encoder_provenance").get<std::string>());
    m.score_scale = parse_scale(j.at("score_scale").get<std::string>());
    m.dim = j.at("dim").get<std::size_t>();
    const auto& w = j.at("window");
    m.window = {w.at("w").get<std::size_t>(), w.at("s").get<std::size_t>(), w.at("cap").get<std::size_t>()};
    for (const auto& je : j.at("entries")) {
      ManifestEntry e;
      e.transcript_id = je.at("transcript_id").get<std::string>();
      e.embedding_file_path = je.at("embedding_file_path").get<std::string>();
      e.n_tokens = je.at("n_tokens").get<std::int64_t>();
      e.targets.scale = m.score_scale;
      const auto& jt = je.at("targets");
      for (TraitId t : kAllTraits) e.targets[t] = jt.at(std::string(trait_name(t))).get<double>();
      if (je.contains("gender") && !je.at("gender").is_null()) e.gender = je.at("gender").get<int>();
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed manifest: ") + ex.what());
  } catch (const std::invalid_argument& ex) {
    throw DataError(std::string("malformed manifest: ") + ex.what());
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str(), path.parent_path());
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << manifest_to_json(manifest) << '\n';
}

std::string_view violation_name(ViolationKind k) {
  switch (k) {
    case ViolationKind::duplicate_id:
      return "duplicate transcript id";
    case ViolationKind::invalid_n_tokens:
      return "invalid n_tokens";
    case ViolationKind::below_minimum_length:
      return "below minimum length";
    case ViolationKind::missing_file:
      return "missing embedding file";
    case ViolationKind::unreadable_file:
      return "unreadable embedding file";
    case ViolationKind::id_mismatch:
      return "transcript id mismatch";
    case ViolationKind::dim_mismatch:
      return "dimension mismatch";
    case ViolationKind::window_count_mismatch:
      return "window count mismatch";
    case ViolationKind::invalid_targets:
      return "invalid targets";
  }
  return "unknown";
}

bool ValidationReport::has(ViolationKind k) const {
  return std::any_of(violations.begin(), violations.end(), [k](const Violation& v) { return v.kind == k; });
}

ValidationReport validate_manifest(const DatasetManifest& m, const ValidationOptions& opt) {
  ValidationReport report;
  auto flag = [&](ViolationKind k, const std::string& id, std::string msg) {
    report.violations.push_back({k, id, std::move(msg)});
  };
  const bool window_ok = m.window.w >= 1 && m.window.s >= 1 && m.window.s <= m.window.w && m.window.cap >= 1;

  std::set<std::string> seen;
  for (const auto& e : m.entries) {
    if (!seen.insert(e.transcript_id).second) {
      flag(ViolationKind::duplicate_id, e.transcript_id, "transcript id appears more than once");
    }
    if (e.n_tokens < 1) {
      flag(ViolationKind::invalid_n_tokens, e.transcript_id, "n_tokens must be >= 1");
    } else if (e.n_tokens < opt.min_words) {
      flag(ViolationKind::below_minimum_length, e.transcript_id,
           "n_tokens " + std::to_string(e.n_tokens) + " below minimum " + std::to_string(opt.min_words));
    }
    if (auto bad = e.targets.check()) flag(ViolationKind::invalid_targets, e.transcript_id, *bad);

    if (!opt.check_files) continue;
    const auto path = m.resolve(e);
    if (!std::filesystem::exists(path)) {
      flag(ViolationKind::missing_file, e.transcript_id, path.string());
      continue;
    }
    try {
      const auto seq = load_embedding_file(path, m.window.cap);
      if (seq.transcript_id() != e.transcript_id) {
        flag(ViolationKind::id_mismatch, e.transcript_id, "file declares id " + seq.transcript_id());
      }
      if (seq.dim() != m.dim) {
        flag(ViolationKind::dim_mismatch, e.transcript_id,
             "file D=" + std::to_string(seq.dim()) + ", manifest D=" + std::to_string(m.dim));
      }
      if (window_ok && e.n_tokens >= 1) {
        const auto expected = window_count(e.n_tokens, static_cast<std::int64_t>(m.window.w),
                                           static_cast<std::int64_t>(m.window.s),
                                           static_cast<std::int64_t>(m.window.cap));
        if (static_cast<std::int64_t>(seq.length()) != expected) {
          flag(ViolationKind::window_count_mismatch, e.transcript_id,
               "file has " + std::to_string(seq.length()) + " windows, plan has " + std::to_string(expected));
        }
      }
    } catch (const std::exception& ex) {
      flag(ViolationKind::unreadable_file, e.transcript_id, ex.what());
    }
  }
  return report;
}

PaddedBatch make_padded_batch(std::span<const EmbeddingSequence* const> seqs, std::size_t cap) {
  if (seqs.empty()) throw std::invalid_argument("empty batch");
  const std::size_t dim = seqs.front()->dim();
  std::size_t longest = 0;
  for (const auto* s : seqs) {
    if (s->dim() != dim) throw std::invalid_argument("dimension mismatch in batch");
    longest = std::max(longest, s->length());
  }
  if (cap == 0) cap = longest;
  if (longest > cap) throw std::invalid_argument("sequence longer than batch cap");

  PaddedBatch b;
  b.batch = seqs.size();
  b.cap = cap;
  b.dim = dim;
  b.values.assign(b.batch * cap * dim, 0.0);
  b.mask.assign(b.batch * cap, 0);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto* s = seqs[i];
    b.lengths.push_back(s->length());
    for (std::size_t t = 0; t < s->length(); ++t) {
      const auto row = s->row(t);
      std::copy(row.begin(), row.end(), b.values.begin() + static_cast<std::ptrdiff_t>((i * cap + t) * dim));
      b.mask[i * cap + t] = 1;
    }
  }
  return b;
}

}  // namespace longreg
