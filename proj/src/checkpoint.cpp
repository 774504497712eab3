#include "longreg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "longreg/recipes.hpp"

namespace longreg {
namespace {

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T get(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (bytes.size() - pos < sizeof(T)) throw DataError("truncated checkpoint");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

nlohmann::ordered_json scaler_json(const ZScore& z) { return {{"mean", z.mean}, {"sd", z.sd}}; }

ZScore scaler_from(const nlohmann::json& j) { return {j.at("mean").get<double>(), j.at("sd").get<double>()}; }

TrainConfig train_config_from(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  if (!j.at("clip_norm").is_null()) c.clip_norm = j.at("clip_norm").get<double>();
  if (!j.at("target_train_loss").is_null()) c.target_train_loss = j.at("target_train_loss").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.eps = j.at("eps").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void expect_kind(const Checkpoint& c, const char* kind) {
  if (c.kind() != kind) throw DataError("checkpoint holds a " + c.kind() + " model, expected " + kind);
}

}  // namespace

nlohmann::ordered_json history_to_json(const TrainHistory& h) {
  return {{"train_loss", h.train_loss},
          {"val_loss", h.val_loss},
          {"best_epoch", h.best_epoch},
          {"stopped_early", h.stopped_early},
          {"reached_target", h.reached_target}};
}

TrainHistory history_from_json(const nlohmann::json& j) {
  TrainHistory h;
  h.train_loss = j.at("train_loss").get<std::vector<double>>();
  h.val_loss = j.at("val_loss").get<std::vector<double>>();
  h.best_epoch = j.at("best_epoch").get<std::size_t>();
  h.stopped_early = j.at("stopped_early").get<bool>();
  h.reached_target = j.at("reached_target").get<bool>();
  return h;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  const std::string header = ckpt.header.dump();
  std::vector<std::uint8_t> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  put<std::uint8_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  put<std::uint64_t>(out, ckpt.params.size());
  for (double v : ckpt.params) put<double>(out, v);
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin())) {
    throw DataError("not a model checkpoint (magic mismatch)");
  }
  std::size_t pos = 4;
  if (get<std::uint8_t>(bytes, pos) != kCheckpointVersion) throw DataError("unsupported checkpoint version");
  const auto len = get<std::uint32_t>(bytes, pos);
  if (bytes.size() - pos < len) throw DataError("truncated checkpoint header");
  Checkpoint c;
  try {
    c.header = nlohmann::ordered_json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                             bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed checkpoint header: ") + ex.what());
  }
  pos += len;
  const auto n = get<std::uint64_t>(bytes, pos);
  if ((bytes.size() - pos) != n * sizeof(double)) throw DataError("checkpoint payload size mismatch");
  c.params.resize(n);
  std::memcpy(c.params.data(), bytes.data() + pos, n * sizeof(double));
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

Checkpoint to_checkpoint(const TraitModel& m) {
  nlohmann::ordered_json layout = nlohmann::ordered_json::array();
  for (const auto& b : m.model.params.layout()) layout.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
  Checkpoint c;
  c.header["kind"] = "seq_head";
  c.header["config"] = to_json(m.model.params.config());
  c.header["seed"] = m.model.params.config().seed;
  c.header["trait"] = trait_name(m.trait);
  c.header["standardizer"] = scaler_json(m.scaler);
  c.header["train_config"] = to_json(m.model.train_config);
  c.header["history"] = history_to_json(m.model.history);
  c.header["parameters"] = std::move(layout);
  c.params = m.model.params.values();
  return c;
}

TraitModel trait_model_from(const Checkpoint& ckpt) {
  expect_kind(ckpt, "seq_head");
  try {
    const auto& h = ckpt.header;
    const auto& jc = h.at("config");
    SeqHeadConfig cfg;
    cfg.input_dim = jc.at("input_dim").get<std::size_t>();
    cfg.hidden = jc.at("hidden").get<std::size_t>();
    cfg.layers = jc.at("layers").get<std::size_t>();
    cfg.output_dim = jc.at("output_dim").get<std::size_t>();
    cfg.dropout = jc.at("dropout").get<double>();
    cfg.seed = jc.at("seed").get<std::uint64_t>();
    TraitModel m;
    m.model.params = SeqHeadParams(cfg);
    const auto& layout = m.model.params.layout();
    const auto& declared = h.at("parameters");
    if (declared.size() != layout.size()) throw DataError("checkpoint parameter ordering does not match model");
    for (std::size_t i = 0; i < layout.size(); ++i) {
      if (declared[i].at("name").get<std::string>() != layout[i].name ||
          declared[i].at("rows").get<std::size_t>() != layout[i].rows ||
          declared[i].at("cols").get<std::size_t>() != layout[i].cols) {
        throw DataError("checkpoint parameter block " + std::to_string(i) + " does not match model layout");
      }
    }
    if (ckpt.params.size() != m.model.params.size()) throw DataError("checkpoint parameter count mismatch");
    m.model.params.values() = ckpt.params;
    m.model.train_config = train_config_from(h.at("train_config"));
    m.model.history = history_from_json(h.at("history"));
    m.trait = parse_trait(h.at("trait").get<std::string>());
    m.scaler = scaler_from(h.at("standardizer"));
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed checkpoint header: ") + ex.what());
  }
}

Checkpoint to_checkpoint(const FfnModel& m, const TrainHistory& history, TraitId trait, const ZScore& scaler) {
  const auto& cfg = m.config();
  Checkpoint c;
  c.header["kind"] = "ffn";
  c.header["config"] = to_json(cfg);
  c.header["trait"] = trait_name(trait);
  c.header["standardizer"] = scaler_json(scaler);
  c.header["history"] = history_to_json(history);
  c.header["parameters"] = {{{"name", "hidden.weight"}, {"rows", cfg.hidden}, {"cols", cfg.input_dim}},
                            {{"name", "hidden.bias"}, {"rows", cfg.hidden}, {"cols", 1}},
                            {{"name", "output.weight"}, {"rows", 1}, {"cols", cfg.hidden}},
                            {{"name", "output.bias"}, {"rows", 1}, {"cols", 1}}};
  c.params = m.values();
  return c;
}

FfnModel ffn_from(const Checkpoint& ckpt) {
  expect_kind(ckpt, "ffn");
  const auto& jc = ckpt.header.at("config");
  FfnConfig cfg;
  cfg.input_dim = jc.at("input_dim").get<std::size_t>();
  cfg.hidden = jc.at("hidden").get<std::size_t>();
  cfg.dropout = jc.at("dropout").get<double>();
  cfg.seed = jc.at("seed").get<std::uint64_t>();
  FfnModel m(cfg);
  if (ckpt.params.size() != m.values().size()) throw DataError("checkpoint parameter count mismatch");
  m.values() = ckpt.params;
  return m;
}

Checkpoint to_checkpoint(const RidgeModel& m, TraitId trait, const ZScore& scaler) {
  Checkpoint c;
  c.header["kind"] = "ridge";
  c.header["config"] = {{"lambda", m.lambda}, {"centered", m.centered}};
  c.header["trait"] = trait_name(trait);
  c.header["standardizer"] = scaler_json(scaler);
  c.header["parameters"] = {{{"name", "weights"}, {"rows", m.weights.size()}, {"cols", 1}},
                            {{"name", "intercept"}, {"rows", 1}, {"cols", 1}}};
  c.params = m.weights;
  c.params.push_back(m.intercept);
  return c;
}

RidgeModel ridge_from(const Checkpoint& ckpt) {
  expect_kind(ckpt, "ridge");
  if (ckpt.params.empty()) throw DataError("empty ridge checkpoint");
  RidgeModel m;
  m.weights.assign(ckpt.params.begin(), ckpt.params.end() - 1);
  m.intercept = ckpt.params.back();
  m.lambda = ckpt.header.at("config").at("lambda").get<double>();
  m.centered = ckpt.header.at("config").at("centered").get<bool>();
  return m;
}

}  // namespace longreg
