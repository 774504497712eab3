#pragma once

// Command-line front end: synth, plan, train, cv, explain, validate.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace longreg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitDivergence = 3;

/// Invalid configuration: unknown keys, wrong types or out-of-range values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Every option any command accepts, with its default. JSON keys match the
/// field names; "lr" is accepted as an alias of learning_rate.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string trait = "all";
  std::string manifest;
  std::string out = "out";
  std::string models;  // explain: directory with model_<L>.ltrm; defaults to out
  std::vector<std::string> recipe{"rnn"};

  // windowing
  std::int64_t tokens = 0;
  std::int64_t window = 512;
  std::int64_t stride = 256;
  std::int64_t cap = 200;

  // evaluation
  std::size_t folds = 5;
  double val_fraction = 0.05;
  std::string split = "kfold";
  std::string r2_reference = "test_mean";

  // training
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::optional<double> clip_norm;
  std::size_t hidden = 256;
  std::size_t layers = 2;
  double dropout = 0.1;
  std::size_t ffn_hidden = 256;
  double ridge_lambda = 1.0;

  // interpretation
  std::size_t k = 5;

  // synthetic data
  std::size_t n = 200;
  std::size_t dim = 32;
  std::size_t t_min = 5;
  std::size_t t_max = 20;
  std::size_t planted = 1;
  double snr = 5.0;
  std::string kind = "linear";
  double explainable_variance = 0.9;
  double raw_mean = 55.0;
  double raw_sd = 20.0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

nlohmann::ordered_json to_json(const RunConfig& c);

/// Applies the keys of a JSON object on top of c. Unknown keys are collected
/// and reported together. Throws ConfigError.
void apply_json(RunConfig& c, const nlohmann::json& j);

/// Defaults overlaid with the file's keys, validated. Throws ConfigError for
/// schema violations and std::runtime_error when the file cannot be read.
RunConfig load_config(const std::filesystem::path& path);

/// Runs one command line (args excludes the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace longreg::cli
