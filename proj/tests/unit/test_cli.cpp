#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "longreg/cli.hpp"
#include "support.hpp"

using namespace longreg;
using cli::RunConfig;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

std::vector<std::string> small_training() {
  return {"--hidden", "8", "--layers", "1", "--max-epochs", "3", "--patience", "2", "--batch-size", "8", "--val-fraction", "0.2",
          "--lr", "0.003"};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("plan prints spans") {
  const auto r = run({"plan", "--tokens", "1000"});
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out == "0 512\n256 768\n512 1000\n");
  CHECK(run({"plan", "--tokens", "10", "--window", "0"}).code == cli::kExitUsage);
}

TEST_CASE("usage errors exit 1 with a message") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"plan", "--no-such-flag"}).code == cli::kExitUsage);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  const auto r = run({"cv", "--manifest", "x.json", "--lr", "-1"});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("learning_rate") != std::string::npos);
  CHECK(run({"cv", "--manifest", "x.json", "--recipe", "magic"}).code == cli::kExitUsage);
}

TEST_CASE("missing data exits 2") {
  testsupport::TempDir dir;
  const auto r = run({"cv", "--manifest", (dir / "absent.json").string(), "--out", dir.path().string()});
  CHECK(r.code == cli::kExitData);
  CHECK_FALSE(r.err.empty());
  CHECK(run({"validate", "--manifest", (dir / "absent.json").string()}).code == cli::kExitData);
}

TEST_CASE("config schema") {
  const RunConfig defaults;
  RunConfig c;
  cli::apply_json(c, nlohmann::json::object());
  CHECK(cli::to_json(c) == cli::to_json(defaults));

  cli::apply_json(c, {{"lr", 0.01}, {"hidden", 16}});
  CHECK(c.learning_rate == 0.01);
  CHECK(c.hidden == 16);
  try {
    cli::apply_json(c, {{"hiddn", 3}, {"lrate", 1}});
    FAIL("unknown keys accepted");
  } catch (const cli::ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("hiddn") != std::string::npos);
    CHECK(msg.find("lrate") != std::string::npos);
  }
  CHECK_THROWS_AS(cli::apply_json(c, {{"hidden", "many"}}), cli::ConfigError);

  RunConfig bad;
  bad.dropout = 1.0;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("dropout"), cli::ConfigError);

  // The full dump is itself a valid config.
  testsupport::TempDir dir;
  write(dir / "all.json", cli::to_json(defaults).dump());
  CHECK(cli::to_json(cli::load_config(dir / "all.json")) == cli::to_json(defaults));
}

TEST_CASE("flags override the config file") {
  testsupport::TempDir dir;
  write(dir / "cfg.json", R"({"window": 100, "stride": 100, "tokens": 250})");
  CHECK(run({"plan", "--config", (dir / "cfg.json").string()}).out == "0 100\n100 200\n200 250\n");
  CHECK(run({"plan", "--config", (dir / "cfg.json").string(), "--tokens", "150"}).out == "0 100\n100 150\n");
  write(dir / "bad.json", R"({"windw": 100})");
  CHECK(run({"plan", "--config", (dir / "bad.json").string()}).code == cli::kExitUsage);
}

TEST_CASE("synth, validate, cv, train and explain end to end") {
  testsupport::TempDir dir;
  const auto data = dir / "data";
  const auto manifest = (data / "manifest.json").string();
  auto r = run({"synth", "--n", "24", "--dim", "8", "--t-min", "2", "--t-max", "5", "--trait", "O", "--seed", "3",
                "--out", data.string()});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(std::filesystem::exists(data / "sidecar.json"));
  CHECK(std::filesystem::exists(data / "run_config.json"));
  CHECK(run({"validate", "--manifest", manifest}).code == cli::kExitOk);

  const auto cv_args = [&](const std::string& out) {
    return concat({"cv", "--manifest", manifest, "--trait", "O", "--recipe", "rnn,ridge,median,mean", "--folds", "3",
                   "--seed", "5", "--out", out},
                  small_training());
  };
  r = run(cv_args((dir / "cv1").string()));
  REQUIRE(r.code == cli::kExitOk);
  REQUIRE(run(cv_args((dir / "cv2").string())).code == cli::kExitOk);
  for (const std::string f : {"report_rnn.json", "report_ridge.json", "report_median.json", "report_mean.json",
                              "summary.csv"}) {
    CHECK(slurp(dir / "cv1" / f) == slurp(dir / "cv2" / f));
  }
  const auto report = nlohmann::json::parse(slurp(dir / "cv1" / "report_rnn.json"));
  CHECK(report["folds"].size() == 3);
  const std::string csv = slurp(dir / "cv1" / "summary.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

  const auto models = (dir / "models").string();
  r = run(concat({"train", "--manifest", manifest, "--trait", "O", "--out", models}, small_training()));
  REQUIRE_MESSAGE(r.code == cli::kExitOk, r.err);
  CHECK(std::filesystem::exists(dir / "models" / "model_O.ltrm"));
  CHECK(std::filesystem::exists(dir / "models" / "train_O.json"));

  const auto ex = (dir / "explain").string();
  r = run({"explain", "--manifest", manifest, "--trait", "O", "--models", models, "--k", "2", "--out", ex});
  REQUIRE(r.code == cli::kExitOk);
  for (const std::string f : {"heatmap_O.csv", "heatmap_O.json", "topk_O.jsonl", "removal_O.csv",
                              "mean_embeddings.csv", "explain_config.json"}) {
    CHECK_MESSAGE(std::filesystem::exists(dir / "explain" / f), f);
  }
  const std::string heat = slurp(dir / "explain" / "heatmap_O.csv");
  CHECK(std::count(heat.begin(), heat.end(), '\n') == 25);
  CHECK_FALSE(std::filesystem::exists(dir / "explain" / "overlap.json"));

  // Explaining a trait without a model is a data error.
  CHECK(run({"explain", "--manifest", manifest, "--trait", "N", "--models", models, "--out", ex}).code ==
        cli::kExitData);
}
