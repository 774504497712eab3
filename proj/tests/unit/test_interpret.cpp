#include <doctest.h>

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>
#include <set>
#include <stdexcept>

#include "longreg/interpret.hpp"
#include "support.hpp"

using namespace longreg;

namespace {

AttentionProfile profile(std::vector<double> alpha, std::string id = "t") {
  AttentionProfile p;
  p.transcript_id = std::move(id);
  p.alpha = std::move(alpha);
  return p;
}

SeqHeadParams random_model(std::size_t d, std::mt19937_64& rng) {
  SeqHeadConfig c;
  c.input_dim = d;
  c.hidden = 4;
  c.layers = 2;
  SeqHeadParams p(c);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  for (double& v : p.values()) v = u(rng);
  return p;
}

}  // namespace

TEST_CASE("top-k ordering, ties and truncation") {
  CHECK(top_k_windows(profile({0.1, 0.7, 0.2}), 2).indices == std::vector<std::size_t>{1, 2});
  CHECK(top_k_windows(profile({0.5, 0.5}), 1).indices == std::vector<std::size_t>{0});
  const auto all = top_k_windows(profile({0.2, 0.1, 0.4, 0.3}), 4);
  CHECK(all.indices == std::vector<std::size_t>{2, 3, 0, 1});
  CHECK_FALSE(all.truncated);
  const auto over = top_k_windows(profile({0.6, 0.4}), 5);
  CHECK(over.truncated);
  CHECK(over.indices.size() == 2);
  CHECK_THROWS_AS(top_k_windows(profile({1.0}), 0), std::invalid_argument);
}

TEST_CASE("identical rows give uniform attention and near-invariant removal") {
  std::mt19937_64 rng(1);
  const auto p = random_model(3, rng);
  std::vector<float> rows;
  for (int t = 0; t < 6; ++t) rows.insert(rows.end(), {0.3f, -0.2f, 0.5f});
  EmbeddingSequence seq("u", 3, rows);
  SeqHeadConfig c;
  c.input_dim = 3;
  c.hidden = 4;
  c.layers = 1;
  SeqHeadParams flat(c);  // zero weights: every hidden state identical
  const auto prof = attention_profile(flat, seq, TraitId::O, {50, 10});
  for (double a : prof.alpha) CHECK(a == doctest::Approx(1.0 / 6.0).epsilon(1e-14));

  const auto r = removal_impact(p, seq, 2, {50, 10});
  REQUIRE(r.percent_change);
  CHECK(std::abs(*r.percent_change) < 1.0);
}

TEST_CASE("removal impact before equals the untouched prediction") {
  std::mt19937_64 rng(2);
  const auto p = random_model(5, rng);
  const ZScore sc{60, 15};
  for (int trial = 0; trial < 20; ++trial) {
    const auto seq = testsupport::random_sequence("r", 2 + trial % 6, 5, rng);
    const std::size_t j = static_cast<std::size_t>(trial) % seq.length();
    const auto r = removal_impact(p, seq, j, sc);
    CHECK(r.before == sc.invert(predict(p, seq).prediction[0]));
    CHECK(r.after == sc.invert(predict(p, seq.without_row(j)).prediction[0]));
    CHECK(r.delta == r.after - r.before);
    REQUIRE(r.percent_change);
    CHECK(*r.percent_change == doctest::Approx(100.0 * (r.before - r.after) / std::abs(r.before)));
  }
  EmbeddingSequence one("o", 5, std::vector<float>(5, 0.1f));
  CHECK_THROWS_WITH(removal_impact(p, one, 0, sc), "cannot remove the only window");
}

TEST_CASE("near-zero predictions leave the percentage undefined") {
  SeqHeadConfig c;
  c.input_dim = 2;
  c.hidden = 2;
  c.layers = 1;
  SeqHeadParams zero(c);  // predicts exactly 0 on the standardized scale
  EmbeddingSequence seq("z", 2, {1, 2, 3, 4});
  const auto r = removal_impact(zero, seq, 0, {0.0, 10.0});
  CHECK(r.before == 0.0);
  CHECK_FALSE(r.percent_change);
  CHECK(r.delta == 0.0);
  const auto shifted = removal_impact(zero, seq, 0, {100.0, 10.0});
  CHECK(shifted.percent_change);
}

TEST_CASE("Jaccard overlap of top-k sets") {
  const auto a = profile({0.0, 0.3, 0.3, 0.3, 0.05, 0.05});
  const auto b = profile({0.0, 0.05, 0.05, 0.3, 0.3, 0.3});
  const std::vector<AttentionProfile> ab{a, b};
  const auto m = trait_overlap(ab, 3);  // {1,2,3} vs {3,4,5}
  CHECK(m[0][1] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(m[1][0] == m[0][1]);
  CHECK(m[0][0] == 1.0);
  const std::vector<AttentionProfile> same{a, a, a};
  for (const auto& row : trait_overlap(same, 2)) {
    for (double v : row) CHECK(v == 1.0);
  }
  const auto c = profile({0.4, 0.4, 0.1, 0.0, 0.05, 0.05});
  const std::vector<AttentionProfile> disjoint{b, c};
  CHECK(trait_overlap(disjoint, 2)[0][1] == 0.0);
  const std::vector<AttentionProfile> mismatched{a, profile({0.5, 0.5})};
  CHECK_THROWS_AS(trait_overlap(mismatched, 1), std::invalid_argument);
}

TEST_CASE("heatmap CSV layout and round trip") {
  testsupport::TempDir dir;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<AttentionProfile> ps;
  for (std::size_t t : {3u, 5u, 1u}) {
    std::vector<double> a(t);
    double s = 0;
    for (double& v : a) s += (v = u(rng));
    for (double& v : a) v /= s;
    auto p = profile(a, "id" + std::to_string(t));
    p.prediction = 100.0 * u(rng);
    p.trait = TraitId::C;
    ps.push_back(p);
  }
  export_heatmap(ps, dir / "h.csv", 2);
  std::ifstream in(dir / "h.csv");
  const std::string text{std::istreambuf_iterator<char>(in), {}};
  std::istringstream lines(text);
  std::string header, first;
  std::getline(lines, header);
  std::getline(lines, first);
  CHECK(header == "transcript_id,trait,prediction,top_k,a0,a1,a2,a3,a4");
  CHECK(std::count(first.begin(), first.end(), ',') == 8);
  CHECK(first.substr(first.size() - 2) == ",,");

  const auto rows = parse_heatmap_csv(text);
  REQUIRE(rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(rows[i].transcript_id == ps[i].transcript_id);
    CHECK(rows[i].trait == "conscientiousness");
    CHECK(std::abs(rows[i].prediction - ps[i].prediction) < 1e-9);
    REQUIRE(rows[i].alpha.size() == ps[i].alpha.size());
    for (std::size_t t = 0; t < ps[i].alpha.size(); ++t) CHECK(std::abs(rows[i].alpha[t] - ps[i].alpha[t]) < 1e-9);
    CHECK(rows[i].top_k == top_k_windows(ps[i], 2).indices);
  }

  const std::vector<AttentionProfile> single{ps[0]};
  const auto one = heatmap_csv(single, 1);
  CHECK(std::count(one.begin(), one.end(), '\n') == 2);
  CHECK_THROWS_AS(heatmap_csv(std::vector<AttentionProfile>{}, 1), std::invalid_argument);
}

TEST_CASE("JSON and JSONL exports carry predictions, top-k and spans") {
  auto p = profile({0.1, 0.6, 0.3}, "j");
  p.spans = {{0, 512}, {256, 768}, {512, 1000}};
  p.prediction = 42.0;
  const std::vector<AttentionProfile> ps{p};
  const auto j = nlohmann::json::parse(heatmap_json(ps, 2));
  CHECK(j["profiles"][0]["prediction"] == 42.0);
  CHECK(j["profiles"][0]["top_k"] == nlohmann::json::array({1, 2}));
  CHECK(j["profiles"][0]["spans"][2] == nlohmann::json::array({512, 1000}));
  const auto line = nlohmann::json::parse(topk_jsonl(ps, 1));
  CHECK(line["top_k"][0]["index"] == 1);
  CHECK(line["top_k"][0]["span"] == nlohmann::json::array({256, 768}));
}

TEST_CASE("profiles ignore padding and reject dimension mismatch") {
  std::mt19937_64 rng(4);
  const auto p = random_model(4, rng);
  const auto seq = testsupport::random_sequence("p", 4, 4, rng);
  const auto other = testsupport::random_sequence("q", 9, 4, rng);
  const auto prof = attention_profile(p, seq, TraitId::A, {0, 1});
  const EmbeddingSequence* both[] = {&seq, &other};
  const auto padded = predict_padded(p, make_padded_batch(both, 12), 0);
  CHECK(prof.prediction == padded.prediction[0]);
  for (std::size_t t = 0; t < 4; ++t) CHECK(prof.alpha[t] == padded.alpha[t]);
  double sum = 0;
  for (double a : prof.alpha) sum += a;
  CHECK(std::abs(sum - 1.0) <= 1e-12);
  const auto wrong = testsupport::random_sequence("w", 3, 5, rng);
  CHECK_THROWS_AS(attention_profile(p, wrong, TraitId::A, {0, 1}), std::invalid_argument);
}
