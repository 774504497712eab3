#include "longreg/windowing.hpp"

#include <json.hpp>
#include <stdexcept>

namespace longreg {
namespace {

void check_args(std::int64_t n_tokens, std::int64_t w, std::int64_t s, std::int64_t cap) {
  if (n_tokens < 1) throw std::invalid_argument("n_tokens must be >= 1");
  if (w < 1) throw std::invalid_argument("window size must be >= 1");
  if (s < 1 || s > w) throw std::invalid_argument("stride must satisfy 1 <= s <= w");
  if (cap < 1) throw std::invalid_argument("cap must be >= 1");
}

std::int64_t uncapped_count(std::int64_t n_tokens, std::int64_t w, std::int64_t s) {
  if (n_tokens <= w) return 1;
  return (n_tokens - w + s - 1) / s + 1;
}

}  // namespace

bool WindowPlan::capped() const { return uncapped_count(n_tokens, w, s) > cap; }

std::int64_t window_count(std::int64_t n_tokens, std::int64_t w, std::int64_t s, std::int64_t cap) {
  check_args(n_tokens, w, s, cap);
  return std::min(cap, uncapped_count(n_tokens, w, s));
}

WindowPlan plan_windows(std::int64_t n_tokens, std::int64_t w, std::int64_t s, std::int64_t cap) {
  const std::int64_t count = window_count(n_tokens, w, s, cap);
  WindowPlan plan{n_tokens, w, s, cap, {}};
  plan.spans.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    const std::int64_t start = i * s;
    plan.spans.push_back({start, std::min(start + w, n_tokens)});
  }
  return plan;
}

std::string plan_to_json(const WindowPlan& plan) {
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& sp : plan.spans) spans.push_back({sp.start, sp.end});
  const nlohmann::json j{{"w", plan.w},     {"s", plan.s},          {"cap", plan.cap},
                         {"n_tokens", plan.n_tokens}, {"spans", spans}};
  return j.dump();
}

WindowPlan plan_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  WindowPlan plan{j.at("n_tokens").get<std::int64_t>(), j.at("w").get<std::int64_t>(),
                  j.at("s").get<std::int64_t>(), j.at("cap").get<std::int64_t>(), {}};
  for (const auto& sp : j.at("spans")) plan.spans.push_back({sp.at(0).get<std::int64_t>(), sp.at(1).get<std::int64_t>()});
  return plan;
}

}  // namespace longreg
