#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace longreg {

/// Half-open token range [start, end).
struct Span {
  std::int64_t start = 0;
  std::int64_t end = 0;

  friend bool operator==(const Span&, const Span&) = default;
};

/// Sliding-window segmentation of one transcript: windows of w tokens
/// starting every s tokens, at most cap of them. The last uncapped window
/// ends at n_tokens and may be shorter than w. When capped, the first cap
/// windows are kept.
struct WindowPlan {
  std::int64_t n_tokens = 0;
  std::int64_t w = 0;
  std::int64_t s = 0;
  std::int64_t cap = 0;
  std::vector<Span> spans;

  bool capped() const;
};

WindowPlan plan_windows(std::int64_t n_tokens, std::int64_t w, std::int64_t s, std::int64_t cap);
std::int64_t window_count(std::int64_t n_tokens, std::int64_t w, std::int64_t s, std::int64_t cap);

/// {"w":..,"s":..,"cap":..,"n_tokens":..,"spans":[[start,end],...]}
std::string plan_to_json(const WindowPlan& plan);
WindowPlan plan_from_json(const std::string& text);

}  // namespace longreg
