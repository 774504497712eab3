#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "longreg/core.hpp"

namespace testsupport {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("longreg_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline longreg::EmbeddingSequence random_sequence(const std::string& id, std::size_t t, std::size_t d,
                                                  std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<float> n(0.0f, static_cast<float>(scale));
  std::vector<float> rows(t * d);
  for (auto& x : rows) x = n(rng);
  return {id, d, std::move(rows)};
}

}  // namespace testsupport
