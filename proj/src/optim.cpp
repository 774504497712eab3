#include "longreg/optim.hpp"

#include <stdexcept>

#include "longreg/kernels.hpp"

namespace longreg {

void TrainConfig::validate() const {
  auto fail = [](const char* field, const char* what) {
    throw std::invalid_argument(std::string(field) + ": " + what);
  };
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate", "must be positive");
  if (batch_size == 0) fail("batch_size", "must be positive");
  if (max_epochs == 0) fail("max_epochs", "must be positive");
  if (patience > max_epochs) fail("patience", "must not exceed max_epochs");
  if (clip_norm && !(*clip_norm > 0.0)) fail("clip_norm", "must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1", "must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2", "must be in [0, 1)");
  if (!(eps > 0.0)) fail("eps", "must be positive");
}

Adam::Adam(std::size_t n, const TrainConfig& cfg)
    : lr_(cfg.learning_rate), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw std::invalid_argument("Adam::step size mismatch");
  }
  ++t_;
  const double td = static_cast<double>(t_);
  const kernels::AdamStep s{lr_, beta1_, beta2_, eps_, 1.0 - std::pow(beta1_, td), 1.0 - std::pow(beta2_, td)};
  kernels::active().adam(s, grad.data(), m_.data(), v_.data(), params.data(), params.size());
}

double clip_gradient(std::span<double> grad, double max_norm) {
  const double norm = std::sqrt(kernels::dot(grad, grad));
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grad) g *= scale;
  }
  return norm;
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index over empty range");
  const std::uint64_t range = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % range);
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[uniform_index(rng, i)]);
  return p;
}

}  // namespace longreg
