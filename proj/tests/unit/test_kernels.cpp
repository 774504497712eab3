#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "longreg/kernels.hpp"

using namespace longreg::kernels;

namespace {

std::vector<double> randn(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Plain loops, independent of both variants.
double ref_dot(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return static_cast<double>(s);
}

}  // namespace

TEST_CASE("scalar kernels match plain loops") {
  const auto& k = table(Isa::scalar);
  std::mt19937_64 rng(1);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 16u, 33u}) {
    auto a = randn(n, rng), b = randn(n, rng);
    CHECK(k.dot(a.data(), b.data(), n) == doctest::Approx(ref_dot(a, b)).epsilon(1e-12));
    auto y = b;
    k.axpy(0.5, a.data(), y.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == b[i] + 0.5 * a[i]);
  }
  // 2x3 hand example.
  const std::vector<double> w{1, 2, 3, 4, 5, 6};
  const std::vector<double> x{1, 0, -1};
  std::vector<double> y{10, 20};
  k.gemv(w.data(), 2, 3, x.data(), y.data());
  CHECK(y == std::vector<double>{8, 18});
  std::vector<double> xt{0, 0, 0};
  const std::vector<double> yt{1, -1};
  k.gemv_t(w.data(), 2, 3, yt.data(), xt.data());
  CHECK(xt == std::vector<double>{-3, -3, -3});
  std::vector<double> g(6, 0.0);
  const std::vector<double> u{1, 2};
  k.ger(u.data(), 2, x.data(), 3, g.data());
  CHECK(g == std::vector<double>{1, 0, -1, 2, 0, -2});
}

TEST_CASE("Adam kernel follows the bias-corrected update") {
  const AdamStep s{0.1, 0.9, 0.999, 1e-8, 1 - 0.9, 1 - 0.999};
  std::vector<double> grad{2.0}, m{0.0}, v{0.0}, p{1.0};
  table(Isa::scalar).adam(s, grad.data(), m.data(), v.data(), p.data(), 1);
  CHECK(m[0] == doctest::Approx(0.2));
  CHECK(v[0] == doctest::Approx(0.004));
  // First step moves by lr * sign(g) up to eps.
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-7));
}

TEST_CASE("AVX2 variant is equivalent to the scalar reference") {
  if (!supported(Isa::avx2)) {
    MESSAGE("AVX2 not available on this host; skipping");
    return;
  }
  const auto& s = table(Isa::scalar);
  const auto& v = table(Isa::avx2);
  std::mt19937_64 rng(7);
  for (std::size_t n : {1u, 2u, 3u, 4u, 5u, 8u, 15u, 16u, 17u, 31u, 64u, 257u}) {
    auto a = randn(n, rng), b = randn(n, rng);
    double mag = 0;
    for (std::size_t i = 0; i < n; ++i) mag += std::abs(a[i] * b[i]);
    CHECK(std::abs(v.dot(a.data(), b.data(), n) - s.dot(a.data(), b.data(), n)) <= 1e-14 * mag + 1e-300);

    auto y1 = b, y2 = b;
    s.axpy(-1.3, a.data(), y1.data(), n);
    v.axpy(-1.3, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y2[i] == doctest::Approx(y1[i]).epsilon(1e-14));

    for (std::size_t rows : {1u, 3u, 6u}) {
      auto w = randn(rows * n, rng);
      auto yr = randn(rows, rng);
      auto g1 = yr, g2 = yr;
      s.gemv(w.data(), rows, n, a.data(), g1.data());
      v.gemv(w.data(), rows, n, a.data(), g2.data());
      for (std::size_t r = 0; r < rows; ++r) CHECK(g2[r] == doctest::Approx(g1[r]).epsilon(1e-12));
      auto t1 = b, t2 = b;
      s.gemv_t(w.data(), rows, n, yr.data(), t1.data());
      v.gemv_t(w.data(), rows, n, yr.data(), t2.data());
      for (std::size_t i = 0; i < n; ++i) CHECK(t2[i] == doctest::Approx(t1[i]).epsilon(1e-12));
      auto w1 = w, w2 = w;
      s.ger(yr.data(), rows, a.data(), n, w1.data());
      v.ger(yr.data(), rows, a.data(), n, w2.data());
      for (std::size_t i = 0; i < w.size(); ++i) CHECK(w2[i] == doctest::Approx(w1[i]).epsilon(1e-14));
    }

    const AdamStep st{1e-3, 0.9, 0.999, 1e-8, 1 - 0.9 * 0.9, 1 - 0.999 * 0.999};
    auto m1 = randn(n, rng), vv = randn(n, rng), p1 = randn(n, rng);
    for (auto& x : vv) x = x * x;
    auto m2 = m1, v2 = vv, p2 = p1;
    auto v1 = vv;
    s.adam(st, a.data(), m1.data(), v1.data(), p1.data(), n);
    v.adam(st, a.data(), m2.data(), v2.data(), p2.data(), n);
    CHECK(m1 == m2);
    CHECK(v1 == v2);
    CHECK(p1 == p2);
  }
}

TEST_CASE("dispatch selects and restores variants") {
  const Isa original = active_isa();
  select(Isa::scalar);
  CHECK(active_isa() == Isa::scalar);
  CHECK(&active() == &table(Isa::scalar));
  if (supported(Isa::avx2)) {
    select(Isa::avx2);
    CHECK(active_isa() == Isa::avx2);
  } else {
    CHECK_THROWS(select(Isa::avx2));
  }
  select(original);
  CHECK(isa_name(Isa::scalar) == "scalar");
}
