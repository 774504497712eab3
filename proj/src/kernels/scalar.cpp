#include <cmath>

#include "variants.hpp"

namespace longreg::kernels::detail {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot(w + r * cols, x, cols);
}

void gemv_t(const double* w, std::size_t rows, std::size_t cols, const double* y, double* x) {
  for (std::size_t r = 0; r < rows; ++r) axpy(y[r], w + r * cols, x, cols);
}

void ger(const double* u, std::size_t rows, const double* v, std::size_t cols, double* w) {
  for (std::size_t r = 0; r < rows; ++r) axpy(u[r], v, w + r * cols, cols);
}

void adam(const AdamStep& s, const double* g, double* m, double* v, double* p, std::size_t n) {
  const double one_b1 = 1.0 - s.beta1;
  const double one_b2 = 1.0 - s.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = s.beta1 * m[i] + one_b1 * g[i];
    v[i] = s.beta2 * v[i] + one_b2 * (g[i] * g[i]);
    const double m_hat = m[i] / s.bias_correction1;
    const double v_hat = v[i] / s.bias_correction2;
    p[i] = p[i] - s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
  }
}

}  // namespace

const Table& scalar_table() {
  static const Table t{dot, axpy, gemv, gemv_t, ger, adam};
  return t;
}

}  // namespace longreg::kernels::detail
