#pragma once

// Dense double-precision kernels used by the sequence head, the FFN baseline
// and the optimizer. Every kernel has a scalar reference implementation and,
// where the host supports it, an AVX2/FMA variant. The variant is chosen once
// at startup from CPUID and can be overridden with select().

#include <cstddef>
#include <span>
#include <string_view>

namespace longreg::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

struct AdamStep {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct Table {
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y += W x, W row-major rows x cols
  void (*gemv)(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y);
  // x += W^T y, W row-major rows x cols
  void (*gemv_t)(const double* w, std::size_t rows, std::size_t cols, const double* y, double* x);
  // W += u v^T, W row-major rows x cols
  void (*ger)(const double* u, std::size_t rows, const double* v, std::size_t cols, double* w);
  // In-place Adam update of n parameters. Uses only IEEE-exact operations so
  // every variant is bit-identical to the scalar reference.
  void (*adam)(const AdamStep& step, const double* grad, double* m, double* v, double* param,
               std::size_t n);
};

bool supported(Isa isa);
const Table& table(Isa isa);

// Currently selected variant. Thread-safe to read; select() is meant for
// tests and benchmarks and must not race with running kernels.
const Table& active();
Isa active_isa();
void select(Isa isa);

// Thin span wrappers over the active table.
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace longreg::kernels
