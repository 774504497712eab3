#include <atomic>
#include <stdexcept>

#include "variants.hpp"

namespace longreg::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(LONGREG_HAVE_AVX2) && defined(__GNUC__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

bool host_avx2() {
  static const bool ok = cpu_has_avx2();
  return ok;
}

const Table& lookup(Isa isa) {
#if defined(LONGREG_HAVE_AVX2)
  if (isa == Isa::avx2) return detail::avx2_table();
#endif
  (void)isa;
  return detail::scalar_table();
}

struct Selection {
  std::atomic<Isa> isa;
  std::atomic<const Table*> table;
};

Selection& current() {
  static Selection sel{host_avx2() ? Isa::avx2 : Isa::scalar,
                       &lookup(host_avx2() ? Isa::avx2 : Isa::scalar)};
  return sel;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

bool supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return host_avx2();
  }
  return false;
}

const Table& table(Isa isa) {
  if (!supported(isa)) {
    throw std::invalid_argument("kernel variant not supported on this host: " + std::string(isa_name(isa)));
  }
  return lookup(isa);
}

const Table& active() { return *current().table.load(std::memory_order_relaxed); }

Isa active_isa() { return current().isa.load(std::memory_order_relaxed); }

void select(Isa isa) {
  if (!supported(isa)) {
    throw std::invalid_argument("kernel variant not supported on this host: " + std::string(isa_name(isa)));
  }
  current().isa.store(isa, std::memory_order_relaxed);
  current().table.store(&lookup(isa), std::memory_order_relaxed);
}

}  // namespace longreg::kernels
