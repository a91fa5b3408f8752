#include <atomic>
#include <cassert>

#include "simd/kernels_impl.hpp"

namespace ttdioc::simd {
namespace {

bool cpu_has_avx2() noexcept {
#if defined(TTDIOC_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::atomic<const KernelTable*>& table_slot() noexcept {
  static std::atomic<const KernelTable*> slot{&kernels(detected_isa())};
  return slot;
}

std::atomic<Isa>& isa_slot() noexcept {
  static std::atomic<Isa> slot{detected_isa()};
  return slot;
}

}  // namespace

std::string_view to_string(Isa isa) noexcept {
  switch (isa) {
    case Isa::avx2:
      return "avx2";
    case Isa::scalar:
      break;
  }
  return "scalar";
}

Isa detected_isa() noexcept {
  static const Isa isa = cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
  return isa;
}

Isa active_isa() noexcept { return isa_slot().load(std::memory_order_relaxed); }

Isa select_isa(Isa isa) noexcept {
  if (isa == Isa::avx2 && detected_isa() != Isa::avx2) isa = Isa::scalar;
  isa_slot().store(isa, std::memory_order_relaxed);
  table_slot().store(&kernels(isa), std::memory_order_relaxed);
  return isa;
}

const KernelTable& kernels(Isa isa) noexcept {
#if defined(TTDIOC_HAVE_AVX2)
  if (isa == Isa::avx2 && cpu_has_avx2()) return detail::avx2_table();
#else
  (void)isa;
#endif
  return detail::scalar_table();
}

const KernelTable& active() noexcept { return *table_slot().load(std::memory_order_relaxed); }

double dot(std::span<const double> x, std::span<const double> y) {
  assert(x.size() == y.size());
  return active().dot(x.data(), y.data(), x.size());
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  active().axpy(a, x.data(), y.data(), x.size());
}

void lincomb(double a, std::span<const double> x, double b, std::span<const double> y,
             std::span<double> out) {
  assert(x.size() == y.size() && out.size() == x.size());
  active().lincomb(a, x.data(), b, y.data(), out.data(), x.size());
}

void scale(double a, std::span<const double> x, std::span<double> out) {
  assert(x.size() == out.size());
  active().scale(a, x.data(), out.data(), x.size());
}

double amax(std::span<const double> x) { return active().amax(x.data(), x.size()); }

}  // namespace ttdioc::simd
