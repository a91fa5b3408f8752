#pragma once
// Dense double-precision kernels behind the dual-number arithmetic, the
// normal-system assembly and the proximal-gradient iterations.
//
// Every kernel has a portable scalar reference implementation. On x86-64 an
// AVX2/FMA variant is compiled into a separate translation unit and selected
// at runtime when the CPU reports both features. The variants are expected to
// agree up to reassociation of the reductions (see tests/test_simd.cpp).

#include <cstddef>
#include <span>
#include <string_view>

namespace ttdioc::simd {

enum class Isa { scalar, avx2 };

std::string_view to_string(Isa isa) noexcept;

/// Best instruction set supported by both this build and the running CPU.
Isa detected_isa() noexcept;

/// Instruction set used by the free functions below.
Isa active_isa() noexcept;

/// Overrides the runtime selection. Requesting an ISA the CPU cannot run
/// falls back to scalar. Returns the ISA actually selected.
Isa select_isa(Isa isa) noexcept;

/// Function table for one instruction set. Pointers are raw so the table is
/// trivially copyable; lengths always travel with them.
struct KernelTable {
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // out = a * x + b * y   (out may alias x or y)
  void (*lincomb)(double a, const double* x, double b, const double* y, double* out, std::size_t n);
  // out = a * x   (out may alias x)
  void (*scale)(double a, const double* x, double* out, std::size_t n);
  // y = M x for column-major M (rows x cols, leading dimension ld)
  void (*gemv)(const double* m, std::size_t rows, std::size_t cols, std::size_t ld, const double* x,
               double* y);
  // g += J^T J on the upper triangle, J column-major (rows x cols, leading
  // dimension ld), g column-major cols x cols with leading dimension ldg.
  void (*gram_upper)(const double* j, std::size_t rows, std::size_t cols, std::size_t ld, double* g,
                     std::size_t ldg);
  // max_i |x_i|
  double (*amax)(const double* x, std::size_t n);
};

/// Kernel table for a specific ISA (scalar if unavailable).
const KernelTable& kernels(Isa isa) noexcept;

/// Kernel table for the active ISA.
const KernelTable& active() noexcept;

// Convenience wrappers over the active table.

double dot(std::span<const double> x, std::span<const double> y);
void axpy(double a, std::span<const double> x, std::span<double> y);
void lincomb(double a, std::span<const double> x, double b, std::span<const double> y,
             std::span<double> out);
void scale(double a, std::span<const double> x, std::span<double> out);
double amax(std::span<const double> x);

}  // namespace ttdioc::simd
