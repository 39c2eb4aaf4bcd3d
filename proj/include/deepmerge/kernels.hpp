#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Double-precision inner loops shared by the embedding network and the
// merge engine. Each kernel has a scalar reference implementation and
// optional SIMD variants; the variant is chosen once at runtime from the
// CPU feature set (override with DEEPMERGE_SIMD=scalar|avx2|neon).

namespace deepmerge::kernels {

enum class Isa { Scalar, Avx2, Neon };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the variant was not compiled in or the CPU lacks support.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// Table used by the free functions below.
const KernelTable& active();
// Pins the active table; returns false if the requested ISA is unavailable.
bool select(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}

}  // namespace deepmerge::kernels
