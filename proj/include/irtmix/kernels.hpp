#pragma once

#include <cstddef>

namespace irtmix::kern {

/// Batch math kernels used by the likelihood inner loops. Each operation has a
/// scalar reference implementation and, on x86-64 with AVX2+FMA, a vectorized
/// variant selected at runtime. Scalar and SIMD variants are equivalence-tested;
/// selection never changes with thread count, so outputs stay reproducible on a
/// given machine.
struct Ops {
  /// y[i] = exp(x[i])
  void (*exp_n)(const double* x, double* y, std::size_t n);
  /// y[i] = log(x[i]); x must be positive and normal
  void (*log_n)(const double* x, double* y, std::size_t n);
  /// y[i] = 1 / (1 + exp(-x[i]))
  void (*logistic_n)(const double* x, double* y, std::size_t n);
  /// theta[i] = base + xi0[i] + s * xi1[i]
  void (*shift_scale_add_n)(double base, const double* xi0, double s, const double* xi1,
                            double* theta, std::size_t n);
  /// theta[i] = base + xi0[i]
  void (*shift_n)(double base, const double* xi0, double* theta, std::size_t n);
  const char* name;
};

enum class Isa { scalar, avx2 };

/// Active operation table. Resolved once per process: AVX2 when the CPU supports
/// it (and the binary carries the variant), scalar otherwise. The environment
/// variable IRTMIX_KERNEL=scalar|avx2 overrides detection.
const Ops& ops();

const Ops& scalar_ops();

/// AVX2 table, or nullptr when not compiled in / not supported by this CPU.
const Ops* avx2_ops();

/// Force a specific implementation (test hook). Throws SpecificationError if the
/// requested ISA is unavailable.
void force_isa(Isa isa);

/// Name of the active implementation ("scalar" or "avx2").
const char* active_name();

}  // namespace irtmix::kern
