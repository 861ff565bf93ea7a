#include <cstdlib>
#include <cstring>

#include "irtmix/errors.hpp"
#include "irtmix/kernels.hpp"

namespace irtmix::kern {

const Ops* avx2_ops_table();  // defined in kernels_avx2.cpp

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Ops* select_default() {
  const Ops* avx2 = avx2_ops_table();
  const char* env = std::getenv("IRTMIX_KERNEL");
  if (env != nullptr) {
    if (std::strcmp(env, "scalar") == 0) return &scalar_ops();
    if (std::strcmp(env, "avx2") == 0 && avx2 != nullptr && cpu_has_avx2()) return avx2;
  }
  if (avx2 != nullptr && cpu_has_avx2()) return avx2;
  return &scalar_ops();
}

const Ops*& active_slot() {
  static const Ops* active = select_default();
  return active;
}

}  // namespace

const Ops& ops() { return *active_slot(); }

const Ops* avx2_ops() {
  const Ops* t = avx2_ops_table();
  return (t != nullptr && cpu_has_avx2()) ? t : nullptr;
}

void force_isa(Isa isa) {
  if (isa == Isa::scalar) {
    active_slot() = &scalar_ops();
    return;
  }
  const Ops* t = avx2_ops();
  if (t == nullptr) throw SpecificationError("avx2 kernels unavailable on this machine");
  active_slot() = t;
}

const char* active_name() { return ops().name; }

}  // namespace irtmix::kern
