#pragma once

#include <array>
#include <cstdint>

namespace irtmix {

/// Standard-normal quantile function (Wichura's AS241, double precision).
double normal_quantile(double p);

/// Counter-based generator (Philox4x32-10). Streams are keyed by
/// (seed, replication, subject), so any stream can be regenerated independently
/// of evaluation order: parallel simulation stays bit-reproducible.
class CounterRng {
public:
  CounterRng(std::uint64_t seed, std::uint32_t replication, std::uint32_t subject)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        replication_(replication),
        subject_(subject) {}

  /// Uniform draw in the open interval (0,1).
  double next_uniform() {
    if (buffered_ == 0) refill();
    return buffer_[--buffered_];
  }

  /// Standard-normal draw via the inverse CdF (one uniform per normal).
  double next_normal() { return normal_quantile(next_uniform()); }

private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint32_t replication_;
  std::uint32_t subject_;
  std::uint64_t block_ = 0;
  std::array<double, 2> buffer_{};
  int buffered_ = 0;
};

}  // namespace irtmix
