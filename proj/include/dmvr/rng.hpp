#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>

namespace dmvr {

/// What a random stream is used for. Part of the stream key, so two purposes
/// never share draws even with identical indices.
enum class StreamPurpose : std::uint64_t {
  rollout = 1,
  evaluation = 2,
  partition_estimate = 3,
  rs_ft_pool = 4,
  context_pick = 5,
  test = 6,
};

struct StreamKey {
  std::uint64_t seed = 0;
  StreamPurpose purpose = StreamPurpose::rollout;
  std::uint64_t iteration = 0;
  std::uint64_t batch = 0;
  std::uint64_t rollout = 0;
};

/// Counter-based stream: output i is a SplitMix64 finalizer applied to
/// (key digest + i * golden ratio). Streams with different keys are
/// independent and any stream can be recreated from its key alone, which is
/// what makes results independent of worker count.
class RngStream {
 public:
  explicit RngStream(const StreamKey& key) noexcept;
  RngStream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Index drawn from a normalized probability vector by inverse CDF.
  std::size_t categorical(std::span<const double> probs) noexcept;

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace dmvr
