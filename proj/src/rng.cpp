#include "dmvr/rng.hpp"

namespace dmvr {
namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t fold(std::uint64_t h, std::uint64_t v) noexcept {
  return splitmix64(h ^ (v + kGolden + (h << 6) + (h >> 2)));
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(const StreamKey& key) noexcept {
  std::uint64_t h = splitmix64(key.seed);
  h = fold(h, static_cast<std::uint64_t>(key.purpose));
  h = fold(h, key.iteration);
  h = fold(h, key.batch);
  h = fold(h, key.rollout);
  key_ = h;
}

RngStream::RngStream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = splitmix64(seed);
  for (auto v : path) h = fold(h, v);
  key_ = h;
}

std::uint64_t RngStream::next_u64() noexcept {
  return splitmix64(key_ + kGolden * ++counter_);
}

double RngStream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::size_t RngStream::categorical(std::span<const double> probs) noexcept {
  const double u = uniform();
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = i;
    cum += probs[i];
    if (u < cum) return i;
  }
  // Rounding left u above the final cumulative value.
  return last_positive;
}

}  // namespace dmvr
