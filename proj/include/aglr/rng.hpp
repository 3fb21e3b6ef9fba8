#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>

namespace aglr {

// Deterministic stream keyed by (seed, label). Child streams are derived from
// the label alone, so the draw sequence of a child never depends on how much
// its parent has consumed. All distributions are implemented here rather than
// taken from <random>, whose distribution algorithms vary across standard
// libraries.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string label);

  RngStream child(std::string_view sub) const;

  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& label() const noexcept { return label_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform integer in [0, n). n must be >= 1.
  std::uint64_t index(std::uint64_t n);
  // Standard normal (Box-Muller; the second variate is cached).
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(index(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::string label_;
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace aglr
