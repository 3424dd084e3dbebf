#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace celiac {

// Seedable 64-bit generator with named substreams. Every randomized stage
// (weight init, dropout, augmentation, shuffling, pixel sampling) draws from
// its own stream, so any component is reproducible in isolation.
//
// stream() derives the child seed from the parent's construction seed, not
// from its draw history, so the set of streams is stable no matter how many
// values have been consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  Rng stream(std::string_view name) const;
  Rng stream(std::uint64_t index) const;

  std::uint64_t next_u64();
  double uniform();                         // [0, 1)
  double uniform(double lo, double hi);     // [lo, hi)
  std::int64_t uniform_int(std::int64_t n); // [0, n), n >= 1
  double normal();                          // standard normal

  std::uint64_t seed() const { return seed_; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<std::int64_t>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace celiac
