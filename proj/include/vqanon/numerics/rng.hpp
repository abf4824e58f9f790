#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace vqanon {

// xoshiro256** seeded through splitmix64.
//
// Every public draw (uniform, gaussian, index) advances position() by one,
// and each draw consumes a fixed number of raw 64-bit words, so the state is a
// pure function of (seed, sequence of calls). Normals use Box-Muller with the
// cosine branch only; nothing is cached between calls.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  // Independent child stream keyed by a component name and an index, e.g.
  // ("train", 64). The parent is not advanced.
  RngStream child(std::string_view name, std::uint64_t index = 0) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer on [0, n). n must be >= 1.
  std::size_t index(std::size_t n);
  double gaussian();
  // n standard normals. Throws EmptyInputError when n == 0.
  std::vector<double> gaussian(std::size_t n);

 private:
  std::uint64_t next_raw();
  double raw_uniform();

  std::uint64_t seed_;
  std::uint64_t position_ = 0;
  std::array<std::uint64_t, 4> state_{};
};

// splitmix64 finalizer, exposed for stream derivation.
std::uint64_t mix64(std::uint64_t x);

// Fisher-Yates shuffle driven by the stream.
template <class T>
void shuffle(std::vector<T>& items, RngStream& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = rng.index(i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace vqanon
