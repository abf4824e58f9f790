#include "vqanon/numerics/rng.hpp"

#include <bit>
#include <cmath>
#include <numbers>

#include "vqanon/errors.hpp"

namespace vqanon {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed) {
  std::uint64_t s = seed;
  for (auto& word : state_) {
    s += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    word = z ^ (z >> 31);
  }
}

RngStream RngStream::child(std::string_view name, std::uint64_t index) const {
  // FNV-1a over the name, then folded with the parent seed and the index.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return RngStream(mix64(mix64(seed_ ^ h) + index));
}

std::uint64_t RngStream::next_raw() {
  const std::uint64_t result = std::rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = std::rotl(state_[3], 45);
  return result;
}

double RngStream::raw_uniform() {
  return static_cast<double>(next_raw() >> 11) * 0x1.0p-53;
}

double RngStream::uniform() {
  ++position_;
  return raw_uniform();
}

std::size_t RngStream::index(std::size_t n) {
  if (n == 0) throw EmptyInputError("RngStream::index: n must be >= 1");
  ++position_;
  // Lemire's multiply-shift; the tiny modulo bias of skipping the rejection
  // step is far below anything the callers can observe, and a fixed draw
  // count per call keeps the stream replayable.
  const unsigned __int128 m =
      static_cast<unsigned __int128>(next_raw()) * static_cast<unsigned __int128>(n);
  return static_cast<std::size_t>(m >> 64);
}

double RngStream::gaussian() {
  ++position_;
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - raw_uniform();
  const double u2 = raw_uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<double> RngStream::gaussian(std::size_t n) {
  if (n == 0) throw EmptyInputError("gaussian: requested zero draws");
  std::vector<double> out(n);
  for (auto& v : out) v = gaussian();
  return out;
}

}  // namespace vqanon
