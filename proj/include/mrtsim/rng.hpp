#pragma once

#include <cmath>
#include <cstdint>

namespace mrt::rng {

// Counter-based random streams: every draw is a pure function of
// (seed, stream tag, ids...), so subsystems never share mutable RNG state
// and a record's draw is reproducible from its coordinates alone.

enum class Stream : std::uint64_t {
  kRandomizationDraw = 1,
  kContentChoice = 2,
  kPushDelay = 3,
  kPushDrop = 4,
  kBoutTransition = 5,
  kStepsPerMinute = 6,
  kEngagement = 7,
  kWeather = 8,
  kParticipantTrait = 9,
  kDriving = 10,
  kDailyObservation = 11,
  kFaultSchedule = 12,
  kLocation = 13,
};

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t hash(std::uint64_t seed, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0,
                          std::uint64_t c = 0, std::uint64_t d = 0) {
  std::uint64_t h = splitmix64(seed ^ (static_cast<std::uint64_t>(stream) * 0xD1B54A32D192ED03ull));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  h = splitmix64(h ^ c);
  h = splitmix64(h ^ d);
  return h;
}

// Uniform on [0, 1) with 53 random bits.
inline double uniform01(std::uint64_t seed, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0,
                        std::uint64_t c = 0, std::uint64_t d = 0) {
  return static_cast<double>(hash(seed, stream, a, b, c, d) >> 11) * 0x1.0p-53;
}

inline bool bernoulli(double p, std::uint64_t seed, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0,
                      std::uint64_t c = 0, std::uint64_t d = 0) {
  return uniform01(seed, stream, a, b, c, d) < p;
}

// Integer in [0, n).
inline std::uint64_t below(std::uint64_t n, std::uint64_t seed, Stream stream, std::uint64_t a = 0,
                           std::uint64_t b = 0, std::uint64_t c = 0, std::uint64_t d = 0) {
  return hash(seed, stream, a, b, c, d) % n;
}

// Standard normal via Box-Muller on two decorrelated uniforms.
inline double standard_normal(std::uint64_t seed, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0,
                              std::uint64_t c = 0) {
  const double u1 = uniform01(seed, stream, a, b, c, 0x51ED2701u);
  const double u2 = uniform01(seed, stream, a, b, c, 0xA341316Cu);
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  return r * std::cos(2.0 * 3.14159265358979323846 * u2);
}

inline double lognormal_from_median(double median, double sigma, std::uint64_t seed, Stream stream,
                                    std::uint64_t a = 0, std::uint64_t b = 0, std::uint64_t c = 0) {
  return median * std::exp(sigma * standard_normal(seed, stream, a, b, c));
}

}  // namespace mrt::rng
