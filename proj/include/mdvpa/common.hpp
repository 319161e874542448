#ifndef MDVPA_COMMON_HPP
#define MDVPA_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdvpa {

// Observation categories and hidden states are 1-based everywhere.
using Symbol = int;
using State = int;

// Sentinel for "no previous state" (before the first observation).
inline constexpr State kNoState = 0;
// Candidate label for a state that has not been instantiated yet.
inline constexpr State kNewState = -1;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Every particle weight went to zero: the filter cannot continue.
class DegenerateFilterError : public std::runtime_error {
 public:
  DegenerateFilterError(std::size_t step, const std::string& what)
      : std::runtime_error("degenerate filter at step " + std::to_string(step) + ": " + what),
        step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// Malformed or unusable input data (files, tokens, sequences).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double log_sum_exp(const std::vector<double>& v) {
  double mx = kNegInf;
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return kNegInf;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

// Deterministic random source. mt19937_64 plus explicit double/index
// generation, so draws do not depend on library-specific distribution
// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform index in [0, n).
  std::size_t next_index(std::size_t n) {
    std::size_t i = static_cast<std::size_t>(next_double() * static_cast<double>(n));
    return i < n ? i : n - 1;
  }

  // Index draw from an unnormalized probability vector.
  std::size_t next_categorical(const std::vector<double>& probs) {
    double total = 0.0;
    for (double p : probs) total += p;
    if (!(total > 0.0)) throw std::invalid_argument("categorical draw needs positive total mass");
    double u = next_double() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return probs.size() - 1;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mdvpa

#endif  // MDVPA_COMMON_HPP
