#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "mtid/scalar.hpp"

namespace mtid {

/// Seeded generator with a serializable state. Normal draws use Box-Muller
/// without caching the second variate, so the engine state is the whole state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Independent stream derived from a base seed and a list of tags.
  static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                    std::uint64_t c = 0);

  double uniform();  // [0, 1)
  double normal();
  int uniform_int(int lo, int hi);  // inclusive
  std::uint64_t next() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

  std::string save_state() const;
  void load_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

}  // namespace mtid
