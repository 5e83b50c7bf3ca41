#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace hetfx {

std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent stream seed from a master seed and a tuple of keys
// (split index, learner index, purpose tag, ...). The result depends only on
// the inputs, so streams can be created in any order or on any thread.
std::uint64_t derive_seed(std::uint64_t master,
                          std::initializer_list<std::uint64_t> keys);

// Purpose tags used as the last key of derive_seed.
enum class Stream : std::uint64_t {
  split = 1,
  learner = 2,
  jitter = 3,
  band = 4,
  simulation = 5,
};

// Thin wrapper over mt19937_64 with distribution code written out so output
// is identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // Uniform integer on [0, bound).
  std::uint64_t below(std::uint64_t bound);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace hetfx
