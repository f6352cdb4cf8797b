#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace ibgrpo {

// Mixes a 64-bit value (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

// Derives an independent stream seed from a master seed and a list of tags,
// e.g. derive_seed(master, {kTagRollout, prompt_id, sample, epoch}).
std::uint64_t derive_seed(std::uint64_t master,
                          std::initializer_list<std::uint64_t> tags);

// Seeded random stream. Sampling helpers are written out by hand so that
// draws are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  int index(int n) { return static_cast<int>(below(static_cast<std::uint64_t>(n))); }

  bool bernoulli(double p) { return uniform() < p; }

  // Samples an index from non-negative weights (need not be normalized).
  int categorical(const std::vector<double>& weights);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Stream tags for derive_seed. Values are part of the reproducibility contract.
namespace seed_tag {
inline constexpr std::uint64_t kStudent = 1;
inline constexpr std::uint64_t kRollout = 2;
inline constexpr std::uint64_t kGa = 3;
inline constexpr std::uint64_t kTeacher = 4;
inline constexpr std::uint64_t kSample = 5;
inline constexpr std::uint64_t kShuffle = 6;
inline constexpr std::uint64_t kSplit = 7;
inline constexpr std::uint64_t kInit = 8;
inline constexpr std::uint64_t kRandomPolicy = 9;
inline constexpr std::uint64_t kCohort = 10;
inline constexpr std::uint64_t kEval = 11;
}  // namespace seed_tag

}  // namespace ibgrpo
