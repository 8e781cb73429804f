#pragma once

#include <array>
#include <cstdint>

namespace ddseg {

// xoshiro256** with splitmix64 seeding. All randomness in the project goes
// through this type so runs are bit-reproducible per seed on any platform
// (the std:: distributions are implementation-defined, so none are used).
class Rng {
   public:
    explicit Rng(std::uint64_t seed = 0);

    // Independent stream derived from (seed, a, b); used for per-sample and
    // per-step seeding that does not depend on iteration order.
    static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

    std::uint64_t next_u64();
    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi);
    // Standard normal via Box-Muller; caches the second variate.
    double normal();
    // Knuth's multiplication method; fine for the small means used here.
    int poisson(double mean);
    bool bernoulli(double p) { return uniform() < p; }

   private:
    std::array<std::uint64_t, 4> s_{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace ddseg
