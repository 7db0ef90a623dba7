#pragma once

#include <cstdint>
#include <random>

namespace critwin {

// Counter-derived bit generator (splitmix64). Each Monte-Carlo cell gets its
// own stream from (seed, t-index, sample-index), so results are identical
// regardless of execution order or worker count.
class Rng {
  public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) : state_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type(0); }

    result_type operator()() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    double uniform() {
        // 53-bit mantissa in [0,1)
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

    double normal() {
        std::normal_distribution<double> nd(0.0, 1.0);
        return nd(*this);
    }

    // Index into a cumulative-weight-free categorical by linear scan.
    // Deterministic across platforms for the same bits.
    template <class Weights>
    int categorical(const Weights& w) {
        double total = 0.0;
        for (double x : w) total += x;
        double u = uniform() * total;
        double acc = 0.0;
        int last = 0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            acc += w[i];
            last = static_cast<int>(i);
            if (u < acc) return last;
        }
        return last;
    }

  private:
    std::uint64_t state_;
};

namespace detail {
inline std::uint64_t smix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

// Derive the stream for one (t-index, sample-index) cell of a run.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t t_index, std::uint64_t sample_index) {
    std::uint64_t h = detail::smix(seed + 0x9e3779b97f4a7c15ULL);
    h = detail::smix(h ^ (t_index + 0xbf58476d1ce4e5b9ULL));
    h = detail::smix(h ^ (sample_index + 0x94d049bb133111ebULL));
    return Rng(h);
}

}  // namespace critwin
