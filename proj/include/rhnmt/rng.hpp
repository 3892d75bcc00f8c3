#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace rhnmt {

// Seeded RNG with hand-rolled mappings. mt19937_64's raw sequence is pinned
// by the standard; std::uniform_real_distribution is not, so we map the raw
// words ourselves to keep runs reproducible across libstdc++ versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Modulo bias is negligible for our n.
    std::uint64_t below(std::uint64_t n) { return n ? engine_() % n : 0; }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace rhnmt
