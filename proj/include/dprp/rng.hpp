#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace dprp {

// Deterministic random source. Normal draws use Box-Muller on explicit
// uniform bits and shuffling is explicit Fisher-Yates, so sequences do not
// depend on the standard library's distribution implementations.
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    uint64_t bits() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(bits() >> 11) * (1.0 / 9007199254740992.0);
    }

    // Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n) {
        // rejection sampling keeps the draw unbiased
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v = bits();
        while (v >= limit) v = bits();
        return v % n;
    }

    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::string serialize() const;
    static Rng deserialize(const std::string& state);

  private:
    std::mt19937_64 engine_;
};

}  // namespace dprp
