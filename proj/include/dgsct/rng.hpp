#pragma once

#include <cmath>
#include <cstdint>

namespace dgsct {

// Deterministic splitmix64 generator. The standard library distributions are
// implementation-defined, so all randomness in the project goes through this
// class to keep outputs byte-identical across platforms and runs.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    // Independent stream for sample `index`; serial and parallel generation
    // of a dataset agree because each sample reads only its own stream.
    static Rng for_stream(std::uint64_t seed, std::uint64_t index) {
        return Rng(seed ^ (0x9E3779B97F4A7C15ull * (index + 1) + 0xD1B54A32D192ED03ull));
    }

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random mantissa bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; one fresh pair of uniforms per call.
    double gaussian(double sigma = 1.0) {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    int below(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

private:
    std::uint64_t state_;
};

}  // namespace dgsct
