#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

namespace mlmcnac {

// Counter-based splitmix64 stream. Every consumer holds its own stream, so
// results are reproducible independent of thread scheduling. Draw order
// matters: the stream is a pure function of (seed, number of draws).
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53 bits of precision.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; second value is cached.
    double next_gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    /// Independent substream keyed by `salt`; does not advance this stream.
    RngStream derive(std::uint64_t salt) const {
        std::uint64_t z = state_ + 0x9e3779b97f4a7c15ull * (salt + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return RngStream(z ^ (z >> 31));
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Inverse-CDF draw from a probability vector.
inline int sample_categorical(const Eigen::VectorXd& probs, RngStream& rng) {
    const double u = rng.next_double();
    double cum = 0.0;
    const int n = static_cast<int>(probs.size());
    for (int i = 0; i + 1 < n; ++i) {
        cum += probs[i];
        if (u < cum) return i;
    }
    return n - 1;
}

} // namespace mlmcnac
