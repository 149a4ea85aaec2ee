#pragma once

#include <cstdint>

namespace gm {

/// Counter-based splitmix64 stream. Identical seed gives an identical sample
/// sequence on every platform; std:: distributions are avoided for that reason.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in (0, 1), never exactly 0 or 1.
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_uniform();
    }

    /// Box-Muller; consumes two uniforms per pair, spare cached.
    double next_gaussian();

    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    /// Independent derived stream (parallel scene generation, restarts).
    RngStream split(std::uint64_t salt) const {
        RngStream r(state_ ^ (0x9d2c5680bca363cdULL + salt * 0xda3e39cb94b95bdbULL));
        r.next_u64();
        return r;
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace gm
