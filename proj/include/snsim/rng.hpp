#pragma once

#include <cmath>
#include <cstdint>

namespace snsim {

// splitmix64 step; the generator state advances by the golden-ratio increment.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Collapses (master seed, stream id, block index) into one sub-seed.
// Blocks own disjoint generator states, so traces are reproducible for a
// given master seed no matter how blocks are scheduled across threads.
inline std::uint64_t derive_subseed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t block) {
    std::uint64_t s = master;
    std::uint64_t h = splitmix64(s);
    s = h ^ (0xd1b54a32d192ed03ull * (stream + 1));
    h = splitmix64(s);
    s = h ^ (0x8cb92ba72f3d8dd7ull * (block + 1));
    return splitmix64(s);
}

// Deterministic per-block generator: uniform doubles and Gaussian pairs.
class BlockRng {
  public:
    explicit BlockRng(std::uint64_t subseed) : state_(subseed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // uniform in (0, 1]; never returns 0 so log() below is safe
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
    }

    // standard normal via Box-Muller; draws are consumed in pairs
    void next_gaussian_pair(double& g0, double& g1) {
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phi = 6.283185307179586476925286766559 * u2;
        g0 = r * std::cos(phi);
        g1 = r * std::sin(phi);
    }

    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double g0, g1;
        next_gaussian_pair(g0, g1);
        spare_ = g1;
        have_spare_ = true;
        return g0;
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace snsim
