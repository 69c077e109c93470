#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace snsim {

// Uniformly sampled real-valued signal plus the seed that produced it.
struct TimeTrace {
    std::vector<double> samples;
    double sample_rate_hz = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(sample_rate_hz > 0.0))
            throw std::invalid_argument("time_trace: sample_rate_hz must be > 0");
        if (samples.size() < 2)
            throw std::invalid_argument("time_trace: need at least 2 samples");
    }
};

}  // namespace snsim
