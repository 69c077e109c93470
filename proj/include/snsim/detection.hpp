#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "snsim/parallel.hpp"
#include "snsim/rng.hpp"
#include "snsim/time_trace.hpp"

namespace snsim {

constexpr double kElectronChargeC = 1.602176634e-19;

// Balanced polarimeter: transimpedance gain, photodiode responsivity and the
// analog bandwidth of the difference channel.
struct PolarimeterSpec {
    double gain_v_per_a = 0.0;
    double responsivity_a_per_w = 0.0;
    double bandwidth_hz = 0.0;
    double classical_noise_v2_per_hz = 0.0;  // optional excess-noise floor

    void validate() const {
        if (!(gain_v_per_a > 0.0))
            throw std::domain_error("polarimeter_spec: gain_v_per_a must be > 0");
        if (!(responsivity_a_per_w > 0.0))
            throw std::domain_error(
                "polarimeter_spec: responsivity_a_per_w must be > 0");
        if (!(bandwidth_hz > 0.0))
            throw std::domain_error("polarimeter_spec: bandwidth_hz must be > 0");
        if (!(classical_noise_v2_per_hz >= 0.0))
            throw std::domain_error(
                "polarimeter_spec: classical_noise_v2_per_hz must be >= 0");
    }
};

// One-sided photon shot-noise voltage PSD of the balanced output, V^2/Hz.
inline double snl_psd_v2_per_hz(double power_mw, const PolarimeterSpec& pol) {
    pol.validate();
    if (!(power_mw >= 0.0))
        throw std::domain_error("snl_psd: power_mw must be >= 0");
    const double p_w = power_mw * 1e-3;
    return 2.0 * pol.gain_v_per_a * pol.gain_v_per_a * kElectronChargeC *
           pol.responsivity_a_per_w * p_w;
}

// Background PSD with the probe noise variance xi2 relative to shot noise;
// xi2 = 1 reproduces the shot-noise limit, xi2 = 0 the noiseless limit.
inline double squeezed_background_psd(double snl_v2_per_hz, double xi2) {
    if (!(snl_v2_per_hz >= 0.0))
        throw std::domain_error("squeezed_background_psd: snl must be >= 0");
    if (!(xi2 >= 0.0))
        throw std::domain_error("squeezed_background_psd: xi2 must be >= 0");
    return xi2 * snl_v2_per_hz;
}

namespace detail {

constexpr std::size_t kNoiseBlock = 1 << 15;
constexpr std::uint64_t kShotStream = 0x40000000ull;
constexpr std::uint64_t kClassicalStream = 0x40000001ull;

}  // namespace detail

// Voltage record of the balanced polarimeter for a rotation-angle trace:
//   V[n] = G * R * P * sin(2 * theta[n]) + white noise.
// The white noise realizes the one-sided background PSD xi2 * snl (plus the
// optional classical term), i.e. per-sample variance psd * sample_rate / 2.
// Noise substreams derive from the trace seed alone, so changing xi2 leaves
// the underlying Gaussian draws identical and only rescales them.
inline TimeTrace polarimeter_trace(const TimeTrace& theta, double power_mw,
                                   double xi2, const PolarimeterSpec& pol,
                                   int n_threads = 0) {
    theta.validate();
    pol.validate();
    if (!(power_mw >= 0.0))
        throw std::domain_error("polarimeter_trace: power_mw must be >= 0");
    if (!(xi2 >= 0.0))
        throw std::domain_error("polarimeter_trace: xi2 must be >= 0");

    const double p_w = power_mw * 1e-3;
    const double scale = pol.gain_v_per_a * pol.responsivity_a_per_w * p_w;
    const double snl = snl_psd_v2_per_hz(power_mw, pol);
    const double shot_sigma =
        std::sqrt(squeezed_background_psd(snl, xi2) * theta.sample_rate_hz * 0.5);
    const double classical_sigma = std::sqrt(
        pol.classical_noise_v2_per_hz * theta.sample_rate_hz * 0.5);

    TimeTrace out;
    out.samples.assign(theta.samples.size(), 0.0);
    out.sample_rate_hz = theta.sample_rate_hz;
    out.seed = theta.seed;

    const std::size_t n = theta.samples.size();
    const std::size_t n_blocks = (n + detail::kNoiseBlock - 1) / detail::kNoiseBlock;
    parallel_for_index(n_blocks, n_threads, [&](std::size_t b) {
        const std::size_t begin = b * detail::kNoiseBlock;
        const std::size_t end = std::min(begin + detail::kNoiseBlock, n);
        BlockRng shot(derive_subseed(theta.seed, detail::kShotStream, b));
        BlockRng classical(derive_subseed(theta.seed, detail::kClassicalStream, b));
        for (std::size_t j = begin; j < end; ++j) {
            double v = scale * std::sin(2.0 * theta.samples[j]);
            if (shot_sigma > 0.0) v += shot_sigma * shot.next_gaussian();
            if (classical_sigma > 0.0) v += classical_sigma * classical.next_gaussian();
            out.samples[j] = v;
        }
    });
    return out;
}

}  // namespace snsim
