#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "snsim/parallel.hpp"
#include "snsim/rng.hpp"
#include "snsim/time_trace.hpp"

namespace snsim {

// One alkali isotope: gyromagnetic ratio in kHz/uT and number fraction.
struct IsotopeSpec {
    std::string name;
    double gamma = 0.0;      // kHz/uT
    double abundance = 0.0;  // fraction of the ensemble, [0, 1]

    void validate() const {
        if (!(gamma > 0.0))
            throw std::domain_error("isotope_spec: gamma must be > 0");
        if (!(abundance >= 0.0 && abundance <= 1.0))
            throw std::domain_error("isotope_spec: abundance must be in [0, 1]");
    }
};

inline IsotopeSpec rb85() { return {"85Rb", 4.665, 0.7217}; }
inline IsotopeSpec rb87() { return {"87Rb", 6.998, 0.2783}; }

inline std::vector<IsotopeSpec> natural_rubidium() { return {rb85(), rb87()}; }

// Saturated-vapor number density at the cell temperatures we calibrate
// against, in 1e11 cm^-3. Exact-match lookup; no interpolation.
inline double vapor_density_1e11cm3(double temp_c) {
    static constexpr double table[][2] = {
        {20.0, 0.08}, {45.0, 0.94}, {50.0, 1.48}, {65.0, 5.36}};
    for (const auto& row : table) {
        if (std::abs(temp_c - row[0]) < 1e-9) return row[1];
    }
    throw std::invalid_argument(
        "vapor_density_1e11cm3: unknown temperature; tabulated points are "
        "20, 45, 50 and 65 C");
}

// Vapor-cell ensemble and its phenomenological broadening law
//   fwhm_khz = gamma0 + alpha * probe_power_mw + beta * n0.
// coupling converts atom column density into Faraday rotation variance:
//   var_theta = coupling * n0 * length_mm / beam_area_mm2.
struct EnsembleSpec {
    double length_mm = 0.0;
    double radius_mm = 0.0;
    double n0 = 0.0;  // number density, 1e11 cm^-3
    double gamma0_khz = 0.0;
    double alpha_khz_per_mw = 0.0;
    double beta_khz_per_1e11cm3 = 0.0;
    std::vector<IsotopeSpec> isotopes;
    double coupling = 0.0;  // rad^2 per (1e11 cm^-3 * mm / mm^2)

    void validate() const {
        if (!(length_mm > 0.0))
            throw std::domain_error("ensemble_spec: length_mm must be > 0");
        if (!(radius_mm > 0.0))
            throw std::domain_error("ensemble_spec: radius_mm must be > 0");
        if (!(n0 >= 0.0))
            throw std::domain_error("ensemble_spec: n0 must be >= 0");
        if (!(gamma0_khz >= 0.0) || !(alpha_khz_per_mw >= 0.0) ||
            !(beta_khz_per_1e11cm3 >= 0.0))
            throw std::domain_error("ensemble_spec: broadening terms must be >= 0");
        if (!(coupling >= 0.0))
            throw std::domain_error("ensemble_spec: coupling must be >= 0");
        if (isotopes.empty())
            throw std::domain_error("ensemble_spec: need at least one isotope");
        double sum = 0.0;
        for (const auto& iso : isotopes) {
            iso.validate();
            sum += iso.abundance;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::domain_error("ensemble_spec: abundances must sum to 1");
    }
};

struct ProbeGeometry {
    double power_mw = 0.0;
    double beam_area_mm2 = 0.0;
    double field_ut = 0.0;  // transverse magnetic field, uT

    void validate() const {
        if (!(power_mw >= 0.0))
            throw std::domain_error("probe_geometry: power_mw must be >= 0");
        if (!(beam_area_mm2 > 0.0))
            throw std::domain_error("probe_geometry: beam_area_mm2 must be > 0");
        if (!(field_ut >= 0.0))
            throw std::domain_error("probe_geometry: field_ut must be >= 0");
    }
};

inline double larmor_frequency_hz(double field_ut, const IsotopeSpec& iso) {
    iso.validate();
    if (!(field_ut >= 0.0))
        throw std::domain_error("larmor_frequency: field_ut must be >= 0");
    return field_ut * iso.gamma * 1e3;
}

inline double linewidth_khz(double power_mw, double n0, const EnsembleSpec& ens) {
    if (!(power_mw >= 0.0))
        throw std::domain_error("linewidth: power_mw must be >= 0");
    if (!(n0 >= 0.0))
        throw std::domain_error("linewidth: n0 must be >= 0");
    return ens.gamma0_khz + ens.alpha_khz_per_mw * power_mw +
           ens.beta_khz_per_1e11cm3 * n0;
}

inline double t2_from_linewidth_hz(double fwhm_hz) {
    if (!(fwhm_hz > 0.0))
        throw std::domain_error("t2_from_linewidth: fwhm must be > 0");
    return 1.0 / (M_PI * fwhm_hz);
}

inline double linewidth_hz_from_t2(double t2_s) {
    if (!(t2_s > 0.0))
        throw std::domain_error("linewidth_from_t2: t2 must be > 0");
    return 1.0 / (M_PI * t2_s);
}

// Lorentzian line: peak_amplitude at center_hz, half maximum at center +- fwhm/2.
inline double analytic_sn_psd(double freq_hz, double center_hz, double fwhm_hz,
                              double peak_amplitude) {
    if (!(fwhm_hz > 0.0))
        throw std::domain_error("analytic_sn_psd: fwhm must be > 0");
    if (!(peak_amplitude >= 0.0))
        throw std::domain_error("analytic_sn_psd: peak amplitude must be >= 0");
    const double hw = 0.5 * fwhm_hz;
    const double d = freq_hz - center_hz;
    return peak_amplitude * hw * hw / (d * d + hw * hw);
}

// Variance of the Faraday rotation angle picked up by the probe.
inline double spin_rotation_variance(const EnsembleSpec& ens,
                                     const ProbeGeometry& probe) {
    ens.validate();
    probe.validate();
    return ens.coupling * ens.n0 * ens.length_mm / probe.beam_area_mm2;
}

namespace detail {

// Generation block size. Fixed: block boundaries define the RNG substreams,
// so this constant is part of the reproducibility contract.
constexpr std::size_t kSpinBlock = 1 << 15;

constexpr std::uint64_t spin_stream_id(std::size_t isotope_index, bool init) {
    return 2 * static_cast<std::uint64_t>(isotope_index) + (init ? 1 : 0);
}

}  // namespace detail

// Transverse collective-spin noise as seen by Faraday rotation.
//
// Each isotope contributes the real part of a complex Ornstein-Uhlenbeck
// amplitude rotating at its Larmor frequency and damped at 1/T2, discretized
// exactly:
//   a[n+1] = a[n] * exp((i*2*pi*nu_L - 1/T2) * dt) + xi[n],
//   E|xi|^2 = v * (1 - exp(-2*dt/T2)),  E|a|^2 = v = 2 * var_theta * abundance.
// The trace then has variance var_theta and autocorrelation
//   var_theta * exp(-tau/T2) * sum_i abundance_i * cos(2*pi*nu_i*tau).
//
// Blocks of increments draw from per-(isotope, block) substreams; a serial
// O(n_blocks) pass chains the block boundary states. Identical output for any
// thread count.
inline TimeTrace simulate_spin_trace(const EnsembleSpec& ens,
                                     const ProbeGeometry& probe,
                                     double duration_s, double sample_rate_hz,
                                     std::uint64_t seed, int n_threads = 0) {
    ens.validate();
    probe.validate();
    if (!(sample_rate_hz > 0.0))
        throw std::domain_error("simulate_spin_trace: sample_rate_hz must be > 0");
    if (!(duration_s > 0.0))
        throw std::domain_error("simulate_spin_trace: duration_s must be > 0");

    double max_larmor = 0.0;
    for (const auto& iso : ens.isotopes)
        max_larmor = std::max(max_larmor, larmor_frequency_hz(probe.field_ut, iso));
    if (sample_rate_hz < 8.0 * max_larmor)
        throw std::domain_error(
            "simulate_spin_trace: sample rate must be >= 8x the highest Larmor "
            "frequency");

    const double fwhm_hz =
        1e3 * linewidth_khz(probe.power_mw, ens.n0, ens);
    const double t2 = t2_from_linewidth_hz(fwhm_hz);
    if (duration_s < 50.0 * t2)
        throw std::domain_error(
            "simulate_spin_trace: duration must cover at least 50 spin "
            "coherence times");

    const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
    if (n < 2)
        throw std::domain_error("simulate_spin_trace: trace too short");

    const double dt = 1.0 / sample_rate_hz;
    const double var_theta = spin_rotation_variance(ens, probe);
    const double decay = std::exp(-2.0 * dt / t2);

    TimeTrace trace;
    trace.samples.assign(n, 0.0);
    trace.sample_rate_hz = sample_rate_hz;
    trace.seed = seed;

    const std::size_t n_inc = n - 1;
    const std::size_t n_blocks = (n_inc + detail::kSpinBlock - 1) / detail::kSpinBlock;

    for (std::size_t iso_idx = 0; iso_idx < ens.isotopes.size(); ++iso_idx) {
        const auto& iso = ens.isotopes[iso_idx];
        const double v = 2.0 * var_theta * iso.abundance;
        if (v == 0.0) continue;
        const double nu = larmor_frequency_hz(probe.field_ut, iso);
        const std::complex<double> log_d(-dt / t2, 2.0 * M_PI * nu * dt);
        const std::complex<double> d = std::exp(log_d);
        const double inc_sigma = std::sqrt(0.5 * v * (1.0 - decay));
        const double init_sigma = std::sqrt(0.5 * v);

        // block-local recursions started from zero; end values stitch below
        std::vector<std::complex<double>> block_end(n_blocks);
        parallel_for_index(n_blocks, n_threads, [&](std::size_t b) {
            BlockRng rng(derive_subseed(seed, detail::spin_stream_id(iso_idx, false), b));
            const std::size_t begin = b * detail::kSpinBlock;
            const std::size_t end = std::min(begin + detail::kSpinBlock, n_inc);
            std::complex<double> a(0.0, 0.0);
            for (std::size_t j = begin; j < end; ++j) {
                double g0, g1;
                rng.next_gaussian_pair(g0, g1);
                a = a * d + std::complex<double>(inc_sigma * g0, inc_sigma * g1);
            }
            block_end[b] = a;
        });

        std::vector<std::complex<double>> block_start(n_blocks + 1);
        {
            BlockRng rng(derive_subseed(seed, detail::spin_stream_id(iso_idx, true), 0));
            double g0, g1;
            rng.next_gaussian_pair(g0, g1);
            block_start[0] = std::complex<double>(init_sigma * g0, init_sigma * g1);
        }
        for (std::size_t b = 0; b < n_blocks; ++b) {
            const std::size_t begin = b * detail::kSpinBlock;
            const std::size_t end = std::min(begin + detail::kSpinBlock, n_inc);
            const auto cnt = static_cast<double>(end - begin);
            block_start[b + 1] = block_start[b] * std::exp(log_d * cnt) + block_end[b];
        }

        trace.samples[0] += block_start[0].real();
        parallel_for_index(n_blocks, n_threads, [&](std::size_t b) {
            BlockRng rng(derive_subseed(seed, detail::spin_stream_id(iso_idx, false), b));
            const std::size_t begin = b * detail::kSpinBlock;
            const std::size_t end = std::min(begin + detail::kSpinBlock, n_inc);
            std::complex<double> a = block_start[b];
            for (std::size_t j = begin; j < end; ++j) {
                double g0, g1;
                rng.next_gaussian_pair(g0, g1);
                a = a * d + std::complex<double>(inc_sigma * g0, inc_sigma * g1);
                trace.samples[j + 1] += a.real();
            }
        });
    }
    return trace;
}

}  // namespace snsim
