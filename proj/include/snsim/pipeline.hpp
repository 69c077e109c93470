#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "snsim/analysis.hpp"
#include "snsim/config.hpp"
#include "snsim/detection.hpp"
#include "snsim/errors.hpp"
#include "snsim/rng.hpp"
#include "snsim/spectral.hpp"
#include "snsim/spin_dynamics.hpp"

namespace snsim {

struct SimulationResult {
    Spectrum spectrum_abs;  // V^2/Hz
    Spectrum spectrum_db;   // dB relative to the coherent shot-noise PSD
    LorentzianFit fit;      // on the linear rel-SNL spectrum
    double snl_v2_per_hz = 0.0;
    double xi2_effective = 1.0;
};

// Samples the acquisition needs to deliver exactly n_averages segments.
inline std::size_t min_samples_for(const AcquisitionSpec& acq) {
    acq.validate();
    const std::size_t hop = welch_hop(acq.segment_len, acq.overlap);
    return acq.segment_len +
           static_cast<std::size_t>(acq.n_averages - 1) * hop;
}

// Full measurement chain: stochastic spin trace, polarimeter voltage with the
// configured probe noise state, averaged PSD, SNL normalization, and a
// Lorentzian fit with one peak per isotope. The fit runs on the rel-SNL
// spectrum after mapping back to linear power, so re-analyzing the emitted
// CSV reproduces it bit for bit.
inline SimulationResult run_simulation(const ExperimentConfig& cfg,
                                       int n_threads = 0) {
    cfg.validate();
    if (!cfg.seed)
        throw input_error("config: 'seed' is required to simulate");
    const AcquisitionSpec& acq = cfg.acquisition;
    const auto n_samples = static_cast<std::size_t>(
        std::llround(acq.duration_s * acq.sample_rate_hz));
    if (n_samples < min_samples_for(acq))
        throw input_error(
            "config: duration_s provides " + std::to_string(n_samples) +
            " samples but n_averages=" + std::to_string(acq.n_averages) +
            " needs " + std::to_string(min_samples_for(acq)));

    const TimeTrace theta =
        simulate_spin_trace(cfg.ensemble, cfg.probe, acq.duration_s,
                            acq.sample_rate_hz, *cfg.seed, n_threads);
    const double xi2 = cfg.optics.s2_var_rel_snl;
    const TimeTrace voltage = polarimeter_trace(theta, cfg.probe.power_mw, xi2,
                                                cfg.polarimeter, n_threads);

    SimulationResult res;
    res.xi2_effective = xi2;
    res.snl_v2_per_hz = snl_psd_v2_per_hz(cfg.probe.power_mw, cfg.polarimeter);
    res.spectrum_abs =
        welch_psd(voltage, acq.segment_len, acq.overlap, acq.window, n_threads,
                  static_cast<std::size_t>(acq.n_averages));
    res.spectrum_db = normalize_to_snl(res.spectrum_abs, res.snl_v2_per_hz);
    res.fit = fit_lorentzian(linearize(res.spectrum_db),
                             static_cast<int>(cfg.ensemble.isotopes.size()));
    return res;
}

struct SweepPointResult {
    double value = 0.0;
    SimulationResult pcs;
    SimulationResult pss;
    double snr_pcs_db = 0.0;
    double snr_pss_db = 0.0;
    double fwhm_pcs_khz = 0.0;
    double fwhm_pss_khz = 0.0;
};

struct SweepResult {
    SweepVariable variable = SweepVariable::power;
    std::vector<SweepPointResult> points;
    RegressionResult regression_pcs;
    RegressionResult regression_pss;
};

namespace detail {

constexpr std::uint64_t kSweepStream = 0x53575045ull;

inline std::size_t strongest_peak(const LorentzianFit& fit) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < fit.peaks.size(); ++j)
        if (fit.peaks[j].amplitude > fit.peaks[best].amplitude) best = j;
    return best;
}

}  // namespace detail

// Runs the configured sweep with a coherent-probe and a squeezed-probe branch
// per point. Both branches share the point's spin trace and noise draws, so
// their SNR difference isolates the probe state. Point seeds derive from the
// master seed by index; results do not depend on execution order.
inline SweepResult run_sweep(const ExperimentConfig& cfg, int n_threads = 0) {
    cfg.validate();
    if (!cfg.sweep)
        throw input_error("config: sweep requested but no 'sweep' block present");
    if (!cfg.seed)
        throw input_error("config: 'seed' is required to simulate");

    SweepResult res;
    res.variable = cfg.sweep->variable;
    for (std::size_t i = 0; i < cfg.sweep->values.size(); ++i) {
        const double value = cfg.sweep->values[i];
        ExperimentConfig point = cfg;
        point.sweep.reset();
        point.seed = derive_subseed(*cfg.seed, detail::kSweepStream, i);
        if (cfg.sweep->variable == SweepVariable::power) {
            point.probe.power_mw = value;
            point.optics.power_mw = value;
        } else {
            point.ensemble.n0 = value;
        }

        ExperimentConfig coherent = point;
        coherent.optics.s2_var_rel_snl = 1.0;
        coherent.optics.s3_var_rel_snl = 1.0;

        SweepPointResult pt;
        pt.value = value;
        pt.pcs = run_simulation(coherent, n_threads);
        pt.pss = run_simulation(point, n_threads);
        const std::size_t bc = detail::strongest_peak(pt.pcs.fit);
        const std::size_t bs = detail::strongest_peak(pt.pss.fit);
        pt.snr_pcs_db = compute_snr_db(pt.pcs.fit, bc);
        pt.snr_pss_db = compute_snr_db(pt.pss.fit, bs);
        pt.fwhm_pcs_khz = pt.pcs.fit.peaks[bc].fwhm_hz * 1e-3;
        pt.fwhm_pss_khz = pt.pss.fit.peaks[bs].fwhm_hz * 1e-3;
        res.points.push_back(std::move(pt));
    }

    std::vector<double> xs, fwhm_pcs, fwhm_pss;
    for (const SweepPointResult& pt : res.points) {
        xs.push_back(pt.value);
        fwhm_pcs.push_back(pt.fwhm_pcs_khz);
        fwhm_pss.push_back(pt.fwhm_pss_khz);
    }
    res.regression_pcs = broadening_regression(xs, fwhm_pcs);
    res.regression_pss = broadening_regression(xs, fwhm_pss);
    return res;
}

inline std::string sweep_summary_csv(const SweepResult& res) {
    std::string out = "value,snr_pcs_db,snr_pss_db,fwhm_pcs_khz,fwhm_pss_khz\n";
    for (const SweepPointResult& pt : res.points) {
        detail::append_double(out, pt.value);
        out.push_back(',');
        detail::append_double(out, pt.snr_pcs_db);
        out.push_back(',');
        detail::append_double(out, pt.snr_pss_db);
        out.push_back(',');
        detail::append_double(out, pt.fwhm_pcs_khz);
        out.push_back(',');
        detail::append_double(out, pt.fwhm_pss_khz);
        out.push_back('\n');
    }
    return out;
}

inline nlohmann::json sweep_regression_json(const SweepResult& res) {
    auto reg = [](const RegressionResult& r) {
        return nlohmann::json{{"slope", r.slope},
                              {"intercept", r.intercept},
                              {"slope_stderr", r.slope_stderr},
                              {"intercept_stderr", r.intercept_stderr}};
    };
    return nlohmann::json{{"variable", to_string(res.variable)},
                          {"n_points", res.points.size()},
                          {"pcs", reg(res.regression_pcs)},
                          {"pss", reg(res.regression_pss)}};
}

}  // namespace snsim
