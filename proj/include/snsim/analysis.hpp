#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "snsim/detection.hpp"
#include "snsim/errors.hpp"
#include "snsim/spectral.hpp"
#include "snsim/spin_dynamics.hpp"

namespace snsim {

struct LorentzianPeak {
    double center_hz = 0.0;
    double fwhm_hz = 0.0;
    double amplitude = 0.0;  // height above the floor, linear power units
    double center_stderr = 0.0;
    double fwhm_stderr = 0.0;
    double amplitude_stderr = 0.0;
};

struct LorentzianFit {
    std::vector<LorentzianPeak> peaks;  // sorted by center
    double floor = 0.0;
    double floor_stderr = 0.0;
    double residual_norm = 0.0;  // rms residual in the spectrum's linear units
    bool converged = false;
    int n_iterations = 0;
    std::string diagnostic;  // nonempty when init deviated from the request
};

namespace detail {

struct FitData {
    std::vector<double> x;  // scaled frequency
    std::vector<double> y;  // scaled power
};

// model: p[0] + sum_j p[1+3j] * q^2 / ((x-c)^2 + q^2), q = w/2
inline void eval_model_jacobian(const FitData& d, const Eigen::VectorXd& p,
                                Eigen::VectorXd& r, Eigen::MatrixXd& J) {
    const std::size_t n = d.x.size();
    const std::size_t m = (static_cast<std::size_t>(p.size()) - 1) / 3;
    for (std::size_t i = 0; i < n; ++i) {
        double model = p[0];
        J(i, 0) = 1.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double a = p[1 + 3 * j];
            const double c = p[2 + 3 * j];
            const double q = 0.5 * p[3 + 3 * j];
            const double dx = d.x[i] - c;
            const double den = dx * dx + q * q;
            const double shape = q * q / den;
            model += a * shape;
            J(i, 1 + 3 * j) = shape;
            J(i, 2 + 3 * j) = a * shape * 2.0 * dx / den;
            J(i, 3 + 3 * j) = a * q * dx * dx / (den * den);
        }
        r[i] = d.y[i] - model;
    }
}

struct PeakSeed {
    std::size_t bin;
    double height;  // smoothed height above floor
    double fwhm_bins;
};

inline std::vector<PeakSeed> find_peak_seeds(const std::vector<double>& y,
                                             int n_peaks, double floor0,
                                             std::string& diagnostic) {
    const std::size_t n = y.size();
    std::vector<double> smooth(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t lo = k >= 2 ? k - 2 : 0;
        const std::size_t hi = std::min(k + 2, n - 1);
        double acc = 0.0;
        for (std::size_t i = lo; i <= hi; ++i) acc += y[i];
        smooth[k] = acc / static_cast<double>(hi - lo + 1);
    }

    std::vector<std::size_t> maxima;
    for (std::size_t k = 1; k + 1 < n; ++k)
        if (smooth[k] > smooth[k - 1] && smooth[k] >= smooth[k + 1] &&
            smooth[k] > floor0)
            maxima.push_back(k);
    if (static_cast<int>(maxima.size()) < n_peaks)
        throw input_error("lorentzian fit: requested " + std::to_string(n_peaks) +
                          " peaks but found only " + std::to_string(maxima.size()) +
                          " local maxima above the floor");
    std::sort(maxima.begin(), maxima.end(), [&](std::size_t a, std::size_t b) {
        if (smooth[a] != smooth[b]) return smooth[a] > smooth[b];
        return a < b;
    });

    // maxima closer than min_sep merge into one seed; if that leaves fewer
    // seeds than requested the fit proceeds with fewer peaks and says so
    const std::size_t min_sep = std::max<std::size_t>(5, n / 100);
    std::vector<PeakSeed> seeds;
    std::size_t merged = 0, dropped = 0;
    for (std::size_t k : maxima) {
        if (static_cast<int>(seeds.size()) == n_peaks) break;
        bool clashes = false;
        for (const PeakSeed& s : seeds)
            if ((k > s.bin ? k - s.bin : s.bin - k) < min_sep) clashes = true;
        if (clashes) {
            ++merged;
            continue;
        }
        const double half = floor0 + 0.5 * (smooth[k] - floor0);
        std::size_t l = k, r = k;
        while (l > 0 && smooth[l] > half) --l;
        while (r + 1 < n && smooth[r] > half) ++r;
        const double width = static_cast<double>(r - l);
        if (width < 3.0) {
            ++dropped;  // narrower than the grid resolves; treat as a spike
            continue;
        }
        seeds.push_back({k, smooth[k] - floor0, width});
    }
    if (seeds.empty())
        throw input_error("lorentzian fit: no usable peak candidates in spectrum");
    if (static_cast<int>(seeds.size()) < n_peaks) {
        diagnostic = "initialized " + std::to_string(seeds.size()) + " of " +
                     std::to_string(n_peaks) + " requested peaks";
        if (merged > 0)
            diagnostic += "; " + std::to_string(merged) +
                          " candidate(s) within the merge distance of a stronger peak";
        if (dropped > 0)
            diagnostic += "; " + std::to_string(dropped) +
                          " candidate(s) narrower than 3 bins treated as spikes";
    }
    std::sort(seeds.begin(), seeds.end(),
              [](const PeakSeed& a, const PeakSeed& b) { return a.bin < b.bin; });
    return seeds;
}

}  // namespace detail

// Recovers linear power from a dB-referenced spectrum; fitting always runs
// in linear units because least squares in dB biases the floor estimate.
inline Spectrum linearize(const Spectrum& in) {
    in.validate();
    if (in.unit == SpectrumUnit::absolute) return in;
    Spectrum out = in;
    out.unit = SpectrumUnit::absolute;
    for (double& p : out.psd) p = std::pow(10.0, p / 10.0);
    return out;
}

// Least-squares fit of a constant floor plus n_peaks Lorentzians on a linear
// spectrum. Initial guesses come from smoothed local maxima unless init peaks
// are supplied (center/fwhm/amplitude fields). Damped Gauss-Newton with an
// analytic Jacobian on internally rescaled coordinates: the result is
// invariant under rescaling of either axis.
inline LorentzianFit fit_lorentzian(const Spectrum& spec, int n_peaks,
                                    std::vector<LorentzianPeak> init = {}) {
    spec.validate();
    if (spec.unit != SpectrumUnit::absolute)
        throw std::invalid_argument(
            "lorentzian fit: spectrum must be in linear units");
    if (n_peaks < 1 || n_peaks > 8)
        throw std::invalid_argument("lorentzian fit: n_peaks must be in [1, 8]");
    if (!init.empty() && static_cast<int>(init.size()) != n_peaks)
        throw std::invalid_argument("lorentzian fit: init size != n_peaks");

    const std::size_t n = spec.freqs_hz.size();
    std::vector<double> y_nat(n);
    for (std::size_t k = 0; k < n; ++k) {
        if (!std::isfinite(spec.psd[k]))
            throw input_error("lorentzian fit: non-finite psd at bin " +
                              std::to_string(k));
        y_nat[k] = spec.psd[k];
    }

    const double f_ref = spec.freqs_hz.front();
    const double f_scale = spec.freqs_hz.back() - spec.freqs_hz.front();
    const double y_scale = *std::max_element(y_nat.begin(), y_nat.end());
    if (!(y_scale > 0.0))
        throw input_error("lorentzian fit: spectrum has no positive bins");

    detail::FitData d;
    d.x.resize(n);
    d.y.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        d.x[k] = (spec.freqs_hz[k] - f_ref) / f_scale;
        d.y[k] = y_nat[k] / y_scale;
    }

    LorentzianFit fit;
    std::size_t m = static_cast<std::size_t>(n_peaks);
    Eigen::VectorXd p;
    if (init.empty()) {
        std::vector<double> sorted = d.y;
        std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2,
                         sorted.end());
        const double floor0 = sorted[sorted.size() / 2];
        const auto seeds = detail::find_peak_seeds(d.y, n_peaks, floor0,
                                                   fit.diagnostic);
        m = seeds.size();
        const double df = d.x[1] - d.x[0];
        p.resize(1 + 3 * m);
        p[0] = floor0;
        for (std::size_t j = 0; j < m; ++j) {
            p[1 + 3 * j] = std::max(seeds[j].height, 1e-3);
            p[2 + 3 * j] = d.x[seeds[j].bin];
            p[3 + 3 * j] = seeds[j].fwhm_bins * df;
        }
    } else {
        std::vector<double> sorted = d.y;
        std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2,
                         sorted.end());
        p.resize(1 + 3 * m);
        p[0] = sorted[sorted.size() / 2];
        for (std::size_t j = 0; j < m; ++j) {
            if (!(init[j].amplitude > 0.0) || !(init[j].fwhm_hz > 0.0))
                throw std::invalid_argument(
                    "lorentzian fit: init amplitude and fwhm must be > 0");
            p[1 + 3 * j] = init[j].amplitude / y_scale;
            p[2 + 3 * j] = (init[j].center_hz - f_ref) / f_scale;
            p[3 + 3 * j] = init[j].fwhm_hz / f_scale;
        }
    }

    const std::size_t np = 1 + 3 * m;
    if (n < np + 2)
        throw std::invalid_argument("lorentzian fit: too few bins for model");

    Eigen::VectorXd r(n);
    Eigen::MatrixXd J(n, np);
    detail::eval_model_jacobian(d, p, r, J);
    double cost = r.squaredNorm();
    const double cost0 = std::max(cost, 1e-300);

    double lambda = 1e-3;
    constexpr int kMaxIter = 200;
    int iter = 0;
    for (; iter < kMaxIter; ++iter) {
        const Eigen::MatrixXd jtj = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;
        Eigen::MatrixXd damped = jtj;
        for (std::size_t i = 0; i < np; ++i)
            damped(i, i) += lambda * std::max(jtj(i, i), 1e-300);
        const Eigen::VectorXd step = damped.ldlt().solve(g);
        const Eigen::VectorXd trial = p + step;

        bool shape_ok = true;
        for (std::size_t j = 0; j < m; ++j)
            if (!(trial[1 + 3 * j] > 0.0) || !(trial[3 + 3 * j] > 0.0))
                shape_ok = false;

        double trial_cost = std::numeric_limits<double>::infinity();
        Eigen::VectorXd trial_r(n);
        Eigen::MatrixXd trial_J(n, np);
        if (shape_ok) {
            detail::eval_model_jacobian(d, trial, trial_r, trial_J);
            trial_cost = trial_r.squaredNorm();
        }

        if (std::isfinite(trial_cost) && trial_cost < cost) {
            const double drop = cost - trial_cost;
            double rel_step = 0.0;
            for (std::size_t i = 0; i < np; ++i)
                rel_step = std::max(rel_step, std::abs(step[i]) /
                                                  std::max(std::abs(p[i]), 1e-12));
            p = trial;
            r.swap(trial_r);
            J.swap(trial_J);
            cost = trial_cost;
            lambda = std::max(lambda / 3.0, 1e-12);
            if (drop <= 1e-10 * cost || cost <= 1e-20 * cost0 ||
                rel_step < 1e-12) {
                fit.converged = true;
                ++iter;
                break;
            }
        } else {
            lambda *= 10.0;
            if (lambda > 1e12) break;  // stalled against the bound
        }
    }
    fit.n_iterations = iter;

    // parameter covariance from the final linearization
    const Eigen::MatrixXd jtj = J.transpose() * J;
    const double dof = static_cast<double>(n - np);
    const double s2 = cost / dof;
    const Eigen::MatrixXd cov = s2 * jtj.inverse();
    auto stderr_of = [&](std::size_t i) {
        const double v = cov(i, i);
        return v > 0.0 ? std::sqrt(v) : 0.0;
    };

    fit.floor = p[0] * y_scale;
    fit.floor_stderr = stderr_of(0) * y_scale;
    fit.residual_norm = std::sqrt(cost / static_cast<double>(n)) * y_scale;
    fit.peaks.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
        LorentzianPeak& pk = fit.peaks[j];
        pk.amplitude = p[1 + 3 * j] * y_scale;
        pk.center_hz = f_ref + p[2 + 3 * j] * f_scale;
        pk.fwhm_hz = p[3 + 3 * j] * f_scale;
        pk.amplitude_stderr = stderr_of(1 + 3 * j) * y_scale;
        pk.center_stderr = stderr_of(2 + 3 * j) * f_scale;
        pk.fwhm_stderr = stderr_of(3 + 3 * j) * f_scale;
    }
    std::sort(fit.peaks.begin(), fit.peaks.end(),
              [](const LorentzianPeak& a, const LorentzianPeak& b) {
                  return a.center_hz < b.center_hz;
              });
    return fit;
}

// Peak power above the floor relative to the floor itself, in dB.
inline double compute_snr_db(const LorentzianFit& fit, std::size_t peak_index) {
    if (peak_index >= fit.peaks.size())
        throw std::invalid_argument("snr: peak index out of range");
    const double a = fit.peaks[peak_index].amplitude;
    if (!(a > 0.0) || !(fit.floor > 0.0))
        throw std::domain_error("snr: amplitude and floor must be > 0");
    return 10.0 * std::log10(a / fit.floor);
}

struct RegressionResult {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
    double intercept_stderr = 0.0;
};

// Ordinary least squares y = intercept + slope * x with standard errors.
inline RegressionResult broadening_regression(const std::vector<double>& x,
                                              const std::vector<double>& y) {
    if (x.size() != y.size())
        throw std::invalid_argument("regression: x and y sizes differ");
    const std::size_t n = x.size();
    if (n < 3)
        throw std::invalid_argument("regression: need at least 3 points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0))
        throw std::invalid_argument("regression: x values are all equal");
    RegressionResult res;
    res.slope = sxy / sxx;
    res.intercept = my - res.slope * mx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = y[i] - res.intercept - res.slope * x[i];
        ssr += e * e;
    }
    const double s2 = ssr / static_cast<double>(n - 2);
    res.slope_stderr = std::sqrt(s2 / sxx);
    res.intercept_stderr =
        std::sqrt(s2 * (1.0 / static_cast<double>(n) + mx * mx / sxx));
    return res;
}

// Magnetic field implied by a fitted precession peak for a given isotope.
inline double field_from_larmor_ut(double center_hz, const IsotopeSpec& iso) {
    iso.validate();
    if (!(center_hz > 0.0))
        throw std::invalid_argument("field: center must be > 0");
    return center_hz / (iso.gamma * 1e3);
}

// Ratio of integrated peak powers, low-frequency peak over high-frequency
// peak. For two precession peaks with a shared linewidth this estimates the
// abundance ratio of the slower-precessing species to the faster one.
inline double abundance_ratio(const LorentzianFit& fit) {
    if (fit.peaks.size() < 2)
        throw std::invalid_argument("abundance ratio: need at least 2 peaks");
    const LorentzianPeak& lo = fit.peaks.front();
    const LorentzianPeak& hi = fit.peaks.back();
    const double area_lo = lo.amplitude * lo.fwhm_hz;
    const double area_hi = hi.amplitude * hi.fwhm_hz;
    if (!(area_hi > 0.0))
        throw std::domain_error("abundance ratio: degenerate high peak");
    return area_lo / area_hi;
}

// Predicted peak height of one isotope's precession resonance relative to
// the shot-noise floor of an ideal coherent probe, in linear power units.
inline double predicted_peak_rel_snl(const EnsembleSpec& ens,
                                     const ProbeGeometry& probe,
                                     const PolarimeterSpec& pol,
                                     std::size_t iso_index) {
    ens.validate();
    probe.validate();
    pol.validate();
    if (iso_index >= ens.isotopes.size())
        throw std::invalid_argument("peak prediction: isotope index out of range");
    const double var_theta = spin_rotation_variance(ens, probe);
    const double fwhm_hz =
        linewidth_khz(probe.power_mw, ens.n0, ens) * 1e3;
    const double p_w = probe.power_mw * 1e-3;
    return 4.0 * pol.responsivity_a_per_w * p_w * var_theta *
           ens.isotopes[iso_index].abundance /
           (kElectronChargeC * M_PI * fwhm_hz);
}

inline double predicted_snr_db(const EnsembleSpec& ens,
                               const ProbeGeometry& probe,
                               const PolarimeterSpec& pol, double xi2,
                               std::size_t iso_index) {
    if (!(xi2 > 0.0))
        throw std::domain_error("snr prediction: xi2 must be > 0");
    return 10.0 *
           std::log10(predicted_peak_rel_snl(ens, probe, pol, iso_index) / xi2);
}

// Solves the Faraday coupling so that the predicted SNR of one isotope's
// peak matches a measured value at a reference operating point.
inline double calibrate_coupling(const EnsembleSpec& ens,
                                 const ProbeGeometry& probe,
                                 const PolarimeterSpec& pol,
                                 std::size_t iso_index, double target_snr_db,
                                 double xi2) {
    if (!(xi2 > 0.0))
        throw std::domain_error("calibration: xi2 must be > 0");
    EnsembleSpec ref = ens;
    ref.coupling = 1.0;
    const double peak_per_coupling =
        predicted_peak_rel_snl(ref, probe, pol, iso_index);
    const double target_peak = std::pow(10.0, target_snr_db / 10.0) * xi2;
    return target_peak / peak_per_coupling;
}

inline nlohmann::json fit_to_json(const LorentzianFit& fit) {
    nlohmann::json peaks = nlohmann::json::array();
    std::size_t best = 0;
    for (std::size_t j = 0; j < fit.peaks.size(); ++j) {
        const LorentzianPeak& pk = fit.peaks[j];
        peaks.push_back({{"center_hz", pk.center_hz},
                         {"fwhm_hz", pk.fwhm_hz},
                         {"amplitude", pk.amplitude},
                         {"center_stderr", pk.center_stderr},
                         {"fwhm_stderr", pk.fwhm_stderr}});
        if (pk.amplitude > fit.peaks[best].amplitude) best = j;
    }
    nlohmann::json j;
    j["peaks"] = std::move(peaks);
    j["floor"] = fit.floor;
    if (!fit.peaks.empty() && fit.floor > 0.0 &&
        fit.peaks[best].amplitude > 0.0)
        j["snr_db"] = compute_snr_db(fit, best);
    else
        j["snr_db"] = nullptr;
    j["residual_norm"] = fit.residual_norm;
    j["converged"] = fit.converged;
    return j;
}

inline void write_fit_json(const std::string& path, const LorentzianFit& fit) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("fit json: cannot open '" + path + "' for writing");
    out << fit_to_json(fit).dump(2) << '\n';
    if (!out) throw input_error("fit json: write to '" + path + "' failed");
}

}  // namespace snsim
