#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "snsim/errors.hpp"

namespace snsim {

inline double db_from_linear(double value) {
    if (!(value > 0.0))
        throw std::domain_error("db_from_linear: value must be > 0");
    return 10.0 * std::log10(value);
}

inline double linear_from_db(double value_db) {
    return std::pow(10.0, value_db / 10.0);
}

// Below-threshold optical parametric oscillator budget.
//   eta     homodyne / detection efficiency
//   epsilon mode-matching efficiency (enters squared)
//   zeta    propagation efficiency
//   rho     cavity escape efficiency
//   x       pump amplitude relative to threshold, x = sqrt(P/Pth), x < 1
//   omega   analysis frequency in units of the cavity half linewidth
struct OpoBudget {
    double eta = 1.0;
    double epsilon = 1.0;
    double zeta = 1.0;
    double rho = 1.0;
    double x = 0.0;
    double omega = 0.0;

    void validate() const {
        auto check_frac = [](double v, const char* name) {
            if (!(v >= 0.0 && v <= 1.0))
                throw std::domain_error(std::string("opo_budget: ") + name +
                                        " must be in [0, 1]");
        };
        check_frac(eta, "eta");
        check_frac(epsilon, "epsilon");
        check_frac(zeta, "zeta");
        check_frac(rho, "rho");
        if (!(x >= 0.0))
            throw std::domain_error("opo_budget: x must be >= 0");
        if (x >= 1.0)
            throw threshold_error("opo_budget: pump at or above threshold (x >= 1)");
        if (!(omega >= 0.0))
            throw std::domain_error("opo_budget: omega must be >= 0");
    }
};

struct OpoNoise {
    double r_minus = 1.0;  // squeezed quadrature variance, relative to shot noise
    double r_plus = 1.0;   // anti-squeezed quadrature variance
};

// Variance of the squeezed / anti-squeezed quadratures for a lossy OPO.
// Both tend to 1 (shot noise) as the combined efficiency tends to 0.
inline OpoNoise opo_noise(const OpoBudget& b) {
    b.validate();
    const double k = b.eta * b.epsilon * b.epsilon * b.zeta * b.rho;
    const double om2 = 4.0 * b.omega * b.omega;
    OpoNoise out;
    out.r_minus = 1.0 - k * 4.0 * b.x / ((1.0 + b.x) * (1.0 + b.x) + om2);
    out.r_plus = 1.0 + k * 4.0 * b.x / ((1.0 - b.x) * (1.0 - b.x) + om2);
    return out;
}

inline double pump_parameter(double p_pump_mw, double p_threshold_mw) {
    if (!(p_threshold_mw > 0.0))
        throw std::domain_error("pump_parameter: threshold power must be > 0");
    if (!(p_pump_mw >= 0.0))
        throw std::domain_error("pump_parameter: pump power must be >= 0");
    if (p_pump_mw >= p_threshold_mw)
        throw threshold_error("pump_parameter: pump power at or above threshold");
    return std::sqrt(p_pump_mw / p_threshold_mw);
}

// Stokes-operator noise variances of the probe, relative to shot noise.
// s2 is the measured (squeezed) quadrature, s3 its conjugate.
struct StokesNoiseState {
    double s2_var_rel_snl = 1.0;
    double s3_var_rel_snl = 1.0;
    double power_mw = 0.0;

    void validate() const {
        if (!(s2_var_rel_snl > 0.0) || !(s3_var_rel_snl > 0.0))
            throw std::domain_error("stokes_noise_state: variances must be > 0");
        if (s2_var_rel_snl * s3_var_rel_snl < 1.0 - 1e-12)
            throw std::domain_error(
                "stokes_noise_state: uncertainty product s2*s3 must be >= 1");
        if (!(power_mw >= 0.0))
            throw std::domain_error("stokes_noise_state: power_mw must be >= 0");
    }

    bool is_coherent() const {
        return s2_var_rel_snl == 1.0 && s3_var_rel_snl == 1.0;
    }
};

// Minimum-uncertainty state for a given squeezing level in dB (negative for
// squeezing); the conjugate quadrature carries the reciprocal variance.
inline StokesNoiseState stokes_from_squeezing_db(double squeezing_db,
                                                 double power_mw = 0.0) {
    StokesNoiseState s;
    s.s2_var_rel_snl = linear_from_db(squeezing_db);
    s.s3_var_rel_snl = 1.0 / s.s2_var_rel_snl;
    s.power_mw = power_mw;
    s.validate();
    return s;
}

// Beam-splitter loss model: each variance relaxes toward shot noise and the
// optical power scales with the transmission.
inline StokesNoiseState apply_optical_loss(const StokesNoiseState& in,
                                           double transmission) {
    if (!(transmission >= 0.0 && transmission <= 1.0))
        throw std::domain_error("apply_optical_loss: transmission must be in [0, 1]");
    in.validate();
    StokesNoiseState out;
    out.s2_var_rel_snl = transmission * in.s2_var_rel_snl + (1.0 - transmission);
    out.s3_var_rel_snl = transmission * in.s3_var_rel_snl + (1.0 - transmission);
    out.power_mw = transmission * in.power_mw;
    return out;
}

}  // namespace snsim
