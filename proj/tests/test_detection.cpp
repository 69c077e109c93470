#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstddef>
#include <vector>

#include "snsim/detection.hpp"

using namespace snsim;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

PolarimeterSpec bench_polarimeter() {
    PolarimeterSpec pol;
    pol.gain_v_per_a = 1e4;
    pol.responsivity_a_per_w = 0.6028;
    pol.bandwidth_hz = 12e6;
    pol.classical_noise_v2_per_hz = 0.0;
    return pol;
}

TimeTrace flat_trace(std::size_t n, double fs, std::uint64_t seed) {
    TimeTrace t;
    t.samples.assign(n, 0.0);
    t.sample_rate_hz = fs;
    t.seed = seed;
    return t;
}

double variance(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return acc / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("shot-noise psd for the calibrated detector") {
    const PolarimeterSpec pol = bench_polarimeter();
    REQUIRE_THAT(snl_psd_v2_per_hz(4.0, pol),
                 WithinRel(7.7263365998016e-14, 1e-12));
    REQUIRE_THAT(snl_psd_v2_per_hz(8.0, pol),
                 WithinRel(2.0 * snl_psd_v2_per_hz(4.0, pol), 1e-15));
    REQUIRE(snl_psd_v2_per_hz(0.0, pol) == 0.0);
    REQUIRE_THROWS_AS(snl_psd_v2_per_hz(-1.0, pol), std::domain_error);
}

TEST_CASE("background psd scales with the probe noise variance") {
    const double snl = 7.7263365998016e-14;
    REQUIRE(squeezed_background_psd(snl, 1.0) == snl);
    REQUIRE_THAT(squeezed_background_psd(snl, 0.42672184640477706),
                 WithinRel(snl * 0.42672184640477706, 1e-15));
    REQUIRE(squeezed_background_psd(snl, 0.0) == 0.0);
    REQUIRE_THROWS_AS(squeezed_background_psd(snl, -0.1), std::domain_error);
    REQUIRE_THROWS_AS(squeezed_background_psd(-snl, 1.0), std::domain_error);
}

TEST_CASE("noiseless polarimeter output is the rotation signal") {
    const PolarimeterSpec pol = bench_polarimeter();
    TimeTrace theta = flat_trace(16, 1e6, 3);
    theta.samples = {0.0,    1e-6, -2e-6, 5e-7,  0.0,  3e-6, -1e-6, 2e-6,
                     -3e-6,  1e-7, 4e-6,  -5e-6, 1e-6, 0.0,  2e-6,  -2e-6};
    const TimeTrace v = polarimeter_trace(theta, 4.0, 0.0, pol);
    const double scale = pol.gain_v_per_a * pol.responsivity_a_per_w * 4.0e-3;
    REQUIRE(v.samples.size() == theta.samples.size());
    for (std::size_t j = 0; j < v.samples.size(); ++j)
        REQUIRE(v.samples[j] == scale * std::sin(2.0 * theta.samples[j]));
    REQUIRE(v.seed == theta.seed);
    REQUIRE(v.sample_rate_hz == theta.sample_rate_hz);
}

TEST_CASE("noise floor realizes the background psd") {
    const PolarimeterSpec pol = bench_polarimeter();
    const double fs = 1e6;
    const std::size_t n = 100000;
    const double snl = snl_psd_v2_per_hz(4.0, pol);
    const double tol = 3.0 * std::sqrt(2.0 / static_cast<double>(n));

    for (double xi2 : {1.0, 0.3}) {
        const TimeTrace v =
            polarimeter_trace(flat_trace(n, fs, 17), 4.0, xi2, pol);
        const double expected = snl * xi2 * fs / 2.0;
        REQUIRE_THAT(variance(v.samples), WithinRel(expected, tol));
    }
}

TEST_CASE("squeezing rescales the identical noise draws") {
    const PolarimeterSpec pol = bench_polarimeter();
    const std::size_t n = 4096;
    const TimeTrace full =
        polarimeter_trace(flat_trace(n, 1e6, 9), 4.0, 1.0, pol);
    const TimeTrace squeezed =
        polarimeter_trace(flat_trace(n, 1e6, 9), 4.0, 0.25, pol);
    for (std::size_t j = 0; j < n; ++j)
        REQUIRE_THAT(squeezed.samples[j], WithinRel(0.5 * full.samples[j], 1e-12));
}

TEST_CASE("classical noise adds on top of the optical background") {
    PolarimeterSpec pol = bench_polarimeter();
    const double fs = 1e6;
    const std::size_t n = 100000;
    const double snl = snl_psd_v2_per_hz(4.0, pol);
    pol.classical_noise_v2_per_hz = 2.0 * snl;
    const TimeTrace v = polarimeter_trace(flat_trace(n, fs, 29), 4.0, 1.0, pol);
    const double expected = 3.0 * snl * fs / 2.0;
    const double tol = 3.0 * std::sqrt(2.0 / static_cast<double>(n));
    REQUIRE_THAT(variance(v.samples), WithinRel(expected, tol));
}

TEST_CASE("polarimeter trace is reproducible and thread-count independent") {
    const PolarimeterSpec pol = bench_polarimeter();
    // straddles a noise generation block boundary
    const std::size_t n = (1 << 15) + 7;
    const TimeTrace a = polarimeter_trace(flat_trace(n, 1e6, 31), 4.0, 1.0, pol, 1);
    const TimeTrace b = polarimeter_trace(flat_trace(n, 1e6, 31), 4.0, 1.0, pol, 3);
    REQUIRE(a.samples == b.samples);
    const TimeTrace c = polarimeter_trace(flat_trace(n, 1e6, 32), 4.0, 1.0, pol, 1);
    REQUIRE(a.samples != c.samples);
}

TEST_CASE("polarimeter validates its inputs") {
    const PolarimeterSpec pol = bench_polarimeter();
    const TimeTrace theta = flat_trace(64, 1e6, 1);
    REQUIRE_THROWS_AS(polarimeter_trace(theta, -1.0, 1.0, pol),
                      std::domain_error);
    REQUIRE_THROWS_AS(polarimeter_trace(theta, 4.0, -1.0, pol),
                      std::domain_error);
    PolarimeterSpec bad = pol;
    bad.gain_v_per_a = 0.0;
    REQUIRE_THROWS_AS(polarimeter_trace(theta, 4.0, 1.0, bad),
                      std::domain_error);
    TimeTrace short_trace = flat_trace(1, 1e6, 1);
    REQUIRE_THROWS_AS(polarimeter_trace(short_trace, 4.0, 1.0, pol),
                      std::invalid_argument);
}
