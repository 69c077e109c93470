#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstddef>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "snsim/errors.hpp"
#include "snsim/parallel.hpp"
#include "snsim/time_trace.hpp"

namespace snsim {

enum class SpectrumUnit { absolute, db_rel_snl };

inline std::string to_string(SpectrumUnit u) {
    return u == SpectrumUnit::absolute ? "absolute" : "db_rel_snl";
}

inline SpectrumUnit spectrum_unit_from_string(std::string_view s) {
    if (s == "absolute") return SpectrumUnit::absolute;
    if (s == "db_rel_snl") return SpectrumUnit::db_rel_snl;
    throw input_error("spectrum: unknown unit '" + std::string(s) + "'");
}

enum class Window { rect, hann };

inline std::string to_string(Window w) {
    return w == Window::rect ? "rect" : "hann";
}

inline Window window_from_string(std::string_view s) {
    if (s == "rect") return Window::rect;
    if (s == "hann") return Window::hann;
    throw input_error("window: unknown window '" + std::string(s) + "'");
}

// One-sided power spectral density on an ascending frequency grid.
struct Spectrum {
    std::vector<double> freqs_hz;
    std::vector<double> psd;
    SpectrumUnit unit = SpectrumUnit::absolute;
    double rbw_hz = 0.0;
    int n_averages = 1;

    void validate() const {
        if (freqs_hz.size() != psd.size())
            throw std::invalid_argument("spectrum: freqs and psd sizes differ");
        if (freqs_hz.size() < 2)
            throw std::invalid_argument("spectrum: need at least 2 bins");
        for (std::size_t i = 1; i < freqs_hz.size(); ++i)
            if (!(freqs_hz[i] > freqs_hz[i - 1]))
                throw std::invalid_argument("spectrum: freqs must be ascending");
        if (!(rbw_hz > 0.0))
            throw std::invalid_argument("spectrum: rbw_hz must be > 0");
        if (n_averages < 1)
            throw std::invalid_argument("spectrum: n_averages must be >= 1");
    }
};

namespace detail {

inline std::vector<double> window_coefficients(Window w, std::size_t len) {
    std::vector<double> coeff(len, 1.0);
    if (w == Window::hann) {
        for (std::size_t j = 0; j < len; ++j)
            coeff[j] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(j) /
                                             static_cast<double>(len)));
    }
    return coeff;
}

}  // namespace detail

// Segment advance for a given overlap fraction; shared with consumers that
// budget trace length against a target averaging count.
inline std::size_t welch_hop(std::size_t segment_len, double overlap) {
    return std::max<std::size_t>(
        1, segment_len -
               static_cast<std::size_t>(overlap * static_cast<double>(segment_len)));
}

// Averaged modified periodogram. One-sided, normalized so that the integral
// of the PSD over frequency equals the trace variance; the resolution
// bandwidth is the window's equivalent noise bandwidth over the segment
// duration. Segments reduce by an in-order pairwise tree, so the result is
// identical for any thread count. max_segments, when nonzero, caps the
// number of averaged segments.
inline Spectrum welch_psd(const TimeTrace& trace, std::size_t segment_len,
                          double overlap, Window window, int n_threads = 0,
                          std::size_t max_segments = 0) {
    trace.validate();
    if (segment_len < 4)
        throw std::invalid_argument("welch_psd: segment_len must be >= 4");
    if (segment_len > trace.samples.size())
        throw std::invalid_argument("welch_psd: segment_len exceeds trace length");
    if (!(overlap >= 0.0 && overlap <= 0.9))
        throw std::invalid_argument("welch_psd: overlap must be in [0, 0.9]");

    const std::size_t hop = welch_hop(segment_len, overlap);
    std::size_t n_segments = (trace.samples.size() - segment_len) / hop + 1;
    if (max_segments > 0) n_segments = std::min(n_segments, max_segments);

    const std::vector<double> w = detail::window_coefficients(window, segment_len);
    double wsum = 0.0, wsq = 0.0;
    for (double c : w) {
        wsum += c;
        wsq += c * c;
    }
    const double fs = trace.sample_rate_hz;
    const std::size_t n_bins = segment_len / 2 + 1;

    // per-segment periodograms, |X_k|^2 with the window applied
    std::vector<std::vector<double>> pgram(n_segments);
    parallel_for_index(n_segments, n_threads, [&](std::size_t s) {
        std::vector<double> seg(segment_len);
        const double* src = trace.samples.data() + s * hop;
        for (std::size_t j = 0; j < segment_len; ++j) seg[j] = src[j] * w[j];
        Eigen::FFT<double> fft;
        std::vector<double>& row = pgram[s];
        row.resize(n_bins);
        if (segment_len % 2 == 0) {
            fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
            std::vector<std::complex<double>> spec;
            fft.fwd(spec, seg);
            for (std::size_t k = 0; k < n_bins; ++k) row[k] = std::norm(spec[k]);
        } else {
            std::vector<std::complex<double>> in(segment_len), spec;
            for (std::size_t j = 0; j < segment_len; ++j) in[j] = seg[j];
            fft.fwd(spec, in);
            for (std::size_t k = 0; k < n_bins; ++k) row[k] = std::norm(spec[k]);
        }
    });

    // in-place pairwise tree over the segment index
    for (std::size_t step = 1; step < n_segments; step *= 2) {
        parallel_for_index((n_segments + 2 * step - 1) / (2 * step), n_threads,
                           [&](std::size_t i) {
                               const std::size_t lo = 2 * step * i;
                               const std::size_t hi = lo + step;
                               if (hi >= n_segments) return;
                               double* acc = pgram[lo].data();
                               const double* add = pgram[hi].data();
                               for (std::size_t k = 0; k < n_bins; ++k)
                                   acc[k] += add[k];
                           });
    }

    Spectrum out;
    out.unit = SpectrumUnit::absolute;
    out.rbw_hz = fs * wsq / (wsum * wsum);
    out.n_averages = static_cast<int>(n_segments);
    out.freqs_hz.resize(n_bins);
    out.psd.resize(n_bins);
    const double norm = 1.0 / (static_cast<double>(n_segments) * fs * wsq);
    const bool has_nyquist = (segment_len % 2 == 0);
    for (std::size_t k = 0; k < n_bins; ++k) {
        out.freqs_hz[k] = static_cast<double>(k) * fs / static_cast<double>(segment_len);
        const bool edge = (k == 0) || (has_nyquist && k == n_bins - 1);
        out.psd[k] = (edge ? 1.0 : 2.0) * pgram[0][k] * norm;
    }
    return out;
}

// Expresses an absolute spectrum in dB relative to the shot-noise PSD.
// Non-positive bins are reported, never clamped.
inline Spectrum normalize_to_snl(const Spectrum& in, double snl_v2_per_hz) {
    in.validate();
    if (in.unit != SpectrumUnit::absolute)
        throw std::domain_error("normalize_to_snl: input must be in absolute units");
    if (!(snl_v2_per_hz > 0.0))
        throw std::domain_error("normalize_to_snl: snl must be > 0");
    Spectrum out = in;
    out.unit = SpectrumUnit::db_rel_snl;
    for (std::size_t k = 0; k < in.psd.size(); ++k) {
        if (!(in.psd[k] > 0.0))
            throw std::domain_error("normalize_to_snl: non-positive psd at bin " +
                                    std::to_string(k));
        out.psd[k] = 10.0 * std::log10(in.psd[k] / snl_v2_per_hz);
    }
    return out;
}

// Pooled mean of independently averaged spectra on one grid; each input is
// weighted by its own n_averages and the counts add.
inline Spectrum average_spectra(const std::vector<Spectrum>& spectra) {
    if (spectra.empty())
        throw std::invalid_argument("average_spectra: empty input");
    const Spectrum& first = spectra.front();
    first.validate();
    if (first.unit != SpectrumUnit::absolute)
        throw std::invalid_argument("average_spectra: spectra must be in linear units");
    Spectrum out = first;
    double total = first.n_averages;
    for (std::size_t k = 0; k < out.psd.size(); ++k)
        out.psd[k] *= static_cast<double>(first.n_averages);
    for (std::size_t i = 1; i < spectra.size(); ++i) {
        const Spectrum& s = spectra[i];
        s.validate();
        if (s.unit != SpectrumUnit::absolute)
            throw std::invalid_argument(
                "average_spectra: spectra must be in linear units");
        if (s.freqs_hz != out.freqs_hz || s.rbw_hz != out.rbw_hz)
            throw std::invalid_argument("average_spectra: mismatched grids");
        for (std::size_t k = 0; k < out.psd.size(); ++k)
            out.psd[k] += static_cast<double>(s.n_averages) * s.psd[k];
        total += s.n_averages;
    }
    for (std::size_t k = 0; k < out.psd.size(); ++k) out.psd[k] /= total;
    out.n_averages = static_cast<int>(total);
    return out;
}

namespace detail {

inline void append_double(std::string& line, double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    line.append(buf, res.ptr);
}

inline double parse_double(std::string_view field, std::size_t line_no,
                           const char* what) {
    double v = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last)
        throw input_error("spectrum csv: bad " + std::string(what) + " on line " +
                          std::to_string(line_no));
    return v;
}

}  // namespace detail

inline void write_spectrum_csv(const std::string& path, const Spectrum& spec) {
    spec.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("spectrum csv: cannot open '" + path + "' for writing");
    out << "# spin-noise spectrum; rbw_hz and n_averages repeat per row\n";
    out << "freq_hz,psd,unit,rbw_hz,n_averages\n";
    const std::string unit = to_string(spec.unit);
    for (std::size_t k = 0; k < spec.freqs_hz.size(); ++k) {
        std::string line;
        detail::append_double(line, spec.freqs_hz[k]);
        line.push_back(',');
        detail::append_double(line, spec.psd[k]);
        line.push_back(',');
        line += unit;
        line.push_back(',');
        detail::append_double(line, spec.rbw_hz);
        line.push_back(',');
        line += std::to_string(spec.n_averages);
        line.push_back('\n');
        out << line;
    }
    if (!out) throw input_error("spectrum csv: write to '" + path + "' failed");
}

inline Spectrum read_spectrum_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("spectrum csv: cannot open '" + path + "'");
    std::string line;
    std::size_t line_no = 0;
    // skip metadata comments
    do {
        if (!std::getline(in, line))
            throw input_error("spectrum csv: missing header line");
        ++line_no;
    } while (!line.empty() && line[0] == '#');
    if (line != "freq_hz,psd,unit,rbw_hz,n_averages")
        throw input_error("spectrum csv: unexpected header on line " +
                          std::to_string(line_no));

    Spectrum spec;
    bool first_row = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::array<std::string_view, 5> fields;
        std::string_view rest(line);
        for (std::size_t f = 0; f < 5; ++f) {
            const auto comma = rest.find(',');
            if (f < 4) {
                if (comma == std::string_view::npos)
                    throw input_error("spectrum csv: truncated row on line " +
                                      std::to_string(line_no));
                fields[f] = rest.substr(0, comma);
                rest.remove_prefix(comma + 1);
            } else {
                if (comma != std::string_view::npos)
                    throw input_error("spectrum csv: too many fields on line " +
                                      std::to_string(line_no));
                fields[f] = rest;
            }
        }
        const double freq = detail::parse_double(fields[0], line_no, "freq_hz");
        const double psd = detail::parse_double(fields[1], line_no, "psd");
        const SpectrumUnit unit = spectrum_unit_from_string(fields[2]);
        const double rbw = detail::parse_double(fields[3], line_no, "rbw_hz");
        const double n_avg = detail::parse_double(fields[4], line_no, "n_averages");
        if (first_row) {
            spec.unit = unit;
            spec.rbw_hz = rbw;
            spec.n_averages = static_cast<int>(n_avg);
            first_row = false;
        } else if (unit != spec.unit || rbw != spec.rbw_hz ||
                   static_cast<int>(n_avg) != spec.n_averages) {
            throw input_error("spectrum csv: inconsistent metadata on line " +
                              std::to_string(line_no));
        }
        spec.freqs_hz.push_back(freq);
        spec.psd.push_back(psd);
    }
    spec.validate();
    return spec;
}

}  // namespace snsim
