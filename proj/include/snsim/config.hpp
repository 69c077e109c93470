#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "snsim/detection.hpp"
#include "snsim/errors.hpp"
#include "snsim/quantum_optics.hpp"
#include "snsim/spectral.hpp"
#include "snsim/spin_dynamics.hpp"

namespace snsim {

struct AcquisitionSpec {
    double sample_rate_hz = 0.0;
    double duration_s = 0.0;
    int n_averages = 1;
    std::size_t segment_len = 0;
    Window window = Window::hann;
    double overlap = 0.5;

    void validate() const {
        if (!(sample_rate_hz > 0.0))
            throw std::domain_error("acquisition: sample_rate_hz must be > 0");
        if (!(duration_s > 0.0))
            throw std::domain_error("acquisition: duration_s must be > 0");
        if (n_averages < 1)
            throw std::domain_error("acquisition: n_averages must be >= 1");
        if (segment_len < 4)
            throw std::domain_error("acquisition: segment_len must be >= 4");
        if (!(overlap >= 0.0 && overlap <= 0.9))
            throw std::domain_error("acquisition: overlap must be in [0, 0.9]");
    }
};

enum class SweepVariable { power, density };

inline std::string to_string(SweepVariable v) {
    return v == SweepVariable::power ? "power" : "density";
}

inline SweepVariable sweep_variable_from_string(std::string_view s) {
    if (s == "power") return SweepVariable::power;
    if (s == "density") return SweepVariable::density;
    throw input_error("sweep: variable must be 'power' or 'density'");
}

struct SweepSpec {
    SweepVariable variable = SweepVariable::power;
    std::vector<double> values;

    void validate() const {
        if (values.size() < 3)
            throw std::domain_error("sweep: need at least 3 values");
        bool all_equal = true;
        for (double v : values) {
            if (!(v > 0.0))
                throw std::domain_error("sweep: values must be > 0");
            if (v != values.front()) all_equal = false;
        }
        if (all_equal)
            throw std::domain_error("sweep: values must not all be equal");
    }
};

// One simulated acquisition: vapor cell + probe + optics + detector +
// analyzer settings. The optics state is stored as measured at the detector
// (loss already applied); its power bookkeeping uses the probe power.
struct ExperimentConfig {
    std::string name;
    EnsembleSpec ensemble;
    ProbeGeometry probe;
    PolarimeterSpec polarimeter;
    StokesNoiseState optics;
    AcquisitionSpec acquisition;
    std::optional<std::uint64_t> seed;
    std::optional<SweepSpec> sweep;

    void validate() const {
        ensemble.validate();
        probe.validate();
        polarimeter.validate();
        optics.validate();
        acquisition.validate();
        if (sweep) sweep->validate();
    }
};

namespace detail {

inline void check_object(const nlohmann::json& j, const std::string& ctx) {
    if (!j.is_object())
        throw input_error(ctx + ": expected a JSON object");
}

inline void check_keys(const nlohmann::json& obj, const std::string& ctx,
                       std::initializer_list<std::string_view> allowed) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (std::string_view k : allowed)
            if (item.key() == k) known = true;
        if (!known)
            throw input_error(ctx + ": unknown key '" + item.key() + "'");
    }
}

inline const nlohmann::json& require_key(const nlohmann::json& obj,
                                         const std::string& ctx,
                                         const char* key) {
    const auto it = obj.find(key);
    if (it == obj.end())
        throw input_error(ctx + ": missing required key '" + key + "'");
    return *it;
}

inline double get_number(const nlohmann::json& obj, const std::string& ctx,
                         const char* key) {
    const nlohmann::json& v = require_key(obj, ctx, key);
    if (!v.is_number())
        throw input_error(ctx + ": '" + key + "' must be a number");
    return v.get<double>();
}

inline double get_number_or(const nlohmann::json& obj, const std::string& ctx,
                            const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    return get_number(obj, ctx, key);
}

inline std::string get_string(const nlohmann::json& obj, const std::string& ctx,
                              const char* key) {
    const nlohmann::json& v = require_key(obj, ctx, key);
    if (!v.is_string())
        throw input_error(ctx + ": '" + key + "' must be a string");
    return v.get<std::string>();
}

inline std::uint64_t get_uint(const nlohmann::json& obj, const std::string& ctx,
                              const char* key) {
    const nlohmann::json& v = require_key(obj, ctx, key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw input_error(ctx + ": '" + key + "' must be a non-negative integer");
}

inline std::vector<IsotopeSpec> parse_isotopes(const nlohmann::json& j,
                                               const std::string& ctx) {
    if (j.is_string()) {
        if (j.get<std::string>() == "natural_rubidium") return natural_rubidium();
        throw input_error(ctx + ": the only named isotope set is 'natural_rubidium'");
    }
    if (!j.is_array() || j.empty())
        throw input_error(ctx + ": must be 'natural_rubidium' or a non-empty array");
    std::vector<IsotopeSpec> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string ictx = ctx + "[" + std::to_string(i) + "]";
        check_object(j[i], ictx);
        check_keys(j[i], ictx, {"name", "gamma", "abundance"});
        IsotopeSpec iso;
        iso.name = get_string(j[i], ictx, "name");
        iso.gamma = get_number(j[i], ictx, "gamma");
        iso.abundance = get_number(j[i], ictx, "abundance");
        out.push_back(iso);
    }
    return out;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    using detail::check_keys;
    using detail::check_object;
    using detail::get_number;
    using detail::get_number_or;
    using detail::get_string;
    using detail::get_uint;
    using detail::require_key;

    const std::string ctx = "config";
    check_object(j, ctx);
    check_keys(j, ctx,
               {"name", "seed", "ensemble", "probe", "polarimeter", "optics",
                "acquisition", "sweep"});

    ExperimentConfig cfg;
    if (j.contains("name")) cfg.name = get_string(j, ctx, "name");

    {
        const std::string ectx = ctx + ".ensemble";
        const nlohmann::json& e = require_key(j, ctx, "ensemble");
        check_object(e, ectx);
        check_keys(e, ectx,
                   {"length_mm", "radius_mm", "n0", "gamma0_khz",
                    "alpha_khz_per_mw", "beta_khz_per_1e11cm3", "isotopes",
                    "coupling"});
        cfg.ensemble.length_mm = get_number(e, ectx, "length_mm");
        cfg.ensemble.radius_mm = get_number_or(e, ectx, "radius_mm", 1.0);
        cfg.ensemble.n0 = get_number(e, ectx, "n0");
        cfg.ensemble.gamma0_khz = get_number(e, ectx, "gamma0_khz");
        cfg.ensemble.alpha_khz_per_mw = get_number(e, ectx, "alpha_khz_per_mw");
        cfg.ensemble.beta_khz_per_1e11cm3 =
            get_number(e, ectx, "beta_khz_per_1e11cm3");
        cfg.ensemble.coupling = get_number(e, ectx, "coupling");
        cfg.ensemble.isotopes =
            detail::parse_isotopes(require_key(e, ectx, "isotopes"),
                                   ectx + ".isotopes");
    }

    {
        const std::string pctx = ctx + ".probe";
        const nlohmann::json& p = require_key(j, ctx, "probe");
        check_object(p, pctx);
        check_keys(p, pctx, {"power_mw", "beam_area_mm2", "field_ut"});
        cfg.probe.power_mw = get_number(p, pctx, "power_mw");
        cfg.probe.beam_area_mm2 = get_number(p, pctx, "beam_area_mm2");
        cfg.probe.field_ut = get_number(p, pctx, "field_ut");
    }

    {
        const std::string actx = ctx + ".acquisition";
        const nlohmann::json& a = require_key(j, ctx, "acquisition");
        check_object(a, actx);
        check_keys(a, actx,
                   {"sample_rate_hz", "duration_s", "n_averages", "segment_len",
                    "window", "overlap"});
        cfg.acquisition.sample_rate_hz = get_number(a, actx, "sample_rate_hz");
        cfg.acquisition.duration_s = get_number(a, actx, "duration_s");
        cfg.acquisition.n_averages =
            static_cast<int>(get_uint(a, actx, "n_averages"));
        cfg.acquisition.segment_len =
            static_cast<std::size_t>(get_uint(a, actx, "segment_len"));
        cfg.acquisition.window =
            window_from_string(get_string(a, actx, "window"));
        cfg.acquisition.overlap = get_number(a, actx, "overlap");
    }

    {
        const std::string pctx = ctx + ".polarimeter";
        const nlohmann::json& p = require_key(j, ctx, "polarimeter");
        check_object(p, pctx);
        check_keys(p, pctx,
                   {"gain_v_per_a", "responsivity_a_per_w", "bandwidth_hz",
                    "classical_noise_v2_per_hz"});
        cfg.polarimeter.gain_v_per_a = get_number(p, pctx, "gain_v_per_a");
        cfg.polarimeter.responsivity_a_per_w =
            get_number(p, pctx, "responsivity_a_per_w");
        cfg.polarimeter.bandwidth_hz = get_number_or(
            p, pctx, "bandwidth_hz", 0.5 * cfg.acquisition.sample_rate_hz);
        cfg.polarimeter.classical_noise_v2_per_hz =
            get_number_or(p, pctx, "classical_noise_v2_per_hz", 0.0);
    }

    {
        const std::string octx = ctx + ".optics";
        const nlohmann::json& o = require_key(j, ctx, "optics");
        check_object(o, octx);
        const bool by_db = o.contains("squeezing_db");
        if (by_db) {
            check_keys(o, octx, {"squeezing_db", "cell_transmission"});
            const double db = get_number(o, octx, "squeezing_db");
            const double t = get_number_or(o, octx, "cell_transmission", 1.0);
            StokesNoiseState state =
                stokes_from_squeezing_db(db, cfg.probe.power_mw);
            cfg.optics = apply_optical_loss(state, t);
        } else {
            check_keys(o, octx, {"s2_var_rel_snl", "s3_var_rel_snl"});
            cfg.optics.s2_var_rel_snl = get_number(o, octx, "s2_var_rel_snl");
            cfg.optics.s3_var_rel_snl = get_number(o, octx, "s3_var_rel_snl");
        }
        // the noise state is what arrives at the detector; power bookkeeping
        // stays with the probe setting
        cfg.optics.power_mw = cfg.probe.power_mw;
    }

    if (j.contains("seed")) cfg.seed = get_uint(j, ctx, "seed");

    if (j.contains("sweep")) {
        const std::string sctx = ctx + ".sweep";
        const nlohmann::json& s = j["sweep"];
        check_object(s, sctx);
        check_keys(s, sctx, {"variable", "values"});
        SweepSpec sweep;
        sweep.variable =
            sweep_variable_from_string(get_string(s, sctx, "variable"));
        const nlohmann::json& vals = require_key(s, sctx, "values");
        if (!vals.is_array())
            throw input_error(sctx + ": 'values' must be an array of numbers");
        for (const auto& v : vals) {
            if (!v.is_number())
                throw input_error(sctx + ": 'values' must be an array of numbers");
            sweep.values.push_back(v.get<double>());
        }
        cfg.sweep = std::move(sweep);
    }

    cfg.validate();
    return cfg;
}

// Canonical serialization: optics always as the explicit noise state, isotopes
// always as an array. parse(to_json(c)) reproduces c exactly.
inline nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    if (!cfg.name.empty()) j["name"] = cfg.name;
    nlohmann::json isotopes = nlohmann::json::array();
    for (const IsotopeSpec& iso : cfg.ensemble.isotopes)
        isotopes.push_back({{"name", iso.name},
                            {"gamma", iso.gamma},
                            {"abundance", iso.abundance}});
    j["ensemble"] = {{"length_mm", cfg.ensemble.length_mm},
                     {"radius_mm", cfg.ensemble.radius_mm},
                     {"n0", cfg.ensemble.n0},
                     {"gamma0_khz", cfg.ensemble.gamma0_khz},
                     {"alpha_khz_per_mw", cfg.ensemble.alpha_khz_per_mw},
                     {"beta_khz_per_1e11cm3", cfg.ensemble.beta_khz_per_1e11cm3},
                     {"coupling", cfg.ensemble.coupling},
                     {"isotopes", std::move(isotopes)}};
    j["probe"] = {{"power_mw", cfg.probe.power_mw},
                  {"beam_area_mm2", cfg.probe.beam_area_mm2},
                  {"field_ut", cfg.probe.field_ut}};
    j["polarimeter"] = {
        {"gain_v_per_a", cfg.polarimeter.gain_v_per_a},
        {"responsivity_a_per_w", cfg.polarimeter.responsivity_a_per_w},
        {"bandwidth_hz", cfg.polarimeter.bandwidth_hz},
        {"classical_noise_v2_per_hz", cfg.polarimeter.classical_noise_v2_per_hz}};
    j["optics"] = {{"s2_var_rel_snl", cfg.optics.s2_var_rel_snl},
                   {"s3_var_rel_snl", cfg.optics.s3_var_rel_snl}};
    j["acquisition"] = {{"sample_rate_hz", cfg.acquisition.sample_rate_hz},
                        {"duration_s", cfg.acquisition.duration_s},
                        {"n_averages", cfg.acquisition.n_averages},
                        {"segment_len", cfg.acquisition.segment_len},
                        {"window", to_string(cfg.acquisition.window)},
                        {"overlap", cfg.acquisition.overlap}};
    if (cfg.seed) j["seed"] = *cfg.seed;
    if (cfg.sweep)
        j["sweep"] = {{"variable", to_string(cfg.sweep->variable)},
                      {"values", cfg.sweep->values}};
    return j;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw input_error("config: '" + path + "' is not valid JSON: " + e.what());
    }
    try {
        return parse_experiment_config(j);
    } catch (const std::domain_error& e) {
        throw input_error("config: '" + path + "': " + e.what());
    }
}

}  // namespace snsim
