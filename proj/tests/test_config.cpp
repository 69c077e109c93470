#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "snsim/config.hpp"
#include "test_util.hpp"

using namespace snsim;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

nlohmann::json minimal_config() {
    return nlohmann::json::parse(R"({
        "name": "minimal",
        "seed": 7,
        "ensemble": {
            "length_mm": 30.0,
            "n0": 1.48,
            "gamma0_khz": 12.588,
            "alpha_khz_per_mw": 3.2,
            "beta_khz_per_1e11cm3": 4.2,
            "coupling": 5.644595964747707e-15,
            "isotopes": "natural_rubidium"
        },
        "probe": {"power_mw": 3.0, "beam_area_mm2": 0.1, "field_ut": 34.6},
        "polarimeter": {"gain_v_per_a": 1e4, "responsivity_a_per_w": 0.6028},
        "optics": {"squeezing_db": -5.3, "cell_transmission": 0.8133},
        "acquisition": {
            "sample_rate_hz": 2.5e6,
            "duration_s": 0.02,
            "n_averages": 16,
            "segment_len": 4096,
            "window": "hann",
            "overlap": 0.5
        }
    })");
}

const char* kPresets[] = {"fig5a",     "fig5b",     "fig6a-pcs", "fig6a-pss",
                          "fig6b-pss", "fig6c-pss", "fig7-pcs",  "fig7-pss"};

}  // namespace

TEST_CASE("all shipped presets load and validate") {
    for (const char* name : kPresets) {
        INFO(name);
        const ExperimentConfig cfg = load_experiment_config(
            testutil::preset_dir() + "/" + std::string(name) + ".json");
        REQUIRE(cfg.name == name);
        REQUIRE(cfg.seed.has_value());
        REQUIRE(cfg.ensemble.isotopes.size() == 2);
    }
}

TEST_CASE("squeezed presets carry the post-loss noise state") {
    const ExperimentConfig pss =
        load_experiment_config(testutil::preset_dir() + "/fig6a-pss.json");
    REQUIRE_THAT(pss.optics.s2_var_rel_snl,
                 WithinRel(0.42672184640477706, 1e-13));
    REQUIRE(pss.optics.power_mw == 6.0);
    REQUIRE(pss.probe.power_mw == 6.0);

    const ExperimentConfig pcs =
        load_experiment_config(testutil::preset_dir() + "/fig6a-pcs.json");
    REQUIRE(pcs.optics.is_coherent());
    REQUIRE(pcs.seed == pss.seed);

    const ExperimentConfig fig7 =
        load_experiment_config(testutil::preset_dir() + "/fig7-pss.json");
    REQUIRE_THAT(fig7.optics.s2_var_rel_snl,
                 WithinRel(0.42657951880159267, 1e-13));
}

TEST_CASE("sweep presets declare their grids") {
    const ExperimentConfig fig5a =
        load_experiment_config(testutil::preset_dir() + "/fig5a.json");
    REQUIRE(fig5a.sweep.has_value());
    REQUIRE(fig5a.sweep->variable == SweepVariable::power);
    REQUIRE(fig5a.sweep->values.size() >= 3);

    const ExperimentConfig fig5b =
        load_experiment_config(testutil::preset_dir() + "/fig5b.json");
    REQUIRE(fig5b.sweep.has_value());
    REQUIRE(fig5b.sweep->variable == SweepVariable::density);
}

TEST_CASE("config parses from the canonical shape") {
    const ExperimentConfig cfg = parse_experiment_config(minimal_config());
    REQUIRE(cfg.name == "minimal");
    REQUIRE(cfg.seed == 7u);
    REQUIRE(cfg.ensemble.radius_mm == 1.0);  // default
    REQUIRE(cfg.ensemble.isotopes[0].name == "85Rb");
    REQUIRE(cfg.ensemble.isotopes[1].name == "87Rb");
    REQUIRE(cfg.polarimeter.classical_noise_v2_per_hz == 0.0);  // default
    // bandwidth defaults to Nyquist
    REQUIRE_THAT(cfg.polarimeter.bandwidth_hz, WithinRel(1.25e6, 1e-15));
    REQUIRE_THAT(cfg.optics.s2_var_rel_snl,
                 WithinRel(0.42672184640477706, 1e-13));
    REQUIRE(cfg.optics.power_mw == 3.0);
    REQUIRE(cfg.acquisition.window == Window::hann);
    REQUIRE_FALSE(cfg.sweep.has_value());
}

TEST_CASE("explicit noise state bypasses the squeezing shorthand") {
    nlohmann::json j = minimal_config();
    j["optics"] = {{"s2_var_rel_snl", 0.5}, {"s3_var_rel_snl", 2.5}};
    const ExperimentConfig cfg = parse_experiment_config(j);
    REQUIRE(cfg.optics.s2_var_rel_snl == 0.5);
    REQUIRE(cfg.optics.s3_var_rel_snl == 2.5);
    REQUIRE(cfg.optics.power_mw == 3.0);

    j["optics"] = {{"s2_var_rel_snl", 0.5}, {"s3_var_rel_snl", 0.5}};
    REQUIRE_THROWS_AS(parse_experiment_config(j), std::domain_error);
}

TEST_CASE("cell transmission defaults to lossless") {
    nlohmann::json j = minimal_config();
    j["optics"] = {{"squeezing_db", -5.3}};
    const ExperimentConfig cfg = parse_experiment_config(j);
    REQUIRE_THAT(cfg.optics.s2_var_rel_snl,
                 WithinRel(0.29512092266663853, 1e-13));
}

TEST_CASE("unknown keys are rejected at every level") {
    nlohmann::json top = minimal_config();
    top["surprise"] = 1;
    REQUIRE_THROWS_MATCHES(parse_experiment_config(top), input_error,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("surprise")));

    nlohmann::json ens = minimal_config();
    ens["ensemble"]["temperature_c"] = 50;
    REQUIRE_THROWS_MATCHES(parse_experiment_config(ens), input_error,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("temperature_c")));

    nlohmann::json opt = minimal_config();
    opt["optics"]["squeeze"] = -3;
    REQUIRE_THROWS_AS(parse_experiment_config(opt), input_error);

    nlohmann::json iso = minimal_config();
    iso["ensemble"]["isotopes"] =
        nlohmann::json::array({{{"name", "85Rb"},
                                {"gamma", 4.665},
                                {"abundance", 1.0},
                                {"spin", 2.5}}});
    REQUIRE_THROWS_MATCHES(parse_experiment_config(iso), input_error,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("spin")));
}

TEST_CASE("missing required keys are named") {
    nlohmann::json j = minimal_config();
    j["probe"].erase("power_mw");
    REQUIRE_THROWS_MATCHES(parse_experiment_config(j), input_error,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("power_mw")));

    nlohmann::json no_ens = minimal_config();
    no_ens.erase("ensemble");
    REQUIRE_THROWS_MATCHES(parse_experiment_config(no_ens), input_error,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("ensemble")));
}

TEST_CASE("seed must be a non-negative integer when present") {
    nlohmann::json j = minimal_config();
    j.erase("seed");
    const ExperimentConfig cfg = parse_experiment_config(j);
    REQUIRE_FALSE(cfg.seed.has_value());

    j["seed"] = -1;
    REQUIRE_THROWS_AS(parse_experiment_config(j), input_error);
    j["seed"] = 1.5;
    REQUIRE_THROWS_AS(parse_experiment_config(j), input_error);
    j["seed"] = "42";
    REQUIRE_THROWS_AS(parse_experiment_config(j), input_error);
}

TEST_CASE("sweep blocks are validated") {
    nlohmann::json j = minimal_config();
    j["sweep"] = {{"variable", "power"}, {"values", {1.0, 2.0, 3.0}}};
    const ExperimentConfig cfg = parse_experiment_config(j);
    REQUIRE(cfg.sweep.has_value());
    REQUIRE(cfg.sweep->values == std::vector<double>{1.0, 2.0, 3.0});

    j["sweep"] = {{"variable", "current"}, {"values", {1.0, 2.0, 3.0}}};
    REQUIRE_THROWS_AS(parse_experiment_config(j), input_error);
    j["sweep"] = {{"variable", "power"}, {"values", {1.0, 2.0}}};
    REQUIRE_THROWS_AS(parse_experiment_config(j), std::domain_error);
    j["sweep"] = {{"variable", "power"}, {"values", {2.0, 2.0, 2.0}}};
    REQUIRE_THROWS_AS(parse_experiment_config(j), std::domain_error);
    j["sweep"] = {{"variable", "power"}, {"values", {1.0, "x", 3.0}}};
    REQUIRE_THROWS_AS(parse_experiment_config(j), input_error);
    j["sweep"] = {{"variable", "power"}, {"values", {1.0, -2.0, 3.0}}};
    REQUIRE_THROWS_AS(parse_experiment_config(j), std::domain_error);
}

TEST_CASE("window and isotope set names are strict") {
    nlohmann::json j = minimal_config();
    j["acquisition"]["window"] = "hamming";
    REQUIRE_THROWS_AS(parse_experiment_config(j), input_error);

    j = minimal_config();
    j["ensemble"]["isotopes"] = "cesium";
    REQUIRE_THROWS_AS(parse_experiment_config(j), input_error);

    j = minimal_config();
    j["ensemble"]["isotopes"] = nlohmann::json::array();
    REQUIRE_THROWS_AS(parse_experiment_config(j), input_error);
}

TEST_CASE("abundances must sum to one") {
    nlohmann::json j = minimal_config();
    j["ensemble"]["isotopes"] = nlohmann::json::array(
        {{{"name", "85Rb"}, {"gamma", 4.665}, {"abundance", 0.5}}});
    REQUIRE_THROWS_AS(parse_experiment_config(j), std::domain_error);
}

TEST_CASE("serialization round-trips every preset exactly") {
    for (const char* name : kPresets) {
        INFO(name);
        const ExperimentConfig cfg = load_experiment_config(
            testutil::preset_dir() + "/" + std::string(name) + ".json");
        const nlohmann::json j = experiment_config_to_json(cfg);
        const ExperimentConfig back = parse_experiment_config(j);
        REQUIRE(experiment_config_to_json(back) == j);
        REQUIRE(back.optics.s2_var_rel_snl == cfg.optics.s2_var_rel_snl);
        REQUIRE(back.optics.s3_var_rel_snl == cfg.optics.s3_var_rel_snl);
        REQUIRE(back.seed == cfg.seed);
        REQUIRE(back.acquisition.segment_len == cfg.acquisition.segment_len);
        REQUIRE(back.ensemble.coupling == cfg.ensemble.coupling);
    }
}

TEST_CASE("config file loading wraps parse failures as input errors") {
    const std::string dir = testutil::out_dir("config");
    const std::string broken = dir + "/broken.json";
    testutil::write_file(broken, "{ not json");
    REQUIRE_THROWS_AS(load_experiment_config(broken), input_error);
    REQUIRE_THROWS_AS(load_experiment_config(dir + "/missing.json"),
                      input_error);

    // domain violations surface as input errors with the file named
    const std::string invalid = dir + "/invalid.json";
    nlohmann::json j = minimal_config();
    j["probe"]["power_mw"] = -1.0;
    testutil::write_file(invalid, j.dump(2));
    REQUIRE_THROWS_MATCHES(load_experiment_config(invalid), input_error,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("invalid.json")));
}
