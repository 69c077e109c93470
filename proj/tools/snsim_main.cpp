// snsim: command-line front end for the spin-noise spectroscopy toolkit.
// Exit codes: 0 success, 2 input error, 3 fit did not converge (partial
// output is still written).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "snsim/snsim.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNoConverge = 3;

std::string preset_path(const std::string& name) {
    const char* env = std::getenv("SNSIM_PRESET_DIR");
    const std::string dir = (env && *env) ? env : SNSIM_PRESET_DIR;
    return dir + "/" + name + ".json";
}

struct ConfigOptions {
    std::string config_path;
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::optional<int> averages;
    int threads = 0;
};

void add_config_options(CLI::App* cmd, ConfigOptions& opt) {
    cmd->add_option("--config", opt.config_path, "experiment config JSON file");
    cmd->add_option("--preset", opt.preset, "named preset from the preset directory");
    cmd->add_option("--seed", opt.seed, "override the config seed");
    cmd->add_option("--averages", opt.averages, "override the averaging count");
    cmd->add_option("--threads", opt.threads,
                    "worker threads (0 = hardware concurrency)");
}

snsim::ExperimentConfig load_config(const ConfigOptions& opt) {
    if (opt.config_path.empty() == opt.preset.empty())
        throw snsim::input_error("exactly one of --config or --preset is required");
    const std::string path =
        opt.config_path.empty() ? preset_path(opt.preset) : opt.config_path;
    snsim::ExperimentConfig cfg = snsim::load_experiment_config(path);
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.averages) cfg.acquisition.n_averages = *opt.averages;
    cfg.validate();
    return cfg;
}

void ensure_parent_dir(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void print_fit(const snsim::LorentzianFit& fit) {
    for (std::size_t j = 0; j < fit.peaks.size(); ++j) {
        const auto& pk = fit.peaks[j];
        std::printf("peak %zu: center %.1f Hz, fwhm %.1f Hz, snr %.2f dB\n", j,
                    pk.center_hz, pk.fwhm_hz, snsim::compute_snr_db(fit, j));
    }
    std::printf("floor %.6g, rms residual %.3g, %s after %d iterations\n",
                fit.floor, fit.residual_norm,
                fit.converged ? "converged" : "NOT converged", fit.n_iterations);
    if (!fit.diagnostic.empty())
        std::printf("note: %s\n", fit.diagnostic.c_str());
}

int cmd_simulate(const ConfigOptions& opt, const std::string& out_prefix) {
    const snsim::ExperimentConfig cfg = load_config(opt);
    const snsim::SimulationResult res = snsim::run_simulation(cfg, opt.threads);
    const fs::path prefix(out_prefix);
    ensure_parent_dir(prefix);
    const std::string csv = prefix.string() + ".spectrum.csv";
    const std::string json = prefix.string() + ".fit.json";
    snsim::write_spectrum_csv(csv, res.spectrum_db);
    snsim::write_fit_json(json, res.fit);
    std::printf("wrote %s and %s\n", csv.c_str(), json.c_str());
    print_fit(res.fit);
    return res.fit.converged ? kExitOk : kExitNoConverge;
}

int cmd_sweep(const ConfigOptions& opt, const std::string& out_dir) {
    const snsim::ExperimentConfig cfg = load_config(opt);
    const snsim::SweepResult res = snsim::run_sweep(cfg, opt.threads);
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    bool all_converged = true;
    for (std::size_t i = 0; i < res.points.size(); ++i) {
        const snsim::SweepPointResult& pt = res.points[i];
        char stem[32];
        for (const char* branch : {"pcs", "pss"}) {
            const snsim::SimulationResult& sim =
                branch[1] == 'c' ? pt.pcs : pt.pss;
            std::snprintf(stem, sizeof(stem), "point_%02zu_%s", i, branch);
            snsim::write_spectrum_csv((dir / (std::string(stem) + ".spectrum.csv")).string(),
                                      sim.spectrum_db);
            snsim::write_fit_json((dir / (std::string(stem) + ".fit.json")).string(),
                                  sim.fit);
            all_converged = all_converged && sim.fit.converged;
        }
    }
    {
        const std::string path = (dir / "summary.csv").string();
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw snsim::input_error("sweep: cannot open '" + path + "' for writing");
        out << snsim::sweep_summary_csv(res);
    }
    {
        const std::string path = (dir / "regression.json").string();
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw snsim::input_error("sweep: cannot open '" + path + "' for writing");
        out << snsim::sweep_regression_json(res).dump(2) << '\n';
    }
    std::printf("wrote %zu sweep points to %s\n", res.points.size(),
                out_dir.c_str());
    std::printf("pcs: slope %.4f +/- %.4f, intercept %.4f\n",
                res.regression_pcs.slope, res.regression_pcs.slope_stderr,
                res.regression_pcs.intercept);
    std::printf("pss: slope %.4f +/- %.4f, intercept %.4f\n",
                res.regression_pss.slope, res.regression_pss.slope_stderr,
                res.regression_pss.intercept);
    return all_converged ? kExitOk : kExitNoConverge;
}

int cmd_analyze(const std::string& csv_path, int n_peaks,
                const std::string& out_path) {
    const snsim::Spectrum spec = snsim::read_spectrum_csv(csv_path);
    const snsim::LorentzianFit fit =
        snsim::fit_lorentzian(snsim::linearize(spec), n_peaks);
    if (out_path.empty()) {
        std::cout << snsim::fit_to_json(fit).dump(2) << '\n';
    } else {
        ensure_parent_dir(fs::path(out_path));
        snsim::write_fit_json(out_path, fit);
        std::printf("wrote %s\n", out_path.c_str());
        print_fit(fit);
    }
    return fit.converged ? kExitOk : kExitNoConverge;
}

struct BudgetOptions {
    double eta = 1.0;
    double epsilon = 1.0;
    double zeta = 1.0;
    double rho = 1.0;
    double omega = 0.0;
    std::optional<double> x;
    std::optional<double> pump_mw;
    std::optional<double> threshold_mw;
    std::string out_path;
};

int cmd_budget(const BudgetOptions& opt) {
    snsim::OpoBudget budget;
    budget.eta = opt.eta;
    budget.epsilon = opt.epsilon;
    budget.zeta = opt.zeta;
    budget.rho = opt.rho;
    budget.omega = opt.omega;
    if (opt.x && opt.pump_mw)
        throw snsim::input_error("budget: give either --x or --pump-mw, not both");
    if (opt.x) {
        budget.x = *opt.x;
    } else if (opt.pump_mw) {
        if (!opt.threshold_mw)
            throw snsim::input_error("budget: --pump-mw requires --threshold-mw");
        budget.x = snsim::pump_parameter(*opt.pump_mw, *opt.threshold_mw);
    } else {
        throw snsim::input_error(
            "budget: give --x or --pump-mw with --threshold-mw");
    }

    const snsim::OpoNoise noise = snsim::opo_noise(budget);
    const double r_minus_db = snsim::db_from_linear(noise.r_minus);
    const double r_plus_db = snsim::db_from_linear(noise.r_plus);
    std::printf("x = %.6f\n", budget.x);
    std::printf("R- = %.6f (%.6f dB)\n", noise.r_minus, r_minus_db);
    std::printf("R+ = %.6f (%+.6f dB)\n", noise.r_plus, r_plus_db);
    if (!opt.out_path.empty()) {
        ensure_parent_dir(fs::path(opt.out_path));
        std::ofstream out(opt.out_path, std::ios::binary);
        if (!out)
            throw snsim::input_error("budget: cannot open '" + opt.out_path +
                                     "' for writing");
        const nlohmann::json j = {{"x", budget.x},
                                  {"r_minus", noise.r_minus},
                                  {"r_plus", noise.r_plus},
                                  {"r_minus_db", r_minus_db},
                                  {"r_plus_db", r_plus_db}};
        out << j.dump(2) << '\n';
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spin-noise spectroscopy simulator"};
    app.require_subcommand(1);

    BudgetOptions budget_opt;
    CLI::App* budget = app.add_subcommand(
        "budget", "squeezed/anti-squeezed quadrature noise of an OPO");
    budget->add_option("--eta", budget_opt.eta, "detector quantum efficiency");
    budget->add_option("--epsilon", budget_opt.epsilon, "interference visibility");
    budget->add_option("--zeta", budget_opt.zeta, "transmission efficiency");
    budget->add_option("--rho", budget_opt.rho, "cavity escape efficiency");
    budget->add_option("--omega", budget_opt.omega, "normalized analysis frequency");
    budget->add_option("--x", budget_opt.x, "pump parameter, 0 <= x < 1");
    budget->add_option("--pump-mw", budget_opt.pump_mw, "pump power, mW");
    budget->add_option("--threshold-mw", budget_opt.threshold_mw,
                       "oscillation threshold power, mW");
    budget->add_option("--out", budget_opt.out_path, "write the result as JSON");

    ConfigOptions sim_opt;
    std::string sim_out;
    CLI::App* simulate = app.add_subcommand(
        "simulate", "run the measurement chain and write spectrum + fit");
    add_config_options(simulate, sim_opt);
    simulate->add_option("--out", sim_out, "output path prefix")->required();

    ConfigOptions sweep_opt;
    std::string sweep_out;
    CLI::App* sweep = app.add_subcommand(
        "sweep", "run the configured power/density sweep, both probe states");
    add_config_options(sweep, sweep_opt);
    sweep->add_option("--out", sweep_out, "output directory")->required();

    std::string analyze_csv;
    std::string analyze_out;
    int analyze_peaks = 2;
    CLI::App* analyze = app.add_subcommand(
        "analyze", "fit Lorentzian peaks to a spectrum CSV");
    analyze->add_option("csv", analyze_csv, "spectrum CSV file")->required();
    analyze->add_option("--peaks", analyze_peaks, "number of peaks to fit");
    analyze->add_option("--out", analyze_out,
                        "fit JSON path (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    }

    try {
        if (budget->parsed()) return cmd_budget(budget_opt);
        if (simulate->parsed()) return cmd_simulate(sim_opt, sim_out);
        if (sweep->parsed()) return cmd_sweep(sweep_opt, sweep_out);
        if (analyze->parsed())
            return cmd_analyze(analyze_csv, analyze_peaks, analyze_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    }
    return kExitInput;
}
