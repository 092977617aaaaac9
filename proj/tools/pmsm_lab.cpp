#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "pmsm/excitation.hpp"
#include "pmsm/scenario.hpp"
#include "pmsm/trace.hpp"

namespace fs = std::filesystem;
using namespace pmsm;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kDiverged = 2;

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::logic_error&) {
            used = 0;
        }
        if (used != item.size() || !(v > 0.0)) {
            throw ConfigError("--eps: '" + item + "' is not a positive number");
        }
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("--eps: empty list");
    return out;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir, const std::string& format) {
    const ScenarioConfig cfg = load_config(config_path);
    const ScenarioResult result = run_scenario(cfg);
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    if (cfg.mode == ScenarioMode::BoundaryLayer) {
        write_boundary_layer_csv((dir / "boundary_layer.csv").string(), result.boundary_layer);
    } else if (format == "svg") {
        write_trace_svg((dir / "trace.svg").string(), result.trace, cfg.name);
    } else {
        write_trace_csv((dir / "trace.csv").string(), result.trace);
    }
    const std::string summary = fmt::format("scenario: {}\nmode: {}\n{}", cfg.name, to_string(cfg.mode),
                                            to_key_value(result.summary));
    std::ofstream((dir / "summary.txt").string()) << summary;
    std::cout << summary;
    if (result.summary.diverged) {
        std::cerr << "error: " << result.summary.message << '\n';
        return kDiverged;
    }
    return kOk;
}

int cmd_analyze(const std::string& input, double window, double stride, const std::string& eigen_csv) {
    UcoBounds bounds;
    if (fs::path(input).extension() == ".csv") {
        RegressorSamples rs = read_regressor_csv(input);
        const RegressorSignal sig = RegressorSignal::sampled(std::move(rs.samples), rs.step);
        bounds = uco_bounds(sig, window, stride > 0.0 ? stride : window);
        std::cout << fmt::format("window: {:.17g}\nalpha1: {:.17g}\nalpha2: {:.17g}\ntrace_max: {:.17g}\n"
                                 "uniformly_observable: {}\n",
                                 window, bounds.alpha1, bounds.alpha2, bounds.trace_max, bounds.uniformly_observable);
    } else {
        const ScenarioConfig cfg = load_config(input);
        CertificationInput in = cfg.certification_input();
        if (window > 0.0) in.window = window;
        const GramianReport report = certify(in);
        bounds.windows = report.windows;
        std::cout << to_key_value(report);
    }
    if (!eigen_csv.empty()) {
        std::ofstream out(eigen_csv);
        if (!out) throw TraceIoError("cannot open '" + eigen_csv + "' for writing");
        out << "start,lambda_min,lambda_mid,lambda_max,trace\n";
        for (const WindowEigen& w : bounds.windows) {
            out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", w.start, w.eigenvalues[0],
                               w.eigenvalues[1], w.eigenvalues[2], w.trace);
        }
    }
    return kOk;
}

int cmd_sweep(const std::string& config_path, const std::string& eps_list, double band, bool serial) {
    const ScenarioConfig cfg = load_config(config_path);
    const std::vector<double> eps = parse_list(eps_list);
    const SweepReport report = epsilon_sweep(cfg, eps, band, !serial);
    std::cout << "epsilon,lambda,k_p,k_e,status,fast_residual,slow_residual,max_speed_error_rpm,message\n";
    bool diverged = false;
    for (const SweepEntry& e : report.entries) {
        const char* status = e.ok ? "ok" : (e.summary.diverged ? "diverged" : "rejected");
        diverged = diverged || e.summary.diverged;
        std::cout << fmt::format("{:.6g},{:.6g},{:.6g},{:.6g},{},{:.6g},{:.6g},{:.6g},\"{}\"\n", e.epsilon,
                                 e.gains.lambda, e.gains.k_p, e.gains.k_e, status, e.fast_residual, e.slow_residual,
                                 e.summary.max_speed_error_rpm, e.error);
    }
    std::cout << fmt::format("fast_monotone: {}\nslow_monotone: {}\n", report.fast_monotone, report.slow_monotone);
    return diverged ? kDiverged : kOk;
}

int cmd_tune(const std::string& poles_text, double chi) {
    const auto poles = parse_poles(poles_text);
    SlowGains g;
    try {
        g = gains_from_poles(poles.first, poles.second, chi);
    } catch (const std::invalid_argument& err) {
        throw ConfigError(err.what());
    }
    std::cout << fmt::format("chi: {:.17g}\nk_eta: {:.17g}\ngamma: {:.17g}\n", chi, g.k_eta, g.gamma);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sensorless PMSM controller-observer simulation lab"};
    app.require_subcommand(1);

    std::string config;
    std::string out_dir = ".";
    std::string format = "csv";
    auto* sim = app.add_subcommand("simulate", "Run a scenario and write its trace");
    sim->add_option("config", config, "Scenario JSON")->required();
    sim->add_option("--out", out_dir, "Output directory");
    sim->add_option("--format", format, "Trace format")->check(CLI::IsMember({"csv", "svg"}));

    std::string input;
    double window = 0.0;
    double stride = 0.0;
    std::string eigen_csv;
    auto* analyze = app.add_subcommand("analyze", "Excitation and Gramian analysis");
    analyze->add_option("input", input, "Scenario JSON or regressor CSV (tau,o11,o12,o21,o22,o31,o32)")->required();
    analyze->add_option("--window", window, "Gramian window length (default 2 pi)");
    analyze->add_option("--stride", stride, "Window stride for regressor CSV input (default: window)");
    analyze->add_option("--eigen-csv", eigen_csv, "Write per-window Gramian eigenvalues");

    std::string eps;
    double band = 0.10;
    bool serial = false;
    auto* sweep = app.add_subcommand("sweep-epsilon", "Re-run a scenario over a list of epsilon values");
    sweep->add_option("config", config, "Scenario JSON")->required();
    sweep->add_option("--eps", eps, "Comma-separated epsilon values")->required();
    sweep->add_option("--band", band, "Relative tolerance for the monotonicity check");
    sweep->add_flag("--serial", serial, "Run the entries one after another");

    std::string poles;
    double chi = 0.0;
    auto* tune = app.add_subcommand("tune-poles", "Attitude observer gains from pole placement");
    tune->add_option("--poles", poles, "a+bi, a-bi, a±bi (conjugate pair) or a,b (two real poles)")->required();
    tune->add_option("--chi", chi, "Nominal chi = |omega| phi")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*sim) return cmd_simulate(config, out_dir, format);
        if (*analyze) {
            if (window == 0.0 && fs::path(input).extension() == ".csv") window = 2.0 * std::numbers::pi;
            return cmd_analyze(input, window, stride, eigen_csv);
        }
        if (*sweep) return cmd_sweep(config, eps, band, serial);
        if (*tune) return cmd_tune(poles, chi);
    } catch (const DivergenceError& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kDiverged;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kConfigError;
    }
    return kConfigError;
}
