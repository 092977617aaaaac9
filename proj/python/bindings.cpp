#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pmsm/controller_observer.hpp"
#include "pmsm/excitation.hpp"
#include "pmsm/scenario.hpp"
#include "pmsm/trace.hpp"

namespace py = pybind11;
using namespace pmsm;

namespace {

py::dict summary_dict(const ScenarioSummary& s) {
    py::dict d;
    d["completed"] = s.completed;
    d["diverged"] = s.diverged;
    d["message"] = s.message;
    d["t_end"] = s.t_end;
    d["steps"] = s.steps;
    d["transient"] = s.transient;
    d["final_R_hat"] = s.final_R_hat;
    d["max_R_error"] = s.max_R_error;
    d["max_speed_error_rpm"] = s.max_speed_error_rpm;
    d["rms_speed_error_rpm"] = s.rms_speed_error_rpm;
    d["torque_rms_error"] = s.torque_rms_error;
    d["peak_torque_ref"] = s.peak_torque_ref;
    d["max_tracking_error"] = s.max_tracking_error;
    d["max_fast_norm"] = s.max_fast_norm;
    d["rms_fast_norm"] = s.rms_fast_norm;
    d["max_sigma_hat"] = s.max_sigma_hat;
    d["max_theta_err"] = s.max_theta_err;
    d["R_settling_time"] = s.R_settling_time;
    d["speed_settling_time"] = s.speed_settling_time;
    d["e_settling_time"] = s.e_settling_time;
    d["max_norm_drift"] = s.max_norm_drift;
    return d;
}

// Column name -> 1-D array, in trace_columns() order.
py::dict trace_dict(const std::vector<TraceRow>& rows) {
    const auto& names = trace_columns();
    std::vector<py::array_t<double>> cols;
    for (std::size_t c = 0; c < names.size(); ++c) cols.emplace_back(static_cast<py::ssize_t>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::vector<double> v = trace_row_values(rows[r]);
        for (std::size_t c = 0; c < names.size(); ++c) cols[c].mutable_at(r) = v[c];
    }
    py::dict d;
    for (std::size_t c = 0; c < names.size(); ++c) d[py::str(names[c])] = cols[c];
    return d;
}

py::dict run(const ScenarioConfig& cfg) {
    ScenarioResult r;
    {
        py::gil_scoped_release release;
        r = run_scenario(cfg);
    }
    py::dict out;
    out["name"] = cfg.name;
    out["mode"] = to_string(cfg.mode);
    out["summary"] = summary_dict(r.summary);
    out["trace"] = trace_dict(r.trace);
    return out;
}

py::dict report_dict(const GramianReport& r) {
    py::dict d;
    d["window"] = r.window;
    d["alpha1"] = r.alpha1;
    d["alpha2"] = r.alpha2;
    d["beta1"] = r.beta1;
    d["trace_max"] = r.trace_max;
    d["i_star"] = r.i_star;
    d["rho"] = r.rho;
    d["w_star"] = r.w_star;
    d["injection_amplitude"] = r.injection_amplitude;
    d["a1f"] = r.a1f;
    d["a2f"] = r.a2f;
    d["local_pe_radius"] = r.local_pe_radius;
    d["recovery_time"] = r.recovery_time;
    d["alpha"] = r.alpha;
    d["contraction_factor"] = r.contraction_factor;
    d["decay_rate"] = r.decay_rate;
    d["overshoot"] = r.overshoot;
    d["uniformly_observable"] = r.uniformly_observable;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Sensorless PMSM controller-observer simulation lab";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def("trace_columns", &trace_columns, "Trace column names in file order.");

    m.def(
        "simulate_file", [](const std::string& path) { return run(load_config(path)); }, py::arg("path"),
        "Run the scenario in a JSON file. Returns {name, mode, summary, trace}.");
    m.def(
        "simulate_json",
        [](const std::string& text, std::optional<double> horizon) {
            ScenarioConfig cfg = parse_config(text);
            if (horizon) {
                cfg.integration.horizon = *horizon;
                if (cfg.integration.transient && *cfg.integration.transient >= *horizon) {
                    cfg.integration.transient = 0.5 * *horizon;
                }
                cfg.validate();
            }
            return run(cfg);
        },
        py::arg("text"), py::arg("horizon") = py::none(),
        "Run a scenario given as JSON text, optionally with a shorter horizon.");

    m.def(
        "gains_from_poles",
        [](std::complex<double> p1, std::complex<double> p2, double chi) {
            const SlowGains g = gains_from_poles(p1, p2, chi);
            return py::make_tuple(g.k_eta, g.gamma);
        },
        py::arg("p1"), py::arg("p2"), py::arg("chi"), "Returns (k_eta, gamma).");
    m.def("parse_poles", &parse_poles, py::arg("text"));

    m.def(
        "benchmark_gains",
        [] {
            const ControllerGains g = benchmark_gains();
            py::dict d;
            d["k_eta"] = g.k_eta;
            d["gamma"] = g.gamma;
            d["k_p"] = g.k_p;
            d["k_e"] = g.k_e;
            d["k_z"] = g.k_z;
            d["lambda"] = g.lambda;
            return d;
        },
        "Gains of the benchmark drive.");

    m.def("w_star", &w_star, py::arg("i_star"), py::arg("rho") = 0.5);
    m.def(
        "nominal_gramian",
        [](double amplitude, double i_q, double window, double start) {
            return gramian(nominal_regressor(amplitude, i_q, 1e-3, start + window), start, window);
        },
        py::arg("amplitude"), py::arg("i_q"), py::arg("window") = 2.0 * std::numbers::pi, py::arg("start") = 0.0,
        "Gramian of the injection regressor over one window (3x3 array).");
    m.def(
        "analyze_file", [](const std::string& path) { return report_dict(certify(load_config(path).certification_input())); },
        py::arg("path"), "Excitation certificate for a scenario file.");
}
