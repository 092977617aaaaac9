#include "pmsm/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>

namespace pmsm {

namespace {

constexpr int kColumns = 25;

std::vector<double> flatten(const TraceRow& r) {
    return {r.t,          r.omega_m_rpm, r.omega_hat_m_rpm, r.theta_err,   r.xi,         r.xi_hat,     r.R,
            r.R_hat,      r.T_el,        r.T_hat,           r.T_ref,       r.i_chi.x(),  r.i_chi.y(),  r.i_ref.x(),
            r.i_ref.y(),  r.e.x(),       r.e.y(),           r.i_tilde.x(), r.i_tilde.y(), r.z_norm,    r.sigma_hat,
            r.u_chi.x(),  r.u_chi.y(),   r.w.x(),           r.w.y()};
}

TraceRow unflatten(const std::vector<double>& v) {
    TraceRow r;
    r.t = v[0];
    r.omega_m_rpm = v[1];
    r.omega_hat_m_rpm = v[2];
    r.theta_err = v[3];
    r.xi = v[4];
    r.xi_hat = v[5];
    r.R = v[6];
    r.R_hat = v[7];
    r.T_el = v[8];
    r.T_hat = v[9];
    r.T_ref = v[10];
    r.i_chi = Vec2(v[11], v[12]);
    r.i_ref = Vec2(v[13], v[14]);
    r.e = Vec2(v[15], v[16]);
    r.i_tilde = Vec2(v[17], v[18]);
    r.z_norm = v[19];
    r.sigma_hat = v[20];
    r.u_chi = Vec2(v[21], v[22]);
    r.w = Vec2(v[23], v[24]);
    return r;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw TraceIoError("cannot open '" + path + "' for writing");
    }
    return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, sep)) {
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == sep) {
        out.emplace_back();
    }
    return out;
}

double parse_cell(const std::string& cell, const std::string& source, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::logic_error&) {
        throw TraceIoError(fmt::format("{}:{}: malformed number '{}'", source, line, cell));
    }
}

}  // namespace

std::vector<double> trace_row_values(const TraceRow& row) { return flatten(row); }

const std::vector<std::string>& trace_columns() {
    static const std::vector<std::string> cols{
        "t",       "omega_m_rpm", "omega_hat_m_rpm", "theta_err", "xi",        "xi_hat",   "R",
        "R_hat",   "T_el",        "T_hat",           "T_ref",     "i_chi_1",   "i_chi_2",  "i_ref_1",
        "i_ref_2", "e_1",         "e_2",             "i_tilde_1", "i_tilde_2", "z_norm",   "sigma_hat",
        "u_chi_1", "u_chi_2",     "w_1",             "w_2"};
    return cols;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows) {
    const auto& cols = trace_columns();
    for (std::size_t k = 0; k < cols.size(); ++k) {
        out << (k ? "," : "") << cols[k];
    }
    out << '\n';
    for (const TraceRow& r : rows) {
        const std::vector<double> v = flatten(r);
        std::string line;
        for (std::size_t k = 0; k < cols.size(); ++k) {
            if (k) line += ',';
            line += fmt::format("{:.17g}", v[k]);
        }
        out << line << '\n';
    }
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows) {
    std::ofstream out = open_out(path);
    write_trace_csv(out, rows);
    if (!out) throw TraceIoError("write to '" + path + "' failed");
}

std::vector<TraceRow> read_trace_csv(std::istream& in, const std::string& source) {
    const auto& cols = trace_columns();
    std::string line;
    if (!std::getline(in, line)) {
        throw TraceIoError(source + ": empty trace file");
    }
    if (split(line, ',') != cols) {
        throw TraceIoError(source + ":1: unexpected header");
    }
    std::vector<TraceRow> rows;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != cols.size()) {
            throw TraceIoError(fmt::format("{}:{}: expected {} columns, found {}", source, n, cols.size(), cells.size()));
        }
        std::vector<double> v(kColumns, 0.0);
        for (std::size_t k = 0; k < cells.size(); ++k) {
            v[k] = parse_cell(cells[k], source, n);
        }
        rows.push_back(unflatten(v));
    }
    return rows;
}

std::vector<TraceRow> read_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TraceIoError("cannot open '" + path + "'");
    return read_trace_csv(in, path);
}

void write_boundary_layer_csv(const std::string& path, const std::vector<BoundaryLayerRow>& rows) {
    std::ofstream out = open_out(path);
    out << "tau,w_1,w_2,e_1,e_2,i_tilde_1,i_tilde_2,z_1,z_2,z_3,fast_norm,z_norm\n";
    for (const BoundaryLayerRow& r : rows) {
        const BoundaryLayerState& s = r.state;
        out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n",
                           r.tau, s.w.x(), s.w.y(), s.e.x(), s.e.y(), s.i_tilde.x(), s.i_tilde.y(), s.z.x(), s.z.y(),
                           s.z.z(), s.fast_norm(), s.z.norm());
    }
    if (!out) throw TraceIoError("write to '" + path + "' failed");
}

namespace {

struct Series {
    std::string label;
    std::string color;
    std::function<double(const TraceRow&)> value;
};

struct Panel {
    std::string id;
    std::string title;
    std::string unit;
    std::vector<Series> series;
};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::vector<Panel> panels() {
    return {
        {"a-1", "Rotor speed", "rpm",
         {{"omega_m", "#1f77b4", [](const TraceRow& r) { return r.omega_m_rpm; }},
          {"omega_hat_m", "#d62728", [](const TraceRow& r) { return r.omega_hat_m_rpm; }}}},
        {"a-2", "Speed estimation error", "rpm",
         {{"omega_m - omega_hat_m", "#1f77b4", [](const TraceRow& r) { return r.omega_m_rpm - r.omega_hat_m_rpm; }}}},
        {"b-1", "Attitude error", "rad", {{"theta_err", "#1f77b4", [](const TraceRow& r) { return r.theta_err; }}}},
        {"b-2", "Inverse flux", "1/Wb",
         {{"xi", "#1f77b4", [](const TraceRow& r) { return r.xi; }},
          {"xi_hat", "#d62728", [](const TraceRow& r) { return r.xi_hat; }}}},
        {"c-1", "Stator resistance", "Ohm",
         {{"R", "#1f77b4", [](const TraceRow& r) { return r.R; }},
          {"R_hat", "#d62728", [](const TraceRow& r) { return r.R_hat; }}}},
        {"c-2", "Torque", "N m",
         {{"T_el", "#1f77b4", [](const TraceRow& r) { return r.T_el; }},
          {"T_hat", "#d62728", [](const TraceRow& r) { return r.T_hat; }},
          {"T_ref", "#2ca02c", [](const TraceRow& r) { return r.T_ref; }}}},
        {"d-1", "Currents (estimated frame)", "A",
         {{"i_1", "#1f77b4", [](const TraceRow& r) { return r.i_chi.x(); }},
          {"i_2", "#d62728", [](const TraceRow& r) { return r.i_chi.y(); }},
          {"i_ref_2", "#2ca02c", [](const TraceRow& r) { return r.i_ref.y(); }}}},
        {"d-2", "Tracking error", "A",
         {{"e_1", "#1f77b4", [](const TraceRow& r) { return r.e.x(); }},
          {"e_2", "#d62728", [](const TraceRow& r) { return r.e.y(); }}}},
    };
}

void draw_panel(std::string& svg, const Panel& p, const std::vector<TraceRow>& rows, double x0, double y0, double w,
                double h) {
    const double left = 70.0;
    const double top = 28.0;
    const double pw = w - left - 20.0;
    const double ph = h - top - 40.0;
    double t0 = rows.empty() ? 0.0 : rows.front().t;
    double t1 = rows.empty() ? 1.0 : rows.back().t;
    if (t1 <= t0) t1 = t0 + 1.0;
    double lo = INFINITY;
    double hi = -INFINITY;
    for (const Series& s : p.series) {
        for (const TraceRow& r : rows) {
            const double v = s.value(r);
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    }
    if (!std::isfinite(lo)) {
        lo = -1.0;
        hi = 1.0;
    }
    if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
        lo -= 0.5 * std::max(1e-6, std::abs(lo) * 0.05);
        hi += 0.5 * std::max(1e-6, std::abs(hi) * 0.05);
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto sx = [&](double t) { return x0 + left + (t - t0) / (t1 - t0) * pw; };
    auto sy = [&](double v) { return y0 + top + (hi - v) / (hi - lo) * ph; };

    svg += fmt::format("<g id=\"panel-{}\" class=\"panel\">\n", p.id);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"14\" font-weight=\"bold\">({}) {}</text>\n",
                       x0 + left, y0 + 18.0, p.id, escape(p.title));
    svg += fmt::format(
        "<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" stroke=\"#444\"/>\n",
        x0 + left, y0 + top, pw, ph);
    for (int k = 0; k <= 4; ++k) {
        const double v = lo + (hi - lo) * k / 4.0;
        const double t = t0 + (t1 - t0) * k / 4.0;
        svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"10\" text-anchor=\"end\">{:.4g}</text>\n",
                           x0 + left - 4.0, sy(v) + 3.0, v);
        svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"10\" text-anchor=\"middle\">{:.3g}</text>\n",
                           sx(t), y0 + top + ph + 14.0, t);
    }
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"11\" text-anchor=\"middle\">t [s]</text>\n",
                       x0 + left + pw / 2.0, y0 + top + ph + 30.0);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"11\">[{}]</text>\n", x0 + 4.0, y0 + 18.0,
                       escape(p.unit));
    double legend_x = x0 + left + pw;
    for (auto it = p.series.rbegin(); it != p.series.rend(); ++it) {
        legend_x -= 8.0 * static_cast<double>(it->label.size()) + 24.0;
        svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"11\" fill=\"{}\">{}</text>\n", legend_x,
                           y0 + 18.0, it->color, escape(it->label));
    }
    for (const Series& s : p.series) {
        std::string pts;
        for (const TraceRow& r : rows) {
            const double v = s.value(r);
            if (!std::isfinite(v)) continue;
            pts += fmt::format("{:.2f},{:.2f} ", sx(r.t), sy(v));
        }
        if (!pts.empty()) pts.pop_back();
        svg += fmt::format("<polyline class=\"series\" data-label=\"{}\" fill=\"none\" stroke=\"{}\" "
                           "stroke-width=\"1.2\" points=\"{}\"/>\n",
                           escape(s.label), s.color, pts);
    }
    svg += "</g>\n";
}

}  // namespace

std::string trace_svg(const std::vector<TraceRow>& rows, const std::string& title) {
    const double w = 560.0;
    const double h = 240.0;
    const auto ps = panels();
    const int rows_of_panels = static_cast<int>((ps.size() + 1) / 2);
    const double width = 2.0 * w;
    const double height = 40.0 + h * rows_of_panels;
    std::string svg = fmt::format(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\">\n"
        "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        "<text x=\"{:.1f}\" y=\"26\" font-size=\"18\" text-anchor=\"middle\">{}</text>\n",
        width, height, width, height, width / 2.0, escape(title));
    for (std::size_t k = 0; k < ps.size(); ++k) {
        const double x0 = (k % 2) * w;
        const double y0 = 40.0 + static_cast<double>(k / 2) * h;
        draw_panel(svg, ps[k], rows, x0, y0, w, h);
    }
    svg += "</svg>\n";
    return svg;
}

void write_trace_svg(const std::string& path, const std::vector<TraceRow>& rows, const std::string& title) {
    std::ofstream out = open_out(path);
    out << trace_svg(rows, title);
    if (!out) throw TraceIoError("write to '" + path + "' failed");
}

std::string to_key_value(const ScenarioSummary& s) {
    std::string out;
    auto add = [&out](const char* key, double v) { out += fmt::format("{}: {:.17g}\n", key, v); };
    out += fmt::format("completed: {}\n", s.completed);
    out += fmt::format("diverged: {}\n", s.diverged);
    if (!s.message.empty()) out += fmt::format("message: {}\n", s.message);
    add("t_end", s.t_end);
    out += fmt::format("steps: {}\n", s.steps);
    add("transient", s.transient);
    add("final_R_hat", s.final_R_hat);
    add("max_R_error", s.max_R_error);
    add("max_speed_error_rpm", s.max_speed_error_rpm);
    add("rms_speed_error_rpm", s.rms_speed_error_rpm);
    add("torque_rms_error", s.torque_rms_error);
    add("peak_torque_ref", s.peak_torque_ref);
    add("max_tracking_error", s.max_tracking_error);
    add("max_fast_norm", s.max_fast_norm);
    add("rms_fast_norm", s.rms_fast_norm);
    add("max_sigma_hat", s.max_sigma_hat);
    add("max_theta_err", s.max_theta_err);
    add("R_settling_time", s.R_settling_time);
    add("speed_settling_time", s.speed_settling_time);
    add("e_settling_time", s.e_settling_time);
    add("max_norm_drift", s.max_norm_drift);
    return out;
}

RegressorSamples read_regressor_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TraceIoError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw TraceIoError(path + ": empty regressor file");
    const std::vector<std::string> expected{"tau", "o11", "o12", "o21", "o22", "o31", "o32"};
    if (split(line, ',') != expected) {
        throw TraceIoError(path + ":1: expected header tau,o11,o12,o21,o22,o31,o32");
    }
    RegressorSamples out;
    std::vector<double> taus;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != expected.size()) {
            throw TraceIoError(fmt::format("{}:{}: expected 7 columns, found {}", path, n, cells.size()));
        }
        taus.push_back(parse_cell(cells[0], path, n));
        Mat32 m;
        m << parse_cell(cells[1], path, n), parse_cell(cells[2], path, n), parse_cell(cells[3], path, n),
            parse_cell(cells[4], path, n), parse_cell(cells[5], path, n), parse_cell(cells[6], path, n);
        out.samples.push_back(m);
    }
    if (taus.size() < 2) throw TraceIoError(path + ": need at least two samples");
    out.step = taus[1] - taus[0];
    if (!(out.step > 0.0) || std::abs(taus[0]) > 1e-12 * out.step) {
        throw TraceIoError(path + ": tau must start at 0 and increase");
    }
    for (std::size_t k = 1; k < taus.size(); ++k) {
        if (std::abs(taus[k] - taus[0] - static_cast<double>(k) * out.step) > 1e-6 * out.step) {
            throw TraceIoError(fmt::format("{}: tau grid is not uniform near row {}", path, k + 2));
        }
    }
    return out;
}

}  // namespace pmsm
