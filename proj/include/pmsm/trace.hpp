#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "pmsm/scenario.hpp"

namespace pmsm {

/// File or format problem while reading or writing trace data; the message names the path.
class TraceIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Column names of the closed-loop trace, in file order.
const std::vector<std::string>& trace_columns();

/// Row values in trace_columns() order.
std::vector<double> trace_row_values(const TraceRow& row);

/// CSV with a header row and 17 significant digits, so read_trace_csv round-trips exactly.
void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows);
void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows);
std::vector<TraceRow> read_trace_csv(std::istream& in, const std::string& source = "<stream>");
std::vector<TraceRow> read_trace_csv(const std::string& path);

void write_boundary_layer_csv(const std::string& path, const std::vector<BoundaryLayerRow>& rows);

/// One SVG document with a chart per panel: speeds, speed error, attitude error,
/// xi, resistance, torques, currents and tracking error.
std::string trace_svg(const std::vector<TraceRow>& rows, const std::string& title);
void write_trace_svg(const std::string& path, const std::vector<TraceRow>& rows, const std::string& title);

/// "key: value" lines.
std::string to_key_value(const ScenarioSummary& s);

/// Regressor samples from a CSV with columns tau,o11,o12,o21,o22,o31,o32 on a uniform grid.
struct RegressorSamples {
    std::vector<Mat32> samples;
    double step = 0.0;
};
RegressorSamples read_regressor_csv(const std::string& path);

}  // namespace pmsm
