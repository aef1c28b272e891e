#pragma once

// JSON and CSV encodings of models, results and trajectories. Floats are
// written in shortest round-trip form.

#include "nsflow/bderiv.hpp"
#include "nsflow/core.hpp"
#include "nsflow/flow.hpp"
#include "nsflow/oracle.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>

namespace nsflow {

using Json = nlohmann::json;

std::string format_double(double value);

/// Comma-joined components.
std::string format_vector(const Vector& v);

/// Parses "0.6,-0.9"; throws InvalidInput on malformed text.
Vector parse_vector(const std::string& text);

Json to_json(const Vector& v);
Vector vector_from_json(const Json& j);

/// {"d", "n", "rho", "eta", "gamma": {"-+": [...]}, "f_min"}; enumerates 2^n orthants (n <= 20).
Json corner_to_json(const CornerModel& m);

/// Inverse of corner_to_json; every orthant key must be present.
CornerModel corner_from_json(const Json& j);

CornerModel load_corner(const std::string& path);

/// {"z_minus": {key: [...]}, "z_plus": {...}, "simplices": [{"sigma": [1-based], "vertices": [keys]}]}.
Json triangulation_to_json(const Triangulation& tri);

/// {"delta_rho_plus", "sigma" (1-based), "delta_t"}.
Json bresult_to_json(const BResult& r);

/// Header t,x_1..x_d,orthant then one row per stored state.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

/// [{"time", "surface": 1-based index or "corner", "state"}].
Json events_to_json(const Trajectory& traj);

Json report_to_json(const OracleReport& report);

}  // namespace nsflow
