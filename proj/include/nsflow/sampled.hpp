#pragma once

// Closed-form flow of the sampled system: in each orthant of the tangent
// planes at rho the field is frozen at its corner limit gamma(b), so the flow
// is piecewise affine and can be stepped exactly from plane to plane.

#include "nsflow/core.hpp"

namespace nsflow {

struct SampledState {
  Vector x;
  SignVector b;
};

/// Tolerance (relative to |eta_j| |x - rho| + |eta_j| |gamma|) under which a
/// point counts as lying on a tangent plane, and hence as already crossed.
inline constexpr double kPlaneTolerance = 1e-12;

/// Orthant of the sampled system at x; points on a plane map to +1.
SignVector sampled_orthant(const CornerModel& m, const Vector& x);

/// Exact time-t flow of the sampled field, t >= 0.
Vector sampled_flow(const CornerModel& m, double t, const Vector& x0);

/// Same, also returning the orthant reached.
SampledState sampled_flow_state(const CornerModel& m, double t, const Vector& x0);

/// Forward time at which the sampled flow from x reaches each tangent plane;
/// zero for planes already reached or crossed.
Vector time_to_impact_sampled(const CornerModel& m, const Vector& x);

}  // namespace nsflow
