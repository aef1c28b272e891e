#pragma once

// Trajectories and sensitivities of full event-selected fields: fixed-step
// RK4 inside each orthant, bisection event localization, variational
// equations along smooth segments, and the saltation / B-derivative jumps at
// surface crossings.

#include "nsflow/bderiv.hpp"
#include "nsflow/core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace nsflow {

struct IntegrateOptions {
  int steps = 1 << 12;
  /// Bound on |h_j| at a localized event, relative to max(1, |x|).
  double event_tolerance = 1e-11;
  /// Crossings closer than this (in time) are merged into one corner event.
  double simultaneity_tolerance = 1e-9;
  int max_bisections = 200;
};

struct TrajectorySegment {
  std::vector<double> times;
  std::vector<Vector> states;
  SignVector active_orthant;
};

struct EventRecord {
  double time = 0.0;
  std::vector<int> surfaces;  // zero-based, in order of localized crossing time
  Vector state;
  SignVector before;
  SignVector after;
  /// +1 where the surface is crossed from - to +, -1 otherwise; one entry per surface in `surfaces`.
  std::vector<int> directions;

  bool is_corner() const noexcept { return surfaces.size() > 1; }
};

struct Trajectory {
  std::vector<TrajectorySegment> segments;
  std::vector<EventRecord> events;
  std::vector<std::string> warnings;

  const Vector& endpoint() const { return segments.back().states.back(); }
};

/// Integrates x' = F(x) from x0 over [0, t].
Trajectory integrate(const PiecewiseField& field, const Vector& x0, double t, const IntegrateOptions& opts = {});

/// Fundamental matrix of the variational equation along one segment.
Matrix variational(const PiecewiseField& field, const TrajectorySegment& segment);

/// Corner model for a (possibly multi-surface) event, restricted to the
/// surfaces involved (in increasing field index) and oriented along the
/// crossing directions.
CornerModel corner_for_event(const PiecewiseField& field, const EventRecord& event);

/// D phi_t(x0) for a trajectory with exactly one single-surface crossing:
/// post * saltation * pre.
Matrix derivative_through_single_event(const PiecewiseField& field, const Vector& x0, double t,
                                       const IntegrateOptions& opts = {});

struct FlowDerivative {
  Matrix pre_matrix;   // D_x phi(s, x0)
  Matrix post_matrix;  // D_x phi(t - s, rho)
  CornerModel corner;
};

/// Assembles pre/post matrices around the single corner event of the
/// trajectory from x0; throws InvalidInput if there is not exactly one event
/// or it is not a corner.
FlowDerivative corner_flow_derivative(const PiecewiseField& field, const Vector& x0, double t,
                                      const IntegrateOptions& opts = {});

/// post * B(pre * delta_x0).
Vector corner_flow_bderivative(const FlowDerivative& fd, const Vector& delta_x0);

/// Crossing order predicted for the perturbed trajectory x0 + alpha * delta_x0.
Permutation transition_sequence(const FlowDerivative& fd, const Vector& delta_x0);

/// B-derivative along an integrated trajectory with any number of isolated
/// single-surface or corner events, composed by the chain rule.
Vector chained_bderivative(const PiecewiseField& field, const Trajectory& trajectory, const Vector& delta_x0);

}  // namespace nsflow
