#include "nsflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nsflow {

namespace {

Vector rk4_step(const PiecewiseField& field, const SignVector& b, const Vector& x, double dt) {
  const Vector k1 = field.selection(b, x);
  const Vector k2 = field.selection(b, x + 0.5 * dt * k1);
  const Vector k3 = field.selection(b, x + 0.5 * dt * k2);
  const Vector k4 = field.selection(b, x + dt * k3);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

int sign_of_value(double v) { return v < 0.0 ? -1 : 1; }

struct Localized {
  int surface;
  double fraction;  // of the current step, first point on the far side
};

// Bisects on the fraction of the step until |h_j| is below tolerance; the
// returned fraction always lies on the far side of the surface.
double bisect_crossing(const PiecewiseField& field, const SignVector& b, const Vector& x, double dt, int j,
                       const IntegrateOptions& opts) {
  const int start_sign = b[j];
  const double tol = opts.event_tolerance * std::max(1.0, x.norm());
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < opts.max_bisections; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double value = field.event_values(rk4_step(field, b, x, mid * dt))[j];
    if (sign_of_value(value) != start_sign) {
      hi = mid;
      if (std::abs(value) <= tol && (hi - lo) * dt <= opts.simultaneity_tolerance * 1e-3) break;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace

Trajectory integrate(const PiecewiseField& field, const Vector& x0, double t, const IntegrateOptions& opts) {
  if (x0.size() != field.dim) throw Error(ErrorCode::InvalidInput, "initial condition has wrong dimension");
  if (!(t >= 0.0)) throw Error(ErrorCode::InvalidInput, "integration time must be nonnegative");
  if (opts.steps < 1) throw Error(ErrorCode::InvalidInput, "need at least one integration step");

  const int n = field.num_surfaces;
  Trajectory traj;
  SignVector b = field.orthant(x0);
  traj.segments.push_back({{0.0}, {x0}, b});
  if (t == 0.0) return traj;

  const double h = t / opts.steps;
  auto grid_time = [&](int k) { return k >= opts.steps ? t : k * h; };

  double tau = 0.0;
  Vector x = x0;
  int k = 0;
  std::vector<int> flips_in_step(static_cast<std::size_t>(n), 0);
  // Surfaces flipped by look-ahead at a corner may sit a rounding error on
  // the old side until the trajectory moves away from the corner.
  std::vector<bool> pending(static_cast<std::size_t>(n), false);

  auto advance_grid = [&]() {
    while (k < opts.steps && grid_time(k + 1) <= tau) {
      ++k;
      std::fill(flips_in_step.begin(), flips_in_step.end(), 0);
    }
  };

  while (k < opts.steps) {
    const double target = grid_time(k + 1);
    const double dt = target - tau;
    if (dt <= 0.0) {
      ++k;
      continue;
    }
    const Vector x_new = rk4_step(field, b, x, dt);
    const Vector e_new = field.event_values(x_new);
    const double hysteresis = 1e3 * opts.event_tolerance * std::max(1.0, x_new.norm());

    std::vector<int> changed;
    for (int j = 0; j < n; ++j) {
      if (sign_of_value(e_new[j]) != b[j]) {
        if (pending[static_cast<std::size_t>(j)] && std::abs(e_new[j]) <= hysteresis) continue;
        changed.push_back(j);
      } else {
        pending[static_cast<std::size_t>(j)] = false;
      }
    }

    if (changed.empty()) {
      tau = target;
      x = x_new;
      traj.segments.back().times.push_back(tau);
      traj.segments.back().states.push_back(x);
      ++k;
      std::fill(flips_in_step.begin(), flips_in_step.end(), 0);
      continue;
    }

    std::vector<Localized> hits;
    for (int j : changed) hits.push_back({j, bisect_crossing(field, b, x, dt, j, opts)});
    std::sort(hits.begin(), hits.end(), [](const Localized& a, const Localized& c) {
      return a.fraction < c.fraction || (a.fraction == c.fraction && a.surface < c.surface);
    });

    // Group crossings that are simultaneous within tolerance.
    const double first_time = hits.front().fraction * dt;
    std::vector<int> group;
    double event_offset = first_time;
    for (const auto& hit : hits) {
      if (hit.fraction * dt - first_time <= opts.simultaneity_tolerance) {
        group.push_back(hit.surface);
        event_offset = std::max(event_offset, hit.fraction * dt);
      }
    }
    if (group.size() < hits.size() && hits[group.size()].fraction * dt - first_time <= 10.0 * opts.simultaneity_tolerance) {
      traj.warnings.push_back("crossings at t = " + std::to_string(tau + first_time) +
                              " are close to the simultaneity tolerance; treated as sequential");
    }

    // Look ahead for surfaces about to be crossed just past this step.
    Vector x_evt = rk4_step(field, b, x, event_offset);
    {
      const Vector e_evt = field.event_values(x_evt);
      const Matrix dh = field.dh(x_evt);
      const Vector f = field.selection(b, x_evt);
      double extra = 0.0;
      std::vector<int> ahead;
      for (int j = 0; j < n; ++j) {
        if (std::find(group.begin(), group.end(), j) != group.end()) continue;
        if (std::find(changed.begin(), changed.end(), j) != changed.end()) continue;
        const double rate = dh.row(j).dot(f);
        if (sign_of_value(e_evt[j]) != b[j] || rate == 0.0) continue;
        const double until = -e_evt[j] / rate;
        if (until >= 0.0 && until <= opts.simultaneity_tolerance && tau + event_offset + until <= t) {
          ahead.push_back(j);
          extra = std::max(extra, until);
        }
      }
      if (!ahead.empty()) {
        event_offset += extra;
        x_evt = rk4_step(field, b, x, event_offset);
        for (int j : ahead) {
          group.push_back(j);
          pending[static_cast<std::size_t>(j)] = true;
        }
      }
    }

    SignVector after = b;
    for (int j : group) after = after.with(j, -b[j]);

    EventRecord event;
    event.time = tau + event_offset;
    event.surfaces = group;
    event.state = x_evt;
    event.before = b;
    event.after = after;
    const Matrix dh = field.dh(x_evt);
    const Vector f_before = field.selection(b, x_evt);
    const Vector f_after = field.selection(after, x_evt);
    for (int j : group) {
      const double v_before = dh.row(j).dot(f_before);
      const double v_after = dh.row(j).dot(f_after);
      if (std::abs(v_before) < field.f_min || std::abs(v_after) < field.f_min ||
          sign_of_value(v_before) != sign_of_value(v_after)) {
        throw Error(ErrorCode::TangentialCrossing, "surface " + std::to_string(j + 1) + " at t = " +
                                                       std::to_string(event.time) + ": Dh.F = " +
                                                       std::to_string(v_before) + " -> " + std::to_string(v_after));
      }
      event.directions.push_back(sign_of_value(v_before));
      if (++flips_in_step[static_cast<std::size_t>(j)] > 1) {
        throw Error(ErrorCode::StepTooLarge, "surface " + std::to_string(j + 1) + " crossed twice within one step");
      }
    }

    tau = event.time;
    x = x_evt;
    b = after;
    traj.segments.back().times.push_back(tau);
    traj.segments.back().states.push_back(x);
    traj.events.push_back(std::move(event));
    traj.segments.push_back({{tau}, {x}, b});
    advance_grid();
  }
  return traj;
}

Matrix variational(const PiecewiseField& field, const TrajectorySegment& segment) {
  const int d = field.dim;
  Matrix fundamental = Matrix::Identity(d, d);
  const SignVector& b = segment.active_orthant;
  for (std::size_t i = 0; i + 1 < segment.times.size(); ++i) {
    const double dt = segment.times[i + 1] - segment.times[i];
    if (dt <= 0.0) continue;
    const Vector& x = segment.states[i];
    // RK4 on the augmented state (x, X) with the same step as the trajectory.
    const Vector k1 = field.selection(b, x);
    const Matrix m1 = field.selection_jacobian(b, x) * fundamental;
    const Vector x2 = x + 0.5 * dt * k1;
    const Matrix f2 = fundamental + 0.5 * dt * m1;
    const Vector k2 = field.selection(b, x2);
    const Matrix m2 = field.selection_jacobian(b, x2) * f2;
    const Vector x3 = x + 0.5 * dt * k2;
    const Matrix f3 = fundamental + 0.5 * dt * m2;
    const Vector k3 = field.selection(b, x3);
    const Matrix m3 = field.selection_jacobian(b, x3) * f3;
    const Vector x4 = x + dt * k3;
    const Matrix f4 = fundamental + dt * m3;
    const Matrix m4 = field.selection_jacobian(b, x4) * f4;
    fundamental += (dt / 6.0) * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
  }
  return fundamental;
}

CornerModel corner_for_event(const PiecewiseField& field, const EventRecord& event) {
  const int m = static_cast<int>(event.surfaces.size());
  // Local surface i is the i-th smallest field index involved in the event.
  std::vector<std::size_t> rank(event.surfaces.size());
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return event.surfaces[a] < event.surfaces[b]; });
  std::vector<int> surfaces(rank.size());
  const Matrix dh = field.dh(event.state);
  Matrix eta(m, field.dim);
  for (int i = 0; i < m; ++i) {
    const std::size_t k = rank[static_cast<std::size_t>(i)];
    surfaces[static_cast<std::size_t>(i)] = event.surfaces[k];
    eta.row(i) = event.directions[k] * dh.row(event.surfaces[k]);
  }
  GammaFn gamma = [field, event, surfaces](const SignVector& local) {
    SignVector full = event.before;
    for (int i = 0; i < local.size(); ++i) {
      if (local.is_plus(i)) {
        const int j = surfaces[static_cast<std::size_t>(i)];
        full = full.with(j, event.after[j]);
      }
    }
    return field.selection(full, event.state);
  };
  return CornerModel(event.state, std::move(eta), std::move(gamma), field.f_min);
}

namespace {

Matrix event_saltation(const PiecewiseField& field, const EventRecord& event) {
  const int j = event.surfaces.front();
  const Vector eta = event.directions.front() * field.dh(event.state).row(j).transpose();
  return saltation_single(field.selection(event.before, event.state), field.selection(event.after, event.state), eta);
}

}  // namespace

Matrix derivative_through_single_event(const PiecewiseField& field, const Vector& x0, double t,
                                       const IntegrateOptions& opts) {
  const Trajectory traj = integrate(field, x0, t, opts);
  if (traj.events.size() != 1 || traj.events.front().is_corner()) {
    throw Error(ErrorCode::InvalidInput, "expected exactly one single-surface crossing, found " +
                                             std::to_string(traj.events.size()) + " events");
  }
  return variational(field, traj.segments[1]) * event_saltation(field, traj.events.front()) *
         variational(field, traj.segments[0]);
}

FlowDerivative corner_flow_derivative(const PiecewiseField& field, const Vector& x0, double t,
                                      const IntegrateOptions& opts) {
  const Trajectory traj = integrate(field, x0, t, opts);
  if (traj.events.size() != 1 || !traj.events.front().is_corner()) {
    throw Error(ErrorCode::InvalidInput, "expected exactly one corner event, found " +
                                             std::to_string(traj.events.size()) + " events");
  }
  return FlowDerivative{variational(field, traj.segments[0]), variational(field, traj.segments[1]),
                        corner_for_event(field, traj.events.front())};
}

Vector corner_flow_bderivative(const FlowDerivative& fd, const Vector& delta_x0) {
  return fd.post_matrix * b_evaluate(fd.corner, fd.pre_matrix * delta_x0).delta_rho_plus;
}

Permutation transition_sequence(const FlowDerivative& fd, const Vector& delta_x0) {
  return locate_cone(fd.corner, fd.pre_matrix * delta_x0);
}

Vector chained_bderivative(const PiecewiseField& field, const Trajectory& trajectory, const Vector& delta_x0) {
  Vector delta = delta_x0;
  for (std::size_t i = 0; i < trajectory.segments.size(); ++i) {
    delta = variational(field, trajectory.segments[i]) * delta;
    if (i < trajectory.events.size()) {
      const EventRecord& event = trajectory.events[i];
      if (event.is_corner()) {
        delta = b_evaluate(corner_for_event(field, event), delta).delta_rho_plus;
      } else {
        delta = event_saltation(field, event) * delta;
      }
    }
  }
  return delta;
}

}  // namespace nsflow
