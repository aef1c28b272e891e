#include "nsflow/sampled.hpp"

#include <algorithm>
#include <limits>

namespace nsflow {

SignVector sampled_orthant(const CornerModel& m, const Vector& x) {
  const Vector offset = x - m.rho();
  const Vector heights = m.eta() * offset;
  const double scale = std::max(1.0, offset.norm());
  SignVector b(m.num_surfaces(), -1);
  for (int j = 0; j < m.num_surfaces(); ++j) {
    const double tol = kPlaneTolerance * m.eta().row(j).norm() * scale;
    if (heights[j] >= -tol) b = b.with(j, 1);
  }
  return b;
}

namespace {

struct Crossing {
  int surface = -1;
  double time = std::numeric_limits<double>::infinity();
};

// Earliest plane reached from x moving with velocity g, among surfaces with b_j = -1.
Crossing next_crossing(const CornerModel& m, const SignVector& b, const Vector& x, const Vector& g) {
  Crossing next;
  const Vector offset = x - m.rho();
  for (int j = 0; j < m.num_surfaces(); ++j) {
    if (b.is_plus(j)) continue;
    const double speed = m.eta().row(j).dot(g);
    if (!(speed >= m.f_min())) {
      throw Error(ErrorCode::NotEventSelected,
                  "eta_" + std::to_string(j + 1) + " . gamma(" + b.key() + ") = " + std::to_string(speed));
    }
    const double s = std::max(0.0, -m.eta().row(j).dot(offset) / speed);
    if (s < next.time) {
      next.time = s;
      next.surface = j;
    }
  }
  return next;
}

}  // namespace

SampledState sampled_flow_state(const CornerModel& m, double t, const Vector& x0) {
  if (x0.size() != m.dim()) throw Error(ErrorCode::InvalidInput, "state has wrong dimension");
  if (!(t >= 0.0)) throw Error(ErrorCode::InvalidInput, "sampled flow is defined for t >= 0 only");
  SampledState state{x0, sampled_orthant(m, x0)};
  double remaining = t;
  while (remaining > 0.0 && !state.b.all_plus()) {
    const Vector g = m.gamma(state.b);
    const Crossing next = next_crossing(m, state.b, state.x, g);
    if (next.time >= remaining) {
      state.x.noalias() += remaining * g;
      return state;
    }
    state.x.noalias() += next.time * g;
    remaining -= next.time;
    state.b = state.b.with(next.surface, 1);
  }
  if (remaining > 0.0) state.x.noalias() += remaining * m.gamma(state.b);
  return state;
}

Vector sampled_flow(const CornerModel& m, double t, const Vector& x0) { return sampled_flow_state(m, t, x0).x; }

Vector time_to_impact_sampled(const CornerModel& m, const Vector& x) {
  if (x.size() != m.dim()) throw Error(ErrorCode::InvalidInput, "state has wrong dimension");
  Vector tti = Vector::Zero(m.num_surfaces());
  SignVector b = sampled_orthant(m, x);
  Vector pos = x;
  double elapsed = 0.0;
  while (!b.all_plus()) {
    const Vector g = m.gamma(b);
    const Crossing next = next_crossing(m, b, pos, g);
    pos.noalias() += next.time * g;
    elapsed += next.time;
    tti[next.surface] = elapsed;
    b = b.with(next.surface, 1);
  }
  return tti;
}

}  // namespace nsflow
