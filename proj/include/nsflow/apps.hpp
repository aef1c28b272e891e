#pragma once

// Ready-made models: the canonical piecewise-constant field and
// soft-constrained mechanical systems (including the vertical-plane biped).

#include "nsflow/core.hpp"

#include <cstdint>
#include <functional>
#include <optional>

namespace nsflow {

// ---------------------------------------------------------------------------
// Piecewise-constant field F(x) = 1 + delta(sign(x)), corner at the origin.

using DeltaFn = std::function<Vector(const SignVector&)>;

struct PwcModel {
  int dim = 0;
  DeltaFn delta;
};

struct PwcSystem {
  PiecewiseField field;
  CornerModel corner;
};

/// Throws InvalidDelta unless every component of every delta(b) exceeds -1.
PwcSystem pwc_model(const PwcModel& model);

/// delta(b) = -amount * b, the case with a linear B-derivative (1 - amount) / (1 + amount).
PwcModel pwc_linear(int dim, double amount);

/// Independent uniform(lo, hi) offsets per orthant and component, lo > -1.
PwcModel pwc_random(int dim, std::uint64_t seed, double lo = -0.9, double hi = 1.0);

// ---------------------------------------------------------------------------
// Mechanical systems with unilateral constraints a(q) >= 0, softened by
// spring-dampers that act only while a_j(q) < 0.

/// beta_j given the set of violated constraints (b_j = +1 where violated).
using DampingPolicy = std::function<double(const SignVector& violated, int j)>;

struct MechanicalModel {
  int config_dim = 0;
  int num_constraints = 0;
  std::function<Matrix(const Vector& q)> mass;
  std::function<Vector(const Vector& q, const Vector& qdot)> forcing;
  std::function<Vector(const Vector& q)> constraints;
  std::function<Matrix(const Vector& q)> constraint_jacobian;
  Vector stiffness;
  DampingPolicy damping;
};

DampingPolicy uniform_damping(Vector beta);

/// beta_1 = beta_2 = 1/2 while exactly one constraint is violated and 1 while both are.
DampingPolicy xor_damping();

/// Field on x = (q, qdot) with event functions h_j = -a_j(q), so b_j = +1
/// marks a violated constraint and activation is a - to + crossing. The
/// selection Jacobian is formed by central differences.
PiecewiseField soft_constraint_field(const MechanicalModel& mm, bool dissipative);

/// Rank-one saltation of one constraint surface: the velocity rows receive
/// -/+ (kappa_j a_j + beta_j Da_j qdot) M^{-1} Da_j^T Da_j / (Da_j qdot).
/// `violated_before` is the violated set just before the crossing (default:
/// none); it selects beta_j under set-dependent damping.
Matrix mech_saltation(const MechanicalModel& mm, const Vector& q, const Vector& qdot, int j, bool activating,
                      std::optional<SignVector> violated_before = std::nullopt);

struct BipedParams {
  double mass = 1.0;
  double inertia = 1.0;
  double leg_length = 1.0;
  double splay = 0.3;
  double gravity = 1.0;
  double stiffness = 100.0;
};

enum class BipedDamping { Uniform, Xor };

/// Planar body at (x, y, theta) with two massless legs at -/+ splay from
/// vertical above the substrate y = -x^2. Constraint j is the height of foot
/// j above the substrate.
MechanicalModel biped_model(const BipedParams& params, BipedDamping damping, double uniform_beta = 0.5);

/// State where a drop from (0, height, 0) at rest brings both feet to the
/// substrate together.
Vector biped_symmetric_touchdown(const BipedParams& params, double height = 1.0);

/// Corner model of the dissipative biped field at the symmetric touchdown
/// state, with both surfaces oriented along activation.
CornerModel biped_corner(const BipedParams& params, BipedDamping damping, double height = 1.0,
                         double uniform_beta = 0.5);

}  // namespace nsflow
