#include "nsflow/apps.hpp"

#include <cmath>
#include <memory>
#include <random>

namespace nsflow {

// ---------------------------------------------------------------------------
// Piecewise-constant field

PwcSystem pwc_model(const PwcModel& model) {
  const int d = model.dim;
  if (d < 1 || d > 30) throw Error(ErrorCode::InvalidInput, "pwc dimension must be in [1, 30]");
  if (!model.delta) throw Error(ErrorCode::InvalidInput, "pwc delta map must be set");

  const std::size_t count = std::size_t{1} << d;
  std::vector<Vector> gamma_table;
  gamma_table.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const SignVector b = SignVector::from_lex_index(d, i);
    const Vector delta = model.delta(b);
    if (delta.size() != d) throw Error(ErrorCode::InvalidDelta, "delta(" + b.key() + ") has wrong dimension");
    if (!((delta.array() > -1.0).all())) {
      throw Error(ErrorCode::InvalidDelta, "delta(" + b.key() + ") has a component <= -1");
    }
    gamma_table.push_back(Vector::Ones(d) + delta);
  }

  CornerModel corner = CornerModel::tabulated(Vector::Zero(d), Matrix::Identity(d, d), gamma_table);
  const GammaFn gamma = corner.gamma_fn();

  PiecewiseField field;
  field.dim = d;
  field.num_surfaces = d;
  field.h = [](const Vector& x) { return x; };
  field.dh = [d](const Vector&) { return Matrix::Identity(d, d); };
  field.selection = [gamma](const SignVector& b, const Vector&) { return gamma(b); };
  field.selection_jacobian = [d](const SignVector&, const Vector&) { return Matrix::Zero(d, d); };
  field.h_ref = Vector::Zero(d);
  return PwcSystem{std::move(field), std::move(corner)};
}

PwcModel pwc_linear(int dim, double amount) {
  return PwcModel{dim, [dim, amount](const SignVector& b) {
                    Vector delta(dim);
                    for (int j = 0; j < dim; ++j) delta[j] = -amount * b[j];
                    return delta;
                  }};
}

PwcModel pwc_random(int dim, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(lo, hi);
  auto table = std::make_shared<std::vector<Vector>>();
  const std::size_t count = std::size_t{1} << dim;
  for (std::size_t i = 0; i < count; ++i) {
    Vector delta(dim);
    for (int j = 0; j < dim; ++j) delta[j] = unif(rng);
    table->push_back(delta);
  }
  return PwcModel{dim, [table](const SignVector& b) { return (*table)[b.lex_index()]; }};
}

// ---------------------------------------------------------------------------
// Mechanical systems

DampingPolicy uniform_damping(Vector beta) {
  return [beta = std::move(beta)](const SignVector&, int j) { return beta[j]; };
}

DampingPolicy xor_damping() {
  return [](const SignVector& violated, int) {
    switch (violated.count_plus()) {
      case 0: return 0.0;
      case 1: return 0.5;
      default: return 1.0;
    }
  };
}

namespace {

Vector solve_mass(const Matrix& mass, const Vector& rhs) {
  Eigen::LLT<Matrix> llt(mass);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularMass, "mass matrix is not positive definite");
  return llt.solve(rhs);
}

}  // namespace

PiecewiseField soft_constraint_field(const MechanicalModel& mm, bool dissipative) {
  const int m = mm.config_dim;
  const int n = mm.num_constraints;
  PiecewiseField field;
  field.dim = 2 * m;
  field.num_surfaces = n;
  field.h = [mm](const Vector& x) -> Vector { return -mm.constraints(x.head(mm.config_dim)); };
  field.dh = [mm, m, n](const Vector& x) {
    Matrix dh = Matrix::Zero(n, 2 * m);
    dh.leftCols(m) = -mm.constraint_jacobian(x.head(m));
    return dh;
  };
  field.selection = [mm, m, n, dissipative](const SignVector& b, const Vector& x) {
    const Vector q = x.head(m);
    const Vector qdot = x.tail(m);
    Vector force = mm.forcing(q, qdot);
    if (b.count_plus() > 0) {
      const Vector a = mm.constraints(q);
      const Matrix da = mm.constraint_jacobian(q);
      for (int j = 0; j < n; ++j) {
        if (!b.is_plus(j)) continue;
        double magnitude = mm.stiffness[j] * a[j];
        if (dissipative) magnitude += mm.damping(b, j) * da.row(j).dot(qdot);
        force -= magnitude * da.row(j).transpose();
      }
    }
    Vector out(2 * m);
    out.head(m) = qdot;
    out.tail(m) = solve_mass(mm.mass(q), force);
    return out;
  };
  const auto selection = field.selection;
  field.selection_jacobian = [selection, m](const SignVector& b, const Vector& x) {
    Matrix jac(2 * m, 2 * m);
    for (int i = 0; i < 2 * m; ++i) {
      const double step = 1e-6 * std::max(1.0, std::abs(x[i]));
      Vector xp = x;
      Vector xm = x;
      xp[i] += step;
      xm[i] -= step;
      jac.col(i) = (selection(b, xp) - selection(b, xm)) / (2.0 * step);
    }
    return jac;
  };
  field.h_ref = Vector::Zero(n);
  return field;
}

Matrix mech_saltation(const MechanicalModel& mm, const Vector& q, const Vector& qdot, int j, bool activating,
                      std::optional<SignVector> violated_before) {
  const int m = mm.config_dim;
  const SignVector before = violated_before.value_or(SignVector(mm.num_constraints, -1));
  const SignVector damping_set = activating ? before.with(j, 1) : before;
  const Vector da = mm.constraint_jacobian(q).row(j).transpose();
  const double rate = da.dot(qdot);
  if (rate == 0.0) throw Error(ErrorCode::TangentialCrossing, "Da_j . qdot = 0");
  const double a = mm.constraints(q)[j];
  const double magnitude = mm.stiffness[j] * a + mm.damping(damping_set, j) * rate;
  const double sign = activating ? -1.0 : 1.0;

  Matrix s = Matrix::Identity(2 * m, 2 * m);
  s.bottomLeftCorner(m, m) += (sign * magnitude / rate) * solve_mass(mm.mass(q), da) * da.transpose();
  return s;
}

// ---------------------------------------------------------------------------
// Biped

MechanicalModel biped_model(const BipedParams& p, BipedDamping damping, double uniform_beta) {
  if (!(p.mass > 0 && p.inertia > 0 && p.leg_length > 0 && p.gravity > 0 && p.stiffness > 0)) {
    throw Error(ErrorCode::InvalidInput, "biped parameters must be positive");
  }
  const double l = p.leg_length;
  const double psi = p.splay;
  // Foot j sits at (x + l sin(theta -/+ psi), y - l cos(theta -/+ psi)).
  auto leg_angle = [psi](const Vector& q, int j) { return q[2] + (j == 0 ? -psi : psi); };

  MechanicalModel mm;
  mm.config_dim = 3;
  mm.num_constraints = 2;
  mm.mass = [p](const Vector&) { return Matrix(Eigen::Vector3d(p.mass, p.mass, p.inertia).asDiagonal()); };
  mm.forcing = [p](const Vector&, const Vector&) { return Vector(Eigen::Vector3d(0.0, -p.mass * p.gravity, 0.0)); };
  mm.constraints = [l, leg_angle](const Vector& q) {
    Vector a(2);
    for (int j = 0; j < 2; ++j) {
      const double phi = leg_angle(q, j);
      const double foot_x = q[0] + l * std::sin(phi);
      a[j] = q[1] - l * std::cos(phi) + foot_x * foot_x;
    }
    return a;
  };
  mm.constraint_jacobian = [l, leg_angle](const Vector& q) {
    Matrix da(2, 3);
    for (int j = 0; j < 2; ++j) {
      const double phi = leg_angle(q, j);
      const double foot_x = q[0] + l * std::sin(phi);
      da(j, 0) = 2.0 * foot_x;
      da(j, 1) = 1.0;
      da(j, 2) = l * std::sin(phi) + 2.0 * foot_x * l * std::cos(phi);
    }
    return da;
  };
  mm.stiffness = Vector::Constant(2, p.stiffness);
  mm.damping = damping == BipedDamping::Xor ? xor_damping() : uniform_damping(Vector::Constant(2, uniform_beta));
  return mm;
}

Vector biped_symmetric_touchdown(const BipedParams& p, double height) {
  const double l = p.leg_length;
  const double s = std::sin(p.splay);
  const double contact_y = l * std::cos(p.splay) - l * l * s * s;
  if (!(height > contact_y)) throw Error(ErrorCode::InvalidInput, "drop height must exceed touchdown height");
  Vector x = Vector::Zero(6);
  x[1] = contact_y;
  x[4] = -std::sqrt(2.0 * p.gravity * (height - contact_y));
  return x;
}

CornerModel biped_corner(const BipedParams& p, BipedDamping damping, double height, double uniform_beta) {
  const PiecewiseField field = soft_constraint_field(biped_model(p, damping, uniform_beta), true);
  return corner_from_field(field, biped_symmetric_touchdown(p, height), SignVector(2, 1));
}

}  // namespace nsflow
