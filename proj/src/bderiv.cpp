#include "nsflow/bderiv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace nsflow {

namespace {

constexpr double kTieTolerance = 1e-13;

void check_direction(const CornerModel& m, const Vector& v) {
  if (v.size() != m.dim()) throw Error(ErrorCode::InvalidInput, "tangent vector has wrong dimension");
}

// Shared by b_evaluate and locate_cone. `order` receives the crossing
// sequence; the return value is the accumulated time offset.
double run_corner_loop(const CornerModel& m, Vector& delta, std::vector<int>& order, TieBreak tie_break) {
  const int n = m.num_surfaces();
  const Matrix& eta = m.eta();
  SignVector b(n, -1);
  double delta_t = 0.0;
  order.clear();
  order.reserve(static_cast<std::size_t>(n));
  Vector g(m.dim());

  while (!b.all_plus()) {
    g = m.gamma(b);
    int best = -1;
    double best_tau = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (b.is_plus(j)) continue;
      const double denom = eta.row(j).dot(g);
      if (!(denom >= m.f_min())) {
        throw Error(ErrorCode::DegenerateDenominator,
                    "eta_" + std::to_string(j + 1) + " . gamma(" + b.key() + ") = " + std::to_string(denom));
      }
      const double tau = -eta.row(j).dot(delta) / denom;
      // Times within a few ulps of each other are ties; B is continuous across
      // the shared face, so either choice gives the same output.
      if (best >= 0) {
        const double slack = kTieTolerance * std::max(1.0, std::abs(best_tau));
        const bool better = tie_break == TieBreak::SmallestIndex ? tau < best_tau - slack : tau <= best_tau + slack;
        if (!better) continue;
      }
      best = j;
      best_tau = tau;
    }
    delta_t += best_tau;
    delta.noalias() += best_tau * g;
    b = b.with(best, 1);
    order.push_back(best);
  }
  delta.noalias() -= delta_t * m.gamma(b);
  return delta_t;
}

}  // namespace

BResult b_evaluate(const CornerModel& m, const Vector& delta_rho_minus, const EvaluateOptions& opts) {
  check_direction(m, delta_rho_minus);
  BResult result;
  result.delta_rho_plus = delta_rho_minus;
  std::vector<int> order;
  result.delta_t = run_corner_loop(m, result.delta_rho_plus, order, opts.tie_break);
  result.sigma = Permutation(std::move(order));
  return result;
}

Permutation locate_cone(const CornerModel& m, const Vector& delta_rho, const EvaluateOptions& opts) {
  return b_evaluate(m, delta_rho, opts).sigma;
}

Matrix saltation_single(const Vector& f_minus, const Vector& f_plus, const Vector& eta_row) {
  if (f_minus.size() != f_plus.size() || f_minus.size() != eta_row.size()) {
    throw Error(ErrorCode::InvalidInput, "saltation operands must share dimension");
  }
  const double denom = eta_row.dot(f_minus);
  if (!(denom > 0.0)) {
    throw Error(ErrorCode::DegenerateDenominator, "eta . f_minus = " + std::to_string(denom));
  }
  const auto d = f_minus.size();
  Matrix s = Matrix::Identity(d, d);
  s.noalias() += (f_plus - f_minus) * eta_row.transpose() / denom;
  return s;
}

Matrix saltation_matrix(const CornerModel& m, const Permutation& sigma) {
  const int n = m.num_surfaces();
  if (sigma.size() != n) throw Error(ErrorCode::InvalidInput, "permutation size must equal n");
  const int d = m.dim();
  Matrix product = Matrix::Identity(d, d);
  Vector before = m.gamma(sigma.prefix_sign(0));
  for (int k = 0; k < n; ++k) {
    const int j = sigma[k];
    const Vector after = m.gamma(sigma.prefix_sign(k + 1));
    const Vector eta_row = m.eta().row(j).transpose();
    const double denom = eta_row.dot(before);
    if (!(denom >= m.f_min())) {
      throw Error(ErrorCode::DegenerateDenominator, "eta_" + std::to_string(j + 1) + " . F = " + std::to_string(denom));
    }
    // Rank-one update applied on the left: product <- (I + u eta^T / denom) product.
    const Vector u = (after - before) / denom;
    const Eigen::RowVectorXd row = eta_row.transpose() * product;
    product.noalias() += u * row;
    before = after;
  }
  return product;
}

// ---------------------------------------------------------------------------
// Triangulation

Triangulation::Triangulation(int n, std::vector<Vector> z_minus, std::vector<Vector> z_plus)
    : n_(n), z_minus_(std::move(z_minus)), z_plus_(std::move(z_plus)) {
  if (z_minus_.size() != (std::size_t{1} << n) || z_plus_.size() != z_minus_.size()) {
    throw Error(ErrorCode::InvalidInput, "triangulation needs 2^n vertex pairs");
  }
}

std::vector<SignVector> Triangulation::simplex(const Permutation& sigma) const {
  if (sigma.size() != n_) throw Error(ErrorCode::InvalidInput, "permutation size must equal n");
  std::vector<SignVector> vertices;
  vertices.reserve(static_cast<std::size_t>(n_ + 1));
  for (int k = 0; k <= n_; ++k) vertices.push_back(sigma.prefix_sign(k));
  return vertices;
}

void Triangulation::for_each_simplex(
    const std::function<void(const Permutation&, const std::vector<SignVector>&)>& visit) const {
  std::vector<int> order(static_cast<std::size_t>(n_));
  std::iota(order.begin(), order.end(), 0);
  do {
    const Permutation sigma(order);
    visit(sigma, simplex(sigma));
  } while (std::next_permutation(order.begin(), order.end()));
}

namespace {

void require_full_rank(const CornerModel& m) {
  if (numerical_rank(m.eta()) < m.num_surfaces()) {
    throw Error(ErrorCode::RankDeficient, "surface normals are linearly dependent");
  }
}

Vector zeta_from_pinv(const CornerModel& m, const Matrix& eta_pinv, const SignVector& b, const Vector& gamma_b) {
  // zeta_b - rho = eta^T w is the minimum-norm solution of eta (zeta_b - rho) = r
  // with r_j = 0 on crossed surfaces and -eta_j . gamma(b) on the rest.
  Vector r = -(m.eta() * gamma_b);
  for (int j = 0; j < m.num_surfaces(); ++j) {
    if (b.is_plus(j)) r[j] = 0.0;
  }
  return m.rho() + eta_pinv * r;
}

}  // namespace

Vector zeta_point(const CornerModel& m, const SignVector& b) {
  require_full_rank(m);
  return zeta_from_pinv(m, pseudo_inverse(m.eta()), b, m.gamma(b));
}

Triangulation zeta_points(const CornerModel& m, int cap) {
  const int n = m.num_surfaces();
  if (n > cap) {
    throw Error(ErrorCode::CapExceeded, "n = " + std::to_string(n) + " exceeds triangulation cap " +
                                            std::to_string(cap) + "; use b_evaluate instead");
  }
  require_full_rank(m);
  const Matrix eta_pinv = pseudo_inverse(m.eta());
  const std::size_t count = std::size_t{1} << n;
  std::vector<Vector> z_minus;
  std::vector<Vector> z_plus;
  z_minus.reserve(count);
  z_plus.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const SignVector b = SignVector::from_lex_index(n, i);
    const Vector g = m.gamma(b);
    z_minus.push_back(zeta_from_pinv(m, eta_pinv, b, g));
    z_plus.push_back(z_minus.back() + g);
  }
  return Triangulation(n, std::move(z_minus), std::move(z_plus));
}

Triangulation build_triangulation(const CornerModel& m, int cap) {
  if (m.num_surfaces() > cap) return zeta_points(m, cap);
  validate_corner(m).throw_if_invalid();
  return zeta_points(m, cap);
}

// ---------------------------------------------------------------------------
// Lineality split and barycentric pieces

int LinealitySplit::lineality_dim() const { return numerical_rank(proj_l); }

Matrix textbook_lineality_map(const Vector& f_minus, const Vector& f_plus) {
  const auto d = f_minus.size();
  return Matrix::Identity(d, d) + (f_plus - f_minus) * f_minus.transpose() / f_minus.squaredNorm();
}

LinealitySplit lineality_split(const CornerModel& m) {
  require_full_rank(m);
  const int n = m.num_surfaces();
  const int d = m.dim();
  LinealitySplit split;
  Eigen::JacobiSVD<Matrix> svd(m.eta(), Eigen::ComputeFullV);
  split.basis_k = svd.matrixV().rightCols(d - n);
  split.f_minus = m.f_minus();
  split.f_plus = m.f_plus();

  // Component of F_{-1} orthogonal to the kernel; nonzero since eta F_{-1} > 0.
  const Vector p = split.f_minus - split.basis_k * (split.basis_k.transpose() * split.f_minus);
  const double p2 = p.squaredNorm();
  if (!(p2 > 0.0)) throw Error(ErrorCode::DegenerateDenominator, "F_{-1} lies in ker(eta)");

  split.proj_l = split.basis_k * split.basis_k.transpose() + p * p.transpose() / p2;
  split.proj_l_perp = Matrix::Identity(d, d) - split.proj_l;
  split.linear_map = Matrix::Identity(d, d) + (split.f_plus - split.f_minus) * p.transpose() / p2;
  return split;
}

Matrix pseudo_inverse(const Matrix& a) {
  if (a.size() == 0) return Matrix::Zero(a.cols(), a.rows());
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod;
  cod.setThreshold(1e-12);
  cod.compute(a);
  return cod.pseudoInverse();
}

BarycentricPiece barycentric_piece(const CornerModel& m, const Triangulation& tri, const LinealitySplit& split,
                                   const Permutation& sigma) {
  const int n = m.num_surfaces();
  const int d = m.dim();
  if (sigma.size() != n) throw Error(ErrorCode::InvalidInput, "permutation size must equal n");
  BarycentricPiece piece;
  piece.sigma = sigma;
  piece.z_minus.resize(d, n - 1);
  piece.z_plus.resize(d, n - 1);
  const Vector rho_minus = m.rho_minus();
  const Vector rho_plus = m.rho_plus();
  for (int k = 1; k <= n - 1; ++k) {
    const SignVector b = sigma.prefix_sign(k);
    const Vector offset = tri.z_minus(b) - rho_minus;
    // B(zeta_b - rho^-) = zeta_b + gamma(b) - rho^+; remove the lineality part.
    piece.z_minus.col(k - 1) = split.proj_l_perp * offset;
    piece.z_plus.col(k - 1) = (tri.z_plus(b) - rho_plus) - split.linear_map * (split.proj_l * offset);
  }
  if (n > 1 && numerical_rank(piece.z_minus) < n - 1) {
    throw Error(ErrorCode::RankDeficient, "barycentric vertex columns are dependent");
  }
  piece.map = piece.z_plus * pseudo_inverse(piece.z_minus);
  return piece;
}

Vector evaluate_with_piece(const LinealitySplit& split, const BarycentricPiece& piece, const Vector& delta) {
  return split.linear_map * (split.proj_l * delta) + piece.apply_perp(split.proj_l_perp * delta);
}

}  // namespace nsflow
