#pragma once

// B-derivative of the flow at a corner: the O(n^2 d) evaluation loop, the
// saltation-matrix pieces M_sigma, and the triangulated/barycentric
// representation used to cross-check them.

#include "nsflow/core.hpp"

#include <optional>

namespace nsflow {

struct BResult {
  Vector delta_rho_plus;
  Permutation sigma;
  double delta_t = 0.0;
};

enum class TieBreak { SmallestIndex, LargestIndex };

struct EvaluateOptions {
  TieBreak tie_break = TieBreak::SmallestIndex;
};

/// Evaluates B(delta_rho_minus) by stepping the sampled corner dynamics
/// through the n surfaces in the order they are reached. Uses O(d + n) extra
/// memory; gamma is only queried on the n+1 orthants along the path.
///
/// The caller is responsible for validate_corner(); this routine only checks
/// the denominators eta_j . gamma(b) on the orthants it visits, throwing
/// DegenerateDenominator when one falls below f_min.
BResult b_evaluate(const CornerModel& m, const Vector& delta_rho_minus, const EvaluateOptions& opts = {});

/// Crossing order of b_evaluate for the same input.
Permutation locate_cone(const CornerModel& m, const Vector& delta_rho, const EvaluateOptions& opts = {});

/// I + (f_plus - f_minus) eta^T / (eta . f_minus).
Matrix saltation_single(const Vector& f_minus, const Vector& f_plus, const Vector& eta_row);

/// Product of single-surface saltations along sigma; the first crossing is
/// the right-most factor.
Matrix saltation_matrix(const CornerModel& m, const Permutation& sigma);

/// Vertex data of the triangulated sampled flow. Vertex tables are indexed
/// by SignVector::lex_index(); simplices are generated on demand.
class Triangulation {
 public:
  Triangulation(int n, std::vector<Vector> z_minus, std::vector<Vector> z_plus);

  int num_surfaces() const noexcept { return n_; }
  std::size_t num_vertices() const noexcept { return z_minus_.size(); }

  const Vector& z_minus(const SignVector& b) const { return z_minus_[b.lex_index()]; }
  const Vector& z_plus(const SignVector& b) const { return z_plus_[b.lex_index()]; }

  /// [sigma({0..k}) for k = 0..n].
  std::vector<SignVector> simplex(const Permutation& sigma) const;

  /// Visits every maximal simplex in lexicographic order of sigma.
  void for_each_simplex(const std::function<void(const Permutation&, const std::vector<SignVector>&)>& visit) const;

 private:
  int n_;
  std::vector<Vector> z_minus_;
  std::vector<Vector> z_plus_;
};

/// Largest n for which the exponential representation is built by default.
inline constexpr int kDefaultTriangulationCap = 10;

/// zeta_b for one orthant: the point of rho + ker(eta)^perp lying on the
/// tangent planes of the surfaces with b_j = +1 and flowing onto the planes
/// with b_j = -1 in unit time.
Vector zeta_point(const CornerModel& m, const SignVector& b);

/// All 2^n vertex pairs (zeta_b, zeta_b + gamma(b)).
Triangulation zeta_points(const CornerModel& m, int cap = kDefaultTriangulationCap);

/// zeta_points after validating the corner.
Triangulation build_triangulation(const CornerModel& m, int cap = kDefaultTriangulationCap);

/// Orthogonal split of tangent space into the lineality space
/// L = ker(eta) + span(F_{-1}) and its complement.
struct LinealitySplit {
  Matrix basis_k;      // d x (d - n), orthonormal columns spanning ker(eta)
  Vector f_minus;
  Vector f_plus;
  Matrix proj_l;       // orthogonal projector onto L
  Matrix proj_l_perp;  // I - proj_l
  Matrix linear_map;   // action of B on L (applied after proj_l)

  int lineality_dim() const;
};

LinealitySplit lineality_split(const CornerModel& m);

/// The lineality map as written in the literature, I + (f_plus - f_minus) f_minus^T / |f_minus|^2.
/// Agrees with LinealitySplit::linear_map only when f_minus is orthogonal to ker(eta).
Matrix textbook_lineality_map(const Vector& f_minus, const Vector& f_plus);

struct BarycentricPiece {
  Permutation sigma;
  Matrix z_minus;  // d x (n-1)
  Matrix z_plus;   // d x (n-1)
  Matrix map;      // z_plus * pinv(z_minus)

  /// B restricted to L^perp on this cone, applied to an already projected vector.
  Vector apply_perp(const Vector& perp_part) const { return map * perp_part; }
};

/// Pseudo-inverse with singular-value cutoff 1e-12 * largest singular value.
Matrix pseudo_inverse(const Matrix& a);

/// Barycentric representation of B on L^perp intersected with the cone of sigma.
/// Vertex images are taken from the triangulation (zeta_b + gamma(b) - rho^+),
/// not from b_evaluate.
BarycentricPiece barycentric_piece(const CornerModel& m, const Triangulation& tri, const LinealitySplit& split,
                                   const Permutation& sigma);

/// B(delta) = linear_map * proj_l * delta + piece.map * proj_l_perp * delta.
Vector evaluate_with_piece(const LinealitySplit& split, const BarycentricPiece& piece, const Vector& delta);

}  // namespace nsflow
