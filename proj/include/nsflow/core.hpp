#pragma once

// Domain types for event-selected vector fields: orthant sign vectors,
// crossing-order permutations, the local data at a corner point, and the
// full piecewise field used by the trajectory integrator.

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nsflow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ErrorCode {
  InvalidInput,
  RankDeficient,
  NotEventSelected,
  DegenerateDenominator,
  CapExceeded,
  InvalidDelta,
  SingularMass,
  TangentialCrossing,
  StepTooLarge,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Orthant index b in {-1,+1}^n. Stored as a bit mask (bit j set iff b_j = +1),
/// so n is limited to 64 surfaces.
class SignVector {
 public:
  static constexpr int kMaxSize = 64;

  SignVector() = default;
  /// All entries equal to `value` (which must be -1 or +1).
  SignVector(int n, int value);

  static SignVector from_entries(std::span<const int> entries);
  /// Parses a key such as "-+-"; position j is surface j.
  static SignVector from_key(std::string_view key);
  /// Inverse of lex_index().
  static SignVector from_lex_index(int n, std::uint64_t index);

  int size() const noexcept { return n_; }
  int operator[](int j) const noexcept { return ((mask_ >> j) & 1U) ? 1 : -1; }
  bool is_plus(int j) const noexcept { return (mask_ >> j) & 1U; }
  bool all_plus() const noexcept;
  bool all_minus() const noexcept { return mask_ == 0; }
  int count_plus() const noexcept;

  SignVector with(int j, int value) const;
  SignVector negated() const;

  std::uint64_t mask() const noexcept { return mask_; }
  /// Position of this vector in the lexicographic enumeration of {-1,+1}^n
  /// (entry 0 most significant, -1 before +1).
  std::uint64_t lex_index() const noexcept;
  std::string key() const;
  std::vector<int> entries() const;

  friend bool operator==(const SignVector&, const SignVector&) = default;
  /// Lexicographic order with -1 < +1.
  friend std::strong_ordering operator<=>(const SignVector& a, const SignVector& b);

 private:
  int n_ = 0;
  std::uint64_t mask_ = 0;
};

/// Entry j is -1 if v_j < 0 and +1 otherwise.
SignVector sign_of(const Vector& v);

/// Surface-crossing order sigma in S_n, stored zero-based: order()[k] is the
/// surface crossed at step k.
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<int> zero_based);

  static Permutation identity(int n);
  static Permutation from_one_based(std::span<const int> one_based);

  int size() const noexcept { return static_cast<int>(order_.size()); }
  int operator[](int k) const noexcept { return order_[static_cast<std::size_t>(k)]; }
  const std::vector<int>& order() const noexcept { return order_; }
  std::vector<int> one_based() const;

  /// The sign vector with +1 exactly at the first k crossed surfaces.
  SignVector prefix_sign(int k) const;

  friend bool operator==(const Permutation&, const Permutation&) = default;
  friend auto operator<=>(const Permutation&, const Permutation&) = default;

 private:
  std::vector<int> order_;
};

/// Corner limits of the vector field, one vector per orthant.
using GammaFn = std::function<Vector(const SignVector&)>;

/// Local data at an intersection point rho of n event surfaces.
class CornerModel {
 public:
  static constexpr double kDefaultFMin = 1e-9;

  CornerModel(Vector rho, Matrix eta, GammaFn gamma, double f_min = kDefaultFMin);

  /// Builds gamma from a table indexed by SignVector::lex_index().
  static CornerModel tabulated(Vector rho, Matrix eta, std::vector<Vector> gamma_table,
                               double f_min = kDefaultFMin);

  int dim() const noexcept { return static_cast<int>(rho_.size()); }
  int num_surfaces() const noexcept { return static_cast<int>(eta_.rows()); }
  const Vector& rho() const noexcept { return rho_; }
  const Matrix& eta() const noexcept { return eta_; }
  double f_min() const noexcept { return f_min_; }
  Vector gamma(const SignVector& b) const { return gamma_(b); }
  const GammaFn& gamma_fn() const noexcept { return gamma_; }

  Vector f_minus() const { return gamma_(SignVector(num_surfaces(), -1)); }
  Vector f_plus() const { return gamma_(SignVector(num_surfaces(), +1)); }
  /// rho - F_{-1}/2, the point that flows through rho in unit time.
  Vector rho_minus() const { return rho_ - 0.5 * f_minus(); }
  Vector rho_plus() const { return rho_ + 0.5 * f_plus(); }

  /// Same model with a new gamma.
  CornerModel with_gamma(GammaFn gamma) const;
  /// Same model with eta rows scaled by positive factors.
  CornerModel with_scaled_normals(const Vector& row_scale) const;

 private:
  Vector rho_;
  Matrix eta_;
  GammaFn gamma_;
  double f_min_;
};

enum class ValidationStatus { Valid, RankDeficient, NotEventSelected };

struct ValidationReport {
  ValidationStatus status = ValidationStatus::Valid;
  int rank = 0;
  double min_dot = 0.0;
  int min_surface = -1;
  SignVector min_orthant;

  bool ok() const noexcept { return status == ValidationStatus::Valid; }
  std::string describe() const;
  void throw_if_invalid() const;
};

/// Numerical rank with cutoff 1e-12 * largest singular value.
int numerical_rank(const Matrix& a);

/// Checks rank(eta) = n and eta_j . gamma(b) >= f_min over all 2^n orthants.
ValidationReport validate_corner(const CornerModel& m);

/// Full event-selected field. The active selection at x is
/// sign(h(x) - h_ref); h_ref is h evaluated at the declared corner.
struct PiecewiseField {
  int dim = 0;
  int num_surfaces = 0;
  std::function<Vector(const Vector&)> h;
  std::function<Matrix(const Vector&)> dh;
  std::function<Vector(const SignVector&, const Vector&)> selection;
  std::function<Matrix(const SignVector&, const Vector&)> selection_jacobian;
  Vector h_ref;
  double f_min = CornerModel::kDefaultFMin;

  Vector event_values(const Vector& x) const;
  SignVector orthant(const Vector& x) const;
  Vector operator()(const Vector& x) const;
};

/// Corner model of `field` at a point rho on all of its surfaces. Row j of eta
/// is Dh_j(rho) scaled by orientation_j, which must be +1 or -1; orientation -1
/// describes a surface the trajectory crosses from + to -.
CornerModel corner_from_field(const PiecewiseField& field, const Vector& rho,
                              const SignVector& orientation);

}  // namespace nsflow
