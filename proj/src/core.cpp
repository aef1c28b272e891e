#include "nsflow/core.hpp"

#include <bit>
#include <limits>
#include <memory>
#include <sstream>

namespace nsflow {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NotEventSelected: return "NotEventSelected";
    case ErrorCode::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorCode::CapExceeded: return "CapExceeded";
    case ErrorCode::InvalidDelta: return "InvalidDelta";
    case ErrorCode::SingularMass: return "SingularMass";
    case ErrorCode::TangentialCrossing: return "TangentialCrossing";
    case ErrorCode::StepTooLarge: return "StepTooLarge";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

// ---------------------------------------------------------------------------
// SignVector

SignVector::SignVector(int n, int value) : n_(n) {
  if (n < 0 || n > kMaxSize) throw Error(ErrorCode::InvalidInput, "sign vector size out of range");
  if (value != -1 && value != 1) throw Error(ErrorCode::InvalidInput, "sign entries must be -1 or +1");
  if (value == 1) mask_ = (n == 64) ? ~std::uint64_t{0} : ((std::uint64_t{1} << n) - 1);
}

SignVector SignVector::from_entries(std::span<const int> entries) {
  SignVector s(static_cast<int>(entries.size()), -1);
  for (std::size_t j = 0; j < entries.size(); ++j) {
    if (entries[j] == 1) {
      s.mask_ |= std::uint64_t{1} << j;
    } else if (entries[j] != -1) {
      throw Error(ErrorCode::InvalidInput, "sign entries must be -1 or +1");
    }
  }
  return s;
}

SignVector SignVector::from_key(std::string_view key) {
  SignVector s(static_cast<int>(key.size()), -1);
  for (std::size_t j = 0; j < key.size(); ++j) {
    if (key[j] == '+') {
      s.mask_ |= std::uint64_t{1} << j;
    } else if (key[j] != '-') {
      throw Error(ErrorCode::InvalidInput, "sign key must contain only '-' and '+': " + std::string(key));
    }
  }
  return s;
}

SignVector SignVector::from_lex_index(int n, std::uint64_t index) {
  SignVector s(n, -1);
  for (int j = 0; j < n; ++j) {
    if ((index >> (n - 1 - j)) & 1U) s.mask_ |= std::uint64_t{1} << j;
  }
  return s;
}

bool SignVector::all_plus() const noexcept { return count_plus() == n_; }

int SignVector::count_plus() const noexcept { return std::popcount(mask_); }

SignVector SignVector::with(int j, int value) const {
  if (j < 0 || j >= n_) throw Error(ErrorCode::InvalidInput, "sign index out of range");
  SignVector s = *this;
  if (value == 1) {
    s.mask_ |= std::uint64_t{1} << j;
  } else if (value == -1) {
    s.mask_ &= ~(std::uint64_t{1} << j);
  } else {
    throw Error(ErrorCode::InvalidInput, "sign entries must be -1 or +1");
  }
  return s;
}

SignVector SignVector::negated() const {
  SignVector s = *this;
  s.mask_ = SignVector(n_, 1).mask_ & ~mask_;
  return s;
}

std::uint64_t SignVector::lex_index() const noexcept {
  std::uint64_t index = 0;
  for (int j = 0; j < n_; ++j) index = (index << 1) | ((mask_ >> j) & 1U);
  return index;
}

std::string SignVector::key() const {
  std::string k(static_cast<std::size_t>(n_), '-');
  for (int j = 0; j < n_; ++j) {
    if (is_plus(j)) k[static_cast<std::size_t>(j)] = '+';
  }
  return k;
}

std::vector<int> SignVector::entries() const {
  std::vector<int> e(static_cast<std::size_t>(n_));
  for (int j = 0; j < n_; ++j) e[static_cast<std::size_t>(j)] = (*this)[j];
  return e;
}

std::strong_ordering operator<=>(const SignVector& a, const SignVector& b) {
  if (a.n_ != b.n_) return a.n_ <=> b.n_;
  const std::uint64_t diff = a.mask_ ^ b.mask_;
  if (diff == 0) return std::strong_ordering::equal;
  const int j = std::countr_zero(diff);
  return a.is_plus(j) ? std::strong_ordering::greater : std::strong_ordering::less;
}

SignVector sign_of(const Vector& v) {
  SignVector s(static_cast<int>(v.size()), -1);
  for (int j = 0; j < v.size(); ++j) {
    if (!(v[j] < 0.0)) s = s.with(j, 1);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Permutation

Permutation::Permutation(std::vector<int> zero_based) : order_(std::move(zero_based)) {
  std::vector<bool> seen(order_.size(), false);
  for (int k : order_) {
    if (k < 0 || k >= static_cast<int>(order_.size()) || seen[static_cast<std::size_t>(k)]) {
      throw Error(ErrorCode::InvalidInput, "permutation must be a bijection on {1..n}");
    }
    seen[static_cast<std::size_t>(k)] = true;
  }
}

Permutation Permutation::identity(int n) {
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) order[static_cast<std::size_t>(k)] = k;
  return Permutation(std::move(order));
}

Permutation Permutation::from_one_based(std::span<const int> one_based) {
  std::vector<int> order;
  order.reserve(one_based.size());
  for (int k : one_based) order.push_back(k - 1);
  return Permutation(std::move(order));
}

std::vector<int> Permutation::one_based() const {
  std::vector<int> out = order_;
  for (int& k : out) ++k;
  return out;
}

SignVector Permutation::prefix_sign(int k) const {
  SignVector s(size(), -1);
  for (int i = 0; i < k; ++i) s = s.with(order_[static_cast<std::size_t>(i)], 1);
  return s;
}

// ---------------------------------------------------------------------------
// CornerModel

CornerModel::CornerModel(Vector rho, Matrix eta, GammaFn gamma, double f_min)
    : rho_(std::move(rho)), eta_(std::move(eta)), gamma_(std::move(gamma)), f_min_(f_min) {
  if (eta_.rows() < 1) throw Error(ErrorCode::InvalidInput, "corner needs at least one surface");
  if (eta_.rows() > SignVector::kMaxSize) throw Error(ErrorCode::InvalidInput, "too many surfaces");
  if (eta_.cols() != rho_.size()) throw Error(ErrorCode::InvalidInput, "eta columns must match dim(rho)");
  if (!(f_min_ > 0.0)) throw Error(ErrorCode::InvalidInput, "f_min must be positive");
  if (!gamma_) throw Error(ErrorCode::InvalidInput, "gamma must be set");
}

CornerModel CornerModel::tabulated(Vector rho, Matrix eta, std::vector<Vector> gamma_table, double f_min) {
  const auto n = eta.rows();
  if (n > 30 || gamma_table.size() != (std::size_t{1} << n)) {
    throw Error(ErrorCode::InvalidInput, "gamma table must have 2^n entries");
  }
  for (const auto& g : gamma_table) {
    if (g.size() != rho.size()) throw Error(ErrorCode::InvalidInput, "gamma vectors must have dimension d");
  }
  auto table = std::make_shared<const std::vector<Vector>>(std::move(gamma_table));
  GammaFn fn = [table](const SignVector& b) { return (*table)[b.lex_index()]; };
  return CornerModel(std::move(rho), std::move(eta), std::move(fn), f_min);
}

CornerModel CornerModel::with_gamma(GammaFn gamma) const {
  return CornerModel(rho_, eta_, std::move(gamma), f_min_);
}

CornerModel CornerModel::with_scaled_normals(const Vector& row_scale) const {
  if (row_scale.size() != eta_.rows() || (row_scale.array() <= 0.0).any()) {
    throw Error(ErrorCode::InvalidInput, "row scales must be positive, one per surface");
  }
  return CornerModel(rho_, row_scale.asDiagonal() * eta_, gamma_, f_min_);
}

// ---------------------------------------------------------------------------
// Validation

int numerical_rank(const Matrix& a) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  const double cutoff = 1e-12 * s[0];
  int r = 0;
  for (int i = 0; i < s.size(); ++i) {
    if (s[i] > cutoff) ++r;
  }
  return r;
}

std::string ValidationReport::describe() const {
  std::ostringstream os;
  switch (status) {
    case ValidationStatus::Valid: os << "valid"; break;
    case ValidationStatus::RankDeficient: os << "RankDeficient"; break;
    case ValidationStatus::NotEventSelected: os << "NotEventSelected"; break;
  }
  os << " (rank " << rank << ", min eta_j.gamma(b) " << min_dot;
  if (min_surface >= 0) os << " at surface " << (min_surface + 1) << ", orthant " << min_orthant.key();
  os << ")";
  return os.str();
}

void ValidationReport::throw_if_invalid() const {
  if (status == ValidationStatus::RankDeficient) throw Error(ErrorCode::RankDeficient, describe());
  if (status == ValidationStatus::NotEventSelected) throw Error(ErrorCode::NotEventSelected, describe());
}

ValidationReport validate_corner(const CornerModel& m) {
  ValidationReport report;
  const int n = m.num_surfaces();
  report.rank = numerical_rank(m.eta());
  report.min_dot = std::numeric_limits<double>::infinity();
  if (n > 30) throw Error(ErrorCode::CapExceeded, "exhaustive orthant validation refused for n > 30");
  const std::uint64_t count = std::uint64_t{1} << n;
  for (std::uint64_t i = 0; i < count; ++i) {
    const SignVector b = SignVector::from_lex_index(n, i);
    const Vector g = m.gamma(b);
    if (g.size() != m.dim()) throw Error(ErrorCode::InvalidInput, "gamma(" + b.key() + ") has wrong dimension");
    const Vector dots = m.eta() * g;
    for (int j = 0; j < n; ++j) {
      if (dots[j] < report.min_dot) {
        report.min_dot = dots[j];
        report.min_surface = j;
        report.min_orthant = b;
      }
    }
  }
  if (report.rank < n) {
    report.status = ValidationStatus::RankDeficient;
  } else if (!(report.min_dot >= m.f_min())) {
    report.status = ValidationStatus::NotEventSelected;
  }
  return report;
}

// ---------------------------------------------------------------------------
// PiecewiseField

Vector PiecewiseField::event_values(const Vector& x) const {
  if (num_surfaces == 0) return Vector(0);
  Vector v = h(x);
  if (h_ref.size() == v.size()) v -= h_ref;
  return v;
}

SignVector PiecewiseField::orthant(const Vector& x) const { return sign_of(event_values(x)); }

Vector PiecewiseField::operator()(const Vector& x) const { return selection(orthant(x), x); }

CornerModel corner_from_field(const PiecewiseField& field, const Vector& rho, const SignVector& orientation) {
  if (orientation.size() != field.num_surfaces) {
    throw Error(ErrorCode::InvalidInput, "orientation must have one entry per surface");
  }
  Matrix eta = field.dh(rho);
  for (int j = 0; j < field.num_surfaces; ++j) eta.row(j) *= orientation[j];
  const std::uint64_t flip = orientation.negated().mask();
  GammaFn gamma = [field, rho, flip, orientation](const SignVector& b) {
    // b_j in the oriented frame corresponds to orientation_j * b_j in the field's frame.
    SignVector field_b = b;
    for (int j = 0; j < b.size(); ++j) {
      if ((flip >> j) & 1U) field_b = field_b.with(j, -b[j]);
    }
    return field.selection(field_b, rho);
  };
  return CornerModel(rho, std::move(eta), std::move(gamma), field.f_min);
}

}  // namespace nsflow
