#include "nsflow/oracle.hpp"

#include "nsflow/sampled.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>

namespace nsflow {

void OracleReport::record(const Vector& input, const Vector& expected, const Vector& actual, double scale) {
  ++samples;
  const double abs_err = (expected - actual).norm();
  const double rel_err = abs_err / std::max(scale, std::numeric_limits<double>::min());
  if (std::isnan(abs_err) || rel_err > tolerance) failures.push_back({input, expected, actual});
  if (!std::isnan(abs_err)) {
    max_abs_error = std::max(max_abs_error, abs_err);
    max_rel_error = std::max(max_rel_error, rel_err);
  }
}

void OracleReport::merge(const OracleReport& other) {
  max_abs_error = std::max(max_abs_error, other.max_abs_error);
  max_rel_error = std::max(max_rel_error, other.max_rel_error);
  samples += other.samples;
  tolerance = std::max(tolerance, other.tolerance);
  failures.insert(failures.end(), other.failures.begin(), other.failures.end());
}

std::map<Permutation, Matrix> enumerate_saltations(const CornerModel& m) {
  const int n = m.num_surfaces();
  if (n > 8) throw Error(ErrorCode::CapExceeded, "enumerating saltations needs n <= 8, got " + std::to_string(n));
  std::map<Permutation, Matrix> out;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  do {
    Permutation sigma(order);
    out.emplace(sigma, saltation_matrix(m, sigma));
  } while (std::next_permutation(order.begin(), order.end()));
  return out;
}

Vector random_direction(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vector v(d);
  do {
    for (int i = 0; i < d; ++i) v[i] = normal(rng);
  } while (v.norm() < 1e-3);
  return v.normalized();
}

double sampled_ball_radius(const CornerModel& m) {
  validate_corner(m).throw_if_invalid();
  const Vector f_minus = m.f_minus();
  double dist = std::numeric_limits<double>::infinity();
  for (int j = 0; j < m.num_surfaces(); ++j) {
    dist = std::min(dist, 0.5 * m.eta().row(j).dot(f_minus) / m.eta().row(j).norm());
  }
  return 0.5 * dist;
}

OracleReport verify_b_against_sampled(const CornerModel& m, int num_samples, std::uint64_t seed, double tolerance) {
  OracleReport report;
  report.tolerance = tolerance;
  const double radius = sampled_ball_radius(m);
  const Vector rho_minus = m.rho_minus();
  const Vector rho_plus = m.rho_plus();
  std::mt19937_64 rng(seed);
  for (int s = 0; s < num_samples; ++s) {
    const Vector direction = random_direction(m.dim(), rng);
    // Halve until the sampled path clears every plane within unit time.
    double length = radius;
    SampledState end = sampled_flow_state(m, 1.0, rho_minus + length * direction);
    for (int k = 0; k < 60 && !end.b.all_plus(); ++k) {
      length *= 0.5;
      end = sampled_flow_state(m, 1.0, rho_minus + length * direction);
    }
    const Vector delta = length * direction;
    Vector expected = end.x - rho_plus;
    if (!end.b.all_plus()) expected.setConstant(std::numeric_limits<double>::quiet_NaN());
    report.record(delta, expected, b_evaluate(m, delta).delta_rho_plus, length);
  }
  return report;
}

OracleReport verify_cone_partition(const CornerModel& m, int num_samples, std::uint64_t seed, double tolerance) {
  const int n = m.num_surfaces();
  if (n > 6) throw Error(ErrorCode::CapExceeded, "cone partition check needs n <= 6");
  OracleReport report;
  report.tolerance = tolerance;
  const double radius = sampled_ball_radius(m);
  const Vector rho_minus = m.rho_minus();
  const auto pieces = enumerate_saltations(m);
  std::mt19937_64 rng(seed);
  for (int s = 0; s < num_samples; ++s) {
    const Vector delta = random_direction(m.dim(), rng);
    const BResult r = b_evaluate(m, delta);
    report.record(delta, r.delta_rho_plus, pieces.at(r.sigma) * delta, 1.0);

    const Vector tti = time_to_impact_sampled(m, rho_minus + radius * delta);
    Vector ordered(n);
    for (int k = 0; k < n; ++k) ordered[k] = tti[r.sigma[k]];
    bool sorted = true;
    for (int k = 0; k + 1 < n; ++k) sorted = sorted && ordered[k] <= ordered[k + 1] + 1e-12;
    if (!sorted) {
      Vector expected = ordered;
      std::sort(expected.begin(), expected.end());
      report.failures.push_back({delta, expected, ordered});
    }
  }
  return report;
}

OracleReport verify_piece_agreement(const CornerModel& m, int num_samples, std::uint64_t seed, double tolerance) {
  OracleReport report;
  report.tolerance = tolerance;
  const Triangulation tri = build_triangulation(m);
  const LinealitySplit split = lineality_split(m);
  std::map<Permutation, BarycentricPiece> pieces;
  std::mt19937_64 rng(seed);
  for (int s = 0; s < num_samples; ++s) {
    const Vector delta = random_direction(m.dim(), rng);
    const BResult r = b_evaluate(m, delta);
    auto it = pieces.find(r.sigma);
    if (it == pieces.end()) it = pieces.emplace(r.sigma, barycentric_piece(m, tri, split, r.sigma)).first;
    const double scale = std::max(1.0, r.delta_rho_plus.norm());
    report.record(delta, r.delta_rho_plus, saltation_matrix(m, r.sigma) * delta, scale);
    report.record(delta, r.delta_rho_plus, evaluate_with_piece(split, it->second, delta), scale);
  }
  return report;
}

std::vector<Vector> finite_difference_flow(const PiecewiseField& field, const Vector& x0, double t,
                                           const Vector& delta_x0, const std::vector<double>& alphas,
                                           const IntegrateOptions& opts) {
  const Vector base = integrate(field, x0, t, opts).endpoint();
  std::vector<Vector> quotients;
  quotients.reserve(alphas.size());
  for (double alpha : alphas) {
    if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidInput, "forward differences need alpha > 0");
    quotients.push_back((integrate(field, x0 + alpha * delta_x0, t, opts).endpoint() - base) / alpha);
  }
  return quotients;
}

ConvergenceStudy fd_convergence_study(int num_fields, int n, int d, int num_directions,
                                      const std::vector<double>& alphas, std::uint64_t seed,
                                      const IntegrateOptions& opts) {
  ConvergenceStudy study;
  study.alphas = alphas;
  study.mean_errors.assign(alphas.size(), 0.0);
  std::mt19937_64 rng(seed);
  int count = 0;
  for (int f = 0; f < num_fields; ++f) {
    const RandomCornerField rf = random_corner_field(n, d, rng(), opts);
    const FlowDerivative fd = corner_flow_derivative(rf.field, rf.x0, rf.horizon, opts);
    for (int k = 0; k < num_directions; ++k) {
      const Vector dx = random_direction(d, rng);
      const Vector predicted = corner_flow_bderivative(fd, dx);
      const auto quotients = finite_difference_flow(rf.field, rf.x0, rf.horizon, dx, alphas, opts);
      for (std::size_t a = 0; a < alphas.size(); ++a) study.mean_errors[a] += (quotients[a] - predicted).norm();
      ++count;
    }
  }
  for (double& e : study.mean_errors) e /= std::max(count, 1);
  for (std::size_t a = 0; a + 1 < alphas.size(); ++a) {
    study.ratios.push_back(study.mean_errors[a] / study.mean_errors[a + 1]);
  }
  return study;
}

double median_evaluate_seconds(const CornerModel& m, int batches, int calls_per_batch, std::uint64_t seed) {
  if (batches < 1 || calls_per_batch < 1) throw Error(ErrorCode::InvalidInput, "need at least one call");
  std::mt19937_64 rng(seed);
  std::vector<Vector> directions;
  for (int i = 0; i < 16; ++i) directions.push_back(random_direction(m.dim(), rng));
  std::vector<double> times;
  double sink = 0.0;
  for (int b = 0; b < batches; ++b) {
    const auto start = std::chrono::steady_clock::now();
    for (int c = 0; c < calls_per_batch; ++c) {
      sink += b_evaluate(m, directions[static_cast<std::size_t>(c) % directions.size()]).delta_t;
    }
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    times.push_back(elapsed.count() / calls_per_batch);
  }
  // Keeps the calls observable to the optimizer.
  if (std::isnan(sink)) times.push_back(0.0);
  std::nth_element(times.begin(), times.begin() + static_cast<long>(times.size() / 2), times.end());
  return times[times.size() / 2];
}

// ---------------------------------------------------------------------------
// Random models

namespace {

struct NormalFrame {
  Matrix eta;     // n x d, unit rows
  Matrix dual;    // d x n, eta * dual = I
  Matrix kernel;  // d x (d - n), orthonormal
};

// Unit rows with sigma_min >= 0.2 sigma_max. Independent Gaussian rows are
// rarely that well conditioned for large n, so near_orthogonal starts from
// orthonormal rows and perturbs them instead.
NormalFrame random_frame(int n, int d, std::mt19937_64& rng, bool near_orthogonal = false) {
  if (n < 1 || d < n) throw Error(ErrorCode::InvalidInput, "need 1 <= n <= d");
  std::normal_distribution<double> normal;
  for (;;) {
    Matrix eta(n, d);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < d; ++k) eta(i, k) = normal(rng);
    }
    if (near_orthogonal) {
      Matrix g(d, d);
      for (int i = 0; i < d; ++i) {
        for (int k = 0; k < d; ++k) g(i, k) = normal(rng);
      }
      const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
      eta = q.leftCols(n).transpose() + (0.3 / std::sqrt(static_cast<double>(d))) * eta;
    }
    for (int i = 0; i < n; ++i) eta.row(i).normalize();
    Eigen::JacobiSVD<Matrix> svd(eta, Eigen::ComputeFullV);
    const Vector sv = svd.singularValues();
    if (sv[n - 1] < 0.2 * sv[0]) continue;
    return NormalFrame{eta, pseudo_inverse(eta), svd.matrixV().rightCols(d - n)};
  }
}

Vector random_vector(int d, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = normal(rng);
  return v;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Maps a hash to [-1, 1).
double unit_from_hash(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0; }

}  // namespace

CornerModel random_corner_model(int n, int d, std::uint64_t seed) {
  if (n > 20) throw Error(ErrorCode::CapExceeded, "tabulated random models need n <= 20");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coeff(0.1, 3.0);
  for (;;) {
    const NormalFrame frame = random_frame(n, d, rng);
    const Vector rho = random_vector(d, rng, 1.0);
    std::vector<Vector> table;
    const std::size_t count = std::size_t{1} << n;
    table.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      Vector c(n);
      for (int j = 0; j < n; ++j) c[j] = coeff(rng);
      table.push_back(frame.dual * c + frame.kernel * random_vector(d - n, rng, 0.5));
    }
    CornerModel m = CornerModel::tabulated(rho, frame.eta, std::move(table));
    if (validate_corner(m).ok()) return m;
  }
}

CornerModel bench_corner_model(int n, int d, std::uint64_t seed) {
  if (n > 64) throw Error(ErrorCode::CapExceeded, "sign vectors hold at most 64 surfaces");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const NormalFrame frame = random_frame(n, d, rng, true);
  Vector w_coeff(n);
  for (int j = 0; j < n; ++j) w_coeff[j] = unit(rng);
  // eta_j . gamma(b) = 1.5 + s(b) w_j >= 0.5 for every orthant.
  const Vector base = frame.dual * Vector::Constant(n, 1.5) + frame.kernel * random_vector(d - n, rng, 0.5);
  const Vector wobble = frame.dual * w_coeff;
  const Vector drift = frame.kernel * random_vector(d - n, rng, 0.5);
  const std::uint64_t salt = splitmix64(seed);
  GammaFn gamma = [base, wobble, drift, salt](const SignVector& b) {
    const std::uint64_t h = splitmix64(b.mask() ^ salt);
    return Vector(base + unit_from_hash(h) * wobble + unit_from_hash(splitmix64(h)) * drift);
  };
  return CornerModel(random_vector(d, rng, 1.0), frame.eta, std::move(gamma));
}

RandomCornerField random_corner_field(int n, int d, std::uint64_t seed, const IntegrateOptions& opts) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coeff(0.5, 2.0);
  const double corner_time = 0.4321;
  const double horizon = 1.0;
  for (;;) {
    const NormalFrame frame = random_frame(n, d, rng);
    const Vector rho = random_vector(d, rng, 0.5);

    auto curvature = std::make_shared<std::vector<Matrix>>();
    for (int j = 0; j < n; ++j) {
      Matrix q(d, d);
      for (int r = 0; r < d; ++r) q.row(r) = random_vector(d, rng, 0.2).transpose();
      curvature->push_back(0.5 * (q + q.transpose()));
    }
    auto offsets = std::make_shared<std::vector<Vector>>();
    auto slopes = std::make_shared<std::vector<Matrix>>();
    for (std::uint64_t i = 0; i < (std::uint64_t{1} << n); ++i) {
      Vector c(n);
      for (int j = 0; j < n; ++j) c[j] = coeff(rng);
      offsets->push_back(frame.dual * c + frame.kernel * random_vector(d - n, rng, 0.5));
      Matrix a(d, d);
      for (int r = 0; r < d; ++r) a.row(r) = random_vector(d, rng, 0.2).transpose();
      slopes->push_back(a);
    }

    PiecewiseField field;
    field.dim = d;
    field.num_surfaces = n;
    const Matrix eta = frame.eta;
    field.h = [eta, rho, curvature](const Vector& x) {
      const Vector y = x - rho;
      Vector h = eta * y;
      for (std::size_t j = 0; j < curvature->size(); ++j) h[static_cast<int>(j)] += 0.5 * y.dot((*curvature)[j] * y);
      return h;
    };
    field.dh = [eta, rho, curvature](const Vector& x) {
      const Vector y = x - rho;
      Matrix dh = eta;
      for (std::size_t j = 0; j < curvature->size(); ++j) dh.row(static_cast<int>(j)) += ((*curvature)[j] * y).transpose();
      return dh;
    };
    field.selection = [rho, offsets, slopes](const SignVector& b, const Vector& x) {
      const std::size_t i = b.lex_index();
      return Vector((*offsets)[i] + (*slopes)[i] * (x - rho));
    };
    field.selection_jacobian = [slopes](const SignVector& b, const Vector&) { return (*slopes)[b.lex_index()]; };
    field.h_ref = Vector::Zero(n);

    // Backward RK4 on the all-minus selection from the corner.
    const SignVector minus(n, -1);
    const int steps = opts.steps;
    const double dt = -corner_time / steps;
    Vector x = rho;
    for (int k = 0; k < steps; ++k) {
      const Vector k1 = field.selection(minus, x);
      const Vector k2 = field.selection(minus, x + 0.5 * dt * k1);
      const Vector k3 = field.selection(minus, x + 0.5 * dt * k2);
      const Vector k4 = field.selection(minus, x + dt * k3);
      x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (!field.orthant(x).all_minus() || !(field.event_values(x).array() < -0.05).all()) continue;

    try {
      const Trajectory traj = integrate(field, x, horizon, opts);
      if (traj.events.size() != 1 || static_cast<int>(traj.events.front().surfaces.size()) != n) continue;
      if (!traj.segments.back().active_orthant.all_plus()) continue;
      if (std::abs(traj.events.front().time - corner_time) > 1e-8) continue;
    } catch (const Error&) {
      continue;
    }
    return RandomCornerField{std::move(field), rho, x, corner_time, horizon};
  }
}

}  // namespace nsflow
