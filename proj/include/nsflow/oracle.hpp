#pragma once

// Brute-force verifiers for the B-derivative machinery, and the random model
// generators that drive them.

#include "nsflow/bderiv.hpp"
#include "nsflow/core.hpp"
#include "nsflow/flow.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace nsflow {

struct OracleFailure {
  Vector input;
  Vector expected;
  Vector actual;
};

struct OracleReport {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::size_t samples = 0;
  double tolerance = 0.0;
  std::vector<OracleFailure> failures;

  bool ok() const noexcept { return failures.empty(); }

  /// Records one comparison; relative error is measured against `scale`.
  void record(const Vector& input, const Vector& expected, const Vector& actual, double scale);
  void merge(const OracleReport& other);
};

/// M_sigma for every sigma in S_n, keyed by sigma. Throws CapExceeded for n > 8.
std::map<Permutation, Matrix> enumerate_saltations(const CornerModel& m);

/// Half the distance from rho^- to the nearest tangent plane; requires
/// n <= 30 (uses validate_corner).
double sampled_ball_radius(const CornerModel& m);

/// Compares b_evaluate(delta) with sampled_flow(1, rho^- + delta) - rho^+ for
/// random delta of length sampled_ball_radius(m), halved while the sampled
/// path from rho^- + delta has not cleared every plane by t = 1. The relative
/// error is taken against |delta|.
OracleReport verify_b_against_sampled(const CornerModel& m, int num_samples, std::uint64_t seed,
                                      double tolerance = 1e-11);

/// For random delta: the sampled time-to-impact order from rho^- + eps delta
/// agrees with locate_cone(delta), and M_sigma delta = b_evaluate(delta).
/// Order violations are reported with expected/actual holding the impact times.
OracleReport verify_cone_partition(const CornerModel& m, int num_samples, std::uint64_t seed,
                                   double tolerance = 1e-9);

/// b_evaluate(delta) against the triangulated representation
/// (lineality part plus barycentric piece of locate_cone(delta)). n <= 10.
OracleReport verify_piece_agreement(const CornerModel& m, int num_samples, std::uint64_t seed,
                                    double tolerance = 1e-9);

/// Forward difference quotients (phi_t(x0 + alpha dx0) - phi_t(x0)) / alpha.
std::vector<Vector> finite_difference_flow(const PiecewiseField& field, const Vector& x0, double t,
                                           const Vector& delta_x0, const std::vector<double>& alphas,
                                           const IntegrateOptions& opts = {});

struct ConvergenceStudy {
  std::vector<double> alphas;
  /// Mean over fields and directions of |FD quotient - B-derivative| / |dx0|, per alpha.
  std::vector<double> mean_errors;
  /// mean_errors[k] / mean_errors[k + 1].
  std::vector<double> ratios;
};

/// Forward differences against corner_flow_bderivative on random corner fields.
ConvergenceStudy fd_convergence_study(int num_fields, int n, int d, int num_directions,
                                      const std::vector<double>& alphas, std::uint64_t seed,
                                      const IntegrateOptions& opts = {});

/// Median wall time in seconds of one b_evaluate call, from `batches`
/// batches of `calls_per_batch` calls over fixed random directions.
double median_evaluate_seconds(const CornerModel& m, int batches, int calls_per_batch, std::uint64_t seed);

/// Uniform random unit vector.
Vector random_direction(int d, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Random models

/// Tabulated corner with unit-row eta and gamma(b) = sum_i c_i(b) u_i + k(b),
/// where eta u_i = e_i, c_i in [0.1, 3) and k(b) in ker(eta). Every such
/// model is event-selected. n <= 20.
CornerModel random_corner_model(int n, int d, std::uint64_t seed);

/// Corner whose gamma is computed on demand in O(n d), for sizes where a
/// 2^n table is out of reach. Valid by construction for any n <= 64.
CornerModel bench_corner_model(int n, int d, std::uint64_t seed);

struct RandomCornerField {
  PiecewiseField field;
  Vector rho;
  Vector x0;
  double corner_time = 0.0;
  double horizon = 0.0;
};

/// Field with curved surfaces and affine per-orthant selections whose
/// trajectory from x0 passes through the corner rho at corner_time and ends
/// at horizon. Rejection-sampled until integration sees exactly one corner.
RandomCornerField random_corner_field(int n, int d, std::uint64_t seed, const IntegrateOptions& opts = {});

}  // namespace nsflow
