// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "nsflow/apps.hpp"
#include "nsflow/bderiv.hpp"
#include "nsflow/oracle.hpp"

#include <malloc.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace nsflow;

// Heap accounting. Eigen allocates through malloc, so malloc itself is
// interposed rather than operator new.
extern "C" {
void* __libc_malloc(std::size_t);
void* __libc_calloc(std::size_t, std::size_t);
void* __libc_realloc(void*, std::size_t);
void __libc_free(void*);
void* __libc_memalign(std::size_t, std::size_t);
}

namespace {

std::atomic<bool> g_tracking{false};
std::atomic<long long> g_live{0};
std::atomic<long long> g_peak{0};

void note_alloc(void* p) {
  if (p == nullptr || !g_tracking.load(std::memory_order_relaxed)) return;
  const long long now = g_live.fetch_add(static_cast<long long>(malloc_usable_size(p))) +
                        static_cast<long long>(malloc_usable_size(p));
  long long peak = g_peak.load();
  while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
  }
}

void note_free(void* p) {
  if (p == nullptr || !g_tracking.load(std::memory_order_relaxed)) return;
  g_live.fetch_sub(static_cast<long long>(malloc_usable_size(p)));
}

}  // namespace

extern "C" {
void* malloc(std::size_t size) {
  void* p = __libc_malloc(size);
  note_alloc(p);
  return p;
}
void* calloc(std::size_t count, std::size_t size) {
  void* p = __libc_calloc(count, size);
  note_alloc(p);
  return p;
}
void* realloc(void* old, std::size_t size) {
  note_free(old);
  void* p = __libc_realloc(old, size);
  note_alloc(p);
  return p;
}
void free(void* p) {
  note_free(p);
  __libc_free(p);
}
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// The 25 random models shared by criteria 2 and 3: n cycles through 1..6,
// d through n..n+4.
std::vector<CornerModel> random_models(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<CornerModel> models;
  for (int i = 0; i < 25; ++i) {
    const int n = 1 + i % 6;
    const int d = n + static_cast<int>(rng() % 5);
    models.push_back(random_corner_model(n, d, rng()));
  }
  return models;
}

Outcome criterion_pwc_linear() {
  constexpr double kTol = 1e-12;
  constexpr double kTimeLimit = 1.0;
  const auto start = Clock::now();
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int d = 2; d <= 6; ++d) {
    for (double delta : {0.1, 0.5, 0.9}) {
      const CornerModel m = pwc_model(pwc_linear(d, delta)).corner;
      const double factor = (1.0 - delta) / (1.0 + delta);
      for (int k = 0; k < 500; ++k) {
        const Vector v = random_direction(d, rng);
        worst = std::max(worst, (b_evaluate(m, v).delta_rho_plus - factor * v).norm());
      }
    }
  }
  const double elapsed = seconds_since(start);
  return {worst <= kTol && elapsed < kTimeLimit, "max error " + fmt(worst) + ", " + fmt(elapsed) + " s"};
}

Outcome criterion_sampled_oracle(const std::vector<CornerModel>& models) {
  constexpr double kTol = 1e-11;
  constexpr double kTimeLimit = 10.0;
  const auto start = Clock::now();
  OracleReport total;
  std::uint64_t seed = 2;
  for (const CornerModel& m : models) total.merge(verify_b_against_sampled(m, 1000, seed++, kTol));
  const double elapsed = seconds_since(start);
  return {total.ok() && elapsed < kTimeLimit,
          std::to_string(total.samples) + " samples, max rel error " + fmt(total.max_rel_error) + ", " +
              std::to_string(total.failures.size()) + " failures, " + fmt(elapsed) + " s"};
}

Outcome criterion_piece_agreement(const std::vector<CornerModel>& models) {
  constexpr double kTol = 1e-9;
  constexpr double kTimeLimit = 30.0;
  const auto start = Clock::now();
  OracleReport total;
  std::uint64_t seed = 3;
  for (const CornerModel& m : models) total.merge(verify_piece_agreement(m, 1000, seed++, kTol));
  const double elapsed = seconds_since(start);
  return {total.ok() && elapsed < kTimeLimit,
          "max rel error " + fmt(total.max_rel_error) + ", " + std::to_string(total.failures.size()) + " failures, " +
              fmt(elapsed) + " s"};
}

Outcome criterion_fd_convergence() {
  constexpr double kLow = 5.0;
  constexpr double kHigh = 20.0;
  constexpr double kTimeLimit = 120.0;
  const auto start = Clock::now();
  const ConvergenceStudy study = fd_convergence_study(5, 2, 3, 100, {1e-2, 1e-3, 1e-4}, 4);
  const double elapsed = seconds_since(start);
  bool ok = elapsed < kTimeLimit;
  std::string detail = "ratios";
  for (double r : study.ratios) {
    ok = ok && r >= kLow && r <= kHigh;
    detail += " " + fmt(r);
  }
  return {ok, detail + ", " + fmt(elapsed) + " s"};
}

Outcome criterion_commuting_pieces() {
  constexpr double kTol = 1e-12;
  constexpr double kTimeLimit = 5.0;
  const auto start = Clock::now();
  double worst_identity = 0.0;
  double worst_pair = 0.0;
  for (double psi : {0.05, 0.1, 0.3}) {
    BipedParams p;
    p.splay = psi;
    const PiecewiseField penalty = soft_constraint_field(biped_model(p, BipedDamping::Uniform), false);
    const CornerModel pm = corner_from_field(penalty, biped_symmetric_touchdown(p), SignVector(2, 1));
    for (const auto& [sigma, mat] : enumerate_saltations(pm)) {
      worst_identity = std::max(worst_identity, (mat - Matrix::Identity(6, 6)).norm());
    }
    const auto pieces = enumerate_saltations(biped_corner(p, BipedDamping::Uniform));
    for (const auto& [s1, a] : pieces) {
      for (const auto& [s2, b] : pieces) worst_pair = std::max(worst_pair, (a - b).norm());
    }
  }
  const double elapsed = seconds_since(start);
  return {worst_identity <= kTol && worst_pair <= kTol && elapsed < kTimeLimit,
          "identity error " + fmt(worst_identity) + ", pairwise difference " + fmt(worst_pair) + ", " + fmt(elapsed) +
              " s"};
}

// Expected difference M_(1,2) - M_(2,1) for the xor-damped biped, as stated
// in closed form: nonzero only in row 5 (one-based), with beta = 1/2.
Matrix stated_xor_difference(double psi) {
  const double beta = 0.5;
  Matrix expected = Matrix::Zero(6, 6);
  expected(4, 0) = -4.0 * beta * std::cos(psi);
  expected(4, 2) = -2.0 * beta * (std::sin(2.0 * psi) + std::cos(psi));
  return expected;
}

Outcome criterion_xor_biped() {
  constexpr double kTol = 1e-9;
  bool ok = true;
  std::ostringstream detail;
  detail.precision(6);
  const std::array<int, 2> order12{1, 2};
  const std::array<int, 2> order21{2, 1};
  for (double psi : {0.05, 0.1, 0.3}) {
    BipedParams p;
    p.splay = psi;
    const auto pieces = enumerate_saltations(biped_corner(p, BipedDamping::Xor));
    const Matrix diff =
        pieces.at(Permutation::from_one_based(order12)) - pieces.at(Permutation::from_one_based(order21));
    const double err = (diff - stated_xor_difference(psi)).cwiseAbs().maxCoeff();
    ok = ok && err <= kTol;
    detail << "psi " << psi << ": max entry error " << fmt(err) << " [";
    bool first = true;
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) {
        if (std::abs(diff(r, c)) <= 1e-12) continue;
        detail << (first ? "" : " ") << "(" << r + 1 << "," << c + 1 << ")=" << diff(r, c);
        first = false;
      }
    }
    detail << "]; ";
  }
  return {ok, detail.str()};
}

Outcome criterion_scaling() {
  constexpr double kSlopeLow = 1.6;
  constexpr double kSlopeHigh = 2.6;
  // Peak auxiliary bytes per unit of n + d may grow by at most this factor
  // from the smallest to the largest size; 2^n or n! storage would not.
  constexpr double kMemoryGrowth = 3.0;
  const std::vector<int> ns{2, 4, 8, 16, 32};
  std::vector<double> log_n;
  std::vector<double> log_t;
  std::vector<double> bytes_per_size;
  std::ostringstream detail;
  for (int n : ns) {
    const int d = n + 2;
    const CornerModel m = bench_corner_model(n, d, 100 + static_cast<std::uint64_t>(n));
    const double median = median_evaluate_seconds(m, 100, 100, 5);
    log_n.push_back(std::log(static_cast<double>(n)));
    log_t.push_back(std::log(median));

    std::mt19937_64 rng(9);
    long long worst = 0;
    for (int k = 0; k < 20; ++k) {
      const Vector v = random_direction(d, rng);
      g_live = 0;
      g_peak = 0;
      g_tracking = true;
      const BResult r = b_evaluate(m, v);
      g_tracking = false;
      worst = std::max(worst, g_peak.load());
      (void)r;
    }
    bytes_per_size.push_back(static_cast<double>(worst) / (n + d));
    detail << "n=" << n << " " << fmt(median * 1e6) << " us " << worst << " B; ";
  }
  const double mean_x = std::accumulate(log_n.begin(), log_n.end(), 0.0) / log_n.size();
  const double mean_y = std::accumulate(log_t.begin(), log_t.end(), 0.0) / log_t.size();
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < log_n.size(); ++i) {
    sxy += (log_n[i] - mean_x) * (log_t[i] - mean_y);
    sxx += (log_n[i] - mean_x) * (log_n[i] - mean_x);
  }
  const double slope = sxy / sxx;
  const double growth = bytes_per_size.back() / bytes_per_size.front();
  const bool ok = slope >= kSlopeLow && slope <= kSlopeHigh && growth <= kMemoryGrowth;
  return {ok, "slope " + fmt(slope) + ", bytes/(n+d) growth " + fmt(growth) + "; " + detail.str()};
}

Outcome criterion_invariants() {
  constexpr double kTimeLimit = 60.0;
  const auto start = Clock::now();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unif(0.1, 5.0);
  const EvaluateOptions largest{TieBreak::LargestIndex};
  int checks = 0;
  int failures = 0;
  std::map<std::string, int> failed_by_kind;
  auto check = [&](const char* kind, bool ok) {
    ++checks;
    if (!ok) {
      ++failures;
      ++failed_by_kind[kind];
    }
  };

  for (int i = 0; i < 30; ++i) {
    const int n = 1 + i % 6;
    const int d = n + i % 4;
    const CornerModel m = random_corner_model(n, d, 5000 + static_cast<std::uint64_t>(i));
    Vector scale(n);
    for (int j = 0; j < n; ++j) scale[j] = unif(rng);
    const CornerModel scaled = m.with_scaled_normals(scale);
    const LinealitySplit split = lineality_split(m);
    const Vector g = m.f_minus();

    for (int k = 0; k < 100; ++k) {
      const Vector v = random_direction(d, rng);
      const Vector bv = b_evaluate(m, v).delta_rho_plus;
      const double lambda = unif(rng);
      check("homogeneity", (b_evaluate(m, lambda * v).delta_rho_plus - lambda * bv).norm() <= 1e-12 * lambda);
      check("eta scaling", (b_evaluate(scaled, v).delta_rho_plus - bv).norm() <= 1e-12);
      if (split.basis_k.cols() > 0) {
        const Vector kvec = split.basis_k * random_direction(static_cast<int>(split.basis_k.cols()), rng);
        check("kernel", (b_evaluate(m, v + kvec).delta_rho_plus - (bv + kvec)).norm() <= 1e-12);
      }
      const double s = unif(rng) - 2.5;
      check("flow direction", (b_evaluate(m, v + s * g).delta_rho_plus - (bv + s * m.f_plus())).norm() <= 1e-11);
    }

    if (n < 2) continue;
    for (int k = 0; k < 20; ++k) {
      // Two surfaces reached first at the same time; the rest later.
      const int a = static_cast<int>(rng() % n);
      const int b = (a + 1 + static_cast<int>(rng() % (n - 1))) % n;
      Vector rhs = m.eta() * random_direction(d, rng);
      rhs[a] = -0.7 * m.eta().row(a).dot(g);
      rhs[b] = -0.7 * m.eta().row(b).dot(g);
      for (int j = 0; j < n; ++j) {
        if (j != a && j != b) rhs[j] = -1.5 * m.eta().row(j).dot(g);
      }
      const Vector v = pseudo_inverse(m.eta()) * rhs;
      const BResult small = b_evaluate(m, v);
      const BResult large = b_evaluate(m, v, largest);
      const double magnitude = std::max(1.0, v.norm());
      check("tie-break", (small.delta_rho_plus - large.delta_rho_plus).norm() <= 1e-12 * magnitude);

      // Both pieces adjacent across the tie agree on the shared face.
      const Vector via_small = saltation_matrix(m, small.sigma) * v;
      const Vector via_large = saltation_matrix(m, large.sigma) * v;
      check("face continuity", (via_small - via_large).norm() <= 1e-12 * magnitude);
    }
  }
  const double elapsed = seconds_since(start);
  std::string detail = std::to_string(checks) + " checks, " + std::to_string(failures) + " failures";
  for (const auto& [kind, count] : failed_by_kind) detail += " (" + kind + ": " + std::to_string(count) + ")";
  return {failures == 0 && elapsed < kTimeLimit, detail + ", " + fmt(elapsed) + " s"};
}

}  // namespace

int main() {
  const std::vector<CornerModel> models = random_models(2024);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"pwc linear closed form", criterion_pwc_linear},
      {"sampled-flow oracle", [&] { return criterion_sampled_oracle(models); }},
      {"saltation pieces vs barycentric pieces", [&] { return criterion_piece_agreement(models); }},
      {"first-order finite-difference convergence", criterion_fd_convergence},
      {"commuting biped pieces", criterion_commuting_pieces},
      {"xor-damped biped closed form", criterion_xor_biped},
      {"evaluation cost scaling", criterion_scaling},
      {"invariant suite", criterion_invariants},
  };
  int failed = 0;
  int index = 1;
  for (const auto& [name, run] : criteria) {
    Outcome outcome{false, ""};
    try {
      outcome = run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    if (!outcome.pass) ++failed;
    std::printf("%s %d %s: %s\n", outcome.pass ? "PASS" : "FAIL", index, name.c_str(), outcome.detail.c_str());
    std::fflush(stdout);
    ++index;
  }
  return failed == 0 ? 0 : 1;
}
