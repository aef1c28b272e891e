#include "nsflow/cli.hpp"

#include "nsflow/apps.hpp"
#include "nsflow/io.hpp"
#include "nsflow/oracle.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <ostream>
#include <set>

namespace nsflow {

namespace {

constexpr std::uint64_t kDefaultSeed = 7;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("NSFLOW_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidInput, std::string("NSFLOW_SEED is not an integer: ") + env);
    }
  }
  return kDefaultSeed;
}

struct ModelArgs {
  std::string preset;
  std::string model_path;
  double delta = 0.5;
  int dim = 2;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void add_model_options(CLI::App* cmd, ModelArgs& args) {
  auto* preset = cmd->add_option("--preset", args.preset, "pwc, pwc-linear, biped-uniform or biped-xor")
                     ->check(CLI::IsMember({"pwc", "pwc-linear", "biped-uniform", "biped-xor"}));
  auto* model = cmd->add_option("--model", args.model_path, "corner model JSON file");
  preset->excludes(model);
  cmd->add_option("--delta", args.delta, "offset amount for pwc-linear")->capture_default_str();
  cmd->add_option("--dim", args.dim, "dimension of the pwc presets")->capture_default_str();
}

std::uint64_t resolve_seed(const ModelArgs& args) { return args.seed_given ? args.seed : default_seed(); }

CornerModel load_model(const ModelArgs& args) {
  if (!args.model_path.empty()) return load_corner(args.model_path);
  if (args.preset == "pwc-linear") return pwc_model(pwc_linear(args.dim, args.delta)).corner;
  if (args.preset == "pwc") return pwc_model(pwc_random(args.dim, resolve_seed(args))).corner;
  if (args.preset == "biped-uniform") return biped_corner({}, BipedDamping::Uniform);
  if (args.preset == "biped-xor") return biped_corner({}, BipedDamping::Xor);
  throw Error(ErrorCode::InvalidInput, "give --preset or --model");
}

PiecewiseField load_field(const ModelArgs& args, Vector& default_x0) {
  if (args.preset == "pwc-linear" || args.preset == "pwc") {
    PwcSystem sys = pwc_model(args.preset == "pwc" ? pwc_random(args.dim, resolve_seed(args))
                                                   : pwc_linear(args.dim, args.delta));
    default_x0 = sys.corner.rho_minus();
    return std::move(sys.field);
  }
  if (args.preset == "biped-uniform" || args.preset == "biped-xor") {
    const BipedDamping damping = args.preset == "biped-xor" ? BipedDamping::Xor : BipedDamping::Uniform;
    default_x0 = Vector::Zero(6);
    default_x0[1] = 1.0;
    return soft_constraint_field(biped_model({}, damping), true);
  }
  throw Error(ErrorCode::InvalidInput, "simulate needs --preset");
}

// Exits with the validation code when the corner is not event-selected.
void require_valid(const CornerModel& m) {
  if (m.num_surfaces() > 30) return;  // too many orthants to check exhaustively
  validate_corner(m).throw_if_invalid();
}

std::string join_sigma(const Permutation& sigma, char sep) {
  std::string s;
  for (int v : sigma.one_based()) {
    if (!s.empty()) s += sep;
    s += std::to_string(v);
  }
  return s;
}

void write_matrix(std::ostream& out, const Matrix& a) {
  for (int r = 0; r < a.rows(); ++r) out << format_vector(a.row(r).transpose()) << '\n';
}

Json matrix_to_json(const Matrix& a) {
  Json rows = Json::array();
  for (int r = 0; r < a.rows(); ++r) rows.push_back(to_json(a.row(r).transpose()));
  return rows;
}

std::ostream& open_output(const std::string& path, std::ofstream& file, std::ostream& fallback) {
  if (path.empty() || path == "-") return fallback;
  file.open(path);
  if (!file) throw Error(ErrorCode::InvalidInput, "cannot write " + path);
  return file;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> values;
  for (double v : parse_vector(text)) {
    if (v != std::floor(v) || v < 1) throw Error(ErrorCode::InvalidInput, "expected positive integers: " + text);
    values.push_back(static_cast<int>(v));
  }
  return values;
}

int cmd_bderiv(const ModelArgs& margs, const std::string& dir, bool all_pieces, bool as_json, std::ostream& out) {
  const CornerModel m = load_model(margs);
  require_valid(m);
  const Vector delta = parse_vector(dir);
  if (delta.size() != m.dim()) throw Error(ErrorCode::InvalidInput, "--dir must have d = " + std::to_string(m.dim()) + " entries");
  const BResult r = b_evaluate(m, delta);
  std::map<Permutation, Matrix> pieces;
  if (all_pieces) pieces = enumerate_saltations(m);

  if (as_json) {
    Json j = bresult_to_json(r);
    if (all_pieces) {
      Json arr = Json::array();
      for (const auto& [sigma, mat] : pieces) arr.push_back(Json{{"sigma", sigma.one_based()}, {"matrix", matrix_to_json(mat)}});
      j["pieces"] = arr;
    }
    out << j.dump(2) << '\n';
    return kExitOk;
  }
  out << format_vector(r.delta_rho_plus) << '\n';
  out << "sigma " << join_sigma(r.sigma, ',') << '\n';
  out << "delta_t " << format_double(r.delta_t) << '\n';
  for (const auto& [sigma, mat] : pieces) {
    out << "M_sigma " << join_sigma(sigma, ',') << '\n';
    write_matrix(out, mat);
  }
  return kExitOk;
}

int cmd_ball(const ModelArgs& margs, int points, std::uint64_t seed, std::ostream& out, std::ostream& err) {
  const CornerModel m = load_model(margs);
  require_valid(m);
  const int d = m.dim();
  if (d != 2) err << "warning: ball output is meant for d = 2; using random directions in d = " << d << '\n';
  std::mt19937_64 rng(seed);
  out << "theta";
  for (int i = 1; i <= d; ++i) out << ",in_" << i;
  for (int i = 1; i <= d; ++i) out << ",out_" << i;
  out << ",sigma\n";
  for (int k = 0; k < points; ++k) {
    Vector dir(d);
    double theta = std::numeric_limits<double>::quiet_NaN();
    if (d == 2) {
      theta = 2.0 * std::numbers::pi * k / points;
      dir << std::cos(theta), std::sin(theta);
    } else {
      dir = random_direction(d, rng);
    }
    const BResult r = b_evaluate(m, dir);
    out << (d == 2 ? format_double(theta) : std::string()) << ',' << format_vector(dir) << ','
        << format_vector(r.delta_rho_plus) << ',' << join_sigma(r.sigma, ' ') << '\n';
  }
  return kExitOk;
}

int cmd_triangulate(const ModelArgs& margs, int cap, const std::string& output, std::ostream& out) {
  const CornerModel m = load_model(margs);
  require_valid(m);
  const Triangulation tri = zeta_points(m, cap);
  std::ofstream file;
  open_output(output, file, out) << triangulation_to_json(tri).dump(2) << '\n';
  return kExitOk;
}

int cmd_simulate(const ModelArgs& margs, const std::string& x0_text, double t, int steps, const std::string& csv_path,
                 const std::string& events_path, std::ostream& out) {
  Vector x0;
  const PiecewiseField field = load_field(margs, x0);
  if (!x0_text.empty()) x0 = parse_vector(x0_text);
  IntegrateOptions opts;
  opts.steps = steps;
  const Trajectory traj = integrate(field, x0, t, opts);
  {
    std::ofstream file;
    write_trajectory_csv(open_output(csv_path, file, out), traj);
  }
  if (!events_path.empty()) {
    std::ofstream file;
    open_output(events_path, file, out) << events_to_json(traj).dump(2) << '\n';
  }
  return kExitOk;
}

int cmd_verify(const std::string& suite, std::uint64_t seed, int models, int samples, std::ostream& out) {
  Json report_json;
  bool ok = true;
  if (suite == "sampled-oracle" || suite == "cone-partition") {
    OracleReport total;
    std::mt19937_64 rng(seed);
    for (int i = 0; i < models; ++i) {
      const int n = 1 + i % 6;
      const int d = n + static_cast<int>(rng() % 5);
      const CornerModel m = random_corner_model(n, d, rng());
      total.merge(suite == "sampled-oracle" ? verify_b_against_sampled(m, samples, rng())
                                            : verify_cone_partition(m, samples, rng()));
    }
    ok = total.ok();
    report_json = report_to_json(total);
  } else if (suite == "fd-convergence") {
    const ConvergenceStudy study = fd_convergence_study(models, 2, 3, samples, {1e-2, 1e-3, 1e-4}, seed);
    for (double r : study.ratios) ok = ok && r >= 5.0 && r <= 20.0;
    report_json = Json{{"alphas", study.alphas}, {"mean_errors", study.mean_errors}, {"ratios", study.ratios},
                       {"band", {5.0, 20.0}}, {"ok", ok}};
  } else {
    throw Error(ErrorCode::InvalidInput, "unknown suite " + suite);
  }
  report_json["suite"] = suite;
  report_json["seed"] = seed;
  out << report_json.dump(2) << '\n';
  return ok ? kExitOk : kExitVerification;
}

int cmd_bench(const std::string& n_list, int d_offset, const std::string& d_list, int calls, std::uint64_t seed,
              std::ostream& out) {
  const std::vector<int> ns = parse_int_list(n_list);
  const std::vector<int> ds = d_list.empty() ? std::vector<int>{} : parse_int_list(d_list);
  const int batches = 100;
  const int per_batch = std::max(1, calls / batches);
  out << "n,d,median_seconds\n";
  for (int n : ns) {
    std::vector<int> dims = ds;
    if (dims.empty()) dims.push_back(n + d_offset);
    for (int d : dims) {
      if (d < n) continue;
      const CornerModel m = bench_corner_model(n, d, seed + static_cast<std::uint64_t>(n) * 1000 + static_cast<std::uint64_t>(d));
      out << n << ',' << d << ',' << format_double(median_evaluate_seconds(m, batches, per_batch, seed)) << '\n';
    }
  }
  return kExitOk;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::RankDeficient:
    case ErrorCode::NotEventSelected:
    case ErrorCode::DegenerateDenominator:
    case ErrorCode::InvalidDelta:
      return kExitValidation;
    default:
      return kExitRuntime;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Derivatives of nonsmooth flows through corners"};
  app.name("nsflow");
  app.require_subcommand(1);

  ModelArgs margs;
  std::string dir;
  bool all_pieces = false;
  bool as_json = false;
  int points = 360;
  int cap = kDefaultTriangulationCap;
  std::string output;
  std::string x0_text;
  double t = 1.0;
  int steps = IntegrateOptions{}.steps;
  std::string csv_path = "-";
  std::string events_path;
  std::string suite;
  int models = 25;
  int samples = 1000;
  std::string n_list = "2,4,8,16,32";
  std::string d_list;
  int d_offset = 2;
  int calls = 10000;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option_function<std::uint64_t>(
        "--seed",
        [&](const std::uint64_t& s) {
          margs.seed = s;
          margs.seed_given = true;
        },
        "RNG seed (default 7, or NSFLOW_SEED)");
  };

  auto* bderiv = app.add_subcommand("bderiv", "evaluate the B-derivative at a corner");
  add_model_options(bderiv, margs);
  add_seed(bderiv);
  bderiv->add_option("--dir", dir, "incoming perturbation, comma separated")->required();
  bderiv->add_flag("--all-pieces", all_pieces, "also print every M_sigma (n <= 8)");
  bderiv->add_flag("--json", as_json, "JSON output");

  auto* ball = app.add_subcommand("ball", "image of unit directions under B, as CSV");
  add_model_options(ball, margs);
  add_seed(ball);
  ball->add_option("--points", points, "number of directions")->capture_default_str()->check(CLI::PositiveNumber);

  auto* tri = app.add_subcommand("triangulate", "export the triangulated sampled flow as JSON");
  add_model_options(tri, margs);
  add_seed(tri);
  tri->add_option("--cap", cap, "largest n to enumerate")->capture_default_str();
  tri->add_option("--output,-o", output, "output file (default stdout)");

  auto* sim = app.add_subcommand("simulate", "integrate a preset field");
  add_model_options(sim, margs);
  add_seed(sim);
  sim->add_option("--x0", x0_text, "initial state (default: preset specific)");
  sim->add_option("--time,-t", t, "final time")->capture_default_str();
  sim->add_option("--steps", steps, "RK4 steps")->capture_default_str()->check(CLI::PositiveNumber);
  sim->add_option("--csv", csv_path, "trajectory CSV file (default stdout)");
  sim->add_option("--events", events_path, "event JSON file");

  auto* verify = app.add_subcommand("verify", "run a randomized oracle suite");
  verify->add_option("suite", suite, "sampled-oracle, cone-partition or fd-convergence")
      ->required()
      ->check(CLI::IsMember({"sampled-oracle", "cone-partition", "fd-convergence"}));
  add_seed(verify);
  verify->add_option("--models", models, "number of random models (fields for fd-convergence)");
  verify->add_option("--samples", samples, "directions per model");

  auto* bench = app.add_subcommand("bench", "time b_evaluate over a range of sizes");
  add_seed(bench);
  bench->add_option("--n", n_list, "surface counts")->capture_default_str();
  bench->add_option("--d-offset", d_offset, "d = n + offset when --d is not given")->capture_default_str();
  bench->add_option("--d", d_list, "explicit dimensions");
  bench->add_option("--calls", calls, "calls per size")->capture_default_str()->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kExitRuntime;
  }

  try {
    const std::uint64_t seed = resolve_seed(margs);
    if (verify->parsed() && suite == "fd-convergence") {
      if (verify->count("--models") == 0) models = 5;
      if (verify->count("--samples") == 0) samples = 100;
    }
    if (*bderiv) return cmd_bderiv(margs, dir, all_pieces, as_json, out);
    if (*ball) return cmd_ball(margs, points, seed, out, err);
    if (*tri) return cmd_triangulate(margs, cap, output, out);
    if (*sim) return cmd_simulate(margs, x0_text, t, steps, csv_path, events_path, out);
    if (*verify) return cmd_verify(suite, seed, models, samples, out);
    if (*bench) return cmd_bench(n_list, d_offset, d_list, calls, seed, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace nsflow
