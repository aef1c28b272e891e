#include "nsflow/io.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

namespace nsflow {

std::string format_double(double value) {
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

std::string format_vector(const Vector& v) {
  std::string out;
  for (int i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

Vector parse_vector(const std::string& text) {
  std::vector<double> values;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  while (p < end) {
    while (p < end && *p == ' ') ++p;
    double value = 0.0;
    const auto result = std::from_chars(p, end, value);
    if (result.ec != std::errc()) throw Error(ErrorCode::InvalidInput, "cannot parse vector '" + text + "'");
    values.push_back(value);
    p = result.ptr;
    while (p < end && *p == ' ') ++p;
    if (p < end) {
      if (*p != ',') throw Error(ErrorCode::InvalidInput, "cannot parse vector '" + text + "'");
      ++p;
      if (p == end) throw Error(ErrorCode::InvalidInput, "trailing comma in '" + text + "'");
    }
  }
  if (values.empty()) throw Error(ErrorCode::InvalidInput, "empty vector");
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Json to_json(const Vector& v) {
  Json arr = Json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vector vector_from_json(const Json& j) {
  if (!j.is_array()) throw Error(ErrorCode::InvalidInput, "expected a JSON array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(ErrorCode::InvalidInput, "expected a JSON array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Json corner_to_json(const CornerModel& m) {
  const int n = m.num_surfaces();
  if (n > 20) throw Error(ErrorCode::CapExceeded, "JSON export enumerates 2^n orthants; n <= 20");
  Json eta = Json::array();
  for (int j = 0; j < n; ++j) eta.push_back(to_json(m.eta().row(j).transpose()));
  Json gamma = Json::object();
  for (std::uint64_t i = 0; i < (std::uint64_t{1} << n); ++i) {
    const SignVector b = SignVector::from_lex_index(n, i);
    gamma[b.key()] = to_json(m.gamma(b));
  }
  return Json{{"d", m.dim()}, {"n", n}, {"rho", to_json(m.rho())}, {"eta", eta}, {"gamma", gamma},
              {"f_min", m.f_min()}};
}

CornerModel corner_from_json(const Json& j) {
  try {
    const int d = j.at("d").get<int>();
    const int n = j.at("n").get<int>();
    if (d < 1 || n < 1 || n > 20) throw Error(ErrorCode::InvalidInput, "need d >= 1 and 1 <= n <= 20");
    const Vector rho = vector_from_json(j.at("rho"));
    if (rho.size() != d) throw Error(ErrorCode::InvalidInput, "rho has wrong dimension");
    const Json& eta_json = j.at("eta");
    if (!eta_json.is_array() || static_cast<int>(eta_json.size()) != n) {
      throw Error(ErrorCode::InvalidInput, "eta must have n rows");
    }
    Matrix eta(n, d);
    for (int r = 0; r < n; ++r) {
      const Vector row = vector_from_json(eta_json[static_cast<std::size_t>(r)]);
      if (row.size() != d) throw Error(ErrorCode::InvalidInput, "eta row has wrong dimension");
      eta.row(r) = row.transpose();
    }
    const Json& gamma_json = j.at("gamma");
    std::vector<Vector> table;
    for (std::uint64_t i = 0; i < (std::uint64_t{1} << n); ++i) {
      const std::string key = SignVector::from_lex_index(n, i).key();
      if (!gamma_json.contains(key)) throw Error(ErrorCode::InvalidInput, "gamma is missing orthant " + key);
      table.push_back(vector_from_json(gamma_json.at(key)));
      if (table.back().size() != d) throw Error(ErrorCode::InvalidInput, "gamma(" + key + ") has wrong dimension");
    }
    const double f_min = j.value("f_min", CornerModel::kDefaultFMin);
    return CornerModel::tabulated(rho, eta, std::move(table), f_min);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("malformed corner model: ") + e.what());
  }
}

CornerModel load_corner(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidInput, "cannot open " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidInput, path + ": " + e.what());
  }
  return corner_from_json(j);
}

Json triangulation_to_json(const Triangulation& tri) {
  const int n = tri.num_surfaces();
  Json z_minus = Json::object();
  Json z_plus = Json::object();
  for (std::uint64_t i = 0; i < tri.num_vertices(); ++i) {
    const SignVector b = SignVector::from_lex_index(n, i);
    z_minus[b.key()] = to_json(tri.z_minus(b));
    z_plus[b.key()] = to_json(tri.z_plus(b));
  }
  Json simplices = Json::array();
  tri.for_each_simplex([&](const Permutation& sigma, const std::vector<SignVector>& vertices) {
    Json keys = Json::array();
    for (const auto& v : vertices) keys.push_back(v.key());
    simplices.push_back(Json{{"sigma", sigma.one_based()}, {"vertices", keys}});
  });
  return Json{{"z_minus", z_minus}, {"z_plus", z_plus}, {"simplices", simplices}};
}

Json bresult_to_json(const BResult& r) {
  return Json{{"delta_rho_plus", to_json(r.delta_rho_plus)}, {"sigma", r.sigma.one_based()}, {"delta_t", r.delta_t}};
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const Vector& first = traj.segments.front().states.front();
  out << 't';
  for (int i = 0; i < first.size(); ++i) out << ",x_" << (i + 1);
  out << ",orthant\n";
  for (std::size_t s = 0; s < traj.segments.size(); ++s) {
    const TrajectorySegment& seg = traj.segments[s];
    // Segment starts repeat the event state already written as the previous segment's end.
    for (std::size_t i = (s == 0 ? 0 : 1); i < seg.times.size(); ++i) {
      out << format_double(seg.times[i]) << ',' << format_vector(seg.states[i]) << ',' << seg.active_orthant.key()
          << '\n';
    }
  }
}

Json events_to_json(const Trajectory& traj) {
  Json arr = Json::array();
  for (const EventRecord& e : traj.events) {
    Json surface = e.is_corner() ? Json("corner") : Json(e.surfaces.front() + 1);
    arr.push_back(Json{{"time", e.time}, {"surface", surface}, {"state", to_json(e.state)}});
  }
  return arr;
}

Json report_to_json(const OracleReport& report) {
  Json failures = Json::array();
  for (const auto& f : report.failures) {
    failures.push_back(Json{{"input", to_json(f.input)}, {"expected", to_json(f.expected)}, {"actual", to_json(f.actual)}});
  }
  return Json{{"max_abs_error", report.max_abs_error},
              {"max_rel_error", report.max_rel_error},
              {"samples", report.samples},
              {"tolerance", report.tolerance},
              {"failures", failures}};
}

}  // namespace nsflow
