#include <catch2/catch_amalgamated.hpp>

#include "nsflow/apps.hpp"
#include "nsflow/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

using namespace nsflow;

TEST_CASE("doubles round trip through their text form", "[io]") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(-1e6, 1e6);
  for (int k = 0; k < 1000; ++k) {
    const double v = unif(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(-3.0) == "-3");
}

TEST_CASE("vector text parsing", "[io]") {
  CHECK(parse_vector("0.6,-0.9") == (Vector(2) << 0.6, -0.9).finished());
  CHECK(parse_vector(" 1, 2 ,3") == (Vector(3) << 1, 2, 3).finished());
  CHECK(parse_vector("1e-3") == Vector::Constant(1, 1e-3));
  CHECK_THROWS_AS(parse_vector(""), Error);
  CHECK_THROWS_AS(parse_vector("1,,2"), Error);
  CHECK_THROWS_AS(parse_vector("1,"), Error);
  CHECK_THROWS_AS(parse_vector("a"), Error);
  CHECK(format_vector(parse_vector("0.25,-4")) == "0.25,-4");
}

TEST_CASE("corner models round trip through JSON", "[io]") {
  const CornerModel m = pwc_model(pwc_random(3, 11)).corner;
  const Json j = corner_to_json(m);
  CHECK(j.at("d") == 3);
  CHECK(j.at("n") == 3);
  CHECK(j.at("gamma").size() == 8);
  CHECK(j.at("gamma").contains("-+-"));
  const CornerModel back = corner_from_json(Json::parse(j.dump()));
  CHECK(back.rho() == m.rho());
  CHECK(back.eta() == m.eta());
  CHECK(back.f_min() == m.f_min());
  for (std::uint64_t i = 0; i < 8; ++i) {
    const SignVector b = SignVector::from_lex_index(3, i);
    CHECK(back.gamma(b) == m.gamma(b));
  }
}

TEST_CASE("malformed corner JSON is rejected", "[io]") {
  Json j = corner_to_json(pwc_model(pwc_linear(2, 0.5)).corner);
  Json missing = j;
  missing["gamma"].erase("+-");
  CHECK_THROWS_AS(corner_from_json(missing), Error);
  Json wrong = j;
  wrong["rho"] = Json::array({1.0});
  CHECK_THROWS_AS(corner_from_json(wrong), Error);
  CHECK_THROWS_AS(corner_from_json(Json::object()), Error);
  CHECK_THROWS_AS(load_corner("/nonexistent/model.json"), Error);
}

TEST_CASE("B result JSON uses one-based sigma", "[io]") {
  const BResult r = b_evaluate(pwc_model(pwc_linear(2, 0.5)).corner, (Vector(2) << 0.6, -0.9).finished());
  const Json j = bresult_to_json(r);
  CHECK(j.at("sigma") == Json::array({1, 2}));
  CHECK(j.at("delta_rho_plus").size() == 2);
  CHECK(j.at("delta_t").get<double>() == r.delta_t);
}

TEST_CASE("triangulation export lists every chain", "[io]") {
  const Triangulation tri = build_triangulation(pwc_model(pwc_random(3, 2)).corner);
  const Json j = triangulation_to_json(tri);
  CHECK(j.at("z_minus").size() == 8);
  CHECK(j.at("z_plus").size() == 8);
  REQUIRE(j.at("simplices").size() == 6);
  const Json& first = j.at("simplices").front();
  CHECK(first.at("sigma") == Json::array({1, 2, 3}));
  CHECK(first.at("vertices") == Json::array({"---", "+--", "++-", "+++"}));
}

TEST_CASE("trajectory CSV and events JSON", "[io]") {
  const PwcSystem sys = pwc_model(pwc_linear(2, 0.5));
  IntegrateOptions opts;
  opts.steps = 8;
  const Trajectory traj = integrate(sys.field, sys.corner.rho_minus(), 1.0, opts);
  std::ostringstream csv;
  write_trajectory_csv(csv, traj);
  std::istringstream lines(csv.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header == "t,x_1,x_2,orthant");
  int rows = 0;
  std::string line;
  std::string last;
  while (std::getline(lines, line)) {
    ++rows;
    last = line;
  }
  // The corner is reached exactly at the grid point t = 0.5, so the event row
  // is not repeated.
  CHECK(rows == 9);
  CHECK(last.substr(0, 2) == "1,");
  CHECK(last.substr(last.size() - 2) == "++");

  const Json events = events_to_json(traj);
  REQUIRE(events.size() == 1);
  CHECK(events[0].at("surface") == "corner");
  CHECK(events[0].at("time").get<double>() == Catch::Approx(0.5));
}

TEST_CASE("single-surface events carry a one-based index", "[io]") {
  const PwcSystem sys = pwc_model(pwc_linear(2, 0.5));
  const Trajectory traj = integrate(sys.field, (Vector(2) << -0.5, -1.0).finished(), 1.0);
  const Json events = events_to_json(traj);
  REQUIRE(events.size() == 2);
  CHECK(events[0].at("surface") == 1);
  CHECK(events[1].at("surface") == 2);
}
