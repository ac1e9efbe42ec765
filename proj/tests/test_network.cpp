#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <complex>
#include <filesystem>
#include <queue>

#include "test_util.hpp"
#include "vppsim/network.hpp"

using namespace vppsim;
using test::make_chain;

namespace {

// Shared-path resistance from the slack to each bus, by graph traversal.
// Independent oracle for the radial Zbus property.
std::vector<double> path_resistance(const NetworkModel& net) {
  const int n = net.n_buses();
  std::vector<std::vector<std::pair<int, double>>> adj(n);
  for (const Line& l : net.lines()) {
    adj[l.from].push_back({l.to, l.resistance_ohm});
    adj[l.to].push_back({l.from, l.resistance_ohm});
  }
  std::vector<double> dist(n, -1.0);
  std::queue<int> q;
  q.push(net.slack_id());
  dist[net.slack_id()] = 0.0;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (auto [v, r] : adj[u])
      if (dist[v] < 0.0) {
        dist[v] = dist[u] + r;
        q.push(v);
      }
  }
  return dist;
}

}  // namespace

TEST_CASE("two-bus admittance identity") {
  std::vector<Bus> buses = {{0, BusKind::slack, false}, {1, BusKind::load, true}};
  std::vector<Line> lines = {{0, 1, 0.6, 0.1}};
  const Eigen::MatrixXcd y = build_admittance(buses, lines);
  const std::complex<double> yz = 1.0 / std::complex<double>(0.6, 0.1);
  CHECK(std::abs(y(0, 0) - yz) < 1e-15);
  CHECK(std::abs(y(1, 1) - yz) < 1e-15);
  CHECK(std::abs(y(0, 1) + yz) < 1e-15);
  CHECK(std::abs(y(1, 0) + yz) < 1e-15);
}

TEST_CASE("series composition doubles the middle diagonal") {
  const NetworkModel net = make_chain(3, 0.6, 0.1);
  const std::complex<double> yz = 1.0 / std::complex<double>(0.6, 0.1);
  CHECK(std::abs(net.admittance_siemens()(1, 1) - 2.0 * yz) < 1e-15);
}

TEST_CASE("5-bus radial feeder matches hand assembly") {
  // slack 0 with laterals: 0-1, 1-2, 1-3, 3-4
  std::vector<Bus> buses;
  for (int i = 0; i < 5; ++i)
    buses.push_back({i, i == 0 ? BusKind::slack : BusKind::load, i != 0});
  std::vector<Line> lines = {
      {0, 1, 0.3, 0.05}, {1, 2, 0.2, 0.04}, {1, 3, 0.25, 0.05}, {3, 4, 0.15, 0.03}};
  const Eigen::MatrixXcd y = build_admittance(buses, lines);

  // Element-by-element assembly oracle.
  Eigen::MatrixXcd expected = Eigen::MatrixXcd::Zero(5, 5);
  for (const Line& l : lines) {
    const std::complex<double> a = 1.0 / std::complex<double>(l.resistance_ohm, l.reactance_ohm);
    expected(l.from, l.from) += a;
    expected(l.to, l.to) += a;
    expected(l.from, l.to) -= a;
    expected(l.to, l.from) -= a;
  }
  CHECK((y - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((y - y.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("admittance rejects bad inputs") {
  std::vector<Bus> buses = {{0, BusKind::slack, false},
                            {1, BusKind::load, true},
                            {2, BusKind::load, true}};
  SUBCASE("disconnected graph") {
    std::vector<Line> lines = {{0, 1, 0.5, 0.1}};
    CHECK_THROWS_AS(build_admittance(buses, lines), TopologyError);
  }
  SUBCASE("zero impedance") {
    std::vector<Line> lines = {{0, 1, 0.5, 0.1}, {1, 2, 0.0, 0.1}};
    CHECK_THROWS_AS(build_admittance(buses, lines), ParameterError);
  }
}

TEST_CASE("reduce_and_invert: scalar inverse") {
  const NetworkModel net = make_chain(2, 0.7, 0.12);
  CHECK(net.r_matrix_ohm()(0, 0) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(net.x_matrix_ohm()(0, 0) == doctest::Approx(0.12).epsilon(1e-12));
}

TEST_CASE("reduce_and_invert: 3-bus chain shared-path impedances") {
  const NetworkModel net = make_chain(3, 0.5, 0.0833);
  const auto& r = net.r_matrix_ohm();
  const auto& x = net.x_matrix_ohm();
  CHECK(r(0, 0) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(r(1, 1) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(r(0, 1) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(x(0, 0) == doctest::Approx(0.0833).epsilon(1e-10));
  CHECK(x(1, 1) == doctest::Approx(0.1666).epsilon(1e-10));
}

TEST_CASE("reduced admittance times its inverse is the identity") {
  const NetworkModel net = generate_synthetic_feeder({.nodes = 40, .seed = 9});
  const auto [r, x] = reduce_and_invert(net);
  const int n = net.n_nodes();
  Eigen::MatrixXcd z(n, n);
  z.real() = r;
  z.imag() = x;
  Eigen::MatrixXcd yr(n, n);
  const auto& y = net.admittance_siemens();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) yr(i, j) = y(i + 1, j + 1);  // slack is bus 0
  const double residual =
      (yr * z - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff();
  CHECK(residual < 1e-10);
}

TEST_CASE("synthetic feeder honors the R/X ratio exactly") {
  const NetworkModel net = generate_synthetic_feeder({.nodes = 114, .seed = 1});
  CHECK(net.n_buses() == 114);
  CHECK(net.lines().size() == 113);
  for (const Line& l : net.lines())
    CHECK(std::abs(l.resistance_ohm / l.reactance_ohm - 6.0) < 1e-12);
}

TEST_CASE("synthetic feeder minimal and deterministic") {
  const NetworkModel tiny = generate_synthetic_feeder({.nodes = 2, .seed = 5});
  CHECK(tiny.lines().size() == 1);

  const NetworkModel a = generate_synthetic_feeder({.nodes = 30, .seed = 12});
  const NetworkModel b = generate_synthetic_feeder({.nodes = 30, .seed = 12});
  REQUIRE(a.lines().size() == b.lines().size());
  for (std::size_t i = 0; i < a.lines().size(); ++i) {
    CHECK(a.lines()[i].from == b.lines()[i].from);
    CHECK(a.lines()[i].to == b.lines()[i].to);
    CHECK(a.lines()[i].resistance_ohm == b.lines()[i].resistance_ohm);
  }
  CHECK_THROWS_AS(generate_synthetic_feeder({.nodes = 1}), ParameterError);
}

TEST_CASE("radial Zbus equals shared-path resistance") {
  for (std::uint64_t seed : {2ULL, 3ULL, 4ULL}) {
    const NetworkModel net = generate_synthetic_feeder({.nodes = 25, .seed = seed});
    const auto dist = path_resistance(net);
    const auto& r = net.r_matrix_ohm();
    for (int k = 0; k < net.n_nodes(); ++k)
      CHECK(r(k, k) == doctest::Approx(dist[net.bus_of_reduced(k)]).epsilon(1e-9));
  }
}

TEST_CASE("scale_feeder") {
  const NetworkModel net = generate_synthetic_feeder({.nodes = 20, .seed = 3});
  SUBCASE("identity") {
    const NetworkModel same = scale_feeder(net, 1.0);
    for (std::size_t i = 0; i < net.lines().size(); ++i)
      CHECK(same.lines()[i].resistance_ohm == net.lines()[i].resistance_ohm);
  }
  SUBCASE("factor 2.5 scales impedances and the Zbus linearly") {
    const NetworkModel scaled = scale_feeder(net, 2.5);
    for (std::size_t i = 0; i < net.lines().size(); ++i)
      CHECK(scaled.lines()[i].resistance_ohm ==
            doctest::Approx(2.5 * net.lines()[i].resistance_ohm).epsilon(1e-14));
    const double err =
        (scaled.r_matrix_ohm() - 2.5 * net.r_matrix_ohm()).cwiseAbs().maxCoeff();
    CHECK(err < 1e-9);
  }
  SUBCASE("explicit example") {
    const NetworkModel two = make_chain(2, 0.6, 0.1);
    CHECK(scale_feeder(two, 2.5).lines()[0].resistance_ohm == doctest::Approx(1.5));
  }
  CHECK_THROWS_AS(scale_feeder(net, 0.0), ParameterError);
}

TEST_CASE("JSON round trip preserves the model and validates on read") {
  const NetworkModel net = generate_synthetic_feeder({.nodes = 12, .seed = 8});
  const std::string text = net.to_json_string();
  const NetworkModel back = NetworkModel::from_json_string(text);
  CHECK(back.n_buses() == net.n_buses());
  CHECK(back.lines().size() == net.lines().size());
  CHECK((back.r_matrix_ohm() - net.r_matrix_ohm()).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(NetworkModel::from_json_string("{not json"), ConfigError);
  // Disconnected network must fail validation on load.
  CHECK_THROWS_AS(NetworkModel::from_json_string(R"({
    "slack_id": 0, "base_voltage_v": 230,
    "buses": [{"id":0},{"id":1},{"id":2}],
    "lines": [{"from":0,"to":1,"r_ohm":0.5,"x_ohm":0.1}]
  })"),
                  TopologyError);
}
