#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <complex>

#include "test_util.hpp"
#include "vppsim/powerflow.hpp"

using namespace vppsim;
using test::make_chain_pu;
using test::two_bus_voltage;

TEST_CASE("no-load network sits exactly at nominal voltage") {
  const NetworkModel net = make_chain_pu(5, 0.01, 0.002);
  const VoltageSolution sol = solve_ac(net, InjectionSet::zero(4));
  REQUIRE(sol.converged);
  for (int i = 0; i < 5; ++i) {
    CHECK(sol.v_pu[i].real() == 1.0);
    CHECK(sol.v_pu[i].imag() == 0.0);
  }
}

TEST_CASE("two-bus flow matches the closed-form solution") {
  const std::complex<double> z(0.012, 0.002);
  const NetworkModel net = make_chain_pu(2, z.real(), z.imag());
  InjectionSet inj = InjectionSet::zero(1);
  inj.p_kw[0] = 0.05;  // +0.05 pu on the 1 kVA base
  const VoltageSolution sol = solve_ac(net, inj, 1e-12, 200);
  REQUIRE(sol.converged);
  const std::complex<double> expected = two_bus_voltage(z, {0.05, 0.0});
  CHECK(std::abs(sol.v_pu[1] - expected) < 1e-9);
  CHECK(std::abs(sol.v_pu[1]) > 1.0);  // injection raises voltage

  SUBCASE("flipping the sign turns it into a load and depresses voltage") {
    inj.p_kw[0] = -0.05;
    const VoltageSolution load_sol = solve_ac(net, inj, 1e-12, 200);
    REQUIRE(load_sol.converged);
    CHECK(std::abs(load_sol.v_pu[1]) < 1.0);
    CHECK(std::abs(load_sol.v_pu[1] - two_bus_voltage(z, {-0.05, 0.0})) < 1e-9);
  }
}

TEST_CASE("power balance: slack covers loads minus generation plus losses") {
  const NetworkModel net = make_chain_pu(6, 0.008, 0.0013);
  InjectionSet inj = InjectionSet::zero(5);
  inj.p_kw << -0.01, 0.02, -0.005, 0.015, -0.02;
  inj.q_kvar << 0.003, -0.008, 0.001, 0.0, -0.002;
  const VoltageSolution sol = solve_ac(net, inj, 1e-10, 200);
  REQUIRE(sol.converged);
  const double slack_p = slack_injection_kw(net, sol.v_pu).real();
  const double balance = slack_p + inj.p_kw.sum() - line_losses(net, sol.v_pu);
  CHECK(std::abs(balance) < 1e-6);
}

TEST_CASE("re-solving from a converged state takes at most two sweeps") {
  const NetworkModel net = make_chain_pu(8, 0.01, 0.0017);
  InjectionSet inj = InjectionSet::zero(7);
  for (int i = 0; i < 7; ++i) inj.p_kw[i] = 0.01 * (i % 3);
  const VoltageSolution first = solve_ac(net, inj);
  REQUIRE(first.converged);
  const VoltageSolution again = solve_ac(net, inj, 1e-8, 100, &first.v_pu);
  REQUIRE(again.converged);
  CHECK(again.iterations <= 2);
}

TEST_CASE("non-radial network is rejected by the sweep solver") {
  std::vector<Bus> buses = {{0, BusKind::slack, false},
                            {1, BusKind::load, true},
                            {2, BusKind::load, true}};
  std::vector<Line> lines = {{0, 1, 0.5, 0.1}, {1, 2, 0.5, 0.1}, {0, 2, 0.5, 0.1}};
  const NetworkModel net(buses, lines, 0);
  CHECK_THROWS_AS(solve_ac(net, InjectionSet::zero(2)), TopologyError);
}

TEST_CASE("linearized voltages: trivial cases") {
  const NetworkModel net = make_chain_pu(4, 0.015, 0.0025);
  const InjectionSet zero = InjectionSet::zero(3);
  const LinearVoltages lv = linearized_voltages(net, zero, zero);
  for (int k = 0; k < 3; ++k) {
    CHECK(lv.re[k] == 1.0);
    CHECK(lv.im[k] == 0.0);
  }

  InjectionSet single = InjectionSet::zero(3);
  single.p_kw[2] = 0.01;
  const LinearVoltages lv2 = linearized_voltages(net, single, zero);
  const Eigen::MatrixXd r = net.r_matrix_pu();
  for (int k = 0; k < 3; ++k)
    CHECK(lv2.re[k] == doctest::Approx(1.0 + r(k, 2) * 0.01).epsilon(1e-12));

  InjectionSet bad = InjectionSet::zero(2);
  CHECK_THROWS_AS(linearized_voltages(net, bad, zero), ParameterError);
}

TEST_CASE("linearization error is small and shrinks quadratically") {
  const NetworkModel net = make_chain_pu(5, 0.02, 0.0033);
  InjectionSet inj = InjectionSet::zero(4);
  inj.p_kw << 0.02, 0.015, -0.01, 0.02;
  inj.q_kvar << -0.005, 0.0, 0.004, -0.006;

  auto max_error = [&](double scale) {
    InjectionSet s = inj;
    s.p_kw *= scale;
    s.q_kvar *= scale;
    const VoltageSolution ac = solve_ac(net, s, 1e-12, 300);
    REQUIRE(ac.converged);
    const LinearVoltages lv = linearized_voltages(net, s, InjectionSet::zero(4));
    double err = 0.0;
    for (int k = 0; k < 4; ++k) {
      const std::complex<double> lin(lv.re[k], lv.im[k]);
      err = std::max(err, std::abs(lin - ac.v_pu[net.bus_of_reduced(k)]));
    }
    return err;
  };

  const double full = max_error(1.0);
  const double half = max_error(0.5);
  CHECK(full < 0.005);
  CHECK(full / half >= 3.5);
}

TEST_CASE("line losses") {
  const NetworkModel net = make_chain_pu(3, 0.01, 0.002);
  SUBCASE("flat profile loses nothing") {
    const Eigen::VectorXcd flat = Eigen::VectorXcd::Constant(3, {1.0, 0.0});
    CHECK(line_losses(net, flat) == 0.0);
  }
  SUBCASE("two-bus loss equals |I|^2 r") {
    const NetworkModel two = make_chain_pu(2, 0.012, 0.002);
    InjectionSet inj = InjectionSet::zero(1);
    inj.p_kw[0] = 0.08;
    const VoltageSolution sol = solve_ac(two, inj, 1e-12, 200);
    REQUIRE(sol.converged);
    const std::complex<double> z(0.012, 0.002);
    const std::complex<double> current = (sol.v_pu[1] - sol.v_pu[0]) / z;
    CHECK(line_losses(two, sol.v_pu) ==
          doctest::Approx(std::norm(current) * z.real()).epsilon(1e-9));
  }
  SUBCASE("losses are non-negative for random states") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXcd v(3);
      for (int i = 0; i < 3; ++i)
        v[i] = std::complex<double>(1.0 + 0.1 * (rng.uniform01() - 0.5),
                                    0.05 * (rng.uniform01() - 0.5));
      CHECK(line_losses(net, v) >= 0.0);
    }
  }
  SUBCASE("the paper_sum variant differs and does not vanish on flat states") {
    const Eigen::VectorXcd flat = Eigen::VectorXcd::Constant(3, {1.0, 0.0});
    CHECK(line_losses(net, flat, LossFormula::paper_sum) > 0.0);
  }
}
