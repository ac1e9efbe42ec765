#pragma once

#include <Eigen/Dense>

#include "vppsim/network.hpp"

namespace vppsim {

/// Per-bus injections over the non-slack buses in reduced order.
/// Positive means power injected into the grid; consumption is negative.
struct InjectionSet {
  Eigen::VectorXd p_kw;
  Eigen::VectorXd q_kvar;

  static InjectionSet zero(int n_nodes) {
    return InjectionSet{Eigen::VectorXd::Zero(n_nodes), Eigen::VectorXd::Zero(n_nodes)};
  }
  InjectionSet& add(int reduced_index, double p, double q) {
    p_kw[reduced_index] += p;
    q_kvar[reduced_index] += q;
    return *this;
  }
};

struct VoltageSolution {
  Eigen::VectorXcd v_pu;  // all buses, ordered by bus id; slack at 1+0j
  bool converged = false;
  int iterations = 0;
  double residual_pu = 0.0;  // max nodal complex-power mismatch
};

enum class LossFormula { difference, paper_sum };

/// Backward/forward sweep AC power flow for radial feeders with the slack
/// bus held at 1.0 pu. Throws TopologyError if the network is not a tree.
VoltageSolution solve_ac(const NetworkModel& network, const InjectionSet& injections,
                         double tolerance_pu = 1e-8, int max_iter = 100,
                         const Eigen::VectorXcd* initial = nullptr);

struct LinearVoltages {
  Eigen::VectorXd re;  // per non-slack bus, reduced order, pu
  Eigen::VectorXd im;
};

/// First-order nodal voltage balance: Re{V} = 1 + R p + X q,
/// Im{V} = X p - R q, with every term a signed injection in per unit.
/// `net` and `coordinated` are summed under the same convention.
LinearVoltages linearized_voltages(const NetworkModel& network, const InjectionSet& net,
                                   const InjectionSet& coordinated);

/// Total line active power losses in kW for a voltage state.
/// The default evaluates the physical Joule loss over voltage differences;
/// LossFormula::paper_sum evaluates the same form over voltage sums.
double line_losses(const NetworkModel& network, const Eigen::VectorXcd& v_pu,
                   LossFormula formula = LossFormula::difference);

/// Complex slack-bus injection implied by a voltage state, in kW/kvar.
/// Positive real part means the feeder draws power through the transformer.
std::complex<double> slack_injection_kw(const NetworkModel& network, const Eigen::VectorXcd& v_pu);

}  // namespace vppsim
