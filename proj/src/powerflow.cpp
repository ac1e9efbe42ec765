#include "vppsim/powerflow.hpp"

#include <cmath>
#include <complex>
#include <queue>
#include <vector>

namespace vppsim {

namespace {

struct SweepOrder {
  std::vector<int> bfs;              // bus ids, slack first
  std::vector<int> parent;           // parent bus id, -1 for slack
  std::vector<std::complex<double>> z_to_parent_pu;  // per bus id
};

SweepOrder build_sweep_order(const NetworkModel& net) {
  if (!net.is_radial())
    throw TopologyError("backward/forward sweep requires a radial network");
  const int n = net.n_buses();
  std::vector<std::vector<std::pair<int, std::complex<double>>>> adj(n);
  const double zb = net.z_base_ohm();
  for (const Line& l : net.lines()) {
    const std::complex<double> z(l.resistance_ohm / zb, l.reactance_ohm / zb);
    adj[l.from].push_back({l.to, z});
    adj[l.to].push_back({l.from, z});
  }
  SweepOrder order;
  order.parent.assign(n, -1);
  order.z_to_parent_pu.assign(n, {0.0, 0.0});
  std::vector<char> visited(n, 0);
  std::queue<int> q;
  q.push(net.slack_id());
  visited[net.slack_id()] = 1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    order.bfs.push_back(u);
    for (const auto& [v, z] : adj[u]) {
      if (visited[v]) continue;
      visited[v] = 1;
      order.parent[v] = u;
      order.z_to_parent_pu[v] = z;
      q.push(v);
    }
  }
  if (static_cast<int>(order.bfs.size()) != n)
    throw TopologyError("network graph is not connected to the slack bus");
  return order;
}

}  // namespace

VoltageSolution solve_ac(const NetworkModel& network, const InjectionSet& injections,
                         double tolerance_pu, int max_iter, const Eigen::VectorXcd* initial) {
  if (tolerance_pu <= 0.0) throw ParameterError("tolerance must be positive");
  const int n = network.n_buses();
  const int nn = network.n_nodes();
  if (injections.p_kw.size() != nn || injections.q_kvar.size() != nn)
    throw ParameterError("injection vector length must equal the non-slack bus count");

  const SweepOrder order = build_sweep_order(network);
  const double sb = network.base_power_kva();

  Eigen::VectorXcd s_pu = Eigen::VectorXcd::Zero(n);
  for (int k = 0; k < nn; ++k) {
    const int bus = network.bus_of_reduced(k);
    s_pu[bus] = std::complex<double>(injections.p_kw[k], injections.q_kvar[k]) / sb;
  }

  Eigen::VectorXcd v = initial ? *initial : Eigen::VectorXcd::Constant(n, {1.0, 0.0});
  if (v.size() != n) throw ParameterError("initial voltage vector has wrong length");
  v[network.slack_id()] = {1.0, 0.0};

  const Eigen::MatrixXcd y_pu = network.admittance_siemens() * network.z_base_ohm();

  VoltageSolution sol;
  sol.v_pu = v;
  double residual = 0.0;
  for (int iter = 1; iter <= max_iter; ++iter) {
    // Backward: accumulate branch currents from the leaves.
    std::vector<std::complex<double>> acc(n, {0.0, 0.0});
    for (auto it = order.bfs.rbegin(); it != order.bfs.rend(); ++it) {
      const int bus = *it;
      if (bus == network.slack_id()) continue;
      acc[bus] -= std::conj(s_pu[bus] / v[bus]);  // demand current from injection
      acc[order.parent[bus]] += acc[bus];
    }
    // Forward: propagate voltage drops from the slack.
    for (int bus : order.bfs) {
      if (bus == network.slack_id()) continue;
      v[bus] = v[order.parent[bus]] - order.z_to_parent_pu[bus] * acc[bus];
    }
    // Mismatch against the specified injections.
    const Eigen::VectorXcd i_node = y_pu * v;
    residual = 0.0;
    for (int k = 0; k < nn; ++k) {
      const int bus = network.bus_of_reduced(k);
      residual = std::max(residual, std::abs(s_pu[bus] - v[bus] * std::conj(i_node[bus])));
    }
    sol.iterations = iter;
    if (!std::isfinite(residual)) break;
    if (residual < tolerance_pu) {
      sol.converged = true;
      break;
    }
  }
  sol.v_pu = v;
  sol.residual_pu = residual;
  return sol;
}

LinearVoltages linearized_voltages(const NetworkModel& network, const InjectionSet& net,
                                   const InjectionSet& coordinated) {
  const int nn = network.n_nodes();
  if (net.p_kw.size() != nn || net.q_kvar.size() != nn || coordinated.p_kw.size() != nn ||
      coordinated.q_kvar.size() != nn)
    throw ParameterError("injection vector length must equal the non-slack bus count");
  const double sb = network.base_power_kva();
  const Eigen::VectorXd p_pu = (net.p_kw + coordinated.p_kw) / sb;
  const Eigen::VectorXd q_pu = (net.q_kvar + coordinated.q_kvar) / sb;
  const Eigen::MatrixXd r = network.r_matrix_pu();
  const Eigen::MatrixXd x = network.x_matrix_pu();
  LinearVoltages lv;
  lv.re = Eigen::VectorXd::Ones(nn) + r * p_pu + x * q_pu;
  lv.im = x * p_pu - r * q_pu;
  return lv;
}

double line_losses(const NetworkModel& network, const Eigen::VectorXcd& v_pu,
                   LossFormula formula) {
  if (v_pu.size() != network.n_buses())
    throw ParameterError("voltage vector length must equal the bus count");
  const double zb = network.z_base_ohm();
  double loss_pu = 0.0;
  for (const Line& l : network.lines()) {
    const std::complex<double> z(l.resistance_ohm / zb, l.reactance_ohm / zb);
    const std::complex<double> y = 1.0 / z;
    const std::complex<double> d = (formula == LossFormula::difference)
                                       ? v_pu[l.from] - v_pu[l.to]
                                       : v_pu[l.from] + v_pu[l.to];
    loss_pu += std::conj(y).real() * std::norm(d);
  }
  return loss_pu * network.base_power_kva();
}

std::complex<double> slack_injection_kw(const NetworkModel& network,
                                        const Eigen::VectorXcd& v_pu) {
  if (v_pu.size() != network.n_buses())
    throw ParameterError("voltage vector length must equal the bus count");
  const Eigen::MatrixXcd y_pu = network.admittance_siemens() * network.z_base_ohm();
  const int s = network.slack_id();
  const std::complex<double> i = (y_pu.row(s) * v_pu)(0);
  return v_pu[s] * std::conj(i) * network.base_power_kva();
}

}  // namespace vppsim
