#include "vppsim/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>

#include <json.hpp>

namespace vppsim {

namespace {

void check_bus_ids(const std::vector<Bus>& buses, int slack_id) {
  if (buses.size() < 2) throw ParameterError("network needs at least two buses");
  std::vector<char> seen(buses.size(), 0);
  int slack_count = 0;
  for (const Bus& b : buses) {
    if (b.id < 0 || b.id >= static_cast<int>(buses.size()))
      throw ParameterError("bus ids must be contiguous 0..N");
    if (seen[b.id]) throw ParameterError("duplicate bus id " + std::to_string(b.id));
    seen[b.id] = 1;
    if (b.kind == BusKind::slack) ++slack_count;
  }
  if (slack_count != 1) throw ParameterError("exactly one slack bus required");
  for (const Bus& b : buses) {
    if ((b.id == slack_id) != (b.kind == BusKind::slack))
      throw ParameterError("slack_id does not match the slack bus kind");
  }
}

void check_connected(int n_buses, const std::vector<Line>& lines, int slack_id) {
  std::vector<std::vector<int>> adj(n_buses);
  for (const Line& l : lines) {
    if (l.from < 0 || l.from >= n_buses || l.to < 0 || l.to >= n_buses)
      throw ParameterError("line endpoint out of range");
    if (l.from == l.to) throw ParameterError("line connects a bus to itself");
    adj[l.from].push_back(l.to);
    adj[l.to].push_back(l.from);
  }
  std::vector<char> visited(n_buses, 0);
  std::queue<int> q;
  q.push(slack_id);
  visited[slack_id] = 1;
  int count = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : adj[u]) {
      if (!visited[v]) {
        visited[v] = 1;
        ++count;
        q.push(v);
      }
    }
  }
  if (count != n_buses) throw TopologyError("network graph is not connected to the slack bus");
}

}  // namespace

Eigen::MatrixXcd build_admittance(const std::vector<Bus>& buses, const std::vector<Line>& lines) {
  const int n = static_cast<int>(buses.size());
  for (const Line& l : lines) {
    if (l.resistance_ohm <= 0.0 || l.reactance_ohm <= 0.0)
      throw ParameterError("line impedance must be strictly positive");
  }
  int slack_id = -1;
  for (const Bus& b : buses)
    if (b.kind == BusKind::slack) slack_id = b.id;
  if (slack_id < 0) throw ParameterError("no slack bus");
  check_connected(n, lines, slack_id);

  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  for (const Line& l : lines) {
    const std::complex<double> z(l.resistance_ohm, l.reactance_ohm);
    const std::complex<double> adm = 1.0 / z;
    y(l.from, l.to) -= adm;
    y(l.to, l.from) -= adm;
    y(l.from, l.from) += adm;
    y(l.to, l.to) += adm;
  }
  return y;
}

NetworkModel::NetworkModel(std::vector<Bus> buses, std::vector<Line> lines, int slack_id,
                           double base_voltage_v, double base_power_kva)
    : buses_(std::move(buses)),
      lines_(std::move(lines)),
      slack_id_(slack_id),
      base_voltage_v_(base_voltage_v),
      base_power_kva_(base_power_kva) {
  if (base_voltage_v_ <= 0.0 || base_power_kva_ <= 0.0)
    throw ParameterError("base voltage and power must be positive");
  check_bus_ids(buses_, slack_id_);
  std::sort(buses_.begin(), buses_.end(), [](const Bus& a, const Bus& b) { return a.id < b.id; });
  y_siemens_ = build_admittance(buses_, lines_);
  auto rx = reduce_and_invert(*this);
  r_ohm_ = std::move(rx.first);
  x_ohm_ = std::move(rx.second);
}

int NetworkModel::reduced_index(int bus_id) const {
  if (bus_id < 0 || bus_id >= n_buses() || bus_id == slack_id_)
    throw ParameterError("reduced_index: invalid bus id " + std::to_string(bus_id));
  return bus_id < slack_id_ ? bus_id : bus_id - 1;
}

int NetworkModel::bus_of_reduced(int k) const {
  if (k < 0 || k >= n_nodes()) throw ParameterError("bus_of_reduced: index out of range");
  return k < slack_id_ ? k : k + 1;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> reduce_and_invert(const NetworkModel& network) {
  const Eigen::MatrixXcd& y = network.admittance_siemens();
  const int n = network.n_buses();
  const int s = network.slack_id();
  Eigen::MatrixXcd yr(n - 1, n - 1);
  for (int i = 0, ri = 0; i < n; ++i) {
    if (i == s) continue;
    for (int j = 0, rj = 0; j < n; ++j) {
      if (j == s) continue;
      yr(ri, rj) = y(i, j);
      ++rj;
    }
    ++ri;
  }
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(yr);
  Eigen::MatrixXcd z = lu.solve(Eigen::MatrixXcd::Identity(n - 1, n - 1));
  const double residual = (yr * z - Eigen::MatrixXcd::Identity(n - 1, n - 1)).cwiseAbs().maxCoeff();
  if (!std::isfinite(residual) || residual > 1e-6)
    throw TopologyError("reduced admittance matrix is singular or ill-conditioned");
  z = ((z + z.transpose()) / 2.0).eval();  // symmetric up to roundoff by construction
  return {z.real(), z.imag()};
}

NetworkModel generate_synthetic_feeder(const FeederSpec& spec) {
  if (spec.nodes < 2) throw ParameterError("feeder needs at least 2 buses");
  if (spec.segment_length_m <= 0.0 || spec.r_ohm_per_km <= 0.0 || spec.rx_ratio <= 0.0)
    throw ParameterError("feeder impedance parameters must be positive");
  const int n = spec.nodes;
  const int households = spec.households < 0 ? n - 1 : spec.households;
  if (households > n - 1) throw ParameterError("more households than non-slack buses");

  Rng rng = Rng::derive(spec.seed, "feeder-topology");
  std::vector<Bus> buses(n);
  buses[0] = Bus{0, BusKind::slack, false};
  for (int i = 1; i < n; ++i) buses[i] = Bus{i, BusKind::load, i <= households};

  std::vector<Line> lines;
  lines.reserve(n - 1);
  for (int i = 1; i < n; ++i) {
    int parent = 0;
    if (i >= 2) parent = (rng.uniform01() < spec.trunk_bias) ? i - 1 : rng.uniform_int(0, i - 1);
    const double jitter = 1.0 + spec.length_jitter * (2.0 * rng.uniform01() - 1.0);
    const double length_km = spec.segment_length_m * jitter / 1000.0;
    const double r = spec.r_ohm_per_km * length_km;
    lines.push_back(Line{parent, i, r, r / spec.rx_ratio});
  }
  return NetworkModel(std::move(buses), std::move(lines), 0, spec.base_voltage_v,
                      spec.base_power_kva);
}

NetworkModel scale_feeder(const NetworkModel& network, double factor) {
  if (factor <= 0.0) throw ParameterError("scale factor must be positive");
  std::vector<Line> lines = network.lines();
  for (Line& l : lines) {
    l.resistance_ohm *= factor;
    l.reactance_ohm *= factor;
  }
  return NetworkModel(network.buses(), std::move(lines), network.slack_id(),
                      network.base_voltage_v(), network.base_power_kva());
}

std::string NetworkModel::to_json_string() const {
  nlohmann::json j;
  j["slack_id"] = slack_id_;
  j["base_voltage_v"] = base_voltage_v_;
  j["base_power_kva"] = base_power_kva_;
  j["buses"] = nlohmann::json::array();
  for (const Bus& b : buses_)
    j["buses"].push_back({{"id", b.id}, {"has_load", b.has_load}});
  j["lines"] = nlohmann::json::array();
  for (const Line& l : lines_)
    j["lines"].push_back(
        {{"from", l.from}, {"to", l.to}, {"r_ohm", l.resistance_ohm}, {"x_ohm", l.reactance_ohm}});
  return j.dump(2);
}

NetworkModel NetworkModel::from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("network JSON parse error: ") + e.what());
  }
  try {
    const int slack_id = j.at("slack_id").get<int>();
    const double vb = j.value("base_voltage_v", 230.0);
    const double sb = j.value("base_power_kva", 1.0);
    std::vector<Bus> buses;
    for (const auto& bj : j.at("buses")) {
      Bus b;
      b.id = bj.at("id").get<int>();
      b.has_load = bj.value("has_load", true);
      b.kind = (b.id == slack_id) ? BusKind::slack : BusKind::load;
      if (b.kind == BusKind::slack) b.has_load = false;
      buses.push_back(b);
    }
    std::vector<Line> lines;
    for (const auto& lj : j.at("lines")) {
      lines.push_back(Line{lj.at("from").get<int>(), lj.at("to").get<int>(),
                           lj.at("r_ohm").get<double>(), lj.at("x_ohm").get<double>()});
    }
    return NetworkModel(std::move(buses), std::move(lines), slack_id, vb, sb);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network JSON schema error: ") + e.what());
  }
}

NetworkModel NetworkModel::load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open network file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

void NetworkModel::save_json(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write network file: " + path);
  out << to_json_string() << "\n";
}

}  // namespace vppsim
