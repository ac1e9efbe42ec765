#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vppsim/common.hpp"

namespace vppsim {

enum class BusKind { slack, load };

struct Bus {
  int id = 0;
  BusKind kind = BusKind::load;
  bool has_load = false;
};

struct Line {
  int from = 0;
  int to = 0;
  double resistance_ohm = 0.0;
  double reactance_ohm = 0.0;
};

/// Parameters for the synthetic radial feeder generator. The published
/// topologies are not available, so feeders are generated to match the
/// reported statistics (radial, R/X fixed per segment, varied electric
/// distance between households).
struct FeederSpec {
  int nodes = 2;              // total bus count including the slack bus
  int households = -1;        // load buses; -1 means every non-slack bus
  std::uint64_t seed = 1;
  double segment_length_m = 30.0;
  double r_ohm_per_km = 0.4;  // 50 mm^2 conductor class
  double rx_ratio = 6.0;
  double trunk_bias = 0.7;    // probability a new node extends the previous one
  double length_jitter = 0.3; // +/- fraction applied to segment lengths
  double base_voltage_v = 230.0;
  double base_power_kva = 1.0;
};

/// Feeder topology plus the electrical matrices used by both the AC truth
/// model and the linearized controller model.
class NetworkModel {
 public:
  NetworkModel(std::vector<Bus> buses, std::vector<Line> lines, int slack_id,
               double base_voltage_v = 230.0, double base_power_kva = 1.0);

  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Line>& lines() const { return lines_; }
  int slack_id() const { return slack_id_; }
  int n_buses() const { return static_cast<int>(buses_.size()); }
  int n_nodes() const { return n_buses() - 1; }  // non-slack buses

  double base_voltage_v() const { return base_voltage_v_; }
  double base_power_kva() const { return base_power_kva_; }
  double z_base_ohm() const {
    return base_voltage_v_ * base_voltage_v_ / (base_power_kva_ * 1e3);
  }

  /// Full bus admittance matrix (siemens), ordered by bus id.
  const Eigen::MatrixXcd& admittance_siemens() const { return y_siemens_; }

  /// Re/Im of the inverse of the slack-reduced admittance matrix (ohms),
  /// ordered by reduced index.
  const Eigen::MatrixXd& r_matrix_ohm() const { return r_ohm_; }
  const Eigen::MatrixXd& x_matrix_ohm() const { return x_ohm_; }

  /// Same matrices expressed per unit on the network base.
  Eigen::MatrixXd r_matrix_pu() const { return r_ohm_ / z_base_ohm(); }
  Eigen::MatrixXd x_matrix_pu() const { return x_ohm_ / z_base_ohm(); }

  /// Mapping between bus ids and slack-reduced row indices.
  int reduced_index(int bus_id) const;
  int bus_of_reduced(int k) const;

  bool is_radial() const { return static_cast<int>(lines_.size()) == n_buses() - 1; }

  std::string to_json_string() const;
  static NetworkModel from_json_string(const std::string& text);
  static NetworkModel load_json(const std::string& path);
  void save_json(const std::string& path) const;

 private:
  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  int slack_id_;
  double base_voltage_v_;
  double base_power_kva_;
  Eigen::MatrixXcd y_siemens_;
  Eigen::MatrixXd r_ohm_, x_ohm_;
};

/// Assembles the bus admittance matrix from line impedances.
/// Throws TopologyError for a disconnected graph, ParameterError for
/// non-positive impedances.
Eigen::MatrixXcd build_admittance(const std::vector<Bus>& buses, const std::vector<Line>& lines);

/// Removes the slack row/column from the admittance matrix and inverts;
/// returns (R, X) in ohms, ordered by reduced index.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> reduce_and_invert(const NetworkModel& network);

NetworkModel generate_synthetic_feeder(const FeederSpec& spec);

/// Multiplies every line impedance by `factor`, leaving topology unchanged.
NetworkModel scale_feeder(const NetworkModel& network, double factor);

}  // namespace vppsim
