#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vppsim/cic.hpp"
#include "vppsim/inverters.hpp"
#include "vppsim/profiles.hpp"

namespace vppsim {

struct SimSettings {
  double step_s = 30.0;
  double day_start_s = 8.0 * 3600.0;
  double day_end_s = 19.5 * 3600.0;
  DroopSettings droop;
  CicSettings cic;
  bool cic_enabled = true;
  int min_offline_periods = -1;  // -1: two minutes of steps
  double overvoltage_threshold_v = 253.0;  // 230 V + 10%
  double power_factor = refs::load_power_factor;
  bool pf_leading = true;
  double ac_tolerance_pu = 1e-8;
  int ac_max_iter = 100;

  int window_periods() const { return static_cast<int>(std::ceil(600.0 / step_s)); }
  int offline_periods() const {
    return min_offline_periods >= 0 ? min_offline_periods
                                    : static_cast<int>(std::ceil(120.0 / step_s));
  }
  int steps_per_day() const {
    return static_cast<int>(std::llround((day_end_s - day_start_s) / step_s));
  }
};

struct Fleet {
  std::vector<InverterUnit> units;
  std::vector<InverterState> states;

  void add(const InverterUnit& unit) {
    units.push_back(unit);
    states.emplace_back();
  }
  void reset_states(int window_capacity);
  int count(InverterKind kind) const;
  std::vector<int> nodes_of(InverterKind kind) const;
  std::vector<int> pv_nodes() const;  // all buses hosting any inverter
};

/// Ordered placement permutations over the household buses: index 0 walks
/// outward from the transformer (nearest cluster first), the last walks
/// inward (farthest cluster first), the rest are seeded shuffles. A
/// penetration prefix of one ordering is therefore a subset of every higher
/// penetration prefix, so growth locations evolve from the base case.
std::vector<std::vector<int>> placement_orderings(const NetworkModel& network, int n,
                                                  std::uint64_t seed);

/// Nodes hosting PV for a given ordering and penetration.
std::vector<int> placement_nodes(const std::vector<int>& ordering, double penetration);

/// The spec-level operation: n PV node sets at a given penetration.
std::vector<std::vector<int>> sample_placements(const NetworkModel& network, double penetration,
                                                int n, std::uint64_t seed);

Fleet build_fleet(const std::vector<int>& ordering, double base_penetration,
                  double base_legacy_share, InverterKind growth_kind, double penetration,
                  std::uint64_t mix_seed, double s_rating_kva, double p_ac_max_kw,
                  int window_capacity);

struct MetricsReport {
  int customers_overvoltage = 0;
  int customers_overvoltage_pv = 0;
  int customers_overvoltage_nonpv = 0;
  double overvoltage_duration_min = 0.0;
  double max_voltage_v = 0.0;
  double max_step_voltage_delta_v = 0.0;
  double max_voltage_spread_v = 0.0;
  double pv_utilization = 0.0;
  std::map<std::string, double> disconnections_per_inverter;  // by kind
  double total_line_losses_kwh = 0.0;
  double head_reactive_demand_kvarh = 0.0;

  static std::string csv_header();
  std::string csv_row(const std::string& growth_kind, double penetration, int placement) const;
};

struct StepRecord {
  int index = 0;
  double time_s = 0.0;
  Eigen::VectorXcd v_pu;              // all buses
  std::vector<double> unit_p_kw;      // per fleet unit, injected active power
  std::vector<double> unit_q_kvar;
  double available_pv_kw = 0.0;       // per inverter, before curtailment
  double total_coordinated_kw = 0.0;
  double total_autonomous_kw = 0.0;
  double total_passive_kw = 0.0;
  double total_load_kw = 0.0;
  int instantaneous_trips = 0;
  int average_trips = 0;
  int reconnects = 0;
  std::optional<CicSolution> cic;
};

/// Quasi-static time-series engine. One instance simulates one day for one
/// fleet; copyable so sweep cells can fork from a settled state.
class Simulation {
 public:
  Simulation(const NetworkModel& network, Fleet fleet, std::vector<TimeSeries> node_load_kw,
             TimeSeries pv_availability_kw, SimSettings settings, std::uint64_t trip_seed);

  using CicPolicy = std::function<CicSolution(const CicProblem&)>;
  void set_cic_policy(CicPolicy policy) { policy_ = std::move(policy); }
  void reseed_trips(std::uint64_t seed) { rng_ = Rng(seed); }

  const StepRecord& step();
  bool done() const { return index_ >= settings_.steps_per_day(); }
  int step_index() const { return index_; }
  double current_time_s() const { return settings_.day_start_s + index_ * settings_.step_s; }

  const NetworkModel& network() const { return *network_; }
  const Fleet& fleet() const { return fleet_; }
  const SimSettings& settings() const { return settings_; }
  const StepRecord& last_record() const { return record_; }

  /// Builds the controller input for the current step (previous-step AMI
  /// snapshot plus current PV availability and demand).
  CicProblem build_cic_problem() const;

  double load_at(int reduced_index, double t_s) const;
  double pv_available_at(double t_s) const;

  /// Metrics accumulated so far, finalized into a report.
  MetricsReport metrics() const;

 private:
  void accumulate_metrics(const StepRecord& rec);

  const NetworkModel* network_;
  Fleet fleet_;
  std::vector<TimeSeries> node_load_kw_;  // per non-slack bus, reduced order
  TimeSeries pv_availability_kw_;
  SimSettings settings_;
  Rng rng_;
  CicPolicy policy_;

  int index_ = 0;
  Eigen::VectorXcd v_prev_;
  InjectionSet ami_prev_;  // previous-step injections excluding coordinated PV
  StepRecord record_;
  CicSolution cic_warm_;
  bool have_warm_ = false;

  // metric accumulators
  std::vector<double> cust_max_v_, cust_prev_v_;
  std::vector<char> cust_over_;
  std::vector<int> customer_buses_;
  double over_steps_ = 0.0;
  double max_delta_v_ = 0.0, max_spread_v_ = 0.0;
  double losses_kwh_ = 0.0, head_q_kvarh_ = 0.0;
  double pv_available_kwh_ = 0.0, pv_utilized_kwh_ = 0.0;
};

struct CellResult {
  InverterKind growth_kind;
  double penetration = 0.0;
  int placement = 0;
  MetricsReport metrics;
};

struct ScenarioConfig {
  // network
  FeederSpec feeder;
  std::string network_file;  // if set, overrides the synthetic generator
  double feeder_scale = 1.0;
  // profiles
  DayProfileSpec profile = DayProfileSpec::defaults(Season::summer);
  std::string ami_csv;  // if set, real AMI data replaces the synthetic load
  std::uint64_t load_seed = 11;
  // fleet
  double base_penetration = 0.3;
  double base_legacy_share = 0.5;
  InverterKind growth_kind = InverterKind::coordinated;
  std::vector<double> penetration_steps = {0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::uint64_t placement_seed = 3;
  int n_placements = 40;
  double s_rating_kva = refs::s_rating_kva;
  double p_ac_max_kw = refs::p_ac_max_kw;
  // run
  SimSettings sim;
  std::uint64_t run_seed = 1;
  int jobs = 1;
  bool emit_traces = false;
};

/// Per-step trace sink: called with (cell, step record, simulation).
using TraceSink = std::function<void(const CellResult&, const StepRecord&, const Simulation&)>;

NetworkModel make_network(const ScenarioConfig& config);
std::vector<TimeSeries> make_node_loads(const ScenarioConfig& config,
                                        const NetworkModel& network);
TimeSeries make_pv_availability(const ScenarioConfig& config);

/// Runs every (placement, penetration) cell of the configured experiment.
std::vector<CellResult> run_scenario(const ScenarioConfig& config,
                                     const TraceSink& trace = nullptr);

}  // namespace vppsim
