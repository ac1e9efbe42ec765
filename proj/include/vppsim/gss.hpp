#pragma once

#include <string>
#include <vector>

#include "vppsim/scenario.hpp"

namespace vppsim {

enum class GssDirection { up, down };

const char* to_string(GssDirection dir);

struct GssRequest {
  GssDirection direction = GssDirection::down;
  double magnitude_kw = 0.0;
  int issue_step = 0;
  int hold_steps = 10;  // 5 minutes at the 30 s default step
};

struct GssOutcome {
  std::vector<double> delivered_kw;           // per held step, vs the pre-request total
  std::vector<double> autonomous_offset_kw;   // per held step
  std::vector<double> net_seen_kw;            // delivered + offset
  Eigen::VectorXd per_inverter_gss_kw;
  double offer_ur_kw = 0.0, offer_dr_kw = 0.0;
  double pre_request_total_kw = 0.0;
  double pre_request_autonomous_curtailment_kw = 0.0;
  bool rejected = false;
  bool fulfilled = false;
  double max_feasible_kw = 0.0;  // reported when a request is rejected
};

/// Offer limits from the current injected total: (UR, DR) = (g, 1-g) shares.
std::pair<double, double> offer_bounds(double injected_total_kw, double gamma);

/// Reserve operation: re-optimizes with the aggregate output capped at
/// (1-gamma) of the maximum-feasible total. gamma = 0 returns the input.
CicSolution reserve_setpoints(const CicProblem& problem, const CicSolution& max_feasible,
                              double gamma);

/// Total change in autonomous inverter output between two per-unit
/// injection snapshots (both taken over the same fleet).
double measure_autonomous_response(const std::vector<InverterUnit>& units,
                                   const std::vector<double>& p_before_kw,
                                   const std::vector<double>& p_after_kw);

/// Installs the reserve-operation controller policy on a simulation:
/// each step solves for the maximum feasible output and re-solves with the
/// gamma cap.
void install_reserve_policy(Simulation& sim, double gamma);

/// Issues a request against a running simulation and drives the held steps,
/// recording the delivery and the passive-fleet response per step.
/// Requires at least one completed step (the tau-1 reference).
GssOutcome dispatch(Simulation& sim, const GssRequest& request, double gamma);

struct SweepRow {
  double level = 0.0;
  GssDirection direction = GssDirection::down;
  double request_kw = 0.0;
  double offer_kw = 0.0;
  double delivered_kw = 0.0;           // mean over held steps
  double autonomous_offset_kw = 0.0;   // mean over held steps
  double rate_per_unit = 0.0;

  static std::string csv_header();
  std::string csv_row() const;
};

struct SweepConfig {
  std::vector<double> levels;          // PV output levels, fractions of capacity
  int requests_per_direction = 12;
  double gamma = 0.2;
  double hold_s = 300.0;
  double settle_s = 900.0;             // droop filters settle before offers
  double constant_load_kw = 0.77;      // constant customer load during the sweep

  static std::vector<double> default_levels();  // 0.40 .. 1.00 in steps of 0.05
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<GssOutcome> outcomes;  // parallel to rows
};

/// The response-rate experiment: for each PV level the fleet settles under
/// reserve operation with constant customer load, then request cells fork
/// from the settled state with magnitudes on an even grid spanning each
/// offer bound.
SweepResult response_sweep(const NetworkModel& network, const Fleet& fleet,
                           const SweepConfig& sweep, const SimSettings& sim_settings,
                           std::uint64_t seed);

}  // namespace vppsim
