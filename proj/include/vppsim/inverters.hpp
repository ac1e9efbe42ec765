#pragma once

#include <cstddef>
#include <vector>

#include "vppsim/common.hpp"

namespace vppsim {

enum class InverterKind { legacy, autonomous, non_exporting, coordinated };

const char* to_string(InverterKind kind);

/// Droop curve setpoints and filter time constants, per unit on the
/// 230 V nominal base (defaults from the reference setpoint table).
struct DroopSettings {
  double v_db = refs::v_db_v / refs::v_nom_v;
  double v_qmin = refs::v_qmin_v / refs::v_nom_v;
  double v_max_a = refs::v_max_autonomous_v / refs::v_nom_v;
  double v_max_l = refs::v_max_legacy_v / refs::v_nom_v;
  double v_trip = refs::v_trip_v / refs::v_nom_v;
  double q_min_pu = refs::q_min_pu;
  double p_min_pu = refs::p_min_pu;
  double tau_v_min = refs::tau_v_min;
  double tau_w_min = refs::tau_w_min;

  static DroopSettings table1() { return DroopSettings{}; }
  void validate() const;
};

struct InverterUnit {
  int node = 0;
  InverterKind kind = InverterKind::legacy;
  double s_rating_kva = refs::s_rating_kva;
  double p_ac_max_kw = refs::p_ac_max_kw;
};

/// Fixed-capacity ring buffer of recent local voltage magnitudes, used for
/// the rolling average trip condition.
class VoltageWindow {
 public:
  VoltageWindow() = default;
  explicit VoltageWindow(int capacity) : capacity_(capacity > 0 ? capacity : 1) {}
  void push(double v);
  double mean() const;
  int size() const { return static_cast<int>(buf_.size()); }
  int capacity() const { return capacity_; }

 private:
  int capacity_ = 1;
  std::size_t head_ = 0;
  std::vector<double> buf_;
};

struct InverterState {
  bool online = true;
  double q_pu = 0.0;  // filtered Volt/VAr output, in [-q_min_pu, 0]
  double p_pu = 1.0;  // filtered Volt/Watt output, in [p_min_pu, 1]
  VoltageWindow voltage_window;
  int periods_offline = 0;
  int disconnect_count = 0;
};

struct AcOutput {
  double p_kw = 0.0;
  double q_kvar = 0.0;
};

/// Volt/VAr droop target: 0 inside the deadband, ramping linearly to
/// -q_min_pu at v_qmin and saturated beyond.
double volt_var_target(double v_pu, const DroopSettings& settings);

/// Volt/Watt droop target: 1 up to v_qmin (reactive-priority region),
/// ramping linearly to p_min_pu at v_max_a and clamped there.
double volt_watt_target(double v_pu, const DroopSettings& settings);

/// One step of the first-order low-pass filter. Requires 0 < dt <= tau.
double apply_filter(double prev_pu, double target_pu, double dt_minutes, double tau_minutes);

AcOutput autonomous_output(const InverterState& state, double v_pu, double p_av_kw,
                           const InverterUnit& unit);
AcOutput legacy_output(const InverterState& state, double p_av_kw);
AcOutput non_exporting_output(const InverterState& state, double p_av_kw, double p_demand_kw);

double v_max_for(InverterKind kind, const DroopSettings& settings);
bool is_passive(InverterKind kind);

// Fleet-level helpers. All vectors are parallel to `units`.

/// Appends the current local voltage of every passive inverter to its
/// rolling window (offline periods included).
void append_voltage_samples(const std::vector<InverterUnit>& units,
                            std::vector<InverterState>& states, const std::vector<double>& v_pu);

/// Updates the droop filters of online autonomous inverters from the
/// previous-step local voltages.
void update_droop_filters(const std::vector<InverterUnit>& units,
                          std::vector<InverterState>& states, const std::vector<double>& v_prev_pu,
                          double dt_minutes, const DroopSettings& settings);

struct TripResult {
  int instantaneous = 0;
  int average = 0;
  int total() const { return instantaneous + average; }
};

/// Disconnection step: every passive inverter above its instantaneous
/// voltage ceiling trips immediately; among those whose rolling average
/// exceeds v_trip, at most one trips, picked with weight (v_max - v)^-2.
TripResult trip_step(const std::vector<InverterUnit>& units, std::vector<InverterState>& states,
                     const std::vector<double>& v_pu, const DroopSettings& settings, Rng& rng);

/// Reconnection step: among offline passive inverters that have served the
/// minimum offline time and see v < v_trip, at most one reconnects, picked
/// with weight (v - 1)^-2; its filters reset to the no-droop point.
/// Returns 1 if an inverter reconnected.
int reconnect_step(const std::vector<InverterUnit>& units, std::vector<InverterState>& states,
                   const std::vector<double>& v_pu, const DroopSettings& settings,
                   int min_offline_periods, Rng& rng);

/// Increments the offline-period counters; call once per simulation step
/// after the trip/reconnect phase.
void advance_offline_counters(std::vector<InverterState>& states);

}  // namespace vppsim
