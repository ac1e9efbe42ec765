#include "vppsim/inverters.hpp"

#include <algorithm>
#include <cmath>

namespace vppsim {

const char* to_string(InverterKind kind) {
  switch (kind) {
    case InverterKind::legacy: return "legacy";
    case InverterKind::autonomous: return "autonomous";
    case InverterKind::non_exporting: return "non_exporting";
    case InverterKind::coordinated: return "coordinated";
  }
  return "unknown";
}

void DroopSettings::validate() const {
  if (!(v_db < v_qmin && v_qmin < v_trip && v_trip < v_max_l && v_max_l < v_max_a))
    throw ParameterError("droop setpoints must satisfy v_db < v_qmin < v_trip < v_max_l < v_max_a");
  if (q_min_pu <= 0.0 || q_min_pu >= 1.0) throw ParameterError("q_min_pu must be in (0, 1)");
  if (p_min_pu < 0.0 || p_min_pu >= 1.0) throw ParameterError("p_min_pu must be in [0, 1)");
  if (tau_v_min <= 0.0 || tau_w_min <= 0.0) throw ParameterError("filter time constants must be positive");
}

void VoltageWindow::push(double v) {
  if (static_cast<int>(buf_.size()) < capacity_) {
    buf_.push_back(v);
    return;
  }
  buf_[head_] = v;
  head_ = (head_ + 1) % buf_.size();
}

double VoltageWindow::mean() const {
  if (buf_.empty()) return 0.0;
  double s = 0.0;
  for (double v : buf_) s += v;
  return s / static_cast<double>(buf_.size());
}

double volt_var_target(double v_pu, const DroopSettings& settings) {
  if (v_pu <= 0.0) throw ParameterError("voltage must be positive");
  if (v_pu <= settings.v_db) return 0.0;
  if (v_pu >= settings.v_qmin) return -settings.q_min_pu;
  const double slope = -settings.q_min_pu / (settings.v_qmin - settings.v_db);
  return slope * (v_pu - settings.v_db);
}

double volt_watt_target(double v_pu, const DroopSettings& settings) {
  if (v_pu <= 0.0) throw ParameterError("voltage must be positive");
  if (v_pu <= settings.v_qmin) return 1.0;
  if (v_pu >= settings.v_max_a) return settings.p_min_pu;
  const double slope = (settings.p_min_pu - 1.0) / (settings.v_max_a - settings.v_qmin);
  return 1.0 + slope * (v_pu - settings.v_qmin);
}

double apply_filter(double prev_pu, double target_pu, double dt_minutes, double tau_minutes) {
  if (dt_minutes <= 0.0) throw ParameterError("filter step must be positive");
  if (dt_minutes > tau_minutes) throw ParameterError("filter step exceeds time constant");
  const double a = dt_minutes / tau_minutes;
  return (1.0 - a) * prev_pu + a * target_pu;
}

AcOutput autonomous_output(const InverterState& state, double v_pu, double p_av_kw,
                           const InverterUnit& unit) {
  if (p_av_kw < 0.0) throw ParameterError("available power must be >= 0");
  if (v_pu <= 0.0) throw ParameterError("voltage must be positive");
  if (!state.online) return {};
  const double s = unit.s_rating_kva;
  const double q = s * state.q_pu;
  const double headroom = std::sqrt(std::max(s * s - q * q, 0.0));
  const double p = std::min(headroom, p_av_kw * state.p_pu);
  return {p, q};
}

AcOutput legacy_output(const InverterState& state, double p_av_kw) {
  if (p_av_kw < 0.0) throw ParameterError("available power must be >= 0");
  return {state.online ? p_av_kw : 0.0, 0.0};
}

AcOutput non_exporting_output(const InverterState& state, double p_av_kw, double p_demand_kw) {
  if (p_av_kw < 0.0 || p_demand_kw < 0.0) throw ParameterError("inputs must be >= 0");
  return {state.online ? std::min(p_av_kw, p_demand_kw) : 0.0, 0.0};
}

double v_max_for(InverterKind kind, const DroopSettings& settings) {
  return kind == InverterKind::autonomous ? settings.v_max_a : settings.v_max_l;
}

bool is_passive(InverterKind kind) { return kind != InverterKind::coordinated; }

void append_voltage_samples(const std::vector<InverterUnit>& units,
                            std::vector<InverterState>& states, const std::vector<double>& v_pu) {
  if (units.size() != states.size() || units.size() != v_pu.size())
    throw ParameterError("fleet vectors must have equal length");
  for (std::size_t i = 0; i < units.size(); ++i)
    if (is_passive(units[i].kind)) states[i].voltage_window.push(v_pu[i]);
}

void update_droop_filters(const std::vector<InverterUnit>& units,
                          std::vector<InverterState>& states, const std::vector<double>& v_prev_pu,
                          double dt_minutes, const DroopSettings& settings) {
  if (units.size() != states.size() || units.size() != v_prev_pu.size())
    throw ParameterError("fleet vectors must have equal length");
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (units[i].kind != InverterKind::autonomous || !states[i].online) continue;
    const double v = v_prev_pu[i];
    states[i].q_pu = apply_filter(states[i].q_pu, volt_var_target(v, settings), dt_minutes,
                                  settings.tau_v_min);
    states[i].p_pu = apply_filter(states[i].p_pu, volt_watt_target(v, settings), dt_minutes,
                                  settings.tau_w_min);
  }
}

TripResult trip_step(const std::vector<InverterUnit>& units, std::vector<InverterState>& states,
                     const std::vector<double>& v_pu, const DroopSettings& settings, Rng& rng) {
  if (units.size() != states.size() || units.size() != v_pu.size())
    throw ParameterError("fleet vectors must have equal length");
  TripResult tripped;
  // Instantaneous ceiling: every violator disconnects, no sampling cap.
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (!is_passive(units[i].kind) || !states[i].online) continue;
    if (v_pu[i] > v_max_for(units[i].kind, settings)) {
      states[i].online = false;
      states[i].periods_offline = 0;
      ++states[i].disconnect_count;
      ++tripped.instantaneous;
    }
  }
  // Rolling-average trip: at most one per step, weight (v_max - v)^-2.
  std::vector<int> candidates;
  std::vector<double> weights;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (!is_passive(units[i].kind) || !states[i].online) continue;
    if (states[i].voltage_window.mean() > settings.v_trip) {
      const double vmax = v_max_for(units[i].kind, settings);
      const double gap = std::max(vmax - v_pu[i], 1e-9);
      candidates.push_back(static_cast<int>(i));
      weights.push_back(1.0 / (gap * gap));
    }
  }
  if (!candidates.empty()) {
    const int pick = rng.pick_weighted(weights);
    if (pick >= 0) {
      InverterState& s = states[candidates[pick]];
      s.online = false;
      s.periods_offline = 0;
      ++s.disconnect_count;
      ++tripped.average;
    }
  }
  return tripped;
}

int reconnect_step(const std::vector<InverterUnit>& units, std::vector<InverterState>& states,
                   const std::vector<double>& v_pu, const DroopSettings& settings,
                   int min_offline_periods, Rng& rng) {
  if (units.size() != states.size() || units.size() != v_pu.size())
    throw ParameterError("fleet vectors must have equal length");
  std::vector<int> candidates;
  std::vector<double> weights;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (!is_passive(units[i].kind) || states[i].online) continue;
    if (states[i].periods_offline < min_offline_periods) continue;
    if (v_pu[i] >= settings.v_trip) continue;
    const double dist = std::max(std::abs(v_pu[i] - 1.0), 1e-9);
    candidates.push_back(static_cast<int>(i));
    weights.push_back(1.0 / (dist * dist));
  }
  if (candidates.empty()) return 0;
  const int pick = rng.pick_weighted(weights);
  if (pick < 0) return 0;
  InverterState& s = states[candidates[pick]];
  s.online = true;
  s.periods_offline = 0;
  s.q_pu = 0.0;
  s.p_pu = 1.0;
  return 1;
}

void advance_offline_counters(std::vector<InverterState>& states) {
  for (InverterState& s : states)
    if (!s.online) ++s.periods_offline;
}

}  // namespace vppsim
