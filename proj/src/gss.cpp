#include "vppsim/gss.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vppsim {

const char* to_string(GssDirection dir) { return dir == GssDirection::up ? "UR" : "DR"; }

std::pair<double, double> offer_bounds(double injected_total_kw, double gamma) {
  if (injected_total_kw < 0.0) throw ParameterError("injected total must be >= 0");
  if (gamma < 0.0 || gamma >= 1.0) throw ParameterError("gamma must lie in [0, 1)");
  return {gamma * injected_total_kw, (1.0 - gamma) * injected_total_kw};
}

CicSolution reserve_setpoints(const CicProblem& problem, const CicSolution& max_feasible,
                              double gamma) {
  if (gamma < 0.0 || gamma >= 1.0) throw ParameterError("gamma must lie in [0, 1)");
  if (gamma == 0.0) return max_feasible;
  CicProblem capped = problem;
  capped.aggregate_cap_kw = (1.0 - gamma) * max_feasible.total_injection_kw();
  return solve_cic(capped, &max_feasible);
}

double measure_autonomous_response(const std::vector<InverterUnit>& units,
                                   const std::vector<double>& p_before_kw,
                                   const std::vector<double>& p_after_kw) {
  if (units.size() != p_before_kw.size() || units.size() != p_after_kw.size())
    throw ParameterError("snapshots must cover the same fleet");
  double delta = 0.0;
  for (std::size_t i = 0; i < units.size(); ++i)
    if (units[i].kind == InverterKind::autonomous) delta += p_after_kw[i] - p_before_kw[i];
  return delta;
}

void install_reserve_policy(Simulation& sim, double gamma) {
  sim.set_cic_policy([gamma](const CicProblem& problem) {
    const CicSolution max_feasible = solve_cic(problem);
    return reserve_setpoints(problem, max_feasible, gamma);
  });
}

GssOutcome dispatch(Simulation& sim, const GssRequest& request, double gamma) {
  if (request.magnitude_kw < 0.0) throw ParameterError("request magnitude must be >= 0");
  if (sim.step_index() == 0) throw ParameterError("dispatch needs a tau-1 reference step");

  const StepRecord before = sim.last_record();
  GssOutcome outcome;
  outcome.pre_request_total_kw = before.total_coordinated_kw;
  std::tie(outcome.offer_ur_kw, outcome.offer_dr_kw) =
      offer_bounds(before.total_coordinated_kw, gamma);

  const auto& units = sim.fleet().units;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (units[i].kind != InverterKind::autonomous) continue;
    const double cap = std::min(before.available_pv_kw, units[i].p_ac_max_kw);
    outcome.pre_request_autonomous_curtailment_kw += std::max(0.0, cap - before.unit_p_kw[i]);
  }

  // Hard feasibility of the aggregate delivery constraint. The voltage
  // ceiling stays a soft penalty, so only the available-power envelope can
  // reject a request outright.
  double p_av_total = 0.0;
  const double t_now = sim.current_time_s();
  for (const InverterUnit& u : units)
    if (u.kind == InverterKind::coordinated)
      p_av_total += std::min(sim.pv_available_at(t_now), u.p_ac_max_kw);
  const bool up = request.direction == GssDirection::up;
  outcome.max_feasible_kw =
      up ? std::max(0.0, p_av_total - before.total_coordinated_kw)
         : before.total_coordinated_kw;
  if (request.magnitude_kw > outcome.max_feasible_kw + 1e-9) {
    outcome.rejected = true;
    return outcome;
  }

  const double base_total = before.total_coordinated_kw;
  const double base_autonomous = before.total_autonomous_kw;
  const double magnitude = request.magnitude_kw;
  sim.set_cic_policy([up, magnitude, base_total](const CicProblem& problem) {
    CicProblem augmented = problem;
    augmented.aggregate_cap_kw.reset();  // the reserve is spent on delivery
    augmented.gss = GssAugment{up, magnitude, base_total};
    return solve_cic(augmented);
  });

  outcome.fulfilled = true;
  for (int h = 0; h < request.hold_steps && !sim.done(); ++h) {
    const StepRecord& rec = sim.step();
    const double delivered = rec.total_coordinated_kw - base_total;
    const double offset = rec.total_autonomous_kw - base_autonomous;
    outcome.delivered_kw.push_back(delivered);
    outcome.autonomous_offset_kw.push_back(offset);
    outcome.net_seen_kw.push_back(delivered + offset);
    if (std::abs(delivered) < request.magnitude_kw - 1e-6 ||
        (up ? delivered < 0.0 : delivered > 0.0))
      outcome.fulfilled = false;
    if (rec.cic) outcome.per_inverter_gss_kw = rec.cic->gss_kw;
    if (rec.cic && rec.cic->fallback) outcome.fulfilled = false;
  }
  if (outcome.delivered_kw.empty()) outcome.fulfilled = false;
  install_reserve_policy(sim, gamma);  // the request window is over
  return outcome;
}

std::vector<double> SweepConfig::default_levels() {
  std::vector<double> levels;
  for (int i = 0; i <= 12; ++i) levels.push_back(0.40 + 0.05 * i);
  return levels;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string SweepRow::csv_header() {
  return "level,direction,request_kw,offer_kw,delivered_kw,autonomous_offset_kw,rate_per_unit";
}

std::string SweepRow::csv_row() const {
  std::ostringstream os;
  os << fmt(level) << ',' << to_string(direction) << ',' << fmt(request_kw) << ','
     << fmt(offer_kw) << ',' << fmt(delivered_kw) << ',' << fmt(autonomous_offset_kw) << ','
     << fmt(rate_per_unit);
  return os.str();
}

SweepResult response_sweep(const NetworkModel& network, const Fleet& fleet,
                           const SweepConfig& sweep, const SimSettings& sim_settings,
                           std::uint64_t seed) {
  if (sweep.levels.empty()) throw ParameterError("sweep needs at least one level");
  if (sweep.requests_per_direction < 1) throw ParameterError("need at least one request");

  // Constant customer load at every household bus for the whole experiment.
  std::vector<TimeSeries> node_loads(network.n_nodes());
  for (const Bus& b : network.buses()) {
    if (!b.has_load) continue;
    TimeSeries ts;
    ts.start_s = sim_settings.day_start_s;
    ts.step_s = sim_settings.step_s;
    ts.values.assign(static_cast<std::size_t>(sim_settings.steps_per_day()) + 1,
                     sweep.constant_load_kw);
    node_loads[network.reduced_index(b.id)] = std::move(ts);
  }

  SweepResult result;
  const int settle_steps =
      std::max(2, static_cast<int>(std::llround(sweep.settle_s / sim_settings.step_s)));
  const int hold_steps =
      std::max(1, static_cast<int>(std::llround(sweep.hold_s / sim_settings.step_s)));

  for (std::size_t li = 0; li < sweep.levels.size(); ++li) {
    const double level = sweep.levels[li];
    // Static conditions: constant load, PV availability pinned at the level.
    TimeSeries pv;
    pv.start_s = sim_settings.day_start_s;
    pv.step_s = sim_settings.step_s;
    pv.values.assign(static_cast<std::size_t>(sim_settings.steps_per_day()) + 1,
                     level * refs::p_ac_max_kw);
    Fleet fresh = fleet;
    fresh.reset_states(sim_settings.window_periods());
    Simulation base(network, std::move(fresh), node_loads, pv, sim_settings,
                    Rng::derive(seed, "settle", li).next_u64());
    install_reserve_policy(base, sweep.gamma);
    for (int s = 0; s < settle_steps; ++s) base.step();

    const double offer_total = base.last_record().total_coordinated_kw;
    const auto [ur_max, dr_max] = offer_bounds(offer_total, sweep.gamma);

    int cell = 0;
    for (GssDirection dir : {GssDirection::up, GssDirection::down}) {
      const double offer = dir == GssDirection::up ? ur_max : dr_max;
      for (int k = 1; k <= sweep.requests_per_direction; ++k, ++cell) {
        const double magnitude = offer * k / sweep.requests_per_direction;
        if (magnitude <= 1e-9) continue;
        Simulation sim = base;  // fork from the settled state
        sim.reseed_trips(Rng::derive(seed, "cell", li, cell).next_u64());
        GssRequest request{dir, magnitude, sim.step_index(), hold_steps};
        GssOutcome outcome = dispatch(sim, request, sweep.gamma);

        SweepRow row;
        row.level = level;
        row.direction = dir;
        row.request_kw = magnitude;
        row.offer_kw = offer;
        if (!outcome.delivered_kw.empty()) {
          double dsum = 0.0, osum = 0.0;
          for (double d : outcome.delivered_kw) dsum += d;
          for (double o : outcome.autonomous_offset_kw) osum += o;
          row.delivered_kw = dsum / outcome.delivered_kw.size();
          row.autonomous_offset_kw = osum / outcome.autonomous_offset_kw.size();
          row.rate_per_unit = std::abs(row.autonomous_offset_kw) / magnitude;
        }
        result.rows.push_back(row);
        result.outcomes.push_back(std::move(outcome));
      }
    }
  }
  return result;
}

}  // namespace vppsim
