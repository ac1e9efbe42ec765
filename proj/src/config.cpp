#include "vppsim/config.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace vppsim {

namespace {

using nlohmann::json;

double volts_to_pu(double v) { return v / refs::v_nom_v; }

InverterKind parse_kind(const std::string& s) {
  if (s == "legacy") return InverterKind::legacy;
  if (s == "autonomous") return InverterKind::autonomous;
  if (s == "non_exporting") return InverterKind::non_exporting;
  if (s == "coordinated") return InverterKind::coordinated;
  throw ConfigError("fleet.growth_kind: unknown inverter kind '" + s + "'");
}

Season parse_season(const std::string& s) {
  if (s == "summer") return Season::summer;
  if (s == "winter") return Season::winter;
  throw ConfigError("profiles.season: expected 'summer' or 'winter'");
}

double parse_clock(const json& j, const char* where) {
  if (j.is_number()) return j.get<double>();
  const std::string s = j.get<std::string>();
  int hh = 0, mm = 0;
  if (std::sscanf(s.c_str(), "%d:%d", &hh, &mm) != 2)
    throw ConfigError(std::string(where) + ": expected HH:MM or seconds");
  return hh * 3600.0 + mm * 60.0;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }

  RunConfig rc;
  ScenarioConfig& sc = rc.scenario;
  try {
    if (j.contains("network")) {
      const json& n = j["network"];
      sc.network_file = get_or<std::string>(n, "file", "");
      sc.feeder.nodes = get_or(n, "nodes", sc.feeder.nodes);
      sc.feeder.households = get_or(n, "households", sc.feeder.households);
      sc.feeder.seed = get_or<std::uint64_t>(n, "seed", sc.feeder.seed);
      sc.feeder.segment_length_m = get_or(n, "segment_length_m", sc.feeder.segment_length_m);
      sc.feeder.r_ohm_per_km = get_or(n, "r_ohm_per_km", sc.feeder.r_ohm_per_km);
      sc.feeder.rx_ratio = get_or(n, "rx_ratio", sc.feeder.rx_ratio);
      sc.feeder.trunk_bias = get_or(n, "trunk_bias", sc.feeder.trunk_bias);
      sc.feeder.length_jitter = get_or(n, "length_jitter", sc.feeder.length_jitter);
      sc.feeder.base_voltage_v = get_or(n, "base_voltage_v", sc.feeder.base_voltage_v);
      sc.feeder.base_power_kva = get_or(n, "base_power_kva", sc.feeder.base_power_kva);
      sc.feeder_scale = get_or(n, "scale", sc.feeder_scale);
    }
    if (j.contains("profiles")) {
      const json& p = j["profiles"];
      sc.profile = DayProfileSpec::defaults(parse_season(get_or<std::string>(p, "season", "summer")));
      sc.profile.mean_load_kw = get_or(p, "mean_load_kw", sc.profile.mean_load_kw);
      sc.profile.std_load_kw = get_or(p, "std_load_kw", sc.profile.std_load_kw);
      sc.profile.pv_peak_kw = get_or(p, "pv_peak_kw", sc.profile.pv_peak_kw);
      sc.ami_csv = get_or<std::string>(p, "ami_csv", "");
      sc.load_seed = get_or<std::uint64_t>(p, "load_seed", sc.load_seed);
      sc.sim.power_factor = get_or(p, "power_factor", sc.sim.power_factor);
      sc.sim.pf_leading = get_or(p, "leading", sc.sim.pf_leading);
    }
    if (j.contains("fleet")) {
      const json& f = j["fleet"];
      sc.base_penetration = get_or(f, "base_penetration", sc.base_penetration);
      if (f.contains("base_mix")) {
        const json& m = f["base_mix"];
        const double legacy = get_or(m, "legacy", 0.5);
        const double autonomous = get_or(m, "autonomous", 0.5);
        if (std::abs(legacy + autonomous - 1.0) > 1e-9)
          throw ConfigError("fleet.base_mix: shares must sum to 1");
        sc.base_legacy_share = legacy;
      }
      sc.growth_kind = parse_kind(get_or<std::string>(f, "growth_kind", "coordinated"));
      if (f.contains("penetration_steps"))
        sc.penetration_steps = f["penetration_steps"].get<std::vector<double>>();
      sc.placement_seed = get_or<std::uint64_t>(f, "placement_seed", sc.placement_seed);
      sc.n_placements = get_or(f, "n_placements", sc.n_placements);
      sc.s_rating_kva = get_or(f, "s_rating_kva", sc.s_rating_kva);
      sc.p_ac_max_kw = get_or(f, "p_ac_max_kw", sc.p_ac_max_kw);
    }
    if (j.contains("droop")) {
      const json& d = j["droop"];
      DroopSettings& dr = sc.sim.droop;
      dr.v_db = volts_to_pu(get_or(d, "v_db_v", refs::v_db_v));
      dr.v_qmin = volts_to_pu(get_or(d, "v_qmin_v", refs::v_qmin_v));
      dr.v_max_a = volts_to_pu(get_or(d, "v_max_autonomous_v", refs::v_max_autonomous_v));
      dr.v_max_l = volts_to_pu(get_or(d, "v_max_legacy_v", refs::v_max_legacy_v));
      dr.v_trip = volts_to_pu(get_or(d, "v_trip_v", refs::v_trip_v));
      dr.q_min_pu = get_or(d, "q_min_pu", dr.q_min_pu);
      dr.p_min_pu = get_or(d, "p_min_pu", dr.p_min_pu);
      dr.tau_v_min = get_or(d, "tau_v_min", dr.tau_v_min);
      dr.tau_w_min = get_or(d, "tau_w_min", dr.tau_w_min);
      if (d.contains("min_offline_s"))
        sc.sim.min_offline_periods = -1;  // resolved below against the step
    }
    if (j.contains("cic")) {
      const json& c = j["cic"];
      CicSettings& cs = sc.sim.cic;
      sc.sim.cic_enabled = get_or(c, "enabled", true);
      cs.v_cic_pu = volts_to_pu(get_or(c, "v_cic_v", refs::v_cic_v));
      cs.big_m = get_or(c, "big_m", cs.big_m);
      cs.q_min_pu = get_or(c, "q_min_pu", cs.q_min_pu);
      cs.solver_tol = get_or(c, "solver_tol", cs.solver_tol);
      cs.solver_max_iter = get_or(c, "solver_max_iter", cs.solver_max_iter);
      const std::string lf = get_or<std::string>(c, "loss_formula", "difference");
      if (lf == "difference") cs.loss_formula = LossFormula::difference;
      else if (lf == "paper_sum") cs.loss_formula = LossFormula::paper_sum;
      else throw ConfigError("cic.loss_formula: expected 'difference' or 'paper_sum'");
      if (c.contains("re_breakpoints_v")) {
        cs.re_breakpoints_pu.clear();
        for (double v : c["re_breakpoints_v"].get<std::vector<double>>())
          cs.re_breakpoints_pu.push_back(volts_to_pu(v));
      }
      if (c.contains("im_breakpoints"))
        cs.im_breakpoints_pu = c["im_breakpoints"].get<std::vector<double>>();
    }
    if (j.contains("gss")) {
      const json& g = j["gss"];
      rc.gss.gamma = get_or(g, "gamma", rc.gss.gamma);
      rc.gss.hold_s = get_or(g, "hold_s", rc.gss.hold_s);
      rc.gss.settle_s = get_or(g, "settle_s", rc.gss.settle_s);
      rc.gss.requests_per_direction =
          get_or(g, "requests_per_direction", rc.gss.requests_per_direction);
      rc.gss.constant_load_kw = get_or(g, "constant_load_kw", rc.gss.constant_load_kw);
      if (g.contains("levels")) rc.gss.levels = g["levels"].get<std::vector<double>>();
      rc.gss_seed = get_or<std::uint64_t>(g, "seed", rc.gss_seed);
    }
    if (rc.gss.levels.empty()) rc.gss.levels = SweepConfig::default_levels();
    if (j.contains("run")) {
      const json& r = j["run"];
      sc.run_seed = get_or<std::uint64_t>(r, "seed", sc.run_seed);
      sc.sim.step_s = get_or(r, "step_s", sc.sim.step_s);
      if (r.contains("day_start")) sc.sim.day_start_s = parse_clock(r["day_start"], "run.day_start");
      if (r.contains("day_end")) sc.sim.day_end_s = parse_clock(r["day_end"], "run.day_end");
      sc.jobs = get_or(r, "jobs", sc.jobs);
      sc.emit_traces = get_or(r, "emit_traces", sc.emit_traces);
      sc.sim.overvoltage_threshold_v =
          get_or(r, "overvoltage_threshold_v", sc.sim.overvoltage_threshold_v);
    }
    if (j.contains("droop") && j["droop"].contains("min_offline_s")) {
      const double offline_s = j["droop"]["min_offline_s"].get<double>();
      sc.sim.min_offline_periods =
          static_cast<int>(std::ceil(offline_s / sc.sim.step_s));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config schema error: ") + e.what());
  }

  // Validation beyond type checks.
  sc.sim.droop.validate();
  sc.sim.cic.v_trip_pu = sc.sim.droop.v_trip;
  sc.sim.cic.validate();
  if (sc.sim.step_s <= 0.0) throw ConfigError("run.step_s must be positive");
  if (sc.sim.day_end_s <= sc.sim.day_start_s) throw ConfigError("run: empty day window");
  if (sc.base_penetration <= 0.0 || sc.base_penetration > 1.0)
    throw ConfigError("fleet.base_penetration must lie in (0, 1]");
  for (double p : sc.penetration_steps)
    if (p <= 0.0 || p > 1.0) throw ConfigError("fleet.penetration_steps values must lie in (0, 1]");
  if (sc.n_placements < 2) throw ConfigError("fleet.n_placements must be at least 2");
  if (sc.jobs < 1) throw ConfigError("run.jobs must be at least 1");
  sc.profile.validate();

  rc.raw_json = j.dump(2);
  return rc;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::uint64_t config_hash(const RunConfig& config) { return fnv1a64(config.raw_json); }

std::string config_hash_hex(const RunConfig& config) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(config_hash(config)));
  return buf;
}

void write_manifest(const RunConfig& config, const std::string& dir) {
  nlohmann::json m;
  m["config_hash"] = config_hash_hex(config);
  m["tool_version"] = kToolVersion;
  m["seeds"] = {{"run", config.scenario.run_seed},
                {"placement", config.scenario.placement_seed},
                {"load", config.scenario.load_seed},
                {"gss", config.gss_seed},
                {"feeder", config.scenario.feeder.seed}};
  m["config"] = nlohmann::json::parse(config.raw_json);
  std::ofstream out(std::filesystem::path(dir) / "manifest.json");
  if (!out) throw ConfigError("cannot write manifest in " + dir);
  out << m.dump(2) << "\n";
}

}  // namespace vppsim
