#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "vppsim/config.hpp"
#include "vppsim/gss.hpp"

namespace fs = std::filesystem;
using namespace vppsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<double> step_seconds;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "run configuration (JSON)")->required();
  cmd->add_option("-o,--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "override the run seed");
  cmd->add_option("--jobs", args.jobs, "parallel scenario cells");
  cmd->add_option("--step-seconds", args.step_seconds, "override the simulation step");
}

RunConfig load_with_overrides(const CommonArgs& args) {
  RunConfig rc = load_config(args.config_path);
  if (args.seed) rc.scenario.run_seed = *args.seed;
  if (args.jobs) rc.scenario.jobs = *args.jobs;
  if (args.step_seconds) {
    rc.scenario.sim.step_s = *args.step_seconds;
    if (rc.scenario.sim.step_s <= 0.0) throw ConfigError("--step-seconds must be positive");
  }
  // Overrides become part of the manifest/run identity.
  nlohmann::json j = nlohmann::json::parse(rc.raw_json);
  j["run"]["seed"] = rc.scenario.run_seed;
  j["run"]["jobs"] = rc.scenario.jobs;
  j["run"]["step_s"] = rc.scenario.sim.step_s;
  rc.raw_json = j.dump(2);
  return rc;
}

fs::path make_run_dir(const RunConfig& rc, const std::string& out_dir) {
  const fs::path dir = fs::path(out_dir) / ("run-" + config_hash_hex(rc));
  fs::create_directories(dir);
  return dir;
}

void write_metrics_csv(const fs::path& file, const std::vector<CellResult>& results) {
  std::ofstream out(file);
  if (!out) throw SimulationError("cannot write " + file.string());
  out << MetricsReport::csv_header() << "\n";
  for (const CellResult& r : results)
    out << r.metrics.csv_row(to_string(r.growth_kind), r.penetration, r.placement) << "\n";
}

// Per-step JSON trace, one line per step: injections, trips, and for
// coordinated runs the setpoints plus predicted vs truth voltages.
class TraceWriter {
 public:
  explicit TraceWriter(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void operator()(const CellResult& cell, const StepRecord& rec, const Simulation& sim) {
    std::ostringstream name;
    name << to_string(cell.growth_kind) << "_p" << static_cast<int>(cell.penetration * 100 + 0.5)
         << "_pl" << cell.placement << ".jsonl";
    nlohmann::json j;
    j["step"] = rec.index;
    j["time_s"] = rec.time_s;
    j["available_pv_kw"] = rec.available_pv_kw;
    j["total_load_kw"] = rec.total_load_kw;
    j["coordinated_kw"] = rec.total_coordinated_kw;
    j["passive_kw"] = rec.total_passive_kw;
    j["trips_instantaneous"] = rec.instantaneous_trips;
    j["trips_average"] = rec.average_trips;
    j["reconnects"] = rec.reconnects;
    std::vector<double> vmag;
    vmag.reserve(rec.v_pu.size());
    for (int i = 0; i < rec.v_pu.size(); ++i)
      vmag.push_back(std::abs(rec.v_pu[i]) * sim.network().base_voltage_v());
    j["v_truth_v"] = vmag;
    if (rec.cic) {
      const CicSolution& c = *rec.cic;
      j["cic"] = {{"curtail_kw", std::vector<double>(c.curtail_kw.begin(), c.curtail_kw.end())},
                  {"p_inj_kw", std::vector<double>(c.p_inj_kw.begin(), c.p_inj_kw.end())},
                  {"q_kvar", std::vector<double>(c.q_kvar.begin(), c.q_kvar.end())},
                  {"objective", c.objective},
                  {"phi", c.phi},
                  {"rho", c.rho},
                  {"kappa", c.kappa},
                  {"nu", c.nu},
                  {"status", qp::to_string(c.status)},
                  {"iterations", c.iterations}};
      std::vector<double> vpred;
      for (int k = 0; k < c.re_v.size(); ++k)
        vpred.push_back(std::hypot(c.re_v[k], c.im_v[k]) * sim.network().base_voltage_v());
      j["cic"]["v_predicted_v"] = vpred;
    }
    std::lock_guard<std::mutex> lock(mutex_);
    std::ofstream out(dir_ / name.str(), std::ios::app);
    out << j.dump() << "\n";
  }

 private:
  fs::path dir_;
  std::mutex mutex_;
};

int cmd_simulate(const CommonArgs& args) {
  const RunConfig rc = load_with_overrides(args);
  const fs::path run_dir = make_run_dir(rc, args.out_dir);
  std::optional<TraceWriter> tracer;
  TraceSink sink;
  if (rc.scenario.emit_traces) {
    tracer.emplace(run_dir / "traces");
    sink = [&tracer](const CellResult& c, const StepRecord& r, const Simulation& s) {
      (*tracer)(c, r, s);
    };
  }
  const std::vector<CellResult> results = run_scenario(rc.scenario, sink);
  write_metrics_csv(run_dir / "metrics.csv", results);
  write_manifest(rc, run_dir.string());
  std::cout << "wrote " << (run_dir / "metrics.csv").string() << " (" << results.size()
            << " cells)\n";
  return kExitOk;
}

int cmd_sweep(const CommonArgs& args) {
  const RunConfig rc = load_with_overrides(args);
  const fs::path run_dir = make_run_dir(rc, args.out_dir);

  std::vector<CellResult> all;
  for (InverterKind kind :
       {InverterKind::autonomous, InverterKind::non_exporting, InverterKind::coordinated}) {
    ScenarioConfig sc = rc.scenario;
    sc.growth_kind = kind;
    const std::vector<CellResult> results = run_scenario(sc);
    all.insert(all.end(), results.begin(), results.end());
  }
  write_metrics_csv(run_dir / "metrics.csv", all);

  // Plot-ready files, one per figure family.
  auto open_csv = [&](const char* name, const char* header) {
    std::ofstream out(run_dir / name);
    if (!out) throw SimulationError(std::string("cannot write ") + name);
    out << header << "\n";
    return out;
  };
  {
    auto out = open_csv("fig_max_voltage.csv", "growth_kind,penetration,placement,max_voltage_v");
    for (const CellResult& r : all)
      out << to_string(r.growth_kind) << ',' << r.penetration << ',' << r.placement << ','
          << r.metrics.max_voltage_v << "\n";
  }
  {
    auto out = open_csv("fig_customers_duration.csv",
                        "growth_kind,penetration,placement,customers_overvoltage,"
                        "overvoltage_minutes");
    for (const CellResult& r : all)
      out << to_string(r.growth_kind) << ',' << r.penetration << ',' << r.placement << ','
          << r.metrics.customers_overvoltage << ',' << r.metrics.overvoltage_duration_min << "\n";
  }
  {
    auto out = open_csv("fig_disconnections_utilization.csv",
                        "growth_kind,penetration,placement,disc_legacy,disc_autonomous,"
                        "disc_non_exporting,pv_utilization");
    for (const CellResult& r : all) {
      auto d = [&](const char* k) {
        auto it = r.metrics.disconnections_per_inverter.find(k);
        return it == r.metrics.disconnections_per_inverter.end() ? 0.0 : it->second;
      };
      out << to_string(r.growth_kind) << ',' << r.penetration << ',' << r.placement << ','
          << d("legacy") << ',' << d("autonomous") << ',' << d("non_exporting") << ','
          << r.metrics.pv_utilization << "\n";
    }
  }
  {
    auto out = open_csv("fig_reactive_losses.csv",
                        "growth_kind,penetration,placement,head_reactive_kvarh,line_losses_kwh");
    for (const CellResult& r : all)
      out << to_string(r.growth_kind) << ',' << r.penetration << ',' << r.placement << ','
          << r.metrics.head_reactive_demand_kvarh << ',' << r.metrics.total_line_losses_kwh
          << "\n";
  }
  write_manifest(rc, run_dir.string());
  std::cout << "wrote " << (run_dir / "metrics.csv").string() << " (" << all.size()
            << " cells, 3 growth kinds)\n";
  return kExitOk;
}

int cmd_gss(const CommonArgs& args) {
  const RunConfig rc = load_with_overrides(args);
  const fs::path run_dir = make_run_dir(rc, args.out_dir);

  const NetworkModel network = make_network(rc.scenario);
  // The GSS study runs one placement at the 60% level with a 1:1 ratio of
  // coordinated to passive inverters grown from the base case.
  const auto orderings =
      placement_orderings(network, rc.scenario.n_placements, rc.scenario.placement_seed);
  const double penetration =
      rc.scenario.penetration_steps.empty() ? 0.6 : rc.scenario.penetration_steps.back();
  Fleet fleet = build_fleet(orderings[0], rc.scenario.base_penetration,
                            rc.scenario.base_legacy_share, InverterKind::coordinated, penetration,
                            Rng::derive(rc.scenario.placement_seed, "mix", 0).next_u64(),
                            rc.scenario.s_rating_kva, rc.scenario.p_ac_max_kw,
                            rc.scenario.sim.window_periods());

  const SweepResult result =
      response_sweep(network, fleet, rc.gss, rc.scenario.sim, rc.gss_seed);
  std::ofstream out(run_dir / "gss_response.csv");
  if (!out) throw SimulationError("cannot write gss_response.csv");
  out << SweepRow::csv_header() << "\n";
  for (const SweepRow& row : result.rows) out << row.csv_row() << "\n";
  write_manifest(rc, run_dir.string());
  std::cout << "wrote " << (run_dir / "gss_response.csv").string() << " (" << result.rows.size()
            << " requests)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasi-static LV feeder simulator with coordinated PV inverter control"};
  app.require_subcommand(1);

  CommonArgs sim_args, sweep_args, gss_args;
  CLI::App* simulate = app.add_subcommand("simulate", "run the configured scenario grid");
  add_common(simulate, sim_args);
  CLI::App* sweep = app.add_subcommand("sweep", "all growth kinds plus figure CSVs");
  add_common(sweep, sweep_args);
  CLI::App* gss = app.add_subcommand("gss", "grid-support-service response sweep");
  add_common(gss, gss_args);

  try {
    app.parse(argc, argv);
    if (simulate->parsed()) return cmd_simulate(sim_args);
    if (sweep->parsed()) return cmd_sweep(sweep_args);
    if (gss->parsed()) return cmd_gss(gss_args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
