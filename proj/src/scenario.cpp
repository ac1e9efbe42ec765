#include "vppsim/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace vppsim {

void Fleet::reset_states(int window_capacity) {
  states.assign(units.size(), InverterState{});
  for (InverterState& s : states) s.voltage_window = VoltageWindow(window_capacity);
}

int Fleet::count(InverterKind kind) const {
  int n = 0;
  for (const InverterUnit& u : units)
    if (u.kind == kind) ++n;
  return n;
}

std::vector<int> Fleet::nodes_of(InverterKind kind) const {
  std::vector<int> nodes;
  for (const InverterUnit& u : units)
    if (u.kind == kind) nodes.push_back(u.node);
  return nodes;
}

std::vector<int> Fleet::pv_nodes() const {
  std::vector<int> nodes;
  for (const InverterUnit& u : units) nodes.push_back(u.node);
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

std::vector<std::vector<int>> placement_orderings(const NetworkModel& network, int n,
                                                  std::uint64_t seed) {
  if (n < 2) throw ParameterError("need at least two placements");
  std::vector<int> households;
  for (const Bus& b : network.buses())
    if (b.has_load) households.push_back(b.id);
  if (households.empty()) throw ParameterError("network has no household buses");

  // Electric distance of a bus: the diagonal of the reduced resistance
  // matrix (total shared-path resistance back to the transformer).
  const Eigen::MatrixXd& r = network.r_matrix_ohm();
  auto distance = [&](int bus) { return r(network.reduced_index(bus), network.reduced_index(bus)); };
  std::vector<int> by_distance = households;
  std::stable_sort(by_distance.begin(), by_distance.end(),
                   [&](int a, int b) { return distance(a) < distance(b); });

  std::vector<std::vector<int>> orderings;
  orderings.push_back(by_distance);  // minimum electric-distance cluster
  for (int i = 1; i < n - 1; ++i) {
    std::vector<int> perm = households;
    Rng rng = Rng::derive(seed, "placement", static_cast<std::uint64_t>(i));
    for (int k = static_cast<int>(perm.size()) - 1; k > 0; --k)
      std::swap(perm[k], perm[rng.uniform_int(0, k)]);
    orderings.push_back(std::move(perm));
  }
  std::vector<int> far = by_distance;
  std::reverse(far.begin(), far.end());
  orderings.push_back(std::move(far));  // maximum electric-distance cluster
  return orderings;
}

std::vector<int> placement_nodes(const std::vector<int>& ordering, double penetration) {
  if (penetration <= 0.0 || penetration > 1.0)
    throw ParameterError("penetration must lie in (0, 1]");
  const int h = static_cast<int>(ordering.size());
  if (penetration * h < 1.0) throw ParameterError("penetration selects no household");
  const int k = std::clamp(static_cast<int>(std::llround(penetration * h)), 1, h);
  return std::vector<int>(ordering.begin(), ordering.begin() + k);
}

std::vector<std::vector<int>> sample_placements(const NetworkModel& network, double penetration,
                                                int n, std::uint64_t seed) {
  std::vector<std::vector<int>> result;
  for (const auto& ordering : placement_orderings(network, n, seed))
    result.push_back(placement_nodes(ordering, penetration));
  return result;
}

Fleet build_fleet(const std::vector<int>& ordering, double base_penetration,
                  double base_legacy_share, InverterKind growth_kind, double penetration,
                  std::uint64_t mix_seed, double s_rating_kva, double p_ac_max_kw,
                  int window_capacity) {
  if (penetration + 1e-12 < base_penetration)
    throw ParameterError("penetration below the base case");
  const std::vector<int> base_nodes = placement_nodes(ordering, base_penetration);
  const std::vector<int> all_nodes = placement_nodes(ordering, penetration);

  // Split the base case between legacy and autonomous with a seeded shuffle
  // so the mix is stable across penetration levels.
  std::vector<int> shuffled = base_nodes;
  Rng rng = Rng::derive(mix_seed, "base-mix");
  for (int k = static_cast<int>(shuffled.size()) - 1; k > 0; --k)
    std::swap(shuffled[k], shuffled[rng.uniform_int(0, k)]);
  const int n_legacy = static_cast<int>(std::llround(base_legacy_share * shuffled.size()));
  std::map<int, InverterKind> kind_of;
  for (std::size_t i = 0; i < shuffled.size(); ++i)
    kind_of[shuffled[i]] = i < static_cast<std::size_t>(n_legacy) ? InverterKind::legacy
                                                                  : InverterKind::autonomous;
  for (int node : all_nodes)
    if (!kind_of.count(node)) kind_of[node] = growth_kind;

  Fleet fleet;
  for (const auto& [node, kind] : kind_of) {
    InverterUnit u;
    u.node = node;
    u.kind = kind;
    u.s_rating_kva = s_rating_kva;
    u.p_ac_max_kw = p_ac_max_kw;
    fleet.add(u);
  }
  fleet.reset_states(window_capacity);
  return fleet;
}

Simulation::Simulation(const NetworkModel& network, Fleet fleet,
                       std::vector<TimeSeries> node_load_kw, TimeSeries pv_availability_kw,
                       SimSettings settings, std::uint64_t trip_seed)
    : network_(&network),
      fleet_(std::move(fleet)),
      node_load_kw_(std::move(node_load_kw)),
      pv_availability_kw_(std::move(pv_availability_kw)),
      settings_(std::move(settings)),
      rng_(Rng::derive(trip_seed, "trip-stream")) {
  settings_.droop.validate();
  if (static_cast<int>(node_load_kw_.size()) != network.n_nodes())
    throw ParameterError("need one load series per non-slack bus");
  for (const InverterUnit& u : fleet_.units) network.reduced_index(u.node);  // validates

  // Pre-roll: a loads-only power flow provides the t-1 voltages and the
  // first AMI snapshot (PV availability is zero at the window start).
  const double t0 = settings_.day_start_s;
  InjectionSet inj = InjectionSet::zero(network.n_nodes());
  for (int k = 0; k < network.n_nodes(); ++k) {
    const double load = load_at(k, t0);
    inj.add(k, -load, reactive_from_active_kw(load, settings_.power_factor, settings_.pf_leading));
  }
  const VoltageSolution sol =
      solve_ac(network, inj, settings_.ac_tolerance_pu, settings_.ac_max_iter);
  if (!sol.converged) throw SimulationError("pre-roll power flow did not converge");
  v_prev_ = sol.v_pu;
  ami_prev_ = inj;

  customer_buses_.clear();
  for (const Bus& b : network.buses())
    if (b.has_load) customer_buses_.push_back(b.id);
  cust_max_v_.assign(customer_buses_.size(), 0.0);
  cust_over_.assign(customer_buses_.size(), 0);
  cust_prev_v_.clear();
}

double Simulation::load_at(int reduced_index, double t_s) const {
  const TimeSeries& ts = node_load_kw_[reduced_index];
  return ts.values.empty() ? 0.0 : ts.at(t_s);
}

double Simulation::pv_available_at(double t_s) const {
  return pv_availability_kw_.values.empty() ? 0.0 : pv_availability_kw_.at(t_s);
}

CicProblem Simulation::build_cic_problem() const {
  const double t = current_time_s();
  CicProblem pb;
  pb.network = network_;
  pb.net = ami_prev_;
  pb.settings = settings_.cic;
  for (std::size_t i = 0; i < fleet_.units.size(); ++i) {
    const InverterUnit& u = fleet_.units[i];
    if (u.kind != InverterKind::coordinated) continue;
    CoordinatedUnitInput c;
    c.node = u.node;
    c.s_rating_kva = u.s_rating_kva;
    c.p_av_kw = std::min(pv_available_at(t), u.p_ac_max_kw);
    c.p_demand_kw = load_at(network_->reduced_index(u.node), t);
    pb.coordinated.push_back(c);
  }
  pb.monitored_nodes = fleet_.pv_nodes();
  return pb;
}

const StepRecord& Simulation::step() {
  if (done()) throw SimulationError("simulation day is complete");
  const double t = current_time_s();
  const double dt_min = settings_.step_s / 60.0;
  const int nn = network_->n_nodes();
  const std::size_t n_units = fleet_.units.size();

  // (1) profiles at t
  const double p_av = pv_available_at(t);
  std::vector<double> load_kw(nn);
  for (int k = 0; k < nn; ++k) load_kw[k] = load_at(k, t);

  // (2) passive droop targets from t-1 local voltages, through the filters
  std::vector<double> v_local_prev(n_units);
  for (std::size_t i = 0; i < n_units; ++i)
    v_local_prev[i] = std::abs(v_prev_[fleet_.units[i].node]);
  update_droop_filters(fleet_.units, fleet_.states, v_local_prev, dt_min, settings_.droop);

  // (3) coordinated setpoints from the delayed AMI snapshot
  StepRecord rec;
  rec.index = index_;
  rec.time_s = t;
  rec.available_pv_kw = p_av;
  std::optional<CicSolution> cic;
  std::vector<int> coordinated_index;  // fleet index per coordinated slot
  for (std::size_t i = 0; i < n_units; ++i)
    if (fleet_.units[i].kind == InverterKind::coordinated)
      coordinated_index.push_back(static_cast<int>(i));
  if (!coordinated_index.empty() && settings_.cic_enabled) {
    const CicProblem pb = build_cic_problem();
    cic = policy_ ? policy_(pb) : solve_cic(pb, have_warm_ ? &cic_warm_ : nullptr);
    cic_warm_ = *cic;
    have_warm_ = true;
  }

  // (4) assemble injections and solve the truth model
  InjectionSet inj = InjectionSet::zero(nn);
  InjectionSet passive_pv = InjectionSet::zero(nn);
  for (int k = 0; k < nn; ++k)
    inj.add(k, -load_kw[k],
            reactive_from_active_kw(load_kw[k], settings_.power_factor, settings_.pf_leading));
  rec.total_load_kw = std::accumulate(load_kw.begin(), load_kw.end(), 0.0);
  rec.unit_p_kw.assign(n_units, 0.0);
  rec.unit_q_kvar.assign(n_units, 0.0);
  int c_slot = 0;
  for (std::size_t i = 0; i < n_units; ++i) {
    const InverterUnit& u = fleet_.units[i];
    const int k = network_->reduced_index(u.node);
    const double avail = std::min(p_av, u.p_ac_max_kw);
    AcOutput out;
    switch (u.kind) {
      case InverterKind::legacy:
        out = legacy_output(fleet_.states[i], avail);
        break;
      case InverterKind::autonomous:
        out = autonomous_output(fleet_.states[i], v_local_prev[i], avail, u);
        break;
      case InverterKind::non_exporting:
        out = non_exporting_output(fleet_.states[i], avail, load_kw[k]);
        break;
      case InverterKind::coordinated:
        if (cic) {
          out.p_kw = cic->p_inj_kw[c_slot];
          out.q_kvar = cic->q_kvar[c_slot];
        } else {
          out.p_kw = avail;  // uncontrolled fallback when CIC is disabled
        }
        ++c_slot;
        break;
    }
    rec.unit_p_kw[i] = out.p_kw;
    rec.unit_q_kvar[i] = out.q_kvar;
    inj.add(k, out.p_kw, out.q_kvar);
    if (u.kind == InverterKind::coordinated) {
      rec.total_coordinated_kw += out.p_kw;
    } else {
      passive_pv.add(k, out.p_kw, out.q_kvar);
      rec.total_passive_kw += out.p_kw;
      if (u.kind == InverterKind::autonomous) rec.total_autonomous_kw += out.p_kw;
    }
  }
  const VoltageSolution sol =
      solve_ac(*network_, inj, settings_.ac_tolerance_pu, settings_.ac_max_iter, &v_prev_);
  if (!sol.converged) {
    std::ostringstream msg;
    msg << "power flow diverged at step " << index_ << " (t=" << t
        << " s), residual " << sol.residual_pu << " pu";
    throw SimulationError(msg.str());
  }
  rec.v_pu = sol.v_pu;
  rec.cic = std::move(cic);

  // (5) trip and reconnect on the truth voltages
  std::vector<double> v_local(n_units);
  for (std::size_t i = 0; i < n_units; ++i)
    v_local[i] = std::abs(sol.v_pu[fleet_.units[i].node]);
  append_voltage_samples(fleet_.units, fleet_.states, v_local);
  const TripResult trips =
      trip_step(fleet_.units, fleet_.states, v_local, settings_.droop, rng_);
  rec.instantaneous_trips = trips.instantaneous;
  rec.average_trips = trips.average;
  rec.reconnects = reconnect_step(fleet_.units, fleet_.states, v_local, settings_.droop,
                                  settings_.offline_periods(), rng_);
  advance_offline_counters(fleet_.states);

  // (6) metrics, then the AMI snapshot the controller sees next step
  accumulate_metrics(rec);
  ami_prev_ = InjectionSet::zero(nn);
  for (int k = 0; k < nn; ++k)
    ami_prev_.add(k, -load_kw[k],
                  reactive_from_active_kw(load_kw[k], settings_.power_factor,
                                          settings_.pf_leading));
  ami_prev_.p_kw += passive_pv.p_kw;
  ami_prev_.q_kvar += passive_pv.q_kvar;

  v_prev_ = sol.v_pu;
  ++index_;
  record_ = std::move(rec);
  return record_;
}

void Simulation::accumulate_metrics(const StepRecord& rec) {
  const double dt_h = settings_.step_s / 3600.0;
  const double vb = network_->base_voltage_v();
  const double threshold_pu = settings_.overvoltage_threshold_v / vb;

  double vmin = qp::kInf, vmax = -qp::kInf;
  bool any_over = false;
  for (std::size_t ci = 0; ci < customer_buses_.size(); ++ci) {
    const double v = std::abs(rec.v_pu[customer_buses_[ci]]);
    cust_max_v_[ci] = std::max(cust_max_v_[ci], v);
    if (v > threshold_pu) {
      cust_over_[ci] = 1;
      any_over = true;
    }
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
    if (!cust_prev_v_.empty())
      max_delta_v_ = std::max(max_delta_v_, std::abs(v - cust_prev_v_[ci]) * vb);
  }
  if (cust_prev_v_.empty()) cust_prev_v_.resize(customer_buses_.size());
  for (std::size_t ci = 0; ci < customer_buses_.size(); ++ci)
    cust_prev_v_[ci] = std::abs(rec.v_pu[customer_buses_[ci]]);
  if (any_over) over_steps_ += 1.0;
  if (!customer_buses_.empty()) max_spread_v_ = std::max(max_spread_v_, (vmax - vmin) * vb);

  losses_kwh_ += line_losses(*network_, rec.v_pu) * dt_h;
  const std::complex<double> head = slack_injection_kw(*network_, rec.v_pu);
  head_q_kvarh_ += std::max(0.0, head.imag()) * dt_h;

  // Utilization: PV consumed behind the meter plus the export measured at
  // the transformer, against the fleet-wide availability.
  std::vector<double> pv_at_bus(network_->n_nodes(), 0.0);
  double pv_injected = 0.0;
  for (std::size_t i = 0; i < fleet_.units.size(); ++i) {
    pv_at_bus[network_->reduced_index(fleet_.units[i].node)] += rec.unit_p_kw[i];
    pv_injected += rec.unit_p_kw[i];
  }
  double local_use = 0.0;
  for (int k = 0; k < network_->n_nodes(); ++k)
    local_use += std::min(pv_at_bus[k], load_at(k, rec.time_s));
  const double exported = std::max(0.0, -head.real());
  pv_utilized_kwh_ += (local_use + exported) * dt_h;
  pv_available_kwh_ +=
      std::min(rec.available_pv_kw, refs::p_ac_max_kw) * fleet_.units.size() * dt_h;
  // Offline and curtailing inverters both leave availability unused; the
  // per-unit cap is the rating, not the instantaneous output.
}

MetricsReport Simulation::metrics() const {
  MetricsReport m;
  std::vector<char> has_pv(network_->n_buses(), 0);
  for (const InverterUnit& u : fleet_.units) has_pv[u.node] = 1;
  for (std::size_t ci = 0; ci < customer_buses_.size(); ++ci) {
    if (!cust_over_[ci]) continue;
    ++m.customers_overvoltage;
    if (has_pv[customer_buses_[ci]])
      ++m.customers_overvoltage_pv;
    else
      ++m.customers_overvoltage_nonpv;
  }
  m.overvoltage_duration_min = over_steps_ * settings_.step_s / 60.0;
  double vmax = 0.0;
  for (double v : cust_max_v_) vmax = std::max(vmax, v);
  m.max_voltage_v = vmax * network_->base_voltage_v();
  m.max_step_voltage_delta_v = max_delta_v_;
  m.max_voltage_spread_v = max_spread_v_;
  m.pv_utilization =
      pv_available_kwh_ > 0.0 ? std::min(pv_utilized_kwh_ / pv_available_kwh_, 1.0) : 0.0;
  m.total_line_losses_kwh = losses_kwh_;
  m.head_reactive_demand_kvarh = head_q_kvarh_;

  std::map<std::string, std::pair<int, int>> counts;  // kind -> (disconnects, units)
  for (std::size_t i = 0; i < fleet_.units.size(); ++i) {
    auto& c = counts[to_string(fleet_.units[i].kind)];
    c.first += fleet_.states[i].disconnect_count;
    c.second += 1;
  }
  for (const auto& [kind, c] : counts)
    m.disconnections_per_inverter[kind] =
        c.second > 0 ? static_cast<double>(c.first) / c.second : 0.0;
  return m;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string MetricsReport::csv_header() {
  return "growth_kind,penetration,placement,customers_overvoltage,customers_overvoltage_pv,"
         "customers_overvoltage_nonpv,overvoltage_minutes,max_voltage_v,max_step_delta_v,"
         "max_spread_v,pv_utilization,disc_legacy,disc_autonomous,disc_non_exporting,"
         "disc_coordinated,line_losses_kwh,head_reactive_kvarh";
}

std::string MetricsReport::csv_row(const std::string& growth_kind, double penetration,
                                   int placement) const {
  auto disc = [&](const char* kind) {
    auto it = disconnections_per_inverter.find(kind);
    return it == disconnections_per_inverter.end() ? 0.0 : it->second;
  };
  std::ostringstream os;
  os << growth_kind << ',' << fmt(penetration) << ',' << placement << ','
     << customers_overvoltage << ',' << customers_overvoltage_pv << ','
     << customers_overvoltage_nonpv << ',' << fmt(overvoltage_duration_min) << ','
     << fmt(max_voltage_v) << ',' << fmt(max_step_voltage_delta_v) << ','
     << fmt(max_voltage_spread_v) << ',' << fmt(pv_utilization) << ',' << fmt(disc("legacy"))
     << ',' << fmt(disc("autonomous")) << ',' << fmt(disc("non_exporting")) << ','
     << fmt(disc("coordinated")) << ',' << fmt(total_line_losses_kwh) << ','
     << fmt(head_reactive_demand_kvarh);
  return os.str();
}

NetworkModel make_network(const ScenarioConfig& config) {
  NetworkModel net = config.network_file.empty() ? generate_synthetic_feeder(config.feeder)
                                                 : NetworkModel::load_json(config.network_file);
  if (config.feeder_scale != 1.0) net = scale_feeder(net, config.feeder_scale);
  return net;
}

std::vector<TimeSeries> make_node_loads(const ScenarioConfig& config,
                                        const NetworkModel& network) {
  std::vector<TimeSeries> base;
  if (!config.ami_csv.empty()) {
    base = load_ami_csv(config.ami_csv, config.sim.step_s);
    if (base.size() != 30)
      throw ConfigError("AMI CSV must provide exactly 30 household profiles");
  } else {
    for (int i = 0; i < 30; ++i)
      base.push_back(synth_load_day(config.profile, i, config.load_seed, config.sim.step_s));
  }
  std::vector<int> household_nodes;
  for (const Bus& b : network.buses())
    if (b.has_load) household_nodes.push_back(b.id);
  const std::vector<int> mapping = allocate_households(base, household_nodes);

  std::vector<TimeSeries> loads(network.n_nodes());
  for (std::size_t i = 0; i < household_nodes.size(); ++i)
    loads[network.reduced_index(household_nodes[i])] = base[mapping[i]];
  return loads;
}

TimeSeries make_pv_availability(const ScenarioConfig& config) {
  return synth_pv_day(config.profile, config.run_seed, config.sim.step_s);
}

std::vector<CellResult> run_scenario(const ScenarioConfig& config, const TraceSink& trace) {
  const NetworkModel network = make_network(config);
  const std::vector<TimeSeries> loads = make_node_loads(config, network);
  const TimeSeries pv = make_pv_availability(config);
  const auto orderings = placement_orderings(network, config.n_placements, config.placement_seed);

  struct Cell {
    int placement;
    int pen_index;
  };
  std::vector<Cell> cells;
  for (int pl = 0; pl < config.n_placements; ++pl)
    for (std::size_t pi = 0; pi < config.penetration_steps.size(); ++pi)
      cells.push_back({pl, static_cast<int>(pi)});

  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        const Cell cell = cells[i];
        const double penetration = config.penetration_steps[cell.pen_index];
        Fleet fleet = build_fleet(orderings[cell.placement], config.base_penetration,
                                  config.base_legacy_share, config.growth_kind, penetration,
                                  Rng::derive(config.placement_seed, "mix", cell.placement).next_u64(),
                                  config.s_rating_kva, config.p_ac_max_kw,
                                  config.sim.window_periods());
        Simulation sim(network, std::move(fleet), loads, pv, config.sim,
                       Rng::derive(config.run_seed, "cell", cell.placement, cell.pen_index)
                           .next_u64());
        CellResult res;
        res.growth_kind = config.growth_kind;
        res.penetration = penetration;
        res.placement = cell.placement;
        while (!sim.done()) {
          const StepRecord& rec = sim.step();
          if (trace) trace(res, rec, sim);
        }
        res.metrics = sim.metrics();
        results[i] = std::move(res);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(cells.size());
        return;
      }
    }
  };

  const int jobs = std::max(1, std::min<int>(config.jobs, static_cast<int>(cells.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

}  // namespace vppsim
