#include "vppsim/cic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace vppsim {

namespace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Trip = Eigen::Triplet<double>;

double pwl_value(const std::vector<PwlSegment>& segments, double v) {
  double best = -qp::kInf;
  for (const PwlSegment& s : segments) best = std::max(best, s.value(v));
  return best;
}

// Even extension used for the imaginary part: chords of v^2 applied to |v|.
double pwl_value_even(const std::vector<PwlSegment>& segments, double v) {
  return pwl_value(segments, std::abs(v));
}

}  // namespace

std::vector<PwlSegment> pwl_square_coefficients(const std::vector<double>& breakpoints) {
  if (breakpoints.size() < 2) throw ParameterError("need at least two breakpoints");
  for (std::size_t i = 1; i < breakpoints.size(); ++i)
    if (!(breakpoints[i] > breakpoints[i - 1]))
      throw ParameterError("breakpoints must be strictly increasing");
  std::vector<PwlSegment> segments;
  segments.reserve(breakpoints.size() - 1);
  for (std::size_t i = 1; i < breakpoints.size(); ++i) {
    PwlSegment s;
    s.lo = breakpoints[i - 1];
    s.hi = breakpoints[i];
    s.m = s.lo + s.hi;
    s.c = -s.lo * s.hi;
    segments.push_back(s);
  }
  return segments;
}

double self_sufficiency_term(double curtail_kw, double p_av_kw, double p_demand_kw,
                             double big_m) {
  if (curtail_kw < 0.0 || p_av_kw < 0.0 || p_demand_kw < 0.0)
    throw ParameterError("self_sufficiency_term: inputs must be >= 0");
  const double excess = std::max(p_av_kw - p_demand_kw, 0.0);
  return -std::sqrt(big_m) * std::min(curtail_kw, excess);
}

void CicSettings::validate() const {
  if (!(v_cic_pu < v_trip_pu)) throw ParameterError("v_cic must lie below v_trip");
  if (big_m <= 0.0) throw ParameterError("big_m must be positive");
  if (q_min_pu <= 0.0 || q_min_pu >= 1.0) throw ParameterError("q_min_pu must be in (0, 1)");
  if (re_breakpoints_pu.size() < 2 || im_breakpoints_pu.size() < 2)
    throw ParameterError("breakpoint lists need at least two entries");
  if (v_cic_pu < re_breakpoints_pu.front() || v_cic_pu > re_breakpoints_pu.back())
    throw ParameterError("v_cic must lie within the Re-voltage breakpoints");
  if (capacity_cuts < 2) throw ParameterError("need at least two capacity cuts");
}

CicProgram assemble(const CicProblem& problem) {
  if (!problem.network) throw ParameterError("cic: missing network");
  problem.settings.validate();
  const NetworkModel& net = *problem.network;
  const int nn = net.n_nodes();
  if (problem.net.p_kw.size() != nn || problem.net.q_kvar.size() != nn)
    throw ParameterError("cic: net injection length must equal the non-slack bus count");
  for (const CoordinatedUnitInput& c : problem.coordinated)
    if (c.p_av_kw < 0.0 || c.p_demand_kw < 0.0 || c.s_rating_kva <= 0.0)
      throw ParameterError("cic: invalid coordinated unit data");

  CicProgram prog;
  prog.problem = problem;
  const CicSettings& set = problem.settings;
  const int C = static_cast<int>(problem.coordinated.size());
  prog.n_c = C;

  // Monitored set in reduced indices, deduplicated.
  std::vector<int> monitored;
  for (int bus : problem.monitored_nodes) monitored.push_back(net.reduced_index(bus));
  std::sort(monitored.begin(), monitored.end());
  monitored.erase(std::unique(monitored.begin(), monitored.end()), monitored.end());
  const int D = static_cast<int>(monitored.size());
  prog.n_d = D;

  prog.re_segments = pwl_square_coefficients(set.re_breakpoints_pu);
  prog.im_segments = pwl_square_coefficients(set.im_breakpoints_pu);
  // Voltage ceiling in chord units: the chord of v^2 evaluated at v_cic.
  prog.ceiling_pu2 = pwl_value(prog.re_segments, set.v_cic_pu);

  // Affine voltage maps over u = [t; q]; the availability enters the
  // constant so that t (curtailment) appears with a negative sensitivity.
  const double sb = net.base_power_kva();
  const Mat r_pu = net.r_matrix_pu();
  const Mat x_pu = net.x_matrix_pu();
  Vec p0 = problem.net.p_kw / sb;
  Vec q0 = problem.net.q_kvar / sb;
  for (const CoordinatedUnitInput& c : problem.coordinated)
    p0[net.reduced_index(c.node)] += c.p_av_kw / sb;
  prog.a_re = Vec::Ones(nn) + r_pu * p0 + x_pu * q0;
  prog.a_im = x_pu * p0 - r_pu * q0;
  prog.b_re = Mat::Zero(nn, 2 * C);
  prog.b_im = Mat::Zero(nn, 2 * C);
  for (int c = 0; c < C; ++c) {
    const int k = net.reduced_index(problem.coordinated[c].node);
    prog.b_re.col(c) = -r_pu.col(k) / sb;
    prog.b_re.col(C + c) = x_pu.col(k) / sb;
    prog.b_im.col(c) = -x_pu.col(k) / sb;
    prog.b_im.col(C + c) = -r_pu.col(k) / sb;
  }

  // Variable layout: [t(C), q(C), r(C), x(D), y(D), s(D), g(C, optional)].
  prog.off_t = 0;
  prog.off_q = C;
  prog.off_r = 2 * C;
  prog.off_x = 3 * C;
  prog.off_y = 3 * C + D;
  prog.off_s = 3 * C + 2 * D;
  const bool with_gss = problem.gss.has_value();
  prog.off_g = with_gss ? 3 * C + 3 * D : -1;
  const int nv = 3 * C + 3 * D + (with_gss ? C : 0);

  // The voltage maps are parametrized over w = [t_deployed; q]. Without a
  // GSS augmentation the deployed curtailment is t itself; during a request
  // window it is t - g (the plan adjusted by the per-inverter allocation,
  // Eq. 9/24/25 with the substituted injection).
  auto emit_w = [&](std::vector<Trip>& out, int row, int w_index, double value) {
    if (value == 0.0) return;
    if (w_index < C) {
      out.emplace_back(row, prog.off_t + w_index, value);
      if (with_gss) out.emplace_back(row, prog.off_g + w_index, -value);
    } else {
      out.emplace_back(row, prog.off_q + (w_index - C), value);
    }
  };

  // Objective: quadratic loss term over the affine voltages, plus the
  // linear curtailment, ceiling-penalty and self-sufficiency terms.
  Mat p_w = Mat::Zero(2 * C, 2 * C);
  Vec q_w = Vec::Zero(2 * C);
  Vec q_lin = Vec::Zero(nv);
  prog.loss_const = 0.0;
  const double zb = net.z_base_ohm();
  const int slack = net.slack_id();
  auto reduced_or_slack = [&](int bus) { return bus == slack ? -1 : net.reduced_index(bus); };
  for (const Line& l : net.lines()) {
    const std::complex<double> z(l.resistance_ohm / zb, l.reactance_ohm / zb);
    const double w = std::conj(1.0 / z).real() * sb;  // kW per pu^2
    const int km = reduced_or_slack(l.from);
    const int kn = reduced_or_slack(l.to);
    const double sign = set.loss_formula == LossFormula::difference ? -1.0 : 1.0;
    // Real and imaginary parts of (V_from <op> V_to), each affine in w.
    for (int part = 0; part < 2; ++part) {
      const Vec& a = part == 0 ? prog.a_re : prog.a_im;
      const Mat& b = part == 0 ? prog.b_re : prog.b_im;
      const double slack_val = part == 0 ? 1.0 : 0.0;
      double alpha = (km >= 0 ? a[km] : slack_val) + sign * (kn >= 0 ? a[kn] : slack_val);
      Eigen::RowVectorXd beta = Eigen::RowVectorXd::Zero(2 * C);
      if (km >= 0) beta += b.row(km);
      if (kn >= 0) beta += sign * b.row(kn);
      p_w += 2.0 * w * beta.transpose() * beta;
      q_w += 2.0 * w * alpha * beta.transpose();
      prog.loss_const += w * alpha * alpha;
    }
  }
  const double sqrt_m = std::sqrt(set.big_m);
  for (int c = 0; c < C; ++c) {
    q_lin[prog.off_t + c] += 1.0;        // phi, on the plan curtailment
    q_lin[prog.off_r + c] -= sqrt_m;     // nu reward, realized through r
  }
  for (int d = 0; d < D; ++d) q_lin[prog.off_s + d] += set.big_m;  // kappa

  // Expand the w-space quadratic onto the decision vector.
  std::vector<Trip> p_trips;
  {
    Mat e = Mat::Zero(2 * C, nv);
    for (int c = 0; c < C; ++c) {
      e(c, prog.off_t + c) = 1.0;
      if (with_gss) e(c, prog.off_g + c) = -1.0;
      e(C + c, prog.off_q + c) = 1.0;
    }
    const Mat p_x = e.transpose() * p_w * e;
    q_lin += e.transpose() * q_w;
    for (int i = 0; i < nv; ++i)
      for (int j = 0; j < nv; ++j)
        if (p_x(i, j) != 0.0) p_trips.emplace_back(i, j, p_x(i, j));
  }
  if (with_gss)
    for (int c = 0; c < C; ++c)
      p_trips.emplace_back(prog.off_g + c, prog.off_g + c, 2.0 * set.gss_regularization);

  // Constraints.
  std::vector<Trip> a_trips;
  std::vector<double> lo, up;
  int row = 0;
  auto add_bound_row = [&](int var, double l, double u) {
    a_trips.emplace_back(row, var, 1.0);
    lo.push_back(l);
    up.push_back(u);
    ++row;
  };

  for (int c = 0; c < C; ++c)
    add_bound_row(prog.off_t + c, 0.0, problem.coordinated[c].p_av_kw);
  for (int c = 0; c < C; ++c)
    add_bound_row(prog.off_q + c, -set.q_min_pu * problem.coordinated[c].s_rating_kva, 0.0);
  for (int c = 0; c < C; ++c) {
    const auto& cu = problem.coordinated[c];
    add_bound_row(prog.off_r + c, 0.0, std::max(cu.p_av_kw - cu.p_demand_kw, 0.0));
  }
  for (int d = 0; d < D; ++d) add_bound_row(prog.off_s + d, 0.0, qp::kInf);
  for (int c = 0; c < C; ++c) {  // r <= t
    a_trips.emplace_back(row, prog.off_r + c, 1.0);
    a_trips.emplace_back(row, prog.off_t + c, -1.0);
    lo.push_back(-qp::kInf);
    up.push_back(0.0);
    ++row;
  }

  // Chord epigraph rows for x (Re part) and y (|Im| part), over the
  // deployed-injection voltage maps.
  for (int d = 0; d < D; ++d) {
    const int k = monitored[d];
    for (const PwlSegment& s : prog.re_segments) {
      for (int c = 0; c < 2 * C; ++c) emit_w(a_trips, row, c, s.m * prog.b_re(k, c));
      a_trips.emplace_back(row, prog.off_x + d, -1.0);
      lo.push_back(-qp::kInf);
      up.push_back(-s.c - s.m * prog.a_re[k]);
      ++row;
    }
    for (const PwlSegment& s : prog.im_segments) {
      for (double sign : {1.0, -1.0}) {
        for (int c = 0; c < 2 * C; ++c) emit_w(a_trips, row, c, sign * s.m * prog.b_im(k, c));
        a_trips.emplace_back(row, prog.off_y + d, -1.0);
        lo.push_back(-qp::kInf);
        up.push_back(-s.c - sign * s.m * prog.a_im[k]);
        ++row;
      }
    }
    // x + y - s <= ceiling
    a_trips.emplace_back(row, prog.off_x + d, 1.0);
    a_trips.emplace_back(row, prog.off_y + d, 1.0);
    a_trips.emplace_back(row, prog.off_s + d, -1.0);
    lo.push_back(-qp::kInf);
    up.push_back(prog.ceiling_pu2);
    ++row;
  }

  // Tangent outer approximation of the kVA disk on the operating quadrant,
  // applied to the deployed output: (p_av - t_dep) cos + (-q) sin <= S.
  const double th_max = std::asin(std::min(set.q_min_pu, 1.0));
  for (int c = 0; c < C; ++c) {
    const auto& cu = problem.coordinated[c];
    for (int k = 0; k < set.capacity_cuts; ++k) {
      const double th = th_max * k / (set.capacity_cuts - 1);
      emit_w(a_trips, row, c, -std::cos(th));
      emit_w(a_trips, row, C + c, -std::sin(th));
      lo.push_back(-qp::kInf);
      up.push_back(cu.s_rating_kva - cu.p_av_kw * std::cos(th));
      ++row;
    }
  }

  double p_av_total = 0.0;
  for (const auto& cu : problem.coordinated) p_av_total += cu.p_av_kw;

  if (problem.aggregate_cap_kw) {  // sum p_inj <= cap  <=>  sum t_dep >= p_av_total - cap
    for (int c = 0; c < C; ++c) emit_w(a_trips, row, c, 1.0);
    lo.push_back(p_av_total - *problem.aggregate_cap_kw);
    up.push_back(qp::kInf);
    ++row;
  }

  if (with_gss) {
    const GssAugment& g = *problem.gss;
    if (g.magnitude_kw < 0.0) throw ParameterError("gss magnitude must be >= 0");
    // sum g = +UR or -DR
    for (int c = 0; c < C; ++c) a_trips.emplace_back(row, prog.off_g + c, 1.0);
    const double target = g.up ? g.magnitude_kw : -g.magnitude_kw;
    lo.push_back(target);
    up.push_back(target);
    ++row;
    // Deployed output within the availability envelope: t - g in [0, p_av].
    for (int c = 0; c < C; ++c) {
      a_trips.emplace_back(row, prog.off_t + c, 1.0);
      a_trips.emplace_back(row, prog.off_g + c, -1.0);
      lo.push_back(0.0);
      up.push_back(problem.coordinated[c].p_av_kw);
      ++row;
    }
    // Aggregate delivery vs the pre-request total, held with a small margin:
    // the deployed total differs from the tau-1 total by at least the request.
    for (int c = 0; c < C; ++c) emit_w(a_trips, row, c, 1.0);
    const double delta =
        g.magnitude_kw + (g.magnitude_kw > 0.0 ? set.delivery_margin_kw : 0.0);
    if (g.up) {
      lo.push_back(-qp::kInf);
      up.push_back(p_av_total - g.base_total_kw - delta);
    } else {
      lo.push_back(p_av_total - g.base_total_kw + delta);
      up.push_back(qp::kInf);
    }
    ++row;
  }

  prog.qp.P.resize(nv, nv);
  prog.qp.P.setFromTriplets(p_trips.begin(), p_trips.end());
  prog.qp.q = q_lin;
  prog.qp.A.resize(row, nv);
  prog.qp.A.setFromTriplets(a_trips.begin(), a_trips.end());
  prog.qp.lower = Eigen::Map<Vec>(lo.data(), row);
  prog.qp.upper = Eigen::Map<Vec>(up.data(), row);
  return prog;
}

void evaluate_solution(const CicProgram& prog, CicSolution& sol) {
  const CicProblem& pb = prog.problem;
  const int C = prog.n_c;
  Vec u(2 * C);
  u.head(C) = sol.curtail_kw;
  u.tail(C) = sol.q_kvar;
  sol.re_v = prog.a_re + prog.b_re * u;
  sol.im_v = prog.a_im + prog.b_im * u;

  sol.phi = sol.curtail_kw.size() ? sol.curtail_kw.sum() : 0.0;

  const NetworkModel& net = *pb.network;
  const double zb = net.z_base_ohm();
  const double sb = net.base_power_kva();
  const int slack = net.slack_id();
  double rho = 0.0;
  for (const Line& l : net.lines()) {
    const std::complex<double> z(l.resistance_ohm / zb, l.reactance_ohm / zb);
    const double w = std::conj(1.0 / z).real() * sb;
    auto re_of = [&](int bus) { return bus == slack ? 1.0 : sol.re_v[net.reduced_index(bus)]; };
    const auto im_of = [&](int bus) { return bus == slack ? 0.0 : sol.im_v[net.reduced_index(bus)]; };
    const double sgn = pb.settings.loss_formula == LossFormula::difference ? -1.0 : 1.0;
    const double dre = re_of(l.from) + sgn * re_of(l.to);
    const double dim = im_of(l.from) + sgn * im_of(l.to);
    rho += w * (dre * dre + dim * dim);
  }
  sol.rho = rho;

  double kappa = 0.0;
  for (int bus : pb.monitored_nodes) {
    const int k = net.reduced_index(bus);
    const double z = pwl_value(prog.re_segments, sol.re_v[k]) +
                     pwl_value_even(prog.im_segments, sol.im_v[k]);
    kappa += pb.settings.big_m * std::max(0.0, z - prog.ceiling_pu2);
  }
  sol.kappa = kappa;

  double nu = 0.0;
  for (int c = 0; c < C; ++c)
    nu += self_sufficiency_term(std::max(sol.curtail_kw[c], 0.0), pb.coordinated[c].p_av_kw,
                                pb.coordinated[c].p_demand_kw, pb.settings.big_m);
  sol.nu = nu;
  sol.objective = sol.phi + sol.rho + sol.kappa + sol.nu;
}

namespace {

CicSolution fallback_solution(const CicProgram& prog, qp::Status status, int iterations) {
  const CicProblem& pb = prog.problem;
  const int C = prog.n_c;
  CicSolution sol;
  sol.curtail_kw.resize(C);
  sol.p_inj_kw = Vec::Zero(C);
  sol.q_kvar.resize(C);
  sol.gss_kw = Vec::Zero(C);
  for (int c = 0; c < C; ++c) {
    sol.curtail_kw[c] = pb.coordinated[c].p_av_kw;
    sol.q_kvar[c] = -pb.settings.q_min_pu * pb.coordinated[c].s_rating_kva;
  }
  sol.status = status;
  sol.iterations = iterations;
  sol.fallback = true;
  evaluate_solution(prog, sol);
  return sol;
}

}  // namespace

CicSolution solve(const CicProgram& prog, double tolerance, int max_iter,
                  const CicSolution* warm) {
  const CicProblem& pb = prog.problem;
  const int C = prog.n_c;

  if (C == 0) {
    CicSolution sol;
    sol.curtail_kw.resize(0);
    sol.p_inj_kw.resize(0);
    sol.q_kvar.resize(0);
    sol.gss_kw.resize(0);
    sol.status = qp::Status::optimal;
    evaluate_solution(prog, sol);
    return sol;
  }

  qp::Settings settings;
  settings.eps_abs = tolerance;
  settings.eps_rel = tolerance;
  settings.max_iter = max_iter;

  Vec x_warm;
  if (warm && warm->curtail_kw.size() == C) {
    x_warm = Vec::Zero(prog.qp.n());
    x_warm.segment(prog.off_t, C) = warm->curtail_kw;
    x_warm.segment(prog.off_q, C) = warm->q_kvar;
  }
  const qp::Result res =
      qp::solve(prog.qp, settings, x_warm.size() ? &x_warm : nullptr, nullptr);

  if (res.status == qp::Status::primal_infeasible)
    return fallback_solution(prog, res.status, res.iterations);

  CicSolution sol;
  sol.curtail_kw = res.x.segment(prog.off_t, C);
  sol.q_kvar = res.x.segment(prog.off_q, C);
  sol.gss_kw = prog.off_g >= 0 ? Vec(res.x.segment(prog.off_g, C)) : Vec::Zero(C);
  // During a request window the deployed curtailment is the plan minus the
  // per-inverter allocation.
  if (prog.off_g >= 0) sol.curtail_kw -= sol.gss_kw;
  sol.p_inj_kw.resize(C);
  // Projection onto the inverter capability set (box, then kVA disk with
  // reactive support yielding to active power).
  for (int c = 0; c < C; ++c) {
    const auto& cu = pb.coordinated[c];
    double t = std::clamp(sol.curtail_kw[c], 0.0, cu.p_av_kw);
    double q = std::clamp(sol.q_kvar[c], -pb.settings.q_min_pu * cu.s_rating_kva, 0.0);
    double p = cu.p_av_kw - t;
    if (p > cu.s_rating_kva) {
      p = cu.s_rating_kva;
      t = cu.p_av_kw - p;
    }
    const double q_cap = std::sqrt(std::max(cu.s_rating_kva * cu.s_rating_kva - p * p, 0.0));
    if (-q > q_cap) q = -q_cap;
    sol.curtail_kw[c] = t;
    sol.p_inj_kw[c] = p;
    sol.q_kvar[c] = q;
  }
  sol.status = res.status;
  sol.iterations = res.iterations;
  evaluate_solution(prog, sol);
  return sol;
}

CicSolution solve_cic(const CicProblem& problem, const CicSolution* warm) {
  const CicProgram prog = assemble(problem);
  return solve(prog, problem.settings.solver_tol, problem.settings.solver_max_iter, warm);
}

}  // namespace vppsim
