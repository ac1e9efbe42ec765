#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "vppsim/powerflow.hpp"
#include "vppsim/qp.hpp"

namespace vppsim {

/// One chord of the piecewise-linear overestimate of f(v) = v^2:
/// m = lo + hi, c = -lo*hi, so that m*v + c >= v^2 on [lo, hi] with
/// equality at the breakpoints.
struct PwlSegment {
  double lo = 0.0, hi = 0.0;
  double m = 0.0, c = 0.0;
  double value(double v) const { return m * v + c; }
};

/// Chord coefficients for strictly increasing breakpoints.
std::vector<PwlSegment> pwl_square_coefficients(const std::vector<double>& breakpoints);

/// Self-sufficiency reward: -sqrt(big_m) * min(curtail, max(p_av - p_demand, 0)).
double self_sufficiency_term(double curtail_kw, double p_av_kw, double p_demand_kw, double big_m);

struct CicSettings {
  double v_cic_pu = refs::v_cic_v / refs::v_nom_v;
  double v_trip_pu = refs::v_trip_v / refs::v_nom_v;  // used only for validation
  double big_m = 1e4;
  double q_min_pu = refs::q_min_pu;  // reactive absorption limit, fraction of S
  std::vector<double> re_breakpoints_pu = {refs::v_min_v / refs::v_nom_v,
                                           refs::v_qmin_v / refs::v_nom_v,
                                           refs::v_max_autonomous_v / refs::v_nom_v};
  std::vector<double> im_breakpoints_pu = {0.0, 0.1, 0.2};
  LossFormula loss_formula = LossFormula::difference;
  double solver_tol = 1e-6;
  int solver_max_iter = 20000;
  int capacity_cuts = 5;          // tangent outer approximation of the kVA disk
  double gss_regularization = 1e-6;
  double delivery_margin_kw = 1e-3;

  void validate() const;
};

struct CoordinatedUnitInput {
  int node = 0;           // bus id
  double s_rating_kva = refs::s_rating_kva;
  double p_av_kw = 0.0;
  double p_demand_kw = 0.0;
};

/// Grid-support augmentation of the program: per-inverter allocation
/// variables summing to the (signed) request, plus the aggregate delivery
/// constraint relative to the pre-request injection total.
struct GssAugment {
  bool up = true;
  double magnitude_kw = 0.0;
  double base_total_kw = 0.0;
};

struct CicProblem {
  const NetworkModel* network = nullptr;
  InjectionSet net;  // signed injections per non-slack bus, coordinated PV excluded
  std::vector<CoordinatedUnitInput> coordinated;
  std::vector<int> monitored_nodes;  // bus ids: coordinated and passive PV nodes
  CicSettings settings;
  std::optional<double> aggregate_cap_kw;  // reserve stage output ceiling
  std::optional<GssAugment> gss;
};

struct CicSolution {
  Eigen::VectorXd curtail_kw;  // per coordinated inverter
  Eigen::VectorXd p_inj_kw;
  Eigen::VectorXd q_kvar;
  Eigen::VectorXd gss_kw;      // per-inverter GSS allocation (dispatch mode)
  Eigen::VectorXd re_v, im_v;  // predicted linear-model voltages, per non-slack bus
  double phi = 0.0, rho = 0.0, kappa = 0.0, nu = 0.0;
  double objective = 0.0;      // phi + rho + kappa + nu at the returned setpoints
  qp::Status status = qp::Status::optimal;
  int iterations = 0;
  bool fallback = false;

  double total_injection_kw() const { return p_inj_kw.size() ? p_inj_kw.sum() : 0.0; }
};

/// Assembled convex program plus the affine voltage maps needed to recover
/// and evaluate a solution.
struct CicProgram {
  qp::Problem qp;
  CicProblem problem;  // owned copy
  int n_c = 0, n_d = 0;
  int off_t = 0, off_q = 0, off_r = 0, off_x = 0, off_y = 0, off_s = 0, off_g = -1;
  Eigen::VectorXd a_re, a_im;   // affine constants per non-slack bus
  Eigen::MatrixXd b_re, b_im;   // sensitivities to [t; q], n_nodes x 2 n_c
  double loss_const = 0.0;      // constant part of the loss term, kW
  double ceiling_pu2 = 0.0;     // chord value of v_cic^2
  std::vector<PwlSegment> re_segments, im_segments;
};

CicProgram assemble(const CicProblem& problem);

/// Solves the assembled program with the operator-splitting QP solver and
/// projects the returned setpoints onto the inverter capability set.
CicSolution solve(const CicProgram& program, double tolerance, int max_iter,
                  const CicSolution* warm = nullptr);

/// assemble + solve with the problem's own settings; on infeasibility falls
/// back to full curtailment with maximum reactive support.
CicSolution solve_cic(const CicProblem& problem, const CicSolution* warm = nullptr);

/// Objective terms evaluated at given setpoints through the program's own
/// affine maps (used for reporting and the solution dump).
void evaluate_solution(const CicProgram& program, CicSolution& solution);

}  // namespace vppsim
