#pragma once

#include <limits>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "vppsim/common.hpp"

namespace vppsim::qp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Convex quadratic program
///   minimize    0.5 x'Px + q'x
///   subject to  l <= Ax <= u
/// with P symmetric positive semidefinite. Equality rows use l == u.
struct Problem {
  Eigen::SparseMatrix<double> P;  // n x n, full symmetric
  Eigen::VectorXd q;
  Eigen::SparseMatrix<double> A;  // m x n
  Eigen::VectorXd lower, upper;

  int n() const { return static_cast<int>(q.size()); }
  int m() const { return static_cast<int>(lower.size()); }
};

struct Settings {
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  double eps_prim_inf = 1e-6;
  int max_iter = 20000;
  double rho = 0.1;          // initial step parameter
  bool adaptive_rho = true;  // residual-balanced step adaptation
  double rho_eq_scale = 1e3; // stiffer rho on equality rows
  double sigma = 1e-6;
  double alpha = 1.6;        // relaxation
  int check_interval = 25;
  bool scaling = true;       // Ruiz equilibration, computed once up front
  int scaling_iters = 10;
  bool polish = true;
  double polish_delta = 1e-7;
};

enum class Status { optimal, max_iterations, primal_infeasible };

const char* to_string(Status status);

struct Result {
  Eigen::VectorXd x;  // primal solution
  Eigen::VectorXd y;  // dual multipliers for l <= Ax <= u
  Eigen::VectorXd z;  // Ax at the solution
  Status status = Status::max_iterations;
  int iterations = 0;
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  bool polished = false;
};

/// ADMM solver in the operator-splitting form with a fixed KKT
/// factorization, fixed scaling, and an optional active-set polish pass.
Result solve(const Problem& problem, const Settings& settings = {},
             const Eigen::VectorXd* x_warm = nullptr, const Eigen::VectorXd* y_warm = nullptr);

}  // namespace vppsim::qp
