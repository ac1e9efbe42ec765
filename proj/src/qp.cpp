#include "vppsim/qp.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <vector>

namespace vppsim::qp {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

struct Scaling {
  Vec d;  // variable scaling, x = d .* x_scaled
  Vec e;  // constraint scaling
  double c = 1.0;
};

// Modified Ruiz equilibration on the [P A'; A 0] block matrix, followed by
// objective normalization.
Scaling ruiz_equilibrate(SpMat& p, Vec& q, SpMat& a, Vec& l, Vec& u, int iters) {
  const int n = static_cast<int>(q.size());
  const int m = static_cast<int>(l.size());
  Scaling s;
  s.d = Vec::Ones(n);
  s.e = Vec::Ones(m);
  for (int it = 0; it < iters; ++it) {
    Vec col_norm_x = Vec::Zero(n);
    Vec col_norm_z = Vec::Zero(m);
    for (int k = 0; k < p.outerSize(); ++k)
      for (SpMat::InnerIterator c(p, k); c; ++c)
        col_norm_x[k] = std::max(col_norm_x[k], std::abs(c.value()));
    for (int k = 0; k < a.outerSize(); ++k)
      for (SpMat::InnerIterator c(a, k); c; ++c) {
        col_norm_x[k] = std::max(col_norm_x[k], std::abs(c.value()));
        col_norm_z[c.row()] = std::max(col_norm_z[c.row()], std::abs(c.value()));
      }
    Vec dx(n), dz(m);
    for (int i = 0; i < n; ++i) dx[i] = col_norm_x[i] > 1e-12 ? 1.0 / std::sqrt(col_norm_x[i]) : 1.0;
    for (int i = 0; i < m; ++i) dz[i] = col_norm_z[i] > 1e-12 ? 1.0 / std::sqrt(col_norm_z[i]) : 1.0;
    p = dx.asDiagonal() * p * dx.asDiagonal();
    a = dz.asDiagonal() * a * dx.asDiagonal();
    q = dx.cwiseProduct(q);
    l = dz.cwiseProduct(l);
    u = dz.cwiseProduct(u);
    s.d = s.d.cwiseProduct(dx);
    s.e = s.e.cwiseProduct(dz);
  }
  // Cost scaling: normalize against the larger of the mean P column norm
  // and the linear-term norm.
  Vec pcol = Vec::Zero(n);
  for (int k = 0; k < p.outerSize(); ++k)
    for (SpMat::InnerIterator c(p, k); c; ++c)
      pcol[k] = std::max(pcol[k], std::abs(c.value()));
  const double mean_p = n ? pcol.sum() / n : 0.0;
  const double denom = std::max(std::max(mean_p, inf_norm(q)), 1e-8);
  s.c = 1.0 / denom;
  p *= s.c;
  q *= s.c;
  return s;
}

struct Kkt {
  Eigen::SimplicialLDLT<SpMat> ldlt;
  bool ok = false;
};

void factor_kkt(Kkt& kkt, const SpMat& p, const SpMat& a, double sigma, const Vec& rho) {
  const int n = p.rows();
  const int m = a.rows();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(p.nonZeros() + 2 * a.nonZeros() + n + m);
  for (int k = 0; k < p.outerSize(); ++k)
    for (SpMat::InnerIterator c(p, k); c; ++c) trips.emplace_back(c.row(), c.col(), c.value());
  for (int i = 0; i < n; ++i) trips.emplace_back(i, i, sigma);
  for (int k = 0; k < a.outerSize(); ++k)
    for (SpMat::InnerIterator c(a, k); c; ++c) {
      trips.emplace_back(n + c.row(), c.col(), c.value());
      trips.emplace_back(c.col(), n + c.row(), c.value());
    }
  for (int i = 0; i < m; ++i) trips.emplace_back(n + i, n + i, -1.0 / rho[i]);
  SpMat kmat(n + m, n + m);
  kmat.setFromTriplets(trips.begin(), trips.end());
  kkt.ldlt.compute(kmat);
  kkt.ok = kkt.ldlt.info() == Eigen::Success;
}

}  // namespace

const char* to_string(Status status) {
  switch (status) {
    case Status::optimal: return "optimal";
    case Status::max_iterations: return "max_iterations";
    case Status::primal_infeasible: return "primal_infeasible";
  }
  return "unknown";
}

Result solve(const Problem& problem, const Settings& settings, const Eigen::VectorXd* x_warm,
             const Eigen::VectorXd* y_warm) {
  const int n = problem.n();
  const int m = problem.m();
  if (problem.P.rows() != n || problem.P.cols() != n)
    throw ParameterError("qp: P dimensions do not match q");
  if (problem.A.rows() != m || (m > 0 && problem.A.cols() != n) ||
      problem.upper.size() != m)
    throw ParameterError("qp: A/l/u dimensions are inconsistent");
  for (int i = 0; i < m; ++i)
    if (problem.lower[i] > problem.upper[i])
      throw ParameterError("qp: lower bound exceeds upper bound");

  SpMat p = problem.P;
  SpMat a = problem.A;
  Vec q = problem.q;
  Vec l = problem.lower;
  Vec u = problem.upper;

  Scaling sc;
  sc.d = Vec::Ones(n);
  sc.e = Vec::Ones(m);
  if (settings.scaling) sc = ruiz_equilibrate(p, q, a, l, u, settings.scaling_iters);

  std::vector<char> eq_row(m);
  for (int i = 0; i < m; ++i)
    eq_row[i] = std::isfinite(l[i]) && std::isfinite(u[i]) && (u[i] - l[i]) < 1e-12;
  double rho_base = settings.rho;
  Vec rho(m);
  auto fill_rho = [&]() {
    for (int i = 0; i < m; ++i)
      rho[i] = eq_row[i] ? rho_base * settings.rho_eq_scale : rho_base;
  };
  fill_rho();

  Kkt kkt;
  double sigma = settings.sigma;
  auto refactor = [&]() {
    kkt.ok = false;
    double s = sigma;
    for (int attempt = 0; attempt < 4 && !kkt.ok; ++attempt, s *= 100.0)
      factor_kkt(kkt, p, a, s, rho);
    if (!kkt.ok) throw ParameterError("qp: KKT factorization failed");
  };
  refactor();

  Vec x = Vec::Zero(n), z = Vec::Zero(m), y = Vec::Zero(m);
  if (x_warm && x_warm->size() == n) x = sc.d.cwiseInverse().cwiseProduct(*x_warm);
  if (y_warm && y_warm->size() == m)
    y = sc.c * sc.e.cwiseInverse().cwiseProduct(*y_warm);
  if (m > 0 && x_warm) z = a * x;

  Result res;
  Vec rhs(n + m), sol(n + m);
  Vec x_prev, y_prev = y;

  auto unscale_x = [&](const Vec& xs) { return sc.d.cwiseProduct(xs).eval(); };
  auto unscale_y = [&](const Vec& ys) { return (sc.e.cwiseProduct(ys) / sc.c).eval(); };
  auto unscale_z = [&](const Vec& zs) { return sc.e.cwiseInverse().cwiseProduct(zs).eval(); };

  int iter = 0;
  Status status = Status::max_iterations;
  for (iter = 1; iter <= settings.max_iter; ++iter) {
    y_prev = y;
    rhs.head(n) = sigma * x - q;
    rhs.tail(m) = z - y.cwiseQuotient(rho);
    sol = kkt.ldlt.solve(rhs);
    const Vec x_tilde = sol.head(n);
    const Vec nu = sol.tail(m);
    const Vec z_tilde = z + (nu - y).cwiseQuotient(rho);
    x = settings.alpha * x_tilde + (1.0 - settings.alpha) * x;
    const Vec z_relaxed = settings.alpha * z_tilde + (1.0 - settings.alpha) * z;
    z = (z_relaxed + y.cwiseQuotient(rho)).cwiseMax(l).cwiseMin(u);
    y = y + rho.cwiseProduct(z_relaxed - z);

    if (iter % settings.check_interval != 0 && iter != settings.max_iter) continue;

    // Termination checks in unscaled quantities.
    const Vec xu = unscale_x(x);
    const Vec yu = unscale_y(y);
    const Vec zu = unscale_z(z);
    const Vec ax = problem.A * xu;
    const Vec px = problem.P * xu;
    const Vec aty = m > 0 ? Vec(problem.A.transpose() * yu) : Vec::Zero(n);
    const double rp = m > 0 ? inf_norm(ax - zu) : 0.0;
    const double rd = inf_norm(px + problem.q + aty);
    const double eps_p =
        settings.eps_abs + settings.eps_rel * std::max(inf_norm(ax), inf_norm(zu));
    const double eps_d = settings.eps_abs +
                         settings.eps_rel * std::max({inf_norm(px), inf_norm(aty),
                                                      inf_norm(problem.q)});
    res.primal_residual = rp;
    res.dual_residual = rd;
    if (rp <= eps_p && rd <= eps_d) {
      status = Status::optimal;
      break;
    }

    // Residual-balanced step-size adaptation; the equilibration itself
    // stays fixed. A large imbalance triggers one refactorization.
    if (settings.adaptive_rho && iter != settings.max_iter) {
      const double rel_p = rp / std::max({inf_norm(ax), inf_norm(zu), 1e-10});
      const double rel_d =
          rd / std::max({inf_norm(px), inf_norm(aty), inf_norm(problem.q), 1e-10});
      const double scale = std::sqrt(rel_p / std::max(rel_d, 1e-16));
      const double proposed = std::clamp(rho_base * scale, 1e-6, 1e6);
      if (proposed > 5.0 * rho_base || proposed < rho_base / 5.0) {
        rho_base = proposed;
        fill_rho();
        refactor();
      }
    }

    // Primal infeasibility certificate from the dual update direction.
    if (m > 0) {
      const Vec dy = unscale_y(y) - unscale_y(y_prev);
      const double dy_norm = inf_norm(dy);
      if (dy_norm > 1e-12) {
        const double at_dy = inf_norm(Vec(problem.A.transpose() * dy));
        bool cert = at_dy <= settings.eps_prim_inf * dy_norm;
        double support = 0.0;
        for (int i = 0; i < m && cert; ++i) {
          const double pos = std::max(dy[i], 0.0);
          const double neg = std::min(dy[i], 0.0);
          if (pos > settings.eps_prim_inf * dy_norm && !std::isfinite(problem.upper[i]))
            cert = false;
          else if (std::isfinite(problem.upper[i]))
            support += problem.upper[i] * pos;
          if (-neg > settings.eps_prim_inf * dy_norm && !std::isfinite(problem.lower[i]))
            cert = false;
          else if (std::isfinite(problem.lower[i]))
            support += problem.lower[i] * neg;
        }
        if (cert && support <= -settings.eps_prim_inf * dy_norm) {
          status = Status::primal_infeasible;
          break;
        }
      }
    }
  }

  res.x = unscale_x(x);
  res.y = unscale_y(y);
  res.z = m > 0 ? Vec(problem.A * res.x) : Vec();
  res.status = status;
  res.iterations = std::min(iter, settings.max_iter);

  // Active-set polish: resolve the equality-constrained subproblem defined
  // by the bounds the ADMM iterate ended on.
  if (settings.polish && status == Status::optimal && m > 0) {
    std::vector<int> low_rows, up_rows;
    for (int i = 0; i < m; ++i) {
      if (res.y[i] < -1e-10 && std::isfinite(problem.lower[i])) low_rows.push_back(i);
      else if (res.y[i] > 1e-10 && std::isfinite(problem.upper[i])) up_rows.push_back(i);
    }
    const int ma = static_cast<int>(low_rows.size() + up_rows.size());
    if (ma > 0) {
      std::vector<Eigen::Triplet<double>> trips;
      for (int k = 0; k < problem.P.outerSize(); ++k)
        for (SpMat::InnerIterator c(problem.P, k); c; ++c)
          trips.emplace_back(c.row(), c.col(), c.value());
      const double delta = settings.polish_delta;
      for (int i = 0; i < n; ++i) trips.emplace_back(i, i, delta);
      SpMat at = problem.A.transpose();
      auto add_row = [&](int row, int slot) {
        for (SpMat::InnerIterator c(at, row); c; ++c) {
          trips.emplace_back(n + slot, c.row(), c.value());
          trips.emplace_back(c.row(), n + slot, c.value());
        }
        trips.emplace_back(n + slot, n + slot, -delta);
      };
      int slot = 0;
      Vec rhs2(n + ma);
      rhs2.head(n) = -problem.q;
      for (int r : low_rows) { add_row(r, slot); rhs2[n + slot] = problem.lower[r]; ++slot; }
      for (int r : up_rows) { add_row(r, slot); rhs2[n + slot] = problem.upper[r]; ++slot; }
      SpMat kp(n + ma, n + ma);
      kp.setFromTriplets(trips.begin(), trips.end());
      Eigen::SimplicialLDLT<SpMat> ldlt(kp);
      if (ldlt.info() == Eigen::Success) {
        Vec sol2 = ldlt.solve(rhs2);
        for (int refine = 0; refine < 3; ++refine) {
          // Refine against the unregularized KKT system.
          Vec resid = rhs2 - kp * sol2;
          resid.head(n) += delta * sol2.head(n);
          resid.tail(ma) -= delta * sol2.tail(ma);
          sol2 += ldlt.solve(resid);
        }
        Vec xp = sol2.head(n);
        Vec yp = Vec::Zero(m);
        slot = 0;
        for (int r : low_rows) yp[r] = sol2[n + slot++];
        for (int r : up_rows) yp[r] = sol2[n + slot++];
        const Vec axp = problem.A * xp;
        const double rp2 = inf_norm((axp - axp.cwiseMax(problem.lower).cwiseMin(problem.upper)));
        const double rd2 =
            inf_norm(Vec(problem.P * xp + problem.q + problem.A.transpose() * yp));
        if (rp2 <= std::max(res.primal_residual, 1e-9) + 1e-12 &&
            rd2 <= std::max(res.dual_residual, 1e-9) + 1e-12) {
          res.x = xp;
          res.y = yp;
          res.z = axp;
          res.primal_residual = rp2;
          res.dual_residual = rd2;
          res.polished = true;
        }
      }
    }
  }

  res.objective = 0.5 * res.x.dot(problem.P * res.x) + problem.q.dot(res.x);
  return res;
}

}  // namespace vppsim::qp
