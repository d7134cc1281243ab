#pragma once

/**
 * @file
 * @brief Dense operator-splitting (ADMM) solver for strictly convex
 * quadratic programs with two-sided linear inequality constraints:
 *
 *   min  1/2 x'Hx + f'x   s.t.  b_min <= G x <= b_max,
 *
 * with H positive definite and entries of b_min/b_max allowed to be
 * +-infinity. Supports warm starting and reuse of the KKT factorization
 * across solves that share (H, G).
 */

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <limits>
#include <optional>
#include <string>

#include "common.hpp"

namespace koopctl {

/// Quadratic program data.
struct QpProblem {
  Eigen::MatrixXd H;      ///< n x n, symmetric positive definite
  Eigen::VectorXd f;      ///< n
  Eigen::MatrixXd G;      ///< c x n (c may be zero)
  Eigen::VectorXd b_min;  ///< c, entries may be -inf
  Eigen::VectorXd b_max;  ///< c, entries may be +inf
};

enum class QpStatus { Solved, MaxIter, Infeasible };

inline const char * to_string(QpStatus s)
{
  switch (s) {
    case QpStatus::Solved: return "solved";
    case QpStatus::MaxIter: return "max_iter";
    case QpStatus::Infeasible: return "infeasible";
  }
  return "?";
}

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd dual;  ///< multipliers for b_min <= Gx <= b_max (signed)
  QpStatus status = QpStatus::MaxIter;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double objective = 0.0;
};

struct QpOptions {
  double rho = 0.1;        ///< penalty parameter
  double sigma = 1e-6;     ///< proximal regularization
  double alpha = 1.6;      ///< over-relaxation
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  double eps_pinf = 1e-6;  ///< primal infeasibility certificate tolerance
  int max_iter = 4000;
  bool scaling = true;     ///< diagonal inf-norm equilibration
  int scaling_iters = 10;
  int infeas_window = 100; ///< iterations between certificate tests
  bool polish = true;      ///< active-set refinement of the converged iterate
};

/// Warm-start data (unscaled primal/dual iterates).
struct QpWarmStart {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
};

/// Stationarity / feasibility / complementarity residuals at a point.
struct KktReport {
  double stationarity = 0.0;     ///< ||Hx + f + G'y||_inf
  double primal_violation = 0.0; ///< max bound violation of Gx
  double complementarity = 0.0;  ///< max |y_i| * distance-to-active-bound
};

/**
 * @brief Evaluate KKT residuals of a candidate primal/dual pair.
 *
 * The sign convention is y_i > 0 for an active upper bound and y_i < 0 for
 * an active lower bound. A nonzero multiplier on an infinite bound counts as
 * a complementarity violation of that multiplier's magnitude.
 */
inline KktReport kkt_check(const QpProblem & p, const Eigen::VectorXd & x,
                           const Eigen::VectorXd & y)
{
  if (x.size() != p.H.rows() || y.size() != p.G.rows()) {
    throw InvalidInput("kkt_check: dimension mismatch");
  }
  KktReport r;
  r.stationarity = (p.H * x + p.f + p.G.transpose() * y).cwiseAbs().maxCoeff();
  if (p.G.rows() > 0) {
    const Eigen::VectorXd gx = p.G * x;
    for (Eigen::Index i = 0; i < gx.size(); ++i) {
      r.primal_violation =
        std::max({r.primal_violation, gx[i] - p.b_max[i], p.b_min[i] - gx[i]});
      if (y[i] > 0.0) {
        r.complementarity = std::max(
          r.complementarity, std::isfinite(p.b_max[i]) ? y[i] * std::abs(p.b_max[i] - gx[i])
                                                       : y[i]);
      } else if (y[i] < 0.0) {
        r.complementarity = std::max(
          r.complementarity, std::isfinite(p.b_min[i]) ? -y[i] * std::abs(gx[i] - p.b_min[i])
                                                       : -y[i]);
      }
    }
    r.primal_violation = std::max(r.primal_violation, 0.0);
  }
  return r;
}

/**
 * @brief Reusable ADMM workspace for a fixed (H, G) pair.
 *
 * Construction performs the equilibration and the KKT factorization; solve()
 * may then be called repeatedly with different linear terms and bounds,
 * which is the receding-horizon use case. One solve at a time per instance.
 */
class QpSolver
{
public:
  QpSolver(Eigen::MatrixXd H, Eigen::MatrixXd G, QpOptions opts = {})
      : opts_(opts), H_(std::move(H)), G_(std::move(G)), n_(H_.rows()), c_(G_.rows())
  {
    if (H_.cols() != n_ || (c_ > 0 && G_.cols() != n_)) {
      throw InvalidInput("QpSolver: dimension mismatch between H and G");
    }
    if ((H_ - H_.transpose()).cwiseAbs().maxCoeff() >
        1e-12 * (1.0 + H_.cwiseAbs().maxCoeff())) {
      throw InvalidInput("QpSolver: H is not symmetric");
    }

    d_ = Eigen::VectorXd::Ones(n_);
    e_ = Eigen::VectorXd::Ones(c_);
    Hs_ = H_;
    Gs_ = G_;
    if (opts_.scaling) { equilibrate(); }

    Eigen::MatrixXd kkt = Hs_ + opts_.sigma * Eigen::MatrixXd::Identity(n_, n_);
    if (c_ > 0) { kkt += opts_.rho * Gs_.transpose() * Gs_; }
    llt_.compute(kkt);
    if (llt_.info() != Eigen::Success) {
      throw InvalidInput("QpSolver: H must be positive definite");
    }
  }

  const Eigen::MatrixXd & H() const { return H_; }
  const Eigen::MatrixXd & G() const { return G_; }

  /**
   * @brief Solve for a given linear term and bounds.
   *
   * Residuals are evaluated on unscaled quantities every iteration, so a
   * warm start at the optimum terminates immediately.
   */
  QpSolution solve(const Eigen::VectorXd & f, const Eigen::VectorXd & b_min,
                   const Eigen::VectorXd & b_max,
                   const std::optional<QpWarmStart> & warm = std::nullopt)
  {
    if (f.size() != n_ || b_min.size() != c_ || b_max.size() != c_) {
      throw InvalidInput("QpSolver::solve: dimension mismatch");
    }
    for (Eigen::Index i = 0; i < c_; ++i) {
      if (b_min[i] > b_max[i]) { throw InvalidInput("QpSolver::solve: b_min > b_max"); }
    }

    const double rho = opts_.rho, sigma = opts_.sigma, alpha = opts_.alpha;

    // scaled problem data
    const Eigen::VectorXd fs = d_.cwiseProduct(f);
    Eigen::VectorXd bmin_s(c_), bmax_s(c_);
    for (Eigen::Index i = 0; i < c_; ++i) {
      bmin_s[i] = std::isfinite(b_min[i]) ? b_min[i] / e_[i] : b_min[i];
      bmax_s[i] = std::isfinite(b_max[i]) ? b_max[i] / e_[i] : b_max[i];
    }

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n_);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(c_);
    if (warm) {
      x = warm->x.cwiseQuotient(d_);
      y = warm->y.cwiseProduct(e_);
    }
    Eigen::VectorXd z = c_ > 0 ? clamp_vec(Gs_ * x, bmin_s, bmax_s) : Eigen::VectorXd(0);

    QpSolution best;
    double best_merit = std::numeric_limits<double>::infinity();
    Eigen::VectorXd y_window = y;

    QpSolution sol;
    for (int it = 0;; ++it) {
      // termination check on unscaled iterates
      const Eigen::VectorXd xu = d_.cwiseProduct(x);
      const Eigen::VectorXd yu = e_.cwiseProduct(y);
      const Eigen::VectorXd gxu = c_ > 0 ? Eigen::VectorXd(G_ * xu) : Eigen::VectorXd(0);
      const Eigen::VectorXd zu = c_ > 0 ? Eigen::VectorXd(z.cwiseQuotient(e_)) : Eigen::VectorXd(0);

      double rp = 0.0, eps_p = opts_.eps_abs;
      if (c_ > 0) {
        rp = (gxu - zu).cwiseAbs().maxCoeff();
        eps_p += opts_.eps_rel * std::max(gxu.cwiseAbs().maxCoeff(), zu.cwiseAbs().maxCoeff());
      }
      const Eigen::VectorXd hx = H_ * xu;
      Eigen::VectorXd dual_vec = hx + f;
      if (c_ > 0) { dual_vec += G_.transpose() * yu; }
      const double rd = dual_vec.cwiseAbs().maxCoeff();
      double eps_d = opts_.eps_abs +
                     opts_.eps_rel * std::max({hx.cwiseAbs().maxCoeff(),
                                               f.cwiseAbs().maxCoeff(),
                                               c_ > 0 ? (G_.transpose() * yu).cwiseAbs().maxCoeff()
                                                      : 0.0});

      const double obj = 0.5 * xu.dot(H_ * xu) + f.dot(xu);
      double viol = 0.0;
      for (Eigen::Index i = 0; i < c_; ++i) {
        viol = std::max({viol, gxu[i] - b_max[i], b_min[i] - gxu[i]});
      }
      const double merit = obj + 1e6 * std::max(viol, 0.0);
      if (merit < best_merit) {
        best_merit = merit;
        best.x = xu;
        best.dual = yu;
        best.primal_residual = rp;
        best.dual_residual = rd;
        best.objective = obj;
        best.iterations = it;
      }

      if (rp <= eps_p && rd <= eps_d) {
        sol.x = xu;
        sol.dual = yu;
        sol.status = QpStatus::Solved;
        sol.iterations = it;
        sol.primal_residual = rp;
        sol.dual_residual = rd;
        sol.objective = obj;
        if (opts_.polish && c_ > 0) { try_polish(sol, f, b_min, b_max); }
        return sol;
      }

      if (it >= opts_.max_iter) {
        best.status = QpStatus::MaxIter;
        return best;
      }

      // primal infeasibility certificate from the dual drift over a window
      if (c_ > 0 && it > 0 && it % opts_.infeas_window == 0) {
        const Eigen::VectorXd dy = yu - y_window;
        const double dy_norm = dy.cwiseAbs().maxCoeff();
        if (dy_norm > 1e-12) {
          const double gty = (G_.transpose() * dy).cwiseAbs().maxCoeff();
          double support = 0.0;
          bool certifiable = true;
          for (Eigen::Index i = 0; i < c_ && certifiable; ++i) {
            if (dy[i] > 0.0) {
              if (!std::isfinite(b_max[i])) { certifiable = false; }
              else { support += b_max[i] * dy[i]; }
            } else if (dy[i] < 0.0) {
              if (!std::isfinite(b_min[i])) { certifiable = false; }
              else { support += b_min[i] * dy[i]; }
            }
          }
          if (certifiable && gty <= opts_.eps_pinf * dy_norm &&
              support <= -opts_.eps_pinf * dy_norm) {
            sol = best;
            sol.status = QpStatus::Infeasible;
            sol.iterations = it;
            return sol;
          }
        }
        y_window = yu;
      }

      // ADMM update
      Eigen::VectorXd rhs = sigma * x - fs;
      if (c_ > 0) { rhs += Gs_.transpose() * (rho * z - y); }
      const Eigen::VectorXd xt = llt_.solve(rhs);
      if (c_ > 0) {
        const Eigen::VectorXd zt = Gs_ * xt;
        const Eigen::VectorXd zhat = alpha * zt + (1.0 - alpha) * z;
        x = alpha * xt + (1.0 - alpha) * x;
        const Eigen::VectorXd znew = clamp_vec(zhat + y / rho, bmin_s, bmax_s);
        y += rho * (zhat - znew);
        z = znew;
      } else {
        x = alpha * xt + (1.0 - alpha) * x;
      }
    }
  }

private:
  static Eigen::VectorXd clamp_vec(Eigen::VectorXd v, const Eigen::VectorXd & lo,
                                   const Eigen::VectorXd & hi)
  {
    for (Eigen::Index i = 0; i < v.size(); ++i) { v[i] = std::min(std::max(v[i], lo[i]), hi[i]); }
    return v;
  }

  // Modified Ruiz equilibration of [H G'; G 0] by row/column inf-norms.
  void equilibrate()
  {
    for (int pass = 0; pass < opts_.scaling_iters; ++pass) {
      for (Eigen::Index j = 0; j < n_; ++j) {
        double nrm = Hs_.col(j).cwiseAbs().maxCoeff();
        if (c_ > 0) { nrm = std::max(nrm, Gs_.col(j).cwiseAbs().maxCoeff()); }
        const double s = nrm > 1e-12 ? 1.0 / std::sqrt(nrm) : 1.0;
        d_[j] *= s;
        Hs_.col(j) *= s;
        Hs_.row(j) *= s;
        if (c_ > 0) { Gs_.col(j) *= s; }
      }
      for (Eigen::Index i = 0; i < c_; ++i) {
        const double nrm = Gs_.row(i).cwiseAbs().maxCoeff();
        const double s = nrm > 1e-12 ? 1.0 / std::sqrt(nrm) : 1.0;
        e_[i] *= s;
        Gs_.row(i) *= s;
      }
    }
  }

  // Equality-constrained re-solve on the active set detected from the duals;
  // adopted only if it does not worsen the KKT residuals.
  void try_polish(QpSolution & sol, const Eigen::VectorXd & f, const Eigen::VectorXd & b_min,
                  const Eigen::VectorXd & b_max) const
  {
    std::vector<Eigen::Index> act;
    std::vector<double> bact;
    const double tol = 10.0 * (opts_.eps_abs + opts_.eps_rel);
    const Eigen::VectorXd gx = G_ * sol.x;
    for (Eigen::Index i = 0; i < c_; ++i) {
      if (sol.dual[i] > tol || (std::isfinite(b_max[i]) && gx[i] >= b_max[i] - tol &&
                                sol.dual[i] >= -tol)) {
        act.push_back(i);
        bact.push_back(b_max[i]);
      } else if (sol.dual[i] < -tol || (std::isfinite(b_min[i]) && gx[i] <= b_min[i] + tol &&
                                        sol.dual[i] <= tol)) {
        act.push_back(i);
        bact.push_back(b_min[i]);
      }
    }
    const Eigen::Index na = static_cast<Eigen::Index>(act.size());
    Eigen::MatrixXd kkt(n_ + na, n_ + na);
    kkt.setZero();
    kkt.topLeftCorner(n_, n_) = H_;
    for (Eigen::Index a = 0; a < na; ++a) {
      if (!std::isfinite(bact[a])) { return; }
      kkt.block(n_ + a, 0, 1, n_) = G_.row(act[a]);
      kkt.block(0, n_ + a, n_, 1) = G_.row(act[a]).transpose();
    }
    Eigen::VectorXd rhs(n_ + na);
    rhs.head(n_) = -f;
    for (Eigen::Index a = 0; a < na; ++a) { rhs[n_ + a] = bact[a]; }

    Eigen::LDLT<Eigen::MatrixXd> ldlt(kkt);
    if (ldlt.info() != Eigen::Success) { return; }
    Eigen::VectorXd w = ldlt.solve(rhs);
    w += ldlt.solve(rhs - kkt * w);  // one step of iterative refinement

    Eigen::VectorXd xp = w.head(n_);
    Eigen::VectorXd yp = Eigen::VectorXd::Zero(c_);
    for (Eigen::Index a = 0; a < na; ++a) { yp[act[a]] = w[n_ + a]; }

    QpProblem prob{H_, f, G_, b_min, b_max};
    const KktReport before = kkt_check(prob, sol.x, sol.dual);
    const KktReport after = kkt_check(prob, xp, yp);
    if (std::max({after.stationarity, after.primal_violation, after.complementarity}) <=
        std::max({before.stationarity, before.primal_violation, before.complementarity})) {
      sol.x = xp;
      sol.dual = yp;
      sol.primal_residual = after.primal_violation;
      sol.dual_residual = after.stationarity;
      sol.objective = 0.5 * xp.dot(H_ * xp) + f.dot(xp);
    }
  }

  QpOptions opts_;
  Eigen::MatrixXd H_, G_;
  Eigen::Index n_, c_;
  Eigen::VectorXd d_, e_;     // column / row scalings
  Eigen::MatrixXd Hs_, Gs_;   // scaled copies
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// One-shot convenience wrapper around QpSolver.
inline QpSolution solve(const QpProblem & p, const QpOptions & opts = {},
                        const std::optional<QpWarmStart> & warm = std::nullopt)
{
  QpSolver solver(p.H, p.G, opts);
  return solver.solve(p.f, p.b_min, p.b_max, warm);
}

}  // namespace koopctl
