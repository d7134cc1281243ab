#pragma once

/**
 * @file
 * @brief Koopman model predictive control: dense delta-input condensation of
 * the tracking problem and the receding-horizon controller.
 *
 * The horizon cost is
 *
 *   J = 1/2 e_Np' S e_Np + 1/2 sum_{k=0}^{Np-1} ( e_k' Qe e_k + u_k' R u_k )
 *
 * over input increments dU = (du_0, ..., du_{Np-1}) with u_k = u_prev +
 * sum_{j<=k} du_j, subject to the predictor dynamics z_{k+1} = A z_k + B u_k
 * and e_k = r_k - C z_k. Eliminating the states yields a dense QP
 *
 *   min_dU  1/2 dU' H dU + f' dU,   b_min <= G dU <= b_max,
 *
 * whose size depends only on Np and the input dimension, not on the lifted
 * state dimension.
 */

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "common.hpp"
#include "edmd.hpp"
#include "lifting.hpp"
#include "plant.hpp"
#include "qp.hpp"

namespace koopctl {

/// Tuning of the receding-horizon tracking controller.
struct KmpcConfig {
  int Np = 10;                         ///< prediction horizon length
  Eigen::MatrixXd Qe;                  ///< q x q tracking-error penalty
  Eigen::MatrixXd S;                   ///< q x q terminal-error penalty
  Eigen::MatrixXd R;                   ///< m x m input penalty (may be zero)
  double u_min = -0.5;                 ///< input lower bound
  double u_max = 0.5;                  ///< input upper bound
  std::optional<double> du_min;        ///< optional rate bound per step
  std::optional<double> du_max;
};

/**
 * @brief The condensed dense QP and its parameter-to-linear-term maps.
 *
 * Layout: dU blocks are ordered by stage, dU = (du_0', ..., du_{Np-1}')'.
 * The parameter vector of F is (z0', r_0', ..., r_{Np-1}')'; the terminal
 * reference r_Np is taken equal to r_{Np-1}. The previous input contributes
 * to the linear term through two separate maps: F_u_dyn (its effect on the
 * predicted outputs) and F_u_cost (its effect on the u'Ru stage costs); the
 * full previous-input map is their sum. Constraint rows are the Np
 * cumulative-sum blocks encoding u_min <= u_k <= u_max, followed by Np
 * identity blocks when rate bounds are configured; the bound vectors depend
 * on u_prev and are produced by bounds().
 */
struct CondensedQp {
  Eigen::MatrixXd H;         ///< (m Np) x (m Np)
  Eigen::MatrixXd F;         ///< (m Np) x (N + q Np), parameter map [z0; r]
  Eigen::MatrixXd F_u_dyn;   ///< (m Np) x m
  Eigen::MatrixXd F_u_cost;  ///< (m Np) x m
  Eigen::MatrixXd G;         ///< constraint matrix

  // prediction maps retained for linear-term assembly
  Eigen::MatrixXd O_stack;   ///< (q (Np+1)) x N output free-response map
  Eigen::MatrixXd Gy;        ///< (q (Np+1)) x (m Np) input-to-output map
  Eigen::MatrixXd W;         ///< (q (Np+1)) stacked error weights
  Eigen::MatrixXd M;         ///< Gy * T
  Eigen::MatrixXd T;         ///< cumulative-sum map dU -> U - 1 u_prev

  int Np = 0;
  Eigen::Index N = 0, q = 0, m = 0;
  double u_min = 0.0, u_max = 0.0;
  std::optional<double> du_min, du_max;

  /// Bound vectors of the constraint rows for a given previous input.
  void bounds(double u_prev, Eigen::VectorXd & b_min, Eigen::VectorXd & b_max) const
  {
    const Eigen::Index rows = G.rows();
    b_min.resize(rows);
    b_max.resize(rows);
    b_min.head(m * Np).setConstant(u_min - u_prev);
    b_max.head(m * Np).setConstant(u_max - u_prev);
    if (rows > m * Np) {
      b_min.tail(m * Np).setConstant(du_min ? *du_min : -std::numeric_limits<double>::infinity());
      b_max.tail(m * Np).setConstant(du_max ? *du_max : std::numeric_limits<double>::infinity());
    }
  }

  /**
   * @brief Linear term of the QP for given parameters.
   *
   * @param u_prev_dyn previous input as seen by the prediction model; a
   *        disturbance estimate may be folded in here
   * @param u_prev_cost previous input entering the u'Ru stage costs
   */
  Eigen::VectorXd linear_term(const Eigen::VectorXd & z0, const Eigen::MatrixXd & ref,
                              double u_prev_dyn, double u_prev_cost) const
  {
    if (z0.size() != N || ref.rows() != q || ref.cols() < Np) {
      throw InvalidInput("CondensedQp::linear_term: parameter dimension mismatch");
    }
    Eigen::VectorXd zr(N + q * Np);
    zr.head(N) = z0;
    for (int k = 0; k < Np; ++k) { zr.segment(N + q * k, q) = ref.col(k); }
    return F * zr + F_u_dyn * Eigen::VectorXd::Constant(m, u_prev_dyn) +
           F_u_cost * Eigen::VectorXd::Constant(m, u_prev_cost);
  }
};

/**
 * @brief Build the condensed QP from the predictor and the tuning.
 *
 * @throws InvalidInput if the resulting H is not positive definite (e.g.
 * R = 0 with a redundant input parametrization); choose R > 0 in that case.
 */
inline CondensedQp condense(const LiftedPredictor & pred, const KmpcConfig & cfg)
{
  const Eigen::Index N = pred.lifted_dim();
  const Eigen::Index q = pred.output_dim();
  const Eigen::Index m = pred.input_dim();
  const int Np = cfg.Np;
  if (Np < 1) { throw InvalidInput("condense: Np must be >= 1"); }
  if (cfg.Qe.rows() != q || cfg.Qe.cols() != q || cfg.S.rows() != q || cfg.S.cols() != q ||
      cfg.R.rows() != m || cfg.R.cols() != m) {
    throw InvalidInput("condense: weight dimensions inconsistent with the predictor");
  }
  if (!(cfg.u_min < cfg.u_max)) { throw InvalidInput("condense: u_min must be < u_max"); }

  CondensedQp c;
  c.Np = Np;
  c.N = N;
  c.q = q;
  c.m = m;
  c.u_min = cfg.u_min;
  c.u_max = cfg.u_max;
  c.du_min = cfg.du_min;
  c.du_max = cfg.du_max;

  // free-response and input-influence maps over the horizon, stage 0..Np
  c.O_stack.resize(q * (Np + 1), N);
  c.Gy.setZero(q * (Np + 1), m * Np);
  std::vector<Eigen::MatrixXd> Apow(Np + 1);
  Apow[0] = Eigen::MatrixXd::Identity(N, N);
  for (int k = 1; k <= Np; ++k) { Apow[k] = Apow[k - 1] * pred.A; }
  for (int k = 0; k <= Np; ++k) {
    c.O_stack.middleRows(q * k, q) = pred.C * Apow[k];
    for (int j = 0; j < k; ++j) {
      c.Gy.block(q * k, m * j, q, m) = pred.C * Apow[k - 1 - j] * pred.B;
    }
  }

  c.T.setZero(m * Np, m * Np);
  for (int k = 0; k < Np; ++k) {
    for (int j = 0; j <= k; ++j) {
      c.T.block(m * k, m * j, m, m) = Eigen::MatrixXd::Identity(m, m);
    }
  }

  c.W.setZero(q * (Np + 1), q * (Np + 1));
  for (int k = 0; k < Np; ++k) { c.W.block(q * k, q * k, q, q) = cfg.Qe; }
  c.W.bottomRightCorner(q, q) = cfg.S;

  Eigen::MatrixXd Rb = Eigen::MatrixXd::Zero(m * Np, m * Np);
  for (int k = 0; k < Np; ++k) { Rb.block(m * k, m * k, m, m) = cfg.R; }

  c.M = c.Gy * c.T;
  c.H = c.M.transpose() * c.W * c.M + c.T.transpose() * Rb * c.T;
  c.H = 0.5 * (c.H + c.H.transpose());

  Eigen::LLT<Eigen::MatrixXd> llt(c.H);
  if (llt.info() != Eigen::Success) {
    throw InvalidInput("condense: condensed H is not positive definite; use R > 0");
  }

  // parameter map: f = F [z0; r] + (F_u_dyn + F_u_cost) u_prev, where the
  // terminal reference duplicates the last stage reference
  Eigen::MatrixXd Pr = Eigen::MatrixXd::Zero(q * (Np + 1), q * Np);
  for (int k = 0; k < Np; ++k) {
    Pr.block(q * k, q * k, q, q) = Eigen::MatrixXd::Identity(q, q);
  }
  Pr.block(q * Np, q * (Np - 1), q, q) = Eigen::MatrixXd::Identity(q, q);

  const Eigen::MatrixXd MtW = c.M.transpose() * c.W;
  c.F.resize(m * Np, N + q * Np);
  c.F.leftCols(N) = MtW * c.O_stack;
  c.F.rightCols(q * Np) = -MtW * Pr;

  Eigen::MatrixXd U1 = Eigen::MatrixXd::Zero(m * Np, m);
  for (int k = 0; k < Np; ++k) { U1.block(m * k, 0, m, m) = Eigen::MatrixXd::Identity(m, m); }
  c.F_u_dyn = MtW * c.Gy * U1;
  c.F_u_cost = c.T.transpose() * Rb * U1;

  const Eigen::Index rate_rows = (cfg.du_min || cfg.du_max) ? m * Np : 0;
  c.G.resize(m * Np + rate_rows, m * Np);
  c.G.topRows(m * Np) = c.T;
  if (rate_rows > 0) { c.G.bottomRows(rate_rows).setIdentity(); }
  return c;
}

/// Per-step controller diagnostics.
struct MpcDiagnostics {
  QpStatus status = QpStatus::Solved;
  int iterations = 0;
  double du0 = 0.0;
  Eigen::VectorXd planned_u;  ///< the full planned input sequence u_0..u_{Np-1}
  double primal_residual = 0.0;
};

struct MpcStepResult {
  double u = 0.0;
  MpcDiagnostics diag;
  Eigen::VectorXd delta_u;  ///< optimizer iterate, used for warm starting
  Eigen::VectorXd dual;
};

/**
 * @brief Solve one receding-horizon step.
 *
 * Only the first input of the optimal sequence is returned for application.
 * On a degraded (max-iteration) solve the best iterate's first input is
 * used, clamped to the input bounds.
 *
 * @param ref q x Np reference window for stages 0..Np-1
 * @param d_hat input-disturbance estimate folded into the prediction
 * @throws NumericalError if the solver reports infeasibility (impossible
 *         with pure input bounds, indicative of inconsistent rate bounds)
 */
inline MpcStepResult mpc_step(const CondensedQp & qp, QpSolver & solver,
                              const Eigen::VectorXd & z0, double u_prev,
                              const Eigen::MatrixXd & ref,
                              const std::optional<QpWarmStart> & warm = std::nullopt,
                              double d_hat = 0.0)
{
  const Eigen::VectorXd f = qp.linear_term(z0, ref, u_prev + d_hat, u_prev);
  Eigen::VectorXd b_min, b_max;
  qp.bounds(u_prev, b_min, b_max);
  const QpSolution sol = solver.solve(f, b_min, b_max, warm);
  if (sol.status == QpStatus::Infeasible) {
    throw NumericalError("mpc_step: QP reported infeasible");
  }

  MpcStepResult out;
  out.delta_u = sol.x;
  out.dual = sol.dual;
  out.diag.status = sol.status;
  out.diag.iterations = sol.iterations;
  out.diag.du0 = sol.x[0];
  out.diag.primal_residual = sol.primal_residual;
  out.diag.planned_u = (qp.T * sol.x).array() + u_prev;
  out.u = clamp(u_prev + sol.x[0], qp.u_min, qp.u_max);
  return out;
}

/// Reference trajectory; columns are q-vectors per sample, and reads past
/// the end hold the last value.
struct TrackingReference {
  Eigen::MatrixXd r;  ///< q x length

  Eigen::VectorXd stage(Eigen::Index k) const
  {
    if (r.cols() == 0) { throw InvalidInput("TrackingReference: empty"); }
    return r.col(std::min(k, r.cols() - 1));
  }

  /// q x Np window starting at sample k, padded by holding the last value.
  Eigen::MatrixXd window(Eigen::Index k, int Np) const
  {
    Eigen::MatrixXd w(r.rows(), Np);
    for (int j = 0; j < Np; ++j) { w.col(j) = stage(k + j); }
    return w;
  }
};

/// Controller-level options beyond the QP tuning.
struct KmpcControllerOptions {
  /**
   * Gain of the first-order input-disturbance estimator. Each step the
   * lifted-state innovation is projected onto the input direction B and
   * accumulated into an estimate d_hat that shifts the prediction's notion
   * of the applied input; this is what makes the delta-input loop reject
   * constant input disturbances without bias. Zero disables the estimator.
   */
  double disturbance_gain = 0.05;
  QpOptions qp;
};

/**
 * @brief Stateful receding-horizon controller wrapping the condensed QP.
 *
 * Owns the measurement history, the previous input, the warm-started solver
 * workspace and the disturbance estimate. Outputs zero until the history
 * buffer has filled.
 */
class KmpcController
{
public:
  KmpcController(const LiftedPredictor & pred, const KmpcConfig & cfg,
                 const KmpcControllerOptions & opts = {})
      : pred_(pred), cfg_(cfg), opts_(opts), qp_(condense(pred, cfg)),
        solver_(qp_.H, qp_.G, opts.qp), buffer_(pred.spec.delays + 1)
  {
    if (pred.input_dim() != 1) {
      throw InvalidInput("KmpcController: single-input plants only");
    }
  }

  /// Compute the input for the current measurement and reference window.
  double step(const Measurement & y, const Eigen::MatrixXd & ref_window)
  {
    buffer_.push(y, u_prev_);
    if (!buffer_.full()) {
      last_diag_ = {};
      last_diag_.planned_u = Eigen::VectorXd::Zero(qp_.Np);
      warmed_up_ = false;
      return 0.0;
    }
    const Eigen::VectorXd z0 = lift(buffer_, pred_.spec);

    if (z_prev_.size() > 0 && opts_.disturbance_gain > 0.0) {
      const Eigen::VectorXd predicted =
        pred_.A * z_prev_ + pred_.B * Eigen::VectorXd::Constant(1, u_prev_ + d_hat_);
      const Eigen::VectorXd innovation = z0 - predicted;
      const double bb = pred_.B.col(0).squaredNorm();
      if (bb > 0.0) {
        d_hat_ += opts_.disturbance_gain * pred_.B.col(0).dot(innovation) / bb;
      }
    }

    std::optional<QpWarmStart> warm;
    if (warmed_up_) {
      Eigen::VectorXd shifted(prev_delta_u_.size());
      shifted.head(prev_delta_u_.size() - 1) = prev_delta_u_.tail(prev_delta_u_.size() - 1);
      shifted.tail(1).setZero();
      warm = QpWarmStart{shifted, prev_dual_};
    }

    const MpcStepResult r = mpc_step(qp_, solver_, z0, u_prev_, ref_window, warm, d_hat_);
    prev_delta_u_ = r.delta_u;
    prev_dual_ = r.dual;
    warmed_up_ = true;
    z_prev_ = z0;
    u_prev_ = r.u;
    last_diag_ = r.diag;
    return r.u;
  }

  bool warming_up() const { return !buffer_.full(); }
  double u_prev() const { return u_prev_; }
  double disturbance_estimate() const { return d_hat_; }
  const MpcDiagnostics & last_diagnostics() const { return last_diag_; }
  const CondensedQp & condensed() const { return qp_; }

private:
  LiftedPredictor pred_;
  KmpcConfig cfg_;
  KmpcControllerOptions opts_;
  CondensedQp qp_;
  QpSolver solver_;
  HistoryBuffer buffer_;
  Eigen::VectorXd z_prev_;
  Eigen::VectorXd prev_delta_u_;
  Eigen::VectorXd prev_dual_;
  bool warmed_up_ = false;
  double u_prev_ = 0.0;
  double d_hat_ = 0.0;
  MpcDiagnostics last_diag_;
};

/// One logged sample of a closed-loop run.
struct ClosedLoopSample {
  double t = 0.0;
  double phi = 0.0;
  double phi_dot = 0.0;
  double r_phi = 0.0;
  double u = 0.0;
  double du = 0.0;
  double d = 0.0;
  int solver_iters = 0;
  QpStatus status = QpStatus::Solved;
};

/// Uniform measurement noise injected between plant and controller.
struct NoiseOptions {
  double amp_phi = 0.0;
  double amp_phi_dot = 0.0;
  std::uint64_t seed = 0;
};

/**
 * @brief Closed-loop tracking rollout of the KMPC controller on the plant.
 *
 * @param d_signal exogenous disturbance torque at the top link per sample
 * @param d_input additive input-side disturbance torque per sample (enters
 *        through the same channel as the control input)
 */
inline std::vector<ClosedLoopSample> track(const LiftedPredictor & pred, const KmpcConfig & cfg,
                                           const PlantParams & plant, const TowerState & initial,
                                           const TrackingReference & ref, int n_samples,
                                           const std::vector<double> & d_signal = {},
                                           const std::vector<double> & d_input = {},
                                           const KmpcControllerOptions & opts = {},
                                           const NoiseOptions & noise = {})
{
  KmpcController ctrl(pred, cfg, opts);
  std::mt19937_64 rng(noise.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  std::vector<ClosedLoopSample> out;
  out.reserve(n_samples);
  TowerState s = initial;
  double last_u = 0.0;
  for (int k = 0; k < n_samples; ++k) {
    Measurement y = measure(s, plant);
    if (noise.amp_phi > 0.0) { y.phi += noise.amp_phi * uni(rng); }
    if (noise.amp_phi_dot > 0.0) { y.phi_dot += noise.amp_phi_dot * uni(rng); }

    const double u = ctrl.step(y, ref.window(k, cfg.Np));
    const auto & diag = ctrl.last_diagnostics();
    const double d_top = k < static_cast<int>(d_signal.size()) ? d_signal[k] : 0.0;
    const double d_in = k < static_cast<int>(d_input.size()) ? d_input[k] : 0.0;

    out.push_back({s.t, y.phi, y.phi_dot, ref.stage(k)[0], u, u - last_u, d_top + d_in,
                   diag.iterations, diag.status});
    s = step(s, u + d_in, d_top, plant);
    last_u = u;
  }
  return out;
}

}  // namespace koopctl
