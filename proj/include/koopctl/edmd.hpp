#pragma once

/**
 * @file
 * @brief Extended dynamic mode decomposition with control: snapshot matrix
 * assembly and the least-squares fit of the lifted linear predictor
 *   z_{k+1} = A z_k + B u_k,   y_k = C z_k.
 */

#include <Eigen/Core>
#include <Eigen/SVD>

#include <optional>
#include <vector>

#include "common.hpp"
#include "lifting.hpp"

namespace koopctl {

/**
 * @brief Snapshot matrices assembled from lifted trajectory data.
 *
 * All five matrices share the column count p. Each column i of
 * (Y, Y_plus, Omega) is one temporally ordered pair drawn from some
 * trajectory; different columns need not be ordered relative to each other.
 */
struct SnapshotDataset {
  Eigen::MatrixXd Y;            ///< q x p raw outputs
  Eigen::MatrixXd Y_plus;       ///< q x p successor outputs
  Eigen::MatrixXd Y_lift;       ///< N x p lifted states
  Eigen::MatrixXd Y_plus_lift;  ///< N x p successor lifted states
  Eigen::MatrixXd Omega;        ///< m x p inputs
  LiftingSpec spec;
  double dt = 0.0;

  Eigen::Index p() const { return Y.cols(); }
};

/// Diagnostics recorded by fit().
struct FitReport {
  Eigen::Index p = 0;              ///< snapshot pair count
  double residual_dynamics = 0.0;  ///< ||Y+_lift - A Y_lift - B Omega||_F
  double residual_output = 0.0;    ///< ||Y - C Y_lift||_F
  double ridge = 0.0;              ///< regularization actually used
  bool truncated = false;          ///< singular values were dropped
  Eigen::Index rank = 0;           ///< retained rank of the regressor stack
};

/// The fitted lifted linear predictor.
struct LiftedPredictor {
  Eigen::MatrixXd A;  ///< N x N
  Eigen::MatrixXd B;  ///< N x m
  Eigen::MatrixXd C;  ///< q x N
  LiftingSpec spec;
  double dt = 0.0;
  FitReport fit_report;

  Eigen::Index lifted_dim() const { return A.rows(); }
  Eigen::Index output_dim() const { return C.rows(); }
  Eigen::Index input_dim() const { return B.cols(); }
};

/**
 * @brief Assemble snapshot matrices from a set of trajectories.
 *
 * p equals the total pair count over all trajectories; pairs never cross
 * trajectory boundaries.
 *
 * @throws InvalidInput if no trajectory yields any pair.
 */
inline SnapshotDataset assemble(const std::vector<Trajectory> & trajectories,
                                const LiftingSpec & spec)
{
  std::vector<SnapshotPair> pairs;
  double dt = 0.0;
  for (const auto & traj : trajectories) {
    auto tp = lift_dataset(traj, spec);
    pairs.insert(pairs.end(), tp.begin(), tp.end());
    if (traj.dt > 0) { dt = traj.dt; }
  }
  if (pairs.empty()) { throw InvalidInput("assemble: no usable snapshot pairs"); }

  const Eigen::Index p = static_cast<Eigen::Index>(pairs.size());
  const Eigen::Index N = spec.lifted_dim();
  SnapshotDataset d;
  d.spec = spec;
  d.dt = dt;
  d.Y.resize(2, p);
  d.Y_plus.resize(2, p);
  d.Y_lift.resize(N, p);
  d.Y_plus_lift.resize(N, p);
  d.Omega.resize(1, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const auto & s = pairs[i];
    d.Y(0, i) = s.y.phi;
    d.Y(1, i) = s.y.phi_dot;
    d.Y_plus(0, i) = s.y_next.phi;
    d.Y_plus(1, i) = s.y_next.phi_dot;
    d.Y_lift.col(i) = s.z;
    d.Y_plus_lift.col(i) = s.z_next;
    d.Omega(0, i) = s.u;
  }
  return d;
}

namespace detail {

// Least-squares solve X = RHS * pinv-or-ridge(S) via the SVD of S.
// ridge > 0: X = RHS V diag(s/(s^2+ridge)) U^T; ridge = 0: truncated
// pseudoinverse dropping singular values below rtol * s_max.
struct LstsqResult {
  Eigen::MatrixXd X;
  bool truncated = false;
  Eigen::Index rank = 0;
};

inline LstsqResult solve_lstsq(const Eigen::MatrixXd & RHS, const Eigen::MatrixXd & S,
                               double ridge, double rtol = 1e-10)
{
  Eigen::BDCSVD<Eigen::MatrixXd> svd(S, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto & sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;

  LstsqResult out;
  Eigen::VectorXd inv(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (ridge > 0.0) {
      inv(i) = sv(i) / (sv(i) * sv(i) + ridge);
      if (sv(i) > rtol * smax) { ++out.rank; }
    } else if (sv(i) > rtol * smax && sv(i) > 0.0) {
      inv(i) = 1.0 / sv(i);
      ++out.rank;
    } else {
      inv(i) = 0.0;
      out.truncated = true;
    }
  }
  out.X = RHS * svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  return out;
}

}  // namespace detail

/**
 * @brief Fit the predictor matrices by Frobenius-norm least squares.
 *
 * [A B] minimizes ||Y+_lift - A Y_lift - B Omega||_F over the stacked
 * regressor [Y_lift; Omega]; C independently minimizes ||Y - C Y_lift||_F.
 * With ridge > 0 both problems are Tikhonov-regularized; with ridge = 0 a
 * truncated pseudoinverse is used and truncation is flagged in the report.
 *
 * @param ridge regularization weight; std::nullopt selects the default
 *        1e-8 * trace(Gram) / rows.
 */
inline LiftedPredictor fit(const SnapshotDataset & data,
                           std::optional<double> ridge = std::nullopt)
{
  const Eigen::Index N = data.Y_lift.rows();
  const Eigen::Index m = data.Omega.rows();
  const Eigen::Index q = data.Y.rows();
  const Eigen::Index p = data.p();
  if (data.Y_plus.cols() != p || data.Y_lift.cols() != p || data.Y_plus_lift.cols() != p ||
      data.Omega.cols() != p) {
    throw InvalidInput("fit: snapshot matrices disagree on column count");
  }
  if (ridge && *ridge < 0.0) { throw InvalidInput("fit: ridge must be >= 0"); }

  Eigen::MatrixXd S(N + m, p);
  S.topRows(N) = data.Y_lift;
  S.bottomRows(m) = data.Omega;

  double rw = 0.0;
  if (ridge) {
    rw = *ridge;
  } else {
    rw = 1e-8 * S.rowwise().squaredNorm().sum() / static_cast<double>(N + m);
  }

  auto ab = detail::solve_lstsq(data.Y_plus_lift, S, rw);
  auto c = detail::solve_lstsq(data.Y, data.Y_lift, rw);

  LiftedPredictor pred;
  pred.A = ab.X.leftCols(N);
  pred.B = ab.X.rightCols(m);
  pred.C = c.X;
  pred.spec = data.spec;
  pred.dt = data.dt;
  pred.fit_report.p = p;
  pred.fit_report.ridge = rw;
  pred.fit_report.truncated = ab.truncated || c.truncated;
  pred.fit_report.rank = ab.rank;
  pred.fit_report.residual_dynamics =
    (data.Y_plus_lift - pred.A * data.Y_lift - pred.B * data.Omega).norm();
  pred.fit_report.residual_output = (data.Y - pred.C * data.Y_lift).norm();
  if (!pred.A.allFinite() || !pred.B.allFinite() || !pred.C.allFinite()) {
    throw NumericalError("fit: non-finite predictor matrices");
  }
  return pred;
}

/**
 * @brief Roll the predictor forward from z0 under an input sequence.
 *
 * @param u_seq m x T matrix of inputs
 * @return q x (T+1) matrix of predicted outputs, column 0 being C z0.
 */
inline Eigen::MatrixXd predict(const LiftedPredictor & pred, const Eigen::VectorXd & z0,
                               const Eigen::MatrixXd & u_seq)
{
  if (z0.size() != pred.lifted_dim()) { throw InvalidInput("predict: z0 dimension mismatch"); }
  if (u_seq.rows() != pred.input_dim()) { throw InvalidInput("predict: input dimension mismatch"); }
  const Eigen::Index T = u_seq.cols();
  Eigen::MatrixXd out(pred.output_dim(), T + 1);
  Eigen::VectorXd z = z0;
  out.col(0) = pred.C * z;
  for (Eigen::Index k = 0; k < T; ++k) {
    z = pred.A * z + pred.B * u_seq.col(k);
    out.col(k + 1) = pred.C * z;
  }
  return out;
}

/**
 * @brief Multi-step prediction error on a held-out trajectory.
 *
 * For every start index with a full history, the predictor is rolled out
 * `horizon` steps with the recorded inputs and compared against the recorded
 * outputs. Errors are normalized per output channel by that channel's
 * standard deviation over the trajectory and averaged over channels and
 * start indices.
 *
 * @return NRMSE for each step 1..horizon.
 * @throws NumericalError if an output channel has (near) zero variance.
 */
inline Eigen::VectorXd evaluate(const LiftedPredictor & pred, const Trajectory & heldout,
                                int horizon)
{
  const auto & spec = pred.spec;
  const int L = static_cast<int>(heldout.size());
  if (L < spec.delays + 1 + horizon) {
    throw InvalidInput("evaluate: held-out trajectory too short for warm-up plus horizon");
  }

  Eigen::MatrixXd Ymat(2, L);
  for (int k = 0; k < L; ++k) {
    Ymat(0, k) = heldout.y[k].phi;
    Ymat(1, k) = heldout.y[k].phi_dot;
  }
  Eigen::Vector2d mean = Ymat.rowwise().mean();
  Eigen::Vector2d sigma =
    ((Ymat.colwise() - mean).rowwise().squaredNorm() / static_cast<double>(L)).cwiseSqrt();
  if (sigma.minCoeff() < 1e-12) {
    throw NumericalError("evaluate: held-out output has zero variance, NRMSE undefined");
  }

  HistoryBuffer buf(spec.delays + 1);
  std::vector<Eigen::VectorXd> lifted(L);
  for (int k = 0; k < L; ++k) {
    buf.push(heldout.y[k], k == 0 ? 0.0 : heldout.u[k - 1]);
    if (buf.full()) { lifted[k] = lift(buf, spec); }
  }

  Eigen::VectorXd sq = Eigen::VectorXd::Zero(horizon);
  long count = 0;
  for (int k = spec.delays; k + horizon < L; ++k) {
    Eigen::MatrixXd u_seq(1, horizon);
    for (int j = 0; j < horizon; ++j) { u_seq(0, j) = heldout.u[k + j]; }
    Eigen::MatrixXd yhat = predict(pred, lifted[k], u_seq);
    for (int j = 1; j <= horizon; ++j) {
      const Eigen::Vector2d err = yhat.col(j) - Ymat.col(k + j);
      sq[j - 1] += 0.5 * ((err.array() / sigma.array()).square().sum());
    }
    ++count;
  }
  if (count == 0) { throw InvalidInput("evaluate: no valid start indices"); }
  return (sq / static_cast<double>(count)).cwiseSqrt();
}

}  // namespace koopctl
