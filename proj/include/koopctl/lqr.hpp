#pragma once

/**
 * @file
 * @brief Discrete-time LQR on the lifted predictor: Riccati fixed-point
 * solver, gain computation, and the saturated state-feedback control law.
 */

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "common.hpp"
#include "lifting.hpp"

namespace koopctl {

/// Largest eigenvalue magnitude of a square matrix.
inline double spectral_radius(const Eigen::MatrixXd & M)
{
  return M.eigenvalues().cwiseAbs().maxCoeff();
}

/// Residual of the discrete algebraic Riccati equation at P.
inline double dare_residual(const Eigen::MatrixXd & A, const Eigen::MatrixXd & B,
                            const Eigen::MatrixXd & Q, const Eigen::MatrixXd & R,
                            const Eigen::MatrixXd & P)
{
  const Eigen::MatrixXd BtPB = B.transpose() * P * B;
  const Eigen::MatrixXd res =
    P - A.transpose() * P * A +
    A.transpose() * P * B * (R + BtPB).ldlt().solve(B.transpose() * P * A) - Q;
  return res.norm();
}

/**
 * @brief Solve the DARE by fixed-point iteration with symmetrization.
 *
 * Iterates P <- A'PA - A'PB (R + B'PB)^-1 B'PA + Q from P = Q until the
 * update stalls below tol (relative). The stabilizing property is checked a
 * posteriori via the spectral radius of the closed loop.
 *
 * @throws NumericalError on non-convergence or an unstabilizable closed loop.
 */
inline Eigen::MatrixXd solve_dare(const Eigen::MatrixXd & A, const Eigen::MatrixXd & B,
                                  const Eigen::MatrixXd & Q, const Eigen::MatrixXd & R,
                                  double tol = 1e-12, int max_iter = 100000)
{
  const Eigen::Index N = A.rows();
  if (A.cols() != N || B.rows() != N || Q.rows() != N || Q.cols() != N || R.rows() != B.cols() ||
      R.cols() != B.cols()) {
    throw InvalidInput("solve_dare: inconsistent dimensions");
  }
  Eigen::LLT<Eigen::MatrixXd> rllt(R);
  if (rllt.info() != Eigen::Success) {
    throw InvalidInput("solve_dare: R must be positive definite");
  }

  Eigen::MatrixXd P = Q;
  double diff = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::MatrixXd BtPA = B.transpose() * P * A;
    const Eigen::MatrixXd BtPB = B.transpose() * P * B;
    Eigen::MatrixXd Pn =
      A.transpose() * P * A - A.transpose() * P * B * (R + BtPB).ldlt().solve(BtPA) + Q;
    Pn = 0.5 * (Pn + Pn.transpose());
    diff = (Pn - P).cwiseAbs().maxCoeff();
    P = Pn;
    if (diff <= tol * (1.0 + P.cwiseAbs().maxCoeff())) {
      const Eigen::MatrixXd K =
        (R + B.transpose() * P * B).ldlt().solve(B.transpose() * P * A);
      if (spectral_radius(A - B * K) >= 1.0) {
        throw NumericalError("solve_dare: closed loop not stable, (A,B) may be unstabilizable");
      }
      return P;
    }
  }
  throw NumericalError("solve_dare: no convergence in " + std::to_string(max_iter) +
                       " iterations, last update " + std::to_string(diff));
}

/// K = (R + B'PB)^-1 B'PA for a Riccati solution P.
inline Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd & A, const Eigen::MatrixXd & B,
                                const Eigen::MatrixXd & P, const Eigen::MatrixXd & R)
{
  return (R + B.transpose() * P * B).ldlt().solve(B.transpose() * P * A);
}

/// Bundle of the LQR design artifacts.
struct LqrDesign {
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::MatrixXd K;
  Eigen::MatrixXd P;
};

/**
 * @brief State penalty over the lifted vector that weights only the current
 * measurement: Q is zero except for the newest block's phi and phi_dot
 * entries. Delayed blocks and input observables carry no penalty.
 */
inline Eigen::MatrixXd lifted_state_penalty(const LiftingSpec & spec, double q_phi,
                                            double q_phi_dot)
{
  const int N = spec.lifted_dim();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(N, N);
  Q(N - 3, N - 3) = q_phi;
  Q(N - 2, N - 2) = q_phi_dot;
  return Q;
}

inline LqrDesign design_lqr(const Eigen::MatrixXd & A, const Eigen::MatrixXd & B,
                            const Eigen::MatrixXd & Q, const Eigen::MatrixXd & R,
                            double tol = 1e-12, int max_iter = 100000)
{
  LqrDesign d;
  d.Q = Q;
  d.R = R;
  d.P = solve_dare(A, B, Q, R, tol, max_iter);
  d.K = lqr_gain(A, B, d.P, R);
  return d;
}

/**
 * @brief Saturated LQR control law u = clamp(-K lift(buffer)).
 *
 * Returns zero while the history buffer is still warming up.
 */
inline double lqr_control(const Eigen::MatrixXd & K, const HistoryBuffer & buffer,
                          const LiftingSpec & spec, double limit)
{
  if (!buffer.full()) { return 0.0; }
  const double u = -(K * lift(buffer, spec))(0);
  return clamp(u, -limit, limit);
}

}  // namespace koopctl
