#pragma once

/**
 * @file
 * @brief Simulated flexible tower: a planar chain of rigid links coupled by
 * torsional springs and dampers, driven by a torque at the base joint and an
 * optional disturbance torque at the top link.
 */

#include <Eigen/Core>

#include <utility>
#include <vector>

#include "common.hpp"

namespace koopctl {

/// Physical and sampling parameters of the link-chain tower.
struct PlantParams {
  int n_links = 8;            ///< number of links (>= 2)
  double link_mass = 0.1;     ///< mass per link [kg], lumped at the link end
  double link_length = 0.07;  ///< length per link [m]
  double stiffness = 3.0;     ///< torsional spring constant per joint [N m/rad]
  double damping = 0.02;      ///< torsional damping per joint [N m s/rad]
  double gravity = 9.81;      ///< gravitational acceleration [m/s^2]
  int sensor_link = 4;        ///< 1-based index of the measured link
  double torque_limit = 0.5;  ///< input saturation magnitude [N m]
  double dt = 0.02;           ///< sample period [s]

  /// Throws InvalidInput if any field is out of range.
  void validate() const
  {
    if (n_links < 2) { throw InvalidInput("PlantParams: n_links must be >= 2"); }
    if (sensor_link < 1 || sensor_link > n_links) {
      throw InvalidInput("PlantParams: sensor_link out of range");
    }
    if (!(link_mass > 0 && link_length > 0 && stiffness > 0 && damping > 0 && dt > 0)) {
      throw InvalidInput("PlantParams: mass, length, stiffness, damping, dt must be > 0");
    }
    if (!(torque_limit > 0)) { throw InvalidInput("PlantParams: torque_limit must be > 0"); }
    if (!std::isfinite(gravity)) { throw InvalidInput("PlantParams: gravity must be finite"); }
  }
};

/// Full state of the tower: absolute link angles and angular velocities.
struct TowerState {
  Eigen::VectorXd theta;  ///< absolute link angles [rad]
  Eigen::VectorXd omega;  ///< angular velocities [rad/s]
  double t = 0.0;         ///< time [s]

  static TowerState rest(int n_links)
  {
    return {Eigen::VectorXd::Zero(n_links), Eigen::VectorXd::Zero(n_links), 0.0};
  }
};

/// Sensor reading: tilt and tilt rate of the sensor link.
struct Measurement {
  double phi = 0.0;
  double phi_dot = 0.0;
};

/// Time derivative of a TowerState.
struct StateDerivative {
  Eigen::VectorXd dtheta;
  Eigen::VectorXd domega;
};

namespace detail {

// Joint torques: joint j couples link j-1 (ground for j=0) to link j with a
// linear torsional spring and damper acting on the relative motion. Gravity
// enters as an inverted-pendulum moment on each link's lumped end mass.
inline void accelerations(const Eigen::VectorXd & theta, const Eigen::VectorXd & omega, double u,
                          double d, const PlantParams & p, Eigen::VectorXd & alpha)
{
  const int n = p.n_links;
  const double inertia = p.link_mass * p.link_length * p.link_length;
  const double grav_arm = p.link_mass * p.gravity * p.link_length;

  alpha.resize(n);
  for (int i = 0; i < n; ++i) {
    const double th_below = (i == 0) ? 0.0 : theta[i - 1];
    const double om_below = (i == 0) ? 0.0 : omega[i - 1];
    // spring/damper torque exerted on link i by joint i
    double tau = -p.stiffness * (theta[i] - th_below) - p.damping * (omega[i] - om_below);
    // reaction from the joint above (absent at the free top link)
    if (i + 1 < n) {
      tau += p.stiffness * (theta[i + 1] - theta[i]) + p.damping * (omega[i + 1] - omega[i]);
    }
    tau += grav_arm * std::sin(theta[i]);
    if (i == 0) { tau += u; }
    if (i == n - 1) { tau += d; }
    alpha[i] = tau / inertia;
  }
}

}  // namespace detail

/**
 * @brief Continuous-time equations of motion.
 *
 * Input saturation is not applied here; callers clamp the torque themselves.
 *
 * @throws InvalidInput on non-finite state or inputs.
 */
inline StateDerivative dynamics(const TowerState & state, double u, double d,
                                const PlantParams & params)
{
  params.validate();
  if (state.theta.size() != params.n_links || state.omega.size() != params.n_links) {
    throw InvalidInput("dynamics: state dimension does not match n_links");
  }
  if (!state.theta.allFinite() || !state.omega.allFinite() || !std::isfinite(u) ||
      !std::isfinite(d)) {
    throw InvalidInput("dynamics: non-finite state or input");
  }
  StateDerivative out;
  out.dtheta = state.omega;
  detail::accelerations(state.theta, state.omega, u, d, params, out.domega);
  return out;
}

/// Total mechanical energy, zero at the upright rest state.
inline double mechanical_energy(const TowerState & state, const PlantParams & p)
{
  const int n = p.n_links;
  const double inertia = p.link_mass * p.link_length * p.link_length;
  const double grav_arm = p.link_mass * p.gravity * p.link_length;
  double e = 0.0;
  for (int i = 0; i < n; ++i) {
    e += 0.5 * inertia * state.omega[i] * state.omega[i];
    const double rel = state.theta[i] - (i == 0 ? 0.0 : state.theta[i - 1]);
    e += 0.5 * p.stiffness * rel * rel;
    e += grav_arm * (std::cos(state.theta[i]) - 1.0);
  }
  return e;
}

/**
 * @brief Advance the state by one sample period.
 *
 * Classical RK4 with four internal substeps of dt/4; the applied torques are
 * held constant over the period.
 *
 * @throws NumericalError if the integration produces non-finite values.
 */
inline TowerState step(const TowerState & state, double u, double d, const PlantParams & params)
{
  TowerState s = state;
  const double h = params.dt / 4.0;
  Eigen::VectorXd k1a, k2a, k3a, k4a;
  for (int sub = 0; sub < 4; ++sub) {
    detail::accelerations(s.theta, s.omega, u, d, params, k1a);
    const Eigen::VectorXd k1t = s.omega;
    detail::accelerations(s.theta + 0.5 * h * k1t, s.omega + 0.5 * h * k1a, u, d, params, k2a);
    const Eigen::VectorXd k2t = s.omega + 0.5 * h * k1a;
    detail::accelerations(s.theta + 0.5 * h * k2t, s.omega + 0.5 * h * k2a, u, d, params, k3a);
    const Eigen::VectorXd k3t = s.omega + 0.5 * h * k2a;
    detail::accelerations(s.theta + h * k3t, s.omega + h * k3a, u, d, params, k4a);
    const Eigen::VectorXd k4t = s.omega + h * k3a;
    s.theta += (h / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t);
    s.omega += (h / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
  }
  s.t = state.t + params.dt;
  if (!s.theta.allFinite() || !s.omega.allFinite()) {
    throw NumericalError("step: integration produced non-finite state", state.t);
  }
  return s;
}

/// Read the sensor link's tilt and tilt rate.
inline Measurement measure(const TowerState & state, const PlantParams & params)
{
  const int idx = params.sensor_link - 1;
  return {state.theta[idx], state.omega[idx]};
}

/// One sample of a simulated rollout.
struct SimPoint {
  TowerState state;
  Measurement output;
};

/**
 * @brief Roll out the plant under sampled input and disturbance sequences.
 *
 * Output has the same length as the input signals; element k holds the state
 * and measurement *before* u[k] is applied, so element 0 is the initial
 * condition and the final input only labels the last sample.
 */
inline std::vector<SimPoint> simulate(const TowerState & initial,
                                      const std::vector<double> & u_signal,
                                      const std::vector<double> & d_signal,
                                      const PlantParams & params)
{
  if (u_signal.size() != d_signal.size()) {
    throw InvalidInput("simulate: input and disturbance signals differ in length");
  }
  std::vector<SimPoint> out;
  out.reserve(u_signal.size());
  TowerState s = initial;
  for (std::size_t k = 0; k < u_signal.size(); ++k) {
    out.push_back({s, measure(s, params)});
    if (k + 1 < u_signal.size()) {
      try {
        s = step(s, u_signal[k], d_signal[k], params);
      } catch (const NumericalError & e) {
        throw NumericalError("simulate: blowup at sample " + std::to_string(k) + ": " + e.what(),
                             e.time);
      }
    }
  }
  return out;
}

}  // namespace koopctl
