#pragma once

/**
 * @file
 * @brief Scalar performance metrics computed from closed-loop time series.
 */

#include <limits>
#include <vector>

#include "common.hpp"
#include "kmpc.hpp"

namespace koopctl {

struct Metrics {
  double settling_time = 0.0;        ///< seconds, +inf if never settling
  double peak_abs_phi = 0.0;         ///< rad
  double rms_tracking_error = 0.0;   ///< rad
  double control_effort = 0.0;       ///< integral of u^2 dt
};

/**
 * @brief 2%-band settling time.
 *
 * The band is two percent of the largest |phi| over the whole series; the
 * settling time is the first instant at or after t_free from which |phi|
 * stays inside the band. Returns +inf if the series never settles.
 */
inline double settling_time(const std::vector<double> & phi, double dt, double t_free = 0.0)
{
  if (phi.empty()) { throw InvalidInput("settling_time: empty series"); }
  double peak = 0.0;
  for (double v : phi) { peak = std::max(peak, std::abs(v)); }
  const double band = 0.02 * peak;
  const int k_free = static_cast<int>(t_free / dt);

  int last_outside = -1;
  for (int k = static_cast<int>(phi.size()) - 1; k >= 0; --k) {
    if (std::abs(phi[k]) > band) {
      last_outside = k;
      break;
    }
  }
  const int k_settle = std::max(last_outside + 1, k_free);
  if (k_settle >= static_cast<int>(phi.size())) {
    return std::numeric_limits<double>::infinity();
  }
  return k_settle * dt;
}

/**
 * @brief RMS of phi - r over the evaluation window.
 *
 * Samples before t_start and samples within skip_after_change seconds of a
 * reference discontinuity are excluded, so step transients do not dominate.
 */
inline double rms_tracking_error(const std::vector<ClosedLoopSample> & series, double dt,
                                 double t_start = 0.0, double skip_after_change = 0.0)
{
  double sum = 0.0;
  long count = 0;
  double last_change = -std::numeric_limits<double>::infinity();
  double prev_r = series.empty() ? 0.0 : series.front().r_phi;
  for (const auto & s : series) {
    if (std::abs(s.r_phi - prev_r) > 1e-12) { last_change = s.t; }
    prev_r = s.r_phi;
    if (s.t < t_start) { continue; }
    if (s.t - last_change < skip_after_change) { continue; }
    const double e = s.phi - s.r_phi;
    sum += e * e;
    ++count;
  }
  (void)dt;
  if (count == 0) { return 0.0; }
  return std::sqrt(sum / static_cast<double>(count));
}

inline Metrics compute_metrics(const std::vector<ClosedLoopSample> & series, double dt,
                               double t_free = 0.0, double t_start = 0.0,
                               double skip_after_change = 0.0)
{
  if (series.empty()) { throw InvalidInput("compute_metrics: empty series"); }
  Metrics m;
  std::vector<double> phi(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    phi[i] = series[i].phi;
    m.peak_abs_phi = std::max(m.peak_abs_phi, std::abs(series[i].phi));
    m.control_effort += series[i].u * series[i].u * dt;
  }
  m.settling_time = settling_time(phi, dt, t_free);
  m.rms_tracking_error = rms_tracking_error(series, dt, t_start, skip_after_change);
  return m;
}

}  // namespace koopctl
