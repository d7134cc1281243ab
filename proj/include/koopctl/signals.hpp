#pragma once

/**
 * @file
 * @brief Excitation signals for data collection, reference trajectories for
 * tracking, and pulse disturbance profiles.
 */

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "common.hpp"
#include "kmpc.hpp"

namespace koopctl {

/// A named open-loop excitation signal.
struct Excitation {
  std::string name;
  std::vector<double> u;
};

/**
 * @brief The six-signal excitation suite used for identification data:
 * a linear chirp, two fixed-frequency sines, random piecewise-constant
 * steps, low-pass filtered noise, and an alternating pulse train. All
 * signals are clamped to the torque limit.
 */
inline std::vector<Excitation> excitation_suite(double dt, double duration, double amplitude,
                                                double torque_limit, std::uint64_t seed)
{
  const int n = static_cast<int>(duration / dt);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  auto clip = [&](double v) { return clamp(v, -torque_limit, torque_limit); };

  std::vector<Excitation> out;

  {
    Excitation e{"chirp", std::vector<double>(n)};
    const double f0 = 0.2, f1 = 3.0;
    for (int k = 0; k < n; ++k) {
      const double t = k * dt;
      const double phase = 2.0 * pi * (f0 * t + 0.5 * (f1 - f0) * t * t / duration);
      e.u[k] = clip(amplitude * std::sin(phase));
    }
    out.push_back(std::move(e));
  }
  for (double freq : {0.8, 1.6}) {
    Excitation e{freq < 1.0 ? "sine_low" : "sine_high", std::vector<double>(n)};
    for (int k = 0; k < n; ++k) {
      e.u[k] = clip(amplitude * std::sin(2.0 * pi * freq * k * dt));
    }
    out.push_back(std::move(e));
  }
  {
    Excitation e{"steps", std::vector<double>(n)};
    const int dwell = std::max(1, static_cast<int>(0.5 / dt));
    double level = 0.0;
    for (int k = 0; k < n; ++k) {
      if (k % dwell == 0) { level = 1.2 * amplitude * uni(rng); }
      e.u[k] = clip(level);
    }
    out.push_back(std::move(e));
  }
  {
    Excitation e{"filtered_noise", std::vector<double>(n)};
    double y = 0.0;
    for (int k = 0; k < n; ++k) {
      y = 0.9 * y + 0.1 * 4.0 * amplitude * uni(rng);
      e.u[k] = clip(y);
    }
    out.push_back(std::move(e));
  }
  {
    Excitation e{"pulse_train", std::vector<double>(n)};
    const int period = std::max(1, static_cast<int>(4.0 / dt));
    const int width = std::max(1, static_cast<int>(0.4 / dt));
    for (int k = 0; k < n; ++k) {
      const int cycle = k / period;
      const bool on = (k % period) < width;
      e.u[k] = on ? clip((cycle % 2 == 0 ? 1.2 : -1.2) * amplitude) : 0.0;
    }
    out.push_back(std::move(e));
  }
  return out;
}

/// Constant reference at a fixed tilt, zero tilt rate.
inline TrackingReference constant_reference(double phi_ref, int n_samples)
{
  TrackingReference ref;
  ref.r.setZero(2, n_samples);
  ref.r.row(0).setConstant(phi_ref);
  return ref;
}

/// Piecewise-constant tilt levels with a fixed dwell; tilt-rate reference
/// stays zero.
inline TrackingReference step_reference(const std::vector<double> & levels, double dwell,
                                        double dt, int n_samples)
{
  if (levels.empty()) { throw InvalidInput("step_reference: no levels"); }
  TrackingReference ref;
  ref.r.setZero(2, n_samples);
  const int per = std::max(1, static_cast<int>(dwell / dt));
  for (int k = 0; k < n_samples; ++k) {
    const std::size_t idx = std::min(static_cast<std::size_t>(k / per), levels.size() - 1);
    ref.r(0, k) = levels[idx];
  }
  return ref;
}

/// Trapezoidal tilt profile: hold zero, ramp up at the given slope, hold,
/// ramp back to zero, hold. Tilt-rate reference stays zero.
inline TrackingReference ramp_reference(double amp, double slope, double hold, double dt,
                                        int n_samples)
{
  if (slope <= 0.0) { throw InvalidInput("ramp_reference: slope must be > 0"); }
  TrackingReference ref;
  ref.r.setZero(2, n_samples);
  const double t_rise = amp / slope;
  const double t0 = hold, t1 = t0 + t_rise, t2 = t1 + hold, t3 = t2 + t_rise;
  for (int k = 0; k < n_samples; ++k) {
    const double t = k * dt;
    double v = 0.0;
    if (t >= t0 && t < t1) { v = slope * (t - t0); }
    else if (t >= t1 && t < t2) { v = amp; }
    else if (t >= t2 && t < t3) { v = amp - slope * (t - t2); }
    ref.r(0, k) = v;
  }
  return ref;
}

/// Rectangular disturbance pulses at the given start times.
inline std::vector<double> pulse_signal(const std::vector<double> & start_times, double width,
                                        double amplitude, double dt, int n_samples)
{
  std::vector<double> d(n_samples, 0.0);
  for (double t0 : start_times) {
    const int k0 = static_cast<int>(t0 / dt);
    const int k1 = static_cast<int>((t0 + width) / dt);
    for (int k = std::max(0, k0); k < std::min(n_samples, k1); ++k) { d[k] = amplitude; }
  }
  return d;
}

}  // namespace koopctl
