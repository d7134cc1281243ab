#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace koopctl {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent inputs (bad dimensions, non-finite values, ...).
struct InvalidInput : Error {
  using Error::Error;
};

/// A computation produced non-finite values or failed to converge.
struct NumericalError : Error {
  explicit NumericalError(const std::string & what, double t = std::nan(""))
      : Error(what), time(t)
  {}
  /// Simulation time at which the failure occurred, NaN if not applicable.
  double time;
};

/// An operation was called before its preconditions were established
/// (e.g. lifting from a history buffer that is not yet full).
struct NotReady : Error {
  using Error::Error;
};

/// Problems with configuration files or command-line parameters.
struct ConfigError : Error {
  using Error::Error;
};

inline double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

inline bool all_finite(const Eigen::Ref<const Eigen::MatrixXd> & m)
{
  return m.allFinite();
}

inline constexpr double pi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * pi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / pi; }

}  // namespace koopctl
