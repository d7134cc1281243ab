#pragma once

/**
 * @file
 * @brief CSV and flat key-value persistence. All floating-point output uses
 * 17 significant digits so files round-trip doubles exactly and identical
 * runs produce byte-identical files.
 */

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "kmpc.hpp"
#include "lifting.hpp"
#include "plant.hpp"

namespace koopctl {

namespace detail {

inline std::string csv17(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Open-loop trajectory file with columns t,phi,phi_dot,u,d.
inline void write_trajectory_csv(const std::string & path, const std::vector<SimPoint> & points,
                                 const std::vector<double> & u, const std::vector<double> & d)
{
  if (points.size() != u.size() || points.size() != d.size()) {
    throw InvalidInput("write_trajectory_csv: length mismatch");
  }
  std::ofstream os(path);
  if (!os) { throw InvalidInput("write_trajectory_csv: cannot open " + path); }
  os << "t,phi,phi_dot,u,d\n";
  for (std::size_t k = 0; k < points.size(); ++k) {
    os << detail::csv17(points[k].state.t) << ',' << detail::csv17(points[k].output.phi) << ','
       << detail::csv17(points[k].output.phi_dot) << ',' << detail::csv17(u[k]) << ','
       << detail::csv17(d[k]) << "\n";
  }
}

/// Read a trajectory file back; dt is inferred from the time column.
inline Trajectory read_trajectory_csv(const std::string & path)
{
  std::ifstream is(path);
  if (!is) { throw InvalidInput("read_trajectory_csv: cannot open " + path); }
  std::string line;
  if (!std::getline(is, line) || line != "t,phi,phi_dot,u,d") {
    throw InvalidInput("read_trajectory_csv: bad header in " + path);
  }
  Trajectory traj;
  std::vector<double> times;
  while (std::getline(is, line)) {
    if (line.empty()) { continue; }
    std::istringstream ss(line);
    double vals[5];
    char comma;
    for (int i = 0; i < 5; ++i) {
      if (!(ss >> vals[i])) { throw InvalidInput("read_trajectory_csv: bad row in " + path); }
      if (i < 4 && !(ss >> comma)) { throw InvalidInput("read_trajectory_csv: bad row in " + path); }
    }
    times.push_back(vals[0]);
    traj.y.push_back({vals[1], vals[2]});
    traj.u.push_back(vals[3]);
  }
  if (times.size() >= 2) { traj.dt = times[1] - times[0]; }
  return traj;
}

/// Closed-loop result file with columns t,phi,phi_dot,r_phi,u,du,solver_iters,status.
inline void write_result_csv(const std::string & path,
                             const std::vector<ClosedLoopSample> & series)
{
  std::ofstream os(path);
  if (!os) { throw InvalidInput("write_result_csv: cannot open " + path); }
  os << "t,phi,phi_dot,r_phi,u,du,solver_iters,status\n";
  for (const auto & s : series) {
    os << detail::csv17(s.t) << ',' << detail::csv17(s.phi) << ',' << detail::csv17(s.phi_dot)
       << ',' << detail::csv17(s.r_phi) << ',' << detail::csv17(s.u) << ','
       << detail::csv17(s.du) << ',' << s.solver_iters << ',' << to_string(s.status) << "\n";
  }
}

/// Flat `key = value` metrics/summary file.
inline void write_key_values(const std::string & path,
                             const std::vector<std::pair<std::string, double>> & kv)
{
  std::ofstream os(path);
  if (!os) { throw InvalidInput("write_key_values: cannot open " + path); }
  for (const auto & [k, v] : kv) { os << k << " = " << detail::csv17(v) << "\n"; }
}

}  // namespace koopctl
