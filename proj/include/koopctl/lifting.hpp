#pragma once

/**
 * @file
 * @brief Delay-embedding observables: rolling history buffer and the lifting
 * map from measurement/input history to the lifted state vector.
 */

#include <Eigen/Core>

#include <vector>

#include "common.hpp"
#include "plant.hpp"

namespace koopctl {

/**
 * @brief Specification of the delay-embedding lifting.
 *
 * The base observable block is (phi, phi_dot, u_prev), where u_prev is the
 * input applied over the previous sample interval. The lifted state stacks
 * delays+1 such blocks ordered oldest first, newest last, so its dimension is
 * base_dim * (delays + 1).
 */
struct LiftingSpec {
  int delays = 2;
  int base_dim = 3;

  int lifted_dim() const { return base_dim * (delays + 1); }
};

/**
 * @brief Fixed-capacity FIFO of the last delays+1 (phi, phi_dot, u_prev)
 * records, ordered oldest to newest.
 */
class HistoryBuffer
{
public:
  struct Record {
    double phi;
    double phi_dot;
    double u_prev;
  };

  explicit HistoryBuffer(int capacity) : capacity_(capacity)
  {
    if (capacity < 1) { throw InvalidInput("HistoryBuffer: capacity must be >= 1"); }
    entries_.reserve(capacity);
  }

  /// Append a record, evicting the oldest when full.
  void push(const Measurement & m, double u_prev)
  {
    if (static_cast<int>(entries_.size()) == capacity_) {
      entries_.erase(entries_.begin());
    }
    entries_.push_back({m.phi, m.phi_dot, u_prev});
  }

  int capacity() const { return capacity_; }
  int filled() const { return static_cast<int>(entries_.size()); }
  bool full() const { return filled() == capacity_; }
  void clear() { entries_.clear(); }

  /// i = 0 is the oldest stored record.
  const Record & record(int i) const { return entries_.at(i); }

private:
  int capacity_;
  std::vector<Record> entries_;
};

/**
 * @brief Build the lifted vector from a full history buffer.
 *
 * Layout: [block(oldest), ..., block(newest)] with block = (phi, phi_dot,
 * u_prev). The newest block's first two components therefore equal the
 * current measurement.
 *
 * @throws NotReady if the buffer holds fewer than delays+1 records.
 */
inline Eigen::VectorXd lift(const HistoryBuffer & buffer, const LiftingSpec & spec)
{
  if (buffer.capacity() != spec.delays + 1) {
    throw InvalidInput("lift: buffer capacity does not match spec.delays + 1");
  }
  if (!buffer.full()) { throw NotReady("lift: history buffer not yet full"); }
  Eigen::VectorXd z(spec.lifted_dim());
  for (int i = 0; i <= spec.delays; ++i) {
    const auto & r = buffer.record(i);
    z[3 * i + 0] = r.phi;
    z[3 * i + 1] = r.phi_dot;
    z[3 * i + 2] = r.u_prev;
  }
  return z;
}

/// A recorded open- or closed-loop trajectory: y[k] is the measurement at
/// sample k and u[k] the input applied over [k, k+1).
struct Trajectory {
  std::vector<Measurement> y;
  std::vector<double> u;
  double dt = 0.0;

  std::size_t size() const { return y.size(); }
};

/// One snapshot pair: consecutive lifted states and the input between them.
struct SnapshotPair {
  Eigen::VectorXd z;
  Eigen::VectorXd z_next;
  double u;
  Measurement y;       ///< raw output at the pair's first sample
  Measurement y_next;  ///< raw output at the pair's second sample
};

/**
 * @brief Emit all snapshot pairs of one trajectory.
 *
 * The input preceding the first sample is taken as zero, so pairs start at
 * index delays and a trajectory of length L yields L - delays - 1 pairs.
 * Pairs never straddle trajectory boundaries; a too-short trajectory yields
 * an empty result.
 */
inline std::vector<SnapshotPair> lift_dataset(const Trajectory & traj, const LiftingSpec & spec)
{
  std::vector<SnapshotPair> out;
  const int L = static_cast<int>(traj.size());
  if (traj.u.size() != traj.y.size()) {
    throw InvalidInput("lift_dataset: measurement and input sequences differ in length");
  }
  if (L < spec.delays + 2) { return out; }

  HistoryBuffer buf(spec.delays + 1);
  std::vector<Eigen::VectorXd> lifted(L);
  for (int k = 0; k < L; ++k) {
    buf.push(traj.y[k], k == 0 ? 0.0 : traj.u[k - 1]);
    if (buf.full()) { lifted[k] = lift(buf, spec); }
  }
  out.reserve(L - spec.delays - 1);
  for (int k = spec.delays; k + 1 < L; ++k) {
    out.push_back({lifted[k], lifted[k + 1], traj.u[k], traj.y[k], traj.y[k + 1]});
  }
  return out;
}

}  // namespace koopctl
