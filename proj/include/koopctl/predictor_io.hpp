#pragma once

/**
 * @file
 * @brief Text file format for fitted predictors and controller gains.
 *
 * Layout:
 * @code
 * KOOPMAN-PREDICTOR v1
 * N q m delays dt
 * A
 * <N rows of N values>
 * B
 * <N rows of m values>
 * C
 * <q rows of N values>
 * K            (optional)
 * <m rows of N values>
 * P            (optional)
 * <N rows of N values>
 * @endcode
 *
 * Values are whitespace-separated decimals with 17 significant digits, which
 * round-trips IEEE doubles exactly.
 */

#include <Eigen/Core>

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "common.hpp"
#include "edmd.hpp"

namespace koopctl {

/// Predictor plus optional LQR design blocks, as stored on disk.
struct PredictorFile {
  LiftedPredictor predictor;
  std::optional<Eigen::MatrixXd> K;
  std::optional<Eigen::MatrixXd> P;
};

namespace detail {

inline std::string fmt17(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_block(std::ostream & os, const char * name, const Eigen::MatrixXd & M)
{
  os << name << "\n";
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j > 0) { os << ' '; }
      os << fmt17(M(i, j));
    }
    os << "\n";
  }
}

inline Eigen::MatrixXd read_block(std::istream & is, const char * name, Eigen::Index rows,
                                  Eigen::Index cols)
{
  std::string header;
  if (!(is >> header) || header != name) {
    throw InvalidInput(std::string("predictor file: expected block '") + name + "'");
  }
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!(is >> M(i, j))) {
        throw InvalidInput(std::string("predictor file: truncated block '") + name + "'");
      }
    }
  }
  return M;
}

}  // namespace detail

inline void write_predictor(const std::string & path, const PredictorFile & file)
{
  const auto & p = file.predictor;
  std::ofstream os(path);
  if (!os) { throw InvalidInput("write_predictor: cannot open " + path); }
  os << "KOOPMAN-PREDICTOR v1\n";
  os << p.lifted_dim() << ' ' << p.output_dim() << ' ' << p.input_dim() << ' ' << p.spec.delays
     << ' ' << detail::fmt17(p.dt) << "\n";
  detail::write_block(os, "A", p.A);
  detail::write_block(os, "B", p.B);
  detail::write_block(os, "C", p.C);
  if (file.K) { detail::write_block(os, "K", *file.K); }
  if (file.P) { detail::write_block(os, "P", *file.P); }
  if (!os) { throw InvalidInput("write_predictor: write failed for " + path); }
}

inline PredictorFile read_predictor(const std::string & path)
{
  std::ifstream is(path);
  if (!is) { throw InvalidInput("read_predictor: cannot open " + path); }
  std::string line;
  std::getline(is, line);
  if (line != "KOOPMAN-PREDICTOR v1") {
    throw InvalidInput("read_predictor: bad magic line in " + path);
  }
  Eigen::Index N = 0, q = 0, m = 0;
  int delays = 0;
  double dt = 0.0;
  if (!(is >> N >> q >> m >> delays >> dt) || N <= 0 || q <= 0 || m <= 0 || delays < 0) {
    throw InvalidInput("read_predictor: bad dimension line in " + path);
  }

  PredictorFile out;
  out.predictor.A = detail::read_block(is, "A", N, N);
  out.predictor.B = detail::read_block(is, "B", N, m);
  out.predictor.C = detail::read_block(is, "C", q, N);
  out.predictor.spec.delays = delays;
  out.predictor.spec.base_dim = static_cast<int>(N) / (delays + 1);
  out.predictor.dt = dt;
  out.predictor.fit_report.p = 0;

  std::string header;
  while (is >> header) {
    if (header == "K") {
      Eigen::MatrixXd K(m, N);
      for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < N; ++j) {
          if (!(is >> K(i, j))) { throw InvalidInput("read_predictor: truncated block 'K'"); }
        }
      }
      out.K = K;
    } else if (header == "P") {
      Eigen::MatrixXd P(N, N);
      for (Eigen::Index i = 0; i < N; ++i) {
        for (Eigen::Index j = 0; j < N; ++j) {
          if (!(is >> P(i, j))) { throw InvalidInput("read_predictor: truncated block 'P'"); }
        }
      }
      out.P = P;
    } else {
      throw InvalidInput("read_predictor: unknown block '" + header + "'");
    }
  }
  return out;
}

}  // namespace koopctl
