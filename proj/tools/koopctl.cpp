// Command-line front end for the data-driven tower control pipeline:
// collect training data, identify the lifted predictor, design the LQR and
// run the simulated experiment scenarios.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "koopctl/config.hpp"
#include "koopctl/harness.hpp"
#include "koopctl/qp.hpp"

namespace {

koopctl::RunConfig load_config(const std::string & config_path, std::uint64_t seed,
                               const std::string & scenario, const std::string & controller)
{
  koopctl::ConfigMap cfg;
  if (!config_path.empty()) { cfg = koopctl::ConfigMap::parse_file(config_path); }
  if (!scenario.empty()) { cfg.set("scenario", "name", scenario); }
  if (!controller.empty()) { cfg.set("scenario", "controller", controller); }
  koopctl::RunConfig rc = koopctl::load_run_config(cfg);
  rc.seed = seed;
  return rc;
}

double parse_qp_token(std::istream & is)
{
  std::string tok;
  if (!(is >> tok)) { throw koopctl::InvalidInput("solve-qp: truncated problem file"); }
  char * end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') {
    throw koopctl::InvalidInput("solve-qp: bad number '" + tok + "'");
  }
  return v;
}

// Problem file: first line `n c`, then blocks H (n x n), f (n), G (c x n),
// b_min (c), b_max (c); `inf` / `-inf` are valid bound entries.
koopctl::QpProblem read_qp_file(const std::string & path)
{
  std::ifstream is(path);
  if (!is) { throw koopctl::InvalidInput("solve-qp: cannot open " + path); }
  Eigen::Index n = 0, c = 0;
  if (!(is >> n >> c) || n <= 0 || c < 0) {
    throw koopctl::InvalidInput("solve-qp: bad dimension line");
  }
  auto read_block = [&](const char * name, Eigen::Index rows, Eigen::Index cols) {
    std::string header;
    if (!(is >> header) || header != name) {
      throw koopctl::InvalidInput(std::string("solve-qp: expected block '") + name + "'");
    }
    Eigen::MatrixXd M(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) { M(i, j) = parse_qp_token(is); }
    }
    return M;
  };
  koopctl::QpProblem p;
  p.H = read_block("H", n, n);
  p.f = read_block("f", n, 1);
  p.G = read_block("G", c, n);
  p.b_min = read_block("b_min", c, 1);
  p.b_max = read_block("b_max", c, 1);
  return p;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"data-driven Koopman control pipeline for a simulated flexible tower"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  app.add_option("--config", config_path, "configuration file")->envname("KOOPCTL_CONFIG");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "random seed");

  auto * collect = app.add_subcommand("collect", "generate open-loop training trajectories");
  auto * identify = app.add_subcommand("identify", "fit the lifted predictor from collected data");
  auto * design = app.add_subcommand("design-lqr", "solve the Riccati design for the predictor");
  auto * run = app.add_subcommand("run", "run a simulated experiment scenario");
  std::string scenario_flag, controller_flag;
  run->add_option("--scenario", scenario_flag,
                  "initial_tilt | excite_then_damp | pulse_disturbance | step_tracking | "
                  "ramp_tracking");
  run->add_option("--controller", controller_flag, "none | lqr | kmpc");
  auto * evalp = app.add_subcommand("eval-predictor", "multi-step NRMSE on a held-out trajectory");
  std::string traj_path;
  int horizon = 25;
  evalp->add_option("--trajectory", traj_path, "held-out trajectory CSV");
  evalp->add_option("--horizon", horizon, "prediction horizon to evaluate");
  auto * solveqp = app.add_subcommand("solve-qp", "solve a QP given in the debug text format");
  std::string qp_path;
  solveqp->add_option("problem", qp_path, "problem file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (collect->parsed()) {
      const auto rc = load_config(config_path, seed, "", "");
      koopctl::collect_training_data(rc, out_dir);
    } else if (identify->parsed()) {
      const auto rc = load_config(config_path, seed, "", "");
      const auto trajs = koopctl::read_training_data(out_dir);
      koopctl::identify_predictor(rc, trajs, out_dir);
    } else if (design->parsed()) {
      const auto rc = load_config(config_path, seed, "", "");
      const auto pf = koopctl::read_predictor(out_dir + "/predictor.txt");
      koopctl::design_lqr_for(rc, pf.predictor, out_dir);
    } else if (run->parsed()) {
      const auto rc = load_config(config_path, seed, scenario_flag, controller_flag);
      const auto res = koopctl::run_scenario(rc, out_dir);
      std::cout << "scenario complete: settling=" << res.metrics.settling_time
                << "s peak=" << koopctl::rad2deg(res.metrics.peak_abs_phi)
                << "deg rms_err=" << res.metrics.rms_tracking_error
                << "rad effort=" << res.metrics.control_effort << "\n";
    } else if (evalp->parsed()) {
      const auto rc = load_config(config_path, seed, "", "");
      const auto pf = koopctl::read_predictor(out_dir + "/predictor.txt");
      const std::string path =
        traj_path.empty() ? out_dir + "/" + koopctl::training_file_names().back() : traj_path;
      const auto traj = koopctl::read_trajectory_csv(path);
      const Eigen::VectorXd nrmse = koopctl::evaluate(pf.predictor, traj, horizon);
      for (int k = 0; k < nrmse.size(); ++k) {
        std::printf("step %d NRMSE %.6g\n", k + 1, nrmse[k]);
      }
    } else if (solveqp->parsed()) {
      const auto p = read_qp_file(qp_path);
      const auto sol = koopctl::solve(p);
      std::cout << "status: " << koopctl::to_string(sol.status)
                << "  iterations: " << sol.iterations << "\n";
      std::cout << "objective: " << sol.objective << "\n";
      std::cout << "primal_residual: " << sol.primal_residual
                << "  dual_residual: " << sol.dual_residual << "\n";
      std::cout << "x:";
      for (Eigen::Index i = 0; i < sol.x.size(); ++i) { std::printf(" %.12g", sol.x[i]); }
      std::cout << "\n";
    }
  } catch (const koopctl::ConfigError & e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const koopctl::InvalidInput & e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const koopctl::NumericalError & e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const koopctl::Error & e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
