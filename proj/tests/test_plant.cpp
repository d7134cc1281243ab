#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>

#include <complex>
#include <random>

#include "koopctl/plant.hpp"

using namespace koopctl;

namespace {

Eigen::VectorXd stack(const TowerState & s)
{
  Eigen::VectorXd x(2 * s.theta.size());
  x << s.theta, s.omega;
  return x;
}

TowerState unstack(const Eigen::VectorXd & x, double t = 0.0)
{
  const Eigen::Index n = x.size() / 2;
  return {x.head(n), x.tail(n), t};
}

Eigen::VectorXd deriv_vec(const Eigen::VectorXd & x, const PlantParams & p)
{
  const auto d = dynamics(unstack(x), 0.0, 0.0, p);
  Eigen::VectorXd out(x.size());
  out << d.dtheta, d.domega;
  return out;
}

// independent linearization oracle: central finite differences at the origin
Eigen::MatrixXd fd_jacobian(const PlantParams & p, double h = 1e-6)
{
  const int n2 = 2 * p.n_links;
  Eigen::MatrixXd J(n2, n2);
  for (int j = 0; j < n2; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n2);
    e[j] = h;
    J.col(j) = (deriv_vec(e, p) - deriv_vec(-e, p)) / (2.0 * h);
  }
  return J;
}

}  // namespace

TEST_CASE("dynamics at rest is an equilibrium")
{
  PlantParams p;
  const auto d = dynamics(TowerState::rest(p.n_links), 0.0, 0.0, p);
  REQUIRE(d.dtheta.norm() == 0.0);
  REQUIRE(d.domega.norm() == 0.0);
}

TEST_CASE("base torque at rest accelerates only the base link")
{
  PlantParams p;
  const double u = 0.2;
  const auto d = dynamics(TowerState::rest(p.n_links), u, 0.0, p);
  const double inertia = p.link_mass * p.link_length * p.link_length;
  REQUIRE(d.domega[0] == Catch::Approx(u / inertia));
  for (int i = 1; i < p.n_links; ++i) { REQUIRE(d.domega[i] == 0.0); }
}

TEST_CASE("disturbance enters at the top link")
{
  PlantParams p;
  const auto d = dynamics(TowerState::rest(p.n_links), 0.0, 0.1, p);
  REQUIRE(d.domega[p.n_links - 1] != 0.0);
  REQUIRE(d.domega[0] == 0.0);
}

TEST_CASE("dynamics rejects non-finite input")
{
  PlantParams p;
  TowerState s = TowerState::rest(p.n_links);
  s.theta[0] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(dynamics(s, 0.0, 0.0, p), InvalidInput);
  REQUIRE_THROWS_AS(dynamics(TowerState::rest(p.n_links),
                             std::numeric_limits<double>::infinity(), 0.0, p),
                    InvalidInput);
}

TEST_CASE("small-angle dynamics matches the finite-difference Jacobian")
{
  PlantParams p;
  const Eigen::MatrixXd J = fd_jacobian(p);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd x(2 * p.n_links);
    for (int i = 0; i < x.size(); ++i) { x[i] = 1e-4 * uni(rng); }
    const Eigen::VectorXd exact = deriv_vec(x, p);
    const Eigen::VectorXd lin = J * x;
    REQUIRE((exact - lin).norm() <= 1e-8 * (1.0 + lin.norm()));
  }
}

TEST_CASE("step keeps the rest state fixed and advances time")
{
  PlantParams p;
  const auto s = step(TowerState::rest(p.n_links), 0.0, 0.0, p);
  REQUIRE(s.theta.norm() == 0.0);
  REQUIRE(s.omega.norm() == 0.0);
  REQUIRE(s.t == Catch::Approx(p.dt));
}

TEST_CASE("unforced energy is non-increasing")
{
  PlantParams p;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int trial = 0; trial < 4; ++trial) {
    TowerState s = TowerState::rest(p.n_links);
    for (int i = 0; i < p.n_links; ++i) {
      s.theta[i] = 0.3 * uni(rng);
      s.omega[i] = 0.5 * uni(rng);
    }
    const double e0 = mechanical_energy(s, p);
    REQUIRE(e0 > 0.0);
    double prev = e0;
    for (int k = 0; k < 300; ++k) {
      s = step(s, 0.0, 0.0, p);
      const double e = mechanical_energy(s, p);
      REQUIRE(e <= prev + 1e-9 * e0);
      prev = e;
    }
  }
}

TEST_CASE("step is deterministic bit for bit")
{
  PlantParams p;
  TowerState s = TowerState::rest(p.n_links);
  const auto a = step(s, p.torque_limit, 0.0, p);
  const auto b = step(s, p.torque_limit, 0.0, p);
  REQUIRE(a.theta == b.theta);
  REQUIRE(a.omega == b.omega);
  REQUIRE(a.t == b.t);
}

TEST_CASE("measure projects the sensor link")
{
  PlantParams p;
  const auto rest = measure(TowerState::rest(p.n_links), p);
  REQUIRE(rest.phi == 0.0);
  REQUIRE(rest.phi_dot == 0.0);

  PlantParams p2 = p;
  p2.sensor_link = 2;
  TowerState s = TowerState::rest(p.n_links);
  for (int i = 0; i < p.n_links; ++i) { s.theta[i] = 0.1 * (i + 1); }
  REQUIRE(measure(s, p2).phi == Catch::Approx(0.2));

  const auto next = step(s, 0.1, 0.0, p);
  const auto m = measure(next, p);
  REQUIRE(m.phi == next.theta[p.sensor_link - 1]);
  REQUIRE(m.phi_dot == next.omega[p.sensor_link - 1]);
}

TEST_CASE("simulate from rest with zero input stays at rest")
{
  PlantParams p;
  const std::vector<double> u(100, 0.0), d(100, 0.0);
  const auto pts = simulate(TowerState::rest(p.n_links), u, d, p);
  REQUIRE(pts.size() == 100);
  for (const auto & pt : pts) {
    REQUIRE(pt.output.phi == 0.0);
    REQUIRE(pt.output.phi_dot == 0.0);
  }
}

TEST_CASE("sine forcing dominates the output spectrum at the forcing bin")
{
  PlantParams p;
  const double f0 = 0.8;
  const int total = static_cast<int>(30.0 / p.dt);
  std::vector<double> u(total), d(total, 0.0);
  for (int k = 0; k < total; ++k) { u[k] = 0.3 * std::sin(2.0 * pi * f0 * k * p.dt); }
  const auto pts = simulate(TowerState::rest(p.n_links), u, d, p);

  // DFT oracle on the last N samples; N chosen so the forcing frequency
  // falls exactly on a bin
  const int N = 1000;
  std::vector<double> phi(N);
  for (int k = 0; k < N; ++k) { phi[k] = pts[pts.size() - N + k].output.phi; }
  int best = 0;
  double best_mag = -1.0;
  for (int bin = 1; bin <= N / 2; ++bin) {
    std::complex<double> acc(0.0, 0.0);
    for (int k = 0; k < N; ++k) {
      acc += phi[k] * std::polar(1.0, -2.0 * pi * bin * k / static_cast<double>(N));
    }
    if (std::abs(acc) > best_mag) {
      best_mag = std::abs(acc);
      best = bin;
    }
  }
  const int forcing_bin = static_cast<int>(std::lround(f0 * N * p.dt));
  REQUIRE(best == forcing_bin);
}

TEST_CASE("pulse disturbance response settles back into a 2 percent band")
{
  PlantParams p;
  const int total = static_cast<int>(20.0 / p.dt);
  std::vector<double> u(total, 0.0), d(total, 0.0);
  for (int k = static_cast<int>(1.0 / p.dt); k < static_cast<int>(1.5 / p.dt); ++k) {
    d[k] = 0.05;
  }
  const auto pts = simulate(TowerState::rest(p.n_links), u, d, p);

  double peak = 0.0;
  for (const auto & pt : pts) { peak = std::max(peak, std::abs(pt.output.phi)); }
  REQUIRE(peak > deg2rad(5.0));
  // settling oracle: last time outside the band must come well before the end
  int last_outside = 0;
  for (int k = 0; k < total; ++k) {
    if (std::abs(pts[k].output.phi) > 0.02 * peak) { last_outside = k; }
  }
  REQUIRE(last_outside * p.dt < 15.0);
}

TEST_CASE("dominant linearized mode matches the simulated oscillation period")
{
  PlantParams p;
  const Eigen::MatrixXd J = fd_jacobian(p);
  Eigen::EigenSolver<Eigen::MatrixXd> es(J);

  // least-damped oscillatory mode
  int dom = -1;
  double best_real = -1e18;
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    if (es.eigenvalues()[i].imag() > 1e-6 && es.eigenvalues()[i].real() > best_real) {
      best_real = es.eigenvalues()[i].real();
      dom = i;
    }
  }
  REQUIRE(dom >= 0);
  const double omega_d = es.eigenvalues()[dom].imag();
  const Eigen::VectorXd v = es.eigenvectors().col(dom).real();

  TowerState s = unstack(0.02 * v / v.cwiseAbs().maxCoeff());
  const int total = static_cast<int>(10.0 / p.dt);
  std::vector<double> phi;
  for (int k = 0; k < total; ++k) {
    phi.push_back(measure(s, p).phi);
    s = step(s, 0.0, 0.0, p);
  }
  // average period over interpolated upward zero crossings
  std::vector<double> crossings;
  for (int k = 1; k < total; ++k) {
    if (phi[k - 1] < 0.0 && phi[k] >= 0.0) {
      const double frac = -phi[k - 1] / (phi[k] - phi[k - 1]);
      crossings.push_back((k - 1 + frac) * p.dt);
    }
  }
  REQUIRE(crossings.size() >= 4);
  const double period = (crossings.back() - crossings.front()) /
                        static_cast<double>(crossings.size() - 1);
  REQUIRE(period == Catch::Approx(2.0 * pi / omega_d).epsilon(0.02));
}

TEST_CASE("unforced response from moderate tilt converges to upright")
{
  PlantParams p;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    TowerState s = TowerState::rest(p.n_links);
    for (int i = 0; i < p.n_links; ++i) { s.theta[i] = 0.35 * uni(rng); }
    for (int k = 0; k < static_cast<int>(25.0 / p.dt); ++k) { s = step(s, 0.0, 0.0, p); }
    REQUIRE(std::abs(measure(s, p).phi) < 1e-3);
  }
}

TEST_CASE("default parameters give an unforced settling time between 3 and 8 seconds")
{
  PlantParams p;
  TowerState s = TowerState::rest(p.n_links);
  s.theta.setConstant(deg2rad(20.0));
  const int total = static_cast<int>(20.0 / p.dt);
  std::vector<double> phi;
  for (int k = 0; k < total; ++k) {
    phi.push_back(measure(s, p).phi);
    s = step(s, 0.0, 0.0, p);
  }
  double peak = 0.0;
  for (double v : phi) { peak = std::max(peak, std::abs(v)); }
  int last_outside = -1;
  for (int k = 0; k < total; ++k) {
    if (std::abs(phi[k]) > 0.02 * peak) { last_outside = k; }
  }
  const double settle = (last_outside + 1) * p.dt;
  REQUIRE(settle > 3.0);
  REQUIRE(settle < 8.0);
}
