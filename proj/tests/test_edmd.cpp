#include <catch2/catch_amalgamated.hpp>

#include <Eigen/LU>

#include <algorithm>
#include <filesystem>
#include <random>

#include "koopctl/edmd.hpp"
#include "koopctl/predictor_io.hpp"
#include "test_util.hpp"

using namespace koopctl;

namespace {

// random stable system, spectral radius scaled to the given value
Eigen::MatrixXd random_stable(int n, double radius, std::mt19937_64 & rng)
{
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) { A(i, j) = gauss(rng); }
  }
  const double r = A.eigenvalues().cwiseAbs().maxCoeff();
  return A * (radius / r);
}

// dataset from a linear system with identity lifting (z = y = x)
SnapshotDataset linear_dataset(const Eigen::MatrixXd & A, const Eigen::MatrixXd & B, int p,
                               std::mt19937_64 & rng)
{
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  SnapshotDataset d;
  d.spec = LiftingSpec{0, n};
  d.dt = 0.02;
  d.Y.resize(n, p);
  d.Y_plus.resize(n, p);
  d.Omega.resize(m, p);
  for (int i = 0; i < p; ++i) {
    Eigen::VectorXd x(n), u(m);
    for (int j = 0; j < n; ++j) { x[j] = gauss(rng); }
    for (int j = 0; j < m; ++j) { u[j] = gauss(rng); }
    d.Y.col(i) = x;
    d.Omega.col(i) = u;
    d.Y_plus.col(i) = A * x + B * u;
  }
  d.Y_lift = d.Y;
  d.Y_plus_lift = d.Y_plus;
  return d;
}

}  // namespace

TEST_CASE("fit exactly recovers a linear system under identity lifting")
{
  std::mt19937_64 rng(42);
  const Eigen::MatrixXd A = random_stable(4, 0.9, rng);
  Eigen::MatrixXd B(4, 2);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 2; ++j) { B(i, j) = gauss(rng); }
  }
  const auto data = linear_dataset(A, B, 400, rng);
  const auto pred = fit(data, 0.0);
  REQUIRE((pred.A - A).norm() < 1e-8);
  REQUIRE((pred.B - B).norm() < 1e-8);
  REQUIRE((pred.C - Eigen::MatrixXd::Identity(4, 4)).norm() < 1e-8);
  REQUIRE(pred.fit_report.residual_dynamics < 1e-8);
}

TEST_CASE("ridge fit matches the normal-equations oracle")
{
  std::mt19937_64 rng(9);
  const Eigen::MatrixXd A = random_stable(5, 0.8, rng);
  Eigen::MatrixXd B(5, 2);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 2; ++j) { B(i, j) = gauss(rng); }
  }
  const auto data = linear_dataset(A, B, 60, rng);
  const double ridge = 1e-8;
  const auto pred = fit(data, ridge);

  // independent oracle: stacked normal equations solved by full-pivot LU
  Eigen::MatrixXd S(7, data.p());
  S.topRows(5) = data.Y_lift;
  S.bottomRows(2) = data.Omega;
  const Eigen::MatrixXd G = S * S.transpose() + ridge * Eigen::MatrixXd::Identity(7, 7);
  const Eigen::MatrixXd X = (data.Y_plus_lift * S.transpose()) * G.fullPivLu().inverse();
  REQUIRE((pred.A - X.leftCols(5)).norm() < 1e-6);
  REQUIRE((pred.B - X.rightCols(2)).norm() < 1e-6);
}

TEST_CASE("duplicated lifted rows stay solvable with ridge")
{
  std::mt19937_64 rng(10);
  const Eigen::MatrixXd A = random_stable(3, 0.7, rng);
  const Eigen::MatrixXd B = Eigen::MatrixXd::Random(3, 1);
  auto data = linear_dataset(A, B, 80, rng);
  // duplicate a row of the lifted states: rank-deficient regressor
  data.Y_lift.row(2) = data.Y_lift.row(1);
  data.Y_plus_lift.row(2) = data.Y_plus_lift.row(1);

  const auto reg = fit(data, 1e-8);
  REQUIRE(reg.A.allFinite());

  const auto unreg = fit(data, 0.0);
  REQUIRE(unreg.fit_report.truncated);
  REQUIRE(reg.fit_report.residual_dynamics ==
          Catch::Approx(unreg.fit_report.residual_dynamics).margin(1e-6));
}

TEST_CASE("fit is invariant to snapshot column order")
{
  PlantParams plant;
  const auto trajs = testutil::collect_tower_data(plant, 20.0, 4);
  const LiftingSpec spec{2, 3};
  auto data = assemble(trajs, spec);
  const auto pred1 = fit(data, 1e-10);

  std::vector<Eigen::Index> perm(data.p());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(13);
  std::shuffle(perm.begin(), perm.end(), rng);
  SnapshotDataset shuffled = data;
  for (Eigen::Index i = 0; i < data.p(); ++i) {
    shuffled.Y.col(i) = data.Y.col(perm[i]);
    shuffled.Y_plus.col(i) = data.Y_plus.col(perm[i]);
    shuffled.Y_lift.col(i) = data.Y_lift.col(perm[i]);
    shuffled.Y_plus_lift.col(i) = data.Y_plus_lift.col(perm[i]);
    shuffled.Omega.col(i) = data.Omega.col(perm[i]);
  }
  const auto pred2 = fit(shuffled, 1e-10);
  REQUIRE((pred1.A - pred2.A).norm() < 1e-10 * (1.0 + pred1.A.norm()));
  REQUIRE((pred1.B - pred2.B).norm() < 1e-10 * (1.0 + pred1.B.norm()));
  REQUIRE((pred1.C - pred2.C).norm() < 1e-10 * (1.0 + pred1.C.norm()));
}

TEST_CASE("assemble counts pairs across trajectories and rejects empty data")
{
  const LiftingSpec spec{2, 3};
  Trajectory t;
  t.dt = 0.02;
  for (int k = 0; k < spec.delays + 2; ++k) {
    t.y.push_back({0.1 * k, 0.0});
    t.u.push_back(0.0);
  }
  REQUIRE(assemble({t}, spec).p() == 1);

  Trajectory too_short = t;
  too_short.y.resize(2);
  too_short.u.resize(2);
  REQUIRE_THROWS_AS(assemble({too_short}, spec), InvalidInput);
}

TEST_CASE("predict handles the identity and scalar geometric cases")
{
  LiftedPredictor pred;
  pred.spec = LiftingSpec{0, 2};
  pred.dt = 0.02;

  pred.A = Eigen::MatrixXd::Identity(2, 2);
  pred.B = Eigen::MatrixXd::Zero(2, 1);
  pred.C = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd z0(2);
  z0 << 1.0, -2.0;
  const auto out = predict(pred, z0, Eigen::MatrixXd::Zero(1, 3));
  REQUIRE(out.cols() == 4);
  for (int k = 0; k < 4; ++k) { REQUIRE(out.col(k) == z0); }

  LiftedPredictor scalar;
  scalar.spec = LiftingSpec{0, 1};
  scalar.A = Eigen::MatrixXd::Constant(1, 1, 0.5);
  scalar.B = Eigen::MatrixXd::Constant(1, 1, 1.0);
  scalar.C = Eigen::MatrixXd::Constant(1, 1, 1.0);
  const auto geo = predict(scalar, Eigen::VectorXd::Constant(1, 1.0), Eigen::MatrixXd::Zero(1, 2));
  REQUIRE(geo(0, 0) == Catch::Approx(1.0));
  REQUIRE(geo(0, 1) == Catch::Approx(0.5));
  REQUIRE(geo(0, 2) == Catch::Approx(0.25));
}

TEST_CASE("evaluate is near zero for an exactly linear plant")
{
  // 2-state linear plant measured directly; delays=0 lifting represents it
  std::mt19937_64 rng(21);
  Eigen::Matrix2d A;
  A << 0.9, 0.05, -0.05, 0.9;
  Eigen::Vector2d B(0.1, 0.05);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  Trajectory traj;
  traj.dt = 0.02;
  Eigen::Vector2d x(0.0, 0.0);
  for (int k = 0; k < 300; ++k) {
    const double u = uni(rng);
    traj.y.push_back({x[0], x[1]});
    traj.u.push_back(u);
    x = A * x + B * u;
  }
  const LiftingSpec spec{0, 3};
  const auto pred = fit(assemble({traj}, spec), 0.0);
  const auto nrmse = evaluate(pred, traj, 10);
  REQUIRE(nrmse.maxCoeff() < 1e-8);
}

TEST_CASE("evaluate rejects zero-variance outputs")
{
  LiftedPredictor pred;
  pred.spec = LiftingSpec{0, 3};
  pred.A = Eigen::MatrixXd::Identity(3, 3);
  pred.B = Eigen::MatrixXd::Zero(3, 1);
  pred.C = Eigen::MatrixXd::Zero(2, 3);
  Trajectory flat;
  flat.dt = 0.02;
  for (int k = 0; k < 50; ++k) {
    flat.y.push_back({0.0, 0.0});
    flat.u.push_back(0.0);
  }
  REQUIRE_THROWS_AS(evaluate(pred, flat, 5), NumericalError);
}

TEST_CASE("predictor beats a zero-order-hold baseline at one step")
{
  PlantParams plant;
  const auto trajs = testutil::collect_tower_data(plant, 30.0, 6);
  const LiftingSpec spec{2, 3};
  std::vector<Trajectory> train(trajs.begin(), trajs.end() - 1);
  const auto pred = fit(assemble(train, spec));
  const auto & heldout = trajs.back();

  const auto nrmse = evaluate(pred, heldout, 5);

  // baseline oracle: predict y_{k+1} = y_k, same normalization
  const int L = static_cast<int>(heldout.size());
  Eigen::MatrixXd Y(2, L);
  for (int k = 0; k < L; ++k) { Y.col(k) << heldout.y[k].phi, heldout.y[k].phi_dot; }
  const Eigen::Vector2d mean = Y.rowwise().mean();
  const Eigen::Vector2d sigma =
    ((Y.colwise() - mean).rowwise().squaredNorm() / static_cast<double>(L)).cwiseSqrt();
  double acc = 0.0;
  long cnt = 0;
  for (int k = spec.delays; k + 1 < L; ++k) {
    const Eigen::Vector2d err = Y.col(k) - Y.col(k + 1);
    acc += 0.5 * (err.array() / sigma.array()).square().sum();
    ++cnt;
  }
  const double zoh = std::sqrt(acc / static_cast<double>(cnt));
  REQUIRE(nrmse[0] < zoh);
}

TEST_CASE("one-step NRMSE on held-out tower data is small")
{
  PlantParams plant;
  const auto trajs = testutil::collect_tower_data(plant, 40.0, 1);
  const LiftingSpec spec{2, 3};
  std::vector<Trajectory> train(trajs.begin(), trajs.end() - 1);
  const auto pred = fit(assemble(train, spec));
  const auto nrmse = evaluate(pred, trajs.back(), 1);
  REQUIRE(nrmse[0] < 0.1);
}

TEST_CASE("fitted C reproduces the embedded outputs")
{
  PlantParams plant;
  const auto trajs = testutil::collect_tower_data(plant, 20.0, 2);
  const LiftingSpec spec{2, 3};
  const auto data = assemble(trajs, spec);
  const auto pred = fit(data, 0.0);
  REQUIRE((data.Y - pred.C * data.Y_lift).norm() < 1e-8);
}

TEST_CASE("scaling inputs and outputs scales predictions linearly")
{
  PlantParams plant;
  const auto trajs = testutil::collect_tower_data(plant, 15.0, 8);
  const LiftingSpec spec{1, 3};
  const double alpha = 3.5;

  const auto data = assemble(trajs, spec);
  SnapshotDataset scaled = data;
  scaled.Y *= alpha;
  scaled.Y_plus *= alpha;
  scaled.Y_lift *= alpha;
  scaled.Y_plus_lift *= alpha;
  scaled.Omega *= alpha;

  const auto p1 = fit(data, 1e-12);
  const auto p2 = fit(scaled, 1e-12);

  const Eigen::VectorXd z0 = data.Y_lift.col(100);
  Eigen::MatrixXd u(1, 10);
  u.setConstant(0.2);
  const Eigen::MatrixXd y1 = predict(p1, z0, u);
  const Eigen::MatrixXd y2 = predict(p2, alpha * z0, alpha * u);
  REQUIRE((alpha * y1 - y2).norm() < 1e-6 * (1.0 + y2.norm()));
}

TEST_CASE("predictor file round-trips exactly")
{
  const auto pred = testutil::make_tower_predictor(2, 15.0, 3);
  const auto path = std::filesystem::temp_directory_path() / "koopctl_pred_roundtrip.txt";
  write_predictor(path.string(), {pred, std::nullopt, std::nullopt});
  const auto back = read_predictor(path.string());
  REQUIRE(back.predictor.A == pred.A);
  REQUIRE(back.predictor.B == pred.B);
  REQUIRE(back.predictor.C == pred.C);
  REQUIRE(back.predictor.dt == pred.dt);
  REQUIRE(back.predictor.spec.delays == pred.spec.delays);
  REQUIRE(!back.K);
  std::filesystem::remove(path);
}
