#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "ksamp/analysis.hpp"
#include "ksamp/dynamics.hpp"

using namespace ksamp;

namespace {

Trajectory constant_trajectory(State s, int n) {
  Trajectory t;
  t.states.assign(static_cast<std::size_t>(n), s);
  return t;
}

std::vector<Trajectory> duffing_grid_data(int grid_n, double dt, int n_steps) {
  std::vector<Trajectory> out;
  for (const auto& x0 : uniform_grid(grid_n, -2.0, 2.0)) out.push_back(simulate(DuffingSystem{}, x0, dt, n_steps));
  return out;
}

} // namespace

TEST(Simulate, DuffingFixedPoint) {
  const Trajectory t = simulate(DuffingSystem{}, {1.0, 0.0}, 0.05, 2000);
  ASSERT_EQ(t.states.size(), 2001u);
  for (const auto& s : t.states) {
    EXPECT_NEAR(s[0], 1.0, 1e-9);
    EXPECT_NEAR(s[1], 0.0, 1e-9);
  }
}

TEST(Simulate, DuffingEnergyNeverIncreases) {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Trajectory t = simulate(DuffingSystem{}, {u(rng), u(rng)}, 0.05, 4000);
    ASSERT_FALSE(t.diverged);
    for (std::size_t i = 1; i < t.states.size(); ++i)
      ASSERT_LE(duffing_energy(t.states[i]), duffing_energy(t.states[i - 1]) + 1e-8) << "step " << i;
  }
}

TEST(Simulate, CenterIsPeriodic) {
  const int n = 10000;
  const double dt = 2.0 * std::numbers::pi / n;
  const Trajectory t = simulate(LinearSystem{canonical_2x2(PhaseClass::Center)}, {1.0, 0.0}, dt, n);
  EXPECT_NEAR(t.states.back()[0], 1.0, 1e-5);
  EXPECT_NEAR(t.states.back()[1], 0.0, 1e-5);
}

TEST(Simulate, Rk4AgreesWithExactLinearStepping) {
  for (auto kind : {PhaseClass::SpiralSink, PhaseClass::Center, PhaseClass::Saddle, PhaseClass::NodalSink}) {
    const LinearSystem sys{canonical_2x2(kind)};
    const Trajectory rk = simulate(sys, {0.3, -0.7}, 0.05, 400);
    const Trajectory ex = simulate(sys, {0.3, -0.7}, 0.05, 400, Integrator::ExactLinear);
    ASSERT_EQ(rk.states.size(), ex.states.size());
    for (std::size_t i = 0; i < rk.states.size(); ++i) {
      const double scale = std::max(1.0, norm(ex.states[i]));
      ASSERT_NEAR(rk.states[i][0], ex.states[i][0], 1e-6 * scale) << to_string(kind);
      ASSERT_NEAR(rk.states[i][1], ex.states[i][1], 1e-6 * scale) << to_string(kind);
    }
  }
}

TEST(Simulate, Validation) {
  EXPECT_THROW(simulate(DuffingSystem{}, {0.0, 0.0}, 0.0, 1), InvalidArgument);
  EXPECT_THROW(simulate(DuffingSystem{}, {0.0, 0.0}, 0.1, 1, Integrator::ExactLinear), InvalidArgument);
  EXPECT_THROW(simulate(LinearSystem{Mat::Identity(3, 3)}, {0.0, 0.0}, 0.1, 1), InvalidArgument);
}

TEST(LtiDiscretize, Examples) {
  EXPECT_LT((lti_discretize(Mat::Zero(2, 2), 0.1) - Mat::Identity(2, 2)).norm(), 1e-15);
  const Mat quarter = lti_discretize(canonical_2x2(PhaseClass::Center), std::numbers::pi / 2.0);
  EXPECT_LT((quarter - make_mat({{0.0, -1.0}, {1.0, 0.0}})).cwiseAbs().maxCoeff(), 1e-12);
  const Mat center = lti_discretize(canonical_2x2(PhaseClass::Center), 0.1);
  EXPECT_NEAR(center.trace(), 2.0 * std::cos(0.1), 1e-14);
  for (auto kind : {PhaseClass::SpiralSink, PhaseClass::SpiralSource, PhaseClass::NodalSink, PhaseClass::Center,
                    PhaseClass::Saddle}) {
    const Mat a = canonical_2x2(kind);
    EXPECT_LT((logm_2x2(lti_discretize(a, 0.1)) - 0.1 * a).cwiseAbs().maxCoeff(), 1e-8) << to_string(kind);
  }
}

TEST(PhaseClassTest, CanonicalRepresentatives) {
  const Mat c = canonical_2x2(PhaseClass::Center);
  EXPECT_EQ(c.trace(), 0.0);
  EXPECT_NEAR(c.determinant(), 1.0, 1e-15);
  EXPECT_NEAR(canonical_2x2(PhaseClass::Saddle).determinant(), -1.0, 1e-15);
  const Mat s = canonical_2x2(PhaseClass::SpiralSink);
  EXPECT_EQ(s.trace(), -1.0);
  EXPECT_NEAR(s.determinant(), 1.25, 1e-15);
  EXPECT_GT(s.determinant(), 0.25 * s.trace() * s.trace());
  for (auto kind : {PhaseClass::SpiralSink, PhaseClass::SpiralSource, PhaseClass::NodalSink, PhaseClass::Center,
                    PhaseClass::Saddle})
    EXPECT_EQ(classify_tracedet(canonical_2x2(kind)), kind);
  EXPECT_THROW(canonical_2x2(PhaseClass::Degenerate), InvalidArgument);
  EXPECT_EQ(parse_phase_class("spiral_sink"), PhaseClass::SpiralSink);
  EXPECT_THROW(parse_phase_class("vortex"), InvalidArgument);
}

TEST(PhaseClassTest, Classification) {
  EXPECT_EQ(classify_tracedet(make_mat({{0.0, -1.0}, {1.0, 0.0}})), PhaseClass::Center);
  EXPECT_EQ(classify_tracedet(make_mat({{1.0, 0.0}, {0.0, -1.0}})), PhaseClass::Saddle);
  EXPECT_EQ(classify_tracedet(make_mat({{-1.0, 0.0}, {0.0, -2.0}})), PhaseClass::NodalSink);
  EXPECT_EQ(classify_tracedet(make_mat({{1.0, 0.0}, {0.0, 2.0}})), PhaseClass::NodalSource);
  EXPECT_EQ(classify_tracedet(make_mat({{1.0, 0.0}, {0.0, 0.0}})), PhaseClass::Degenerate);
  EXPECT_EQ(classify_tracedet(0.01, 1.0, 0.05), PhaseClass::Center);
  EXPECT_EQ(classify_tracedet(0.01, 1.0), PhaseClass::SpiralSource);
}

TEST(PhaseClassTest, AgreesWithEigenvalueStructure) {
  std::mt19937_64 rng(52);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const Mat a = make_mat({{n(rng), n(rng)}, {n(rng), n(rng)}});
    const Spectrum spec = eigenvalues(a);
    const Complex l0 = spec.eigenvalues[0], l1 = spec.eigenvalues[1];
    const PhaseClass c = classify_tracedet(a);
    const bool complex_pair = std::abs(l0.imag()) > 1e-12;
    if (c == PhaseClass::Saddle) {
      EXPECT_FALSE(complex_pair);
      EXPECT_LT(l0.real() * l1.real(), 0.0);
    } else if (c == PhaseClass::SpiralSink || c == PhaseClass::SpiralSource) {
      EXPECT_TRUE(complex_pair);
      EXPECT_EQ(l0.real() < 0.0, c == PhaseClass::SpiralSink);
    } else if (c == PhaseClass::NodalSink || c == PhaseClass::NodalSource) {
      EXPECT_FALSE(complex_pair);
      EXPECT_EQ(l0.real() < 0.0 && l1.real() < 0.0, c == PhaseClass::NodalSink);
    }
  }
}

TEST(PlaceOnTracedet, RecoversGeneratorOfDiscreteOperator) {
  const Mat a = canonical_2x2(PhaseClass::SpiralSink);
  const TraceDetPoint p = place_on_tracedet(lti_discretize(a, 0.1), 0.1, 1e-9);
  EXPECT_TRUE(p.has_log);
  EXPECT_NEAR(p.trace, -1.0, 1e-8);
  EXPECT_NEAR(p.det, 1.25, 1e-8);
  EXPECT_EQ(p.label, PhaseClass::SpiralSink);
  // negative real eigenvalues have no real principal logarithm
  const TraceDetPoint q = place_on_tracedet(make_mat({{-0.5, 0.0}, {0.0, 0.8}}), 0.1, 1e-9);
  EXPECT_FALSE(q.has_log);
  EXPECT_NEAR(q.trace, (std::log(0.5) + std::log(0.8)) / 0.1, 1e-10);
}

TEST(Lift, SingleStateDegreeOne) {
  Trajectory t;
  t.states = {{2.0, 3.0}, {4.0, 5.0}};
  const auto [x, y] = lift(poly_dictionary(1), t);
  ASSERT_EQ(x.cols(), 1);
  EXPECT_EQ(x(0, 0), 1.0);
  EXPECT_EQ(x(1, 0), 2.0);
  EXPECT_EQ(x(2, 0), 3.0);
  EXPECT_EQ(y(1, 0), 4.0);
  EXPECT_EQ(y(2, 0), 5.0);
}

TEST(Lift, ShiftIdentity) {
  const Trajectory t = simulate(DuffingSystem{}, {0.5, -0.5}, 0.05, 50);
  const auto [x, y] = lift(poly_dictionary(4), t);
  ASSERT_EQ(x.cols(), 50);
  for (Eigen::Index j = 0; j + 1 < x.cols(); ++j) EXPECT_EQ(y.col(j), x.col(j + 1));
  EXPECT_THROW(lift(poly_dictionary(1), constant_trajectory({0.0, 0.0}, 1)), InvalidArgument);
}

TEST(Lift, HoldoutOneStepPrediction) {
  const auto dict = poly_dictionary(4);
  const auto train = duffing_grid_data(12, 0.05, 8000);
  auto [x, y] = lift_all(dict, train);
  const TransferOperator op = dmd_estimate(x, y, 1e-6, dict, 0.05);
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<Trajectory> held;
  for (int i = 0; i < 10; ++i) held.push_back(simulate(DuffingSystem{}, {u(rng), u(rng)}, 0.05, 8000));
  auto [hx, hy] = lift_all(dict, held);
  const Mat err = op.k * hx - hy;
  const double rms = std::sqrt(err.squaredNorm() / static_cast<double>(err.size()));
  EXPECT_LT(rms, 1e-2);
}

TEST(Predict, LinearSystemOracle) {
  const Mat a = canonical_2x2(PhaseClass::SpiralSink);
  const double dt = 0.1;
  std::vector<Trajectory> data;
  for (State x0 : {State{1.0, 0.0}, State{0.0, 1.0}, State{1.0, 1.0}})
    data.push_back(simulate(LinearSystem{a}, x0, dt, 50, Integrator::ExactLinear));
  const auto dict = poly_dictionary(1);
  auto [x, y] = lift_all(dict, data);
  const TransferOperator op = dmd_estimate(x, y, 1e-12, dict, dt);
  const State x0{-0.4, 0.9};
  const Mat step = expm(a, dt);
  for (auto mode : {PredictionMode::Relift, PredictionMode::Linear}) {
    const Trajectory pred = predict_trajectory(op, dict, x0, 50, kDivergenceRadius, mode);
    ASSERT_EQ(pred.states.size(), 51u);
    Vec s(2);
    s << x0[0], x0[1];
    for (std::size_t i = 0; i < pred.states.size(); ++i) {
      EXPECT_NEAR(pred.states[i][0], s(0), 1e-6);
      EXPECT_NEAR(pred.states[i][1], s(1), 1e-6);
      s = step * s;
    }
  }
}

TEST(Predict, IdentityOperatorIsConstant) {
  const auto dict = poly_dictionary(3);
  const TransferOperator op(Mat::Identity(10, 10), dict, 0.05);
  for (auto mode : {PredictionMode::Relift, PredictionMode::Linear}) {
    const Trajectory t = predict_trajectory(op, dict, {0.3, -1.2}, 100, kDivergenceRadius, mode);
    ASSERT_EQ(t.states.size(), 101u);
    for (const auto& s : t.states) {
      EXPECT_EQ(s[0], 0.3);
      EXPECT_EQ(s[1], -1.2);
    }
  }
}

TEST(Predict, ExpandingOperatorDiverges) {
  const auto dict = poly_dictionary(1);
  const TransferOperator op(3.0 * Mat::Identity(3, 3), dict, 0.05);
  const Trajectory t = predict_trajectory(op, dict, {0.1, 0.1}, 1000);
  EXPECT_TRUE(t.diverged);
  EXPECT_LT(t.states.size(), 10u);
  EXPECT_EQ(classify_basin(t), BasinLabel::Diverged);
  EXPECT_THROW(predict_trajectory(op, poly_dictionary(2), {0.0, 0.0}, 1), InvalidArgument);
}

TEST(Basin, ConstantTrajectories) {
  EXPECT_EQ(classify_basin(constant_trajectory({1.0, 0.0}, 5)), BasinLabel::Right);
  EXPECT_EQ(classify_basin(constant_trajectory({-1.0, 0.0}, 5)), BasinLabel::Left);
  EXPECT_EQ(classify_basin(constant_trajectory({0.0, 0.0}, 5)), BasinLabel::Undecided);
  EXPECT_EQ(classify_basin(constant_trajectory({20.0, 0.0}, 5)), BasinLabel::Diverged);
}

TEST(Basin, DuffingReferenceSettles) {
  const Trajectory t = simulate(DuffingSystem{}, {0.1, 0.1}, 0.05, 8000);
  const BasinLabel b = classify_basin(t);
  EXPECT_TRUE(b == BasinLabel::Left || b == BasinLabel::Right) << to_string(b);
}

TEST(Basin, UniformGrid) {
  const auto g = uniform_grid(3, -2.0, 2.0);
  ASSERT_EQ(g.size(), 9u);
  EXPECT_EQ(g[0], (State{-2.0, -2.0}));
  EXPECT_EQ(g[1], (State{-2.0, 0.0}));
  EXPECT_EQ(g[8], (State{2.0, 2.0}));
  EXPECT_EQ(uniform_grid(1, -2.0, 2.0)[0], (State{0.0, 0.0}));
}

TEST(Basin, NominalOperatorReproducesDirectSimulation) {
  const auto dict = poly_dictionary(4);
  auto [x, y] = lift_all(dict, duffing_grid_data(12, 0.05, 8000));
  const TransferOperator op = dmd_estimate(x, y, 1e-6, dict, 0.05);
  BasinGridConfig cfg;
  cfg.grid_n = 12;
  cfg.horizon = 400.0;
  EXPECT_GE(basin_agreement(op, dict, DuffingSystem{}, cfg, 1), 0.9);
}

TEST(Analysis, QuantilesAndIqr) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({1.0, 2.0, 3.0, 4.0}), 2.5);
  EXPECT_EQ(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.25), 2.0);
  EXPECT_EQ(iqr({1.0, 2.0, 3.0, 4.0, 5.0}), 2.0);
  EXPECT_THROW(quantile({}, 0.5), InvalidArgument);
}

TEST(Analysis, DegenerateSampleSets) {
  const Mat a = canonical_2x2(PhaseClass::SpiralSink);
  const Mat k = lti_discretize(a, 0.1);
  std::vector<SampleRecord> same(20, SampleRecord{k, 0.0, spectral_radius(k), 0, 0});
  const TraceDetReport r = analyze_tracedet(same, 0.1);
  EXPECT_EQ(r.histogram.at("spiral_sink"), 20);
  EXPECT_NEAR(r.trace_iqr, 0.0, 1e-12);

  const auto dict = poly_dictionary(4);
  auto [x, y] = lift_all(dict, duffing_grid_data(12, 0.05, 2000));
  const TransferOperator op = dmd_estimate(x, y, 1e-6, dict, 0.05);
  BasinGridConfig cfg;
  cfg.grid_n = 4;
  cfg.horizon = 20.0;
  const BasinCounts own = basin_counts(op, dict, cfg);
  std::vector<SampleRecord> copies(3, SampleRecord{op.k, 0.0, 0.0, 0, 0});
  const BasinReport b = analyze_basins(copies, dict, 0.05, cfg, 1);
  EXPECT_DOUBLE_EQ(b.diverged_fraction, own[static_cast<int>(BasinLabel::Diverged)] / 16.0);
}
