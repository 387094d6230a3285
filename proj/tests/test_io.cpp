#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "ksamp/ksamp.hpp"

using namespace ksamp;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ksamp_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Mat random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng) * std::pow(10.0, static_cast<double>(i - j));
  return m;
}

} // namespace

TEST(MatrixCsv, RoundTripIsExact) {
  std::mt19937_64 rng(61);
  std::stringstream ss;
  const Mat a = random_mat(rng, 3, 4), b = random_mat(rng, 1, 1);
  io::write_matrix_csv(ss, a);
  io::write_matrix_csv(ss, b);
  const auto back = io::read_matrix_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], a);
  EXPECT_EQ(back[1], b);
}

TEST(MatrixCsv, MalformedInput) {
  std::stringstream bad_header("3\n1,2,3\n");
  EXPECT_THROW(io::read_matrix_csv(bad_header), InvalidArgument);
  std::stringstream truncated("2,2\n1,2\n");
  EXPECT_THROW(io::read_matrix_csv(truncated), InvalidArgument);
  std::stringstream ragged("1,2\n1\n");
  EXPECT_THROW(io::read_matrix_csv(ragged), InvalidArgument);
  std::stringstream word("1,1\nabc\n");
  EXPECT_THROW(io::read_matrix_csv(word), InvalidArgument);
  std::stringstream nan("1,1\nnan\n");
  EXPECT_THROW(io::read_matrix_csv(nan), InvalidArgument);
  EXPECT_THROW(io::read_single_matrix_csv("/nonexistent/m.csv"), InvalidArgument);
}

TEST(Json, MatrixAndOperatorRoundTrip) {
  std::mt19937_64 rng(62);
  const Mat a = random_mat(rng, 3, 3);
  EXPECT_EQ(io::matrix_from_json(io::to_json(a)), a);
  const TransferOperator op(random_mat(rng, 6, 6), poly_dictionary(2), 0.05);
  const json j = json::parse(io::to_json(op).dump());
  const TransferOperator back = io::operator_from_json(j);
  EXPECT_EQ(back.k, op.k);
  EXPECT_EQ(back.dt, op.dt);
  ASSERT_TRUE(back.dict.has_value());
  EXPECT_EQ(back.dict->exponents, op.dict->exponents);
  EXPECT_NEAR(j.at("spectral_radius").get<double>(), spectral_radius(op.k), 1e-15);
  EXPECT_THROW(io::matrix_from_json(json{{"rows", 2}, {"cols", 2}, {"entries", {1.0, 2.0}}}), InvalidArgument);
}

TEST(Json, KernelDensityConstraintRoundTrip) {
  KoopmanKernel k;
  k.m = 3;
  k.t_horizon = 40;
  k.lambda = 0.25;
  for (const KernelSpec& spec : {KernelSpec(TraceKernel{}), KernelSpec(k), KernelSpec(ProjectionKernel{0.01})}) {
    const KernelSpec back = io::kernel_from_json(io::to_json(spec));
    EXPECT_EQ(io::to_json(back), io::to_json(spec));
  }
  k.lambda_auto = true;
  EXPECT_EQ(io::to_json(KernelSpec(k)).at("lambda"), "auto");
  EXPECT_TRUE(std::get<KoopmanKernel>(io::kernel_from_json(io::to_json(KernelSpec(k)))).lambda_auto);
  EXPECT_TRUE(std::holds_alternative<TraceKernel>(io::kernel_from_json(json("trace"))));
  EXPECT_THROW(io::kernel_from_json(json{{"type", "rbf"}}), InvalidArgument);

  for (const DensitySpec& d : {DensitySpec(BetaDensity{2.0, 7.0}), DensitySpec(ExponentialDensity{4.0})})
    EXPECT_EQ(io::to_json(io::density_from_json(io::to_json(d))), io::to_json(d));

  const ConstraintSpec c{ConstraintFunction::Trace, -1.0, 2.0, 1e-11, 1e-9, 50};
  EXPECT_EQ(io::to_json(io::constraint_from_json(io::to_json(c))), io::to_json(c));
}

TEST(Json, HmcConfigRoundTripAndDefaults) {
  HmcConfig cfg;
  cfg.step_size = 3e-4;
  cfg.n_samples = 60;
  cfg.n_chains = 3;
  cfg.burn_in = 7;
  cfg.seed = 123456789012345ULL;
  cfg.kernel = TraceKernel{};
  cfg.constraint = ConstraintSpec{ConstraintFunction::SpectralRadius, 0.5, 0.7};
  const HmcConfig back = io::hmc_config_from_json(json::parse(io::to_json(cfg).dump()));
  EXPECT_EQ(io::to_json(back), io::to_json(cfg));

  const HmcConfig defaults = io::hmc_config_from_json(json::object());
  EXPECT_EQ(io::to_json(defaults), io::to_json(HmcConfig{}));
  try {
    io::hmc_config_from_json(json{{"constraint", {{"a", 0.1}}}});
    FAIL() << "expected a missing-field error";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("hmc.constraint.b"), std::string::npos) << e.what();
  }
  EXPECT_THROW(io::hmc_config_from_json(json{{"n_chains", "ten"}}), InvalidArgument);
}

TEST(Json, DictionaryForms) {
  EXPECT_EQ(io::dictionary_from_json(json{{"max_total_degree", 3}}).size(), 10u);
  EXPECT_EQ(io::dictionary_from_json(json{{"linear", true}}).size(), 2u);
  EXPECT_EQ(io::dictionary_from_json(json::object()).size(), 15u);
  const auto custom = io::dictionary_from_json(json{{"exponents", {{0, 0}, {1, 0}, {0, 1}, {2, 0}}}});
  EXPECT_EQ(custom.size(), 4u);
  EXPECT_THROW(io::dictionary_from_json(json{{"exponents", {{2, 0}}}}), InvalidArgument);
}

TEST(TrajectoryCsv, RoundTrip) {
  const fs::path dir = scratch("traj");
  const Trajectory t = simulate(DuffingSystem{}, {0.3, -1.1}, 0.05, 100);
  {
    std::ofstream os(dir / "t.csv");
    io::write_trajectory_csv(os, t);
  }
  const Trajectory back = io::read_trajectory_csv((dir / "t.csv").string());
  EXPECT_EQ(back.states, t.states);
  EXPECT_NEAR(back.dt, 0.05, 1e-15);
  {
    std::ofstream os(dir / "bad.csv");
    os << "a,b\n1,2\n";
  }
  EXPECT_THROW(io::read_trajectory_csv((dir / "bad.csv").string()), InvalidArgument);
}

TEST(SamplesCsv, RoundTripAndColumnNames) {
  EXPECT_EQ(io::entry_column(1, 2, 2), "k_12");
  EXPECT_EQ(io::entry_column(11, 3, 15), "k_11_3");
  HmcConfig cfg;
  cfg.kernel = TraceKernel{};
  cfg.n_samples = 10;
  cfg.n_chains = 2;
  const TransferOperator k0(make_mat({{0.9, 0.1}, {-0.1, 0.9}}), std::nullopt, 0.1);
  const SampleSet set = run(cfg, k0);
  const fs::path dir = scratch("samples");
  {
    std::ofstream os(dir / "s.csv");
    io::write_samples_csv(os, set);
  }
  const auto back = io::read_samples_csv((dir / "s.csv").string(), 2);
  ASSERT_EQ(back.size(), set.samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].k, set.samples[i].k);
    EXPECT_EQ(back[i].distance, set.samples[i].distance);
    EXPECT_EQ(back[i].chain, set.samples[i].chain);
    EXPECT_EQ(back[i].index, set.samples[i].index);
  }
  EXPECT_THROW(io::read_samples_csv((dir / "s.csv").string(), 3), InvalidArgument);
  const json m = io::samples_manifest(set);
  EXPECT_EQ(m.at("n_samples"), 10);
  EXPECT_EQ(m.at("chain_accept_rates").size(), 2u);
}

TEST(ExperimentConfigJson, DefaultsPerExperiment) {
  const auto lti = pipeline::experiment_from_json({{"experiment", "lti2x2"}});
  EXPECT_EQ(lti.dt, 0.1);
  EXPECT_EQ(lti.dictionary.size(), 2u);
  const auto duff = pipeline::experiment_from_json(json::object());
  EXPECT_EQ(duff.experiment, pipeline::Experiment::Duffing);
  EXPECT_EQ(duff.dictionary.size(), 15u);
  EXPECT_EQ(duff.grid_n, 12);
  EXPECT_EQ(duff.n_steps(), 8000);
  EXPECT_THROW(pipeline::experiment_from_json({{"experiment", "lorenz"}}), InvalidArgument);
  EXPECT_THROW(pipeline::experiment_from_json({{"simulation", {{"dt", -1.0}}}}), InvalidArgument);
}

TEST(ExperimentConfigJson, RoundTripAndHash) {
  auto cfg = pipeline::experiment_from_json(
      {{"experiment", "lti2x2"}, {"system", {{"kind", "spiral_sink"}}}, {"hmc", {{"seed", 9}, {"kernel", "trace"}}}});
  const auto back = pipeline::experiment_from_json(json::parse(pipeline::to_json(cfg).dump()));
  EXPECT_EQ(pipeline::to_json(back), pipeline::to_json(cfg));
  EXPECT_EQ(pipeline::config_hash(back), pipeline::config_hash(cfg));
  auto moved = cfg;
  moved.outputs = "elsewhere";
  EXPECT_EQ(pipeline::config_hash(moved), pipeline::config_hash(cfg));
  auto reseeded = cfg;
  reseeded.hmc.seed = 10;
  EXPECT_NE(pipeline::config_hash(reseeded), pipeline::config_hash(cfg));
}

TEST(OutputDirTest, ManifestAndRunLog) {
  const fs::path dir = scratch("out") / "nested";
  {
    pipeline::OutputDir out(dir, "abc", "simulate");
    out.write("a/b.txt", "hello\n");
    out.finish();
  }
  {
    pipeline::OutputDir out(dir, "def", "estimate");
    out.write_json("c.json", json{{"x", 1}});
    out.finish();
  }
  std::ifstream in(dir / "manifest.json");
  const json m = json::parse(in);
  EXPECT_EQ(m.at("files").at("a/b.txt").at("config_hash"), "abc");
  EXPECT_EQ(m.at("files").at("c.json").at("command"), "estimate");
  std::ifstream log(dir / "run.log");
  int lines = 0;
  for (std::string l; std::getline(log, l);) ++lines;
  EXPECT_EQ(lines, 2);
}
