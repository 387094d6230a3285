#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ksamp/ksamp.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ksamp;
using namespace ksamp::pipeline;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string output;
};

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file '" + path + "'");
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw InvalidArgument("config: top level must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw InvalidArgument("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

// Flags override file fields, which override defaults.
ExperimentConfig effective_config(const GlobalOptions& g, json overrides = json::object()) {
  json j = load_config_file(g.config_path);
  if (g.seed) j["hmc"]["seed"] = *g.seed;
  if (!g.output.empty()) j["outputs"] = g.output;
  j.merge_patch(overrides);
  return experiment_from_json(j);
}

const char* kReproHelp =
    "Run a full pipeline with fixed parameters and compare the trace and Koopman kernels.\n"
    "Both figures use Beta(1, 5) on the cosine distance and Koopman m=2, T=80\n"
    "(lambda=auto for fig1, lambda=0 for fig3).\n"
    "  fig1 desk: center system, dt=0.1, step 1e-4, L=100, N=200, 10 chains\n"
    "  fig1 full: as desk with N=1000, 50 chains\n"
    "  fig3 desk: Duffing, 12x12 initial conditions, 100 s of data at dt=0.05, step 5e-5, L=200,\n"
    "             N=100, 10 chains, burn-in 100, basins on an 8x8 grid over 100 s\n"
    "  fig3 full: as desk with 400 s of data, N=2000, 200 chains, 12x12 basin grid over 400 s";

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"ksamp: sample transfer-operator uncertainty sets with kernel-metric HMC"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--config", g.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "random seed (overrides hmc.seed)");
  app.add_option("--threads", g.threads, "worker threads; outputs do not depend on it")->check(CLI::PositiveNumber);
  app.add_option("--output", g.output, "output directory (overrides outputs)");

  auto* sim = app.add_subcommand("simulate", "simulate trajectories (and the exact operator for lti2x2)");
  bool snapshots = false;
  sim->add_flag("--snapshots", snapshots, "also write the lifted snapshot matrices");

  auto* est = app.add_subcommand("estimate", "estimate the nominal operator from a trajectory dataset");
  std::string data_dir;
  est->add_option("--data", data_dir, "directory of t,x,y trajectory CSVs (default: <output>/trajectories)");

  auto* samp = app.add_subcommand("sample", "draw operator samples around a nominal operator");
  std::string nominal_path, kernel_text, sample_name = "samples";
  std::optional<double> constrain_rho;
  std::optional<int> thin;
  samp->add_option("--nominal", nominal_path, "operator JSON (default: <output>/nominal.json)");
  samp->add_option("--kernel", kernel_text, "trace | projection | koopman:m=2,T=80,lambda=<num|auto>");
  samp->add_option("--constrain-rho", constrain_rho, "keep rho(K) within this margin of rho(K0)");
  samp->add_option("--thin", thin, "HMC steps per retained sample");
  samp->add_option("--name", sample_name, "file stem for the sample outputs");

  auto* ana = app.add_subcommand("analyze", "trace-determinant or basin analysis of a sample set");
  std::string samples_arg;
  ana->add_option("samples", samples_arg, "sample file stem, or its .json/.csv (relative to <output>)")->required();

  auto* rep = app.add_subcommand("repro", kReproHelp);
  std::string repro_name, scale_name = "desk";
  rep->add_option("name", repro_name, "fig1 | fig3")->required();
  rep->add_option("--scale", scale_name, "desk | full")->check(CLI::IsMember({"desk", "full"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sim) {
      const ExperimentConfig cfg = effective_config(g);
      OutputDir out(cfg.outputs, config_hash(cfg), "simulate");
      const auto summary = cmd_simulate(cfg, out, g.threads, snapshots);
      out.finish();
      std::cout << "wrote " << summary.n_trajectories << " trajectories to " << out.root().string() << '\n';
      if (summary.discrete_operator)
        std::cout << "discrete operator trace " << summary.discrete_operator->trace() << " det "
                  << summary.discrete_operator->determinant() << '\n';
    } else if (*est) {
      const ExperimentConfig cfg = effective_config(g);
      OutputDir out(cfg.outputs, config_hash(cfg), "estimate");
      const fs::path data = data_dir.empty() ? dataset_dir(cfg) : fs::path(data_dir);
      const TransferOperator op = cmd_estimate(cfg, out, data);
      out.finish();
      std::cout << "nominal operator " << op.dim() << "x" << op.dim() << ", spectral radius "
                << spectral_radius(op.k) << '\n';
    } else if (*samp) {
      json overrides = json::object();
      if (!kernel_text.empty()) {
        parse_kernel_spec(kernel_text);
        overrides["hmc"]["kernel"] = kernel_text;
      }
      if (constrain_rho) overrides["hmc"]["constrain_rho"] = *constrain_rho;
      if (thin) overrides["hmc"]["thin"] = *thin;
      const ExperimentConfig cfg = effective_config(g, overrides);
      const fs::path npath = nominal_path.empty() ? fs::path(cfg.outputs) / "nominal.json" : fs::path(nominal_path);
      const TransferOperator nominal = read_operator(npath);
      OutputDir out(cfg.outputs, config_hash(cfg), "sample");
      const SampleSet set = cmd_sample(cfg, out, nominal, sample_name, g.threads);
      out.finish();
      std::cout << "wrote " << set.samples.size() << " samples (" << kernel_name(set.config_echo.kernel)
                << " kernel), accept rate " << set.accept_rate << '\n';
    } else if (*ana) {
      const ExperimentConfig cfg = effective_config(g);
      fs::path stem = samples_arg;
      if (stem.is_relative() && !fs::exists(fs::path(stem).replace_extension(".json")))
        stem = fs::path(cfg.outputs) / stem;
      OutputDir out(cfg.outputs, config_hash(cfg), "analyze");
      const json summary = cmd_analyze(cfg, out, stem, g.threads);
      out.finish();
      std::cout << summary.dump(2) << '\n';
    } else if (*rep) {
      if (repro_name != "fig1" && repro_name != "fig3") {
        std::cerr << "repro: unknown experiment '" << repro_name << "' (expected fig1 or fig3)\n";
        return kExitUsage;
      }
      const Scale scale = parse_scale(scale_name);
      const std::uint64_t seed = g.seed.value_or(0);
      ExperimentConfig cfg = repro_name == "fig1" ? fig1_config(scale, seed) : fig3_config(scale, seed);
      cfg.outputs = g.output.empty() ? "repro_" + repro_name + "_" + scale_name : g.output;
      OutputDir out(cfg.outputs, config_hash(cfg), "repro " + repro_name + " " + scale_name);
      out.write_json("config.json", to_json(cfg));
      json report;
      std::string text;
      if (repro_name == "fig1") {
        const Fig1Report r = run_fig1(cfg, &out, g.threads);
        report = to_json(r);
        text = describe(r);
      } else {
        const Fig3Report r = run_fig3(cfg, &out, g.threads);
        report = to_json(r);
        text = describe(r);
      }
      out.write_json("report.json", report);
      out.write("report.txt", text);
      out.finish();
      std::cout << text;
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return 0;
}
