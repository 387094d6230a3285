#pragma once

// Experiment configuration and the simulate -> estimate -> sample -> analyze
// pipeline shared by the command-line tool and the acceptance checks.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ksamp/analysis.hpp"
#include "ksamp/dynamics.hpp"
#include "ksamp/io.hpp"
#include "ksamp/sampler.hpp"

#ifndef KSAMP_VERSION
#define KSAMP_VERSION "0.0.0"
#endif

namespace ksamp::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr const char* kVersion = KSAMP_VERSION;

enum class Experiment { Lti2x2, Duffing, Custom };

inline std::string to_string(Experiment e) {
  switch (e) {
  case Experiment::Lti2x2: return "lti2x2";
  case Experiment::Duffing: return "duffing";
  case Experiment::Custom: return "custom";
  }
  return "unknown";
}

inline Experiment parse_experiment(const std::string& s) {
  if (s == "lti2x2") return Experiment::Lti2x2;
  if (s == "duffing") return Experiment::Duffing;
  if (s == "custom") return Experiment::Custom;
  throw InvalidArgument("config: field 'experiment' must be lti2x2, duffing or custom (got '" + s + "')");
}

struct ExperimentConfig {
  Experiment experiment = Experiment::Duffing;

  // lti2x2: canonical class or an explicit generator
  PhaseClass kind = PhaseClass::Center;
  std::optional<Mat> generator;
  // duffing
  double damping = 0.3;
  // custom: directory of t,x,y trajectory CSVs
  std::string dataset;

  double dt = 0.05;
  double t_final = 400.0;
  int grid_n = 12;
  double lo = -2.0;
  double hi = 2.0;

  ObservableDictionary dictionary = poly_dictionary(4);
  double eps = 1e-6;

  HmcConfig hmc;
  std::optional<double> constrain_rho;

  BasinGridConfig basins;
  double center_tol = kSampledCenterTol;

  std::string outputs = "ksamp_out";

  int n_steps() const { return static_cast<int>(std::lround(t_final / dt)); }
};

inline PredictionMode parse_prediction_mode(const std::string& s) {
  if (s == "relift") return PredictionMode::Relift;
  if (s == "linear") return PredictionMode::Linear;
  throw InvalidArgument("config: field 'analysis.mode' must be relift or linear");
}

inline std::string to_string(PredictionMode m) { return m == PredictionMode::Relift ? "relift" : "linear"; }

/// Defaults depend on the experiment: lti2x2 uses dt = 0.1, the plain {x, y}
/// dictionary and a tiny ridge; duffing uses dt = 0.05, t = 400 s on a 12x12
/// grid and the degree-4 polynomial dictionary.
inline ExperimentConfig experiment_from_json(const json& j) {
  namespace d = io::detail;
  ExperimentConfig cfg;
  if (!j.is_null() && !j.is_object()) throw InvalidArgument("config: top level must be a JSON object");
  cfg.experiment = parse_experiment(d::field_or<std::string>(j, "experiment", "duffing", ""));
  if (cfg.experiment == Experiment::Lti2x2) {
    cfg.dt = 0.1;
    cfg.t_final = 5.0;
    cfg.dictionary = linear_dictionary();
    cfg.eps = 1e-12;
  }

  const json sys = j.is_object() && j.contains("system") ? j.at("system") : json::object();
  if (cfg.experiment == Experiment::Lti2x2) {
    if (sys.contains("a")) cfg.generator = io::matrix_from_json(sys.at("a"), "system.a.");
    else cfg.kind = parse_phase_class(d::field_or<std::string>(sys, "kind", "center", "system."));
    if (cfg.generator)
      detail::require(cfg.generator->rows() == 2 && cfg.generator->cols() == 2, "config: system.a must be 2x2");
  } else if (cfg.experiment == Experiment::Duffing) {
    cfg.damping = d::field_or<double>(sys, "damping", cfg.damping, "system.");
  } else {
    cfg.dataset = d::field<std::string>(sys, "dataset", "system.");
  }

  const json sim = j.is_object() && j.contains("simulation") ? j.at("simulation") : json::object();
  cfg.dt = d::field_or<double>(sim, "dt", cfg.dt, "simulation.");
  cfg.t_final = d::field_or<double>(sim, "t_final", cfg.t_final, "simulation.");
  cfg.grid_n = d::field_or<int>(sim, "grid_n", cfg.grid_n, "simulation.");
  cfg.lo = d::field_or<double>(sim, "lo", cfg.lo, "simulation.");
  cfg.hi = d::field_or<double>(sim, "hi", cfg.hi, "simulation.");
  detail::require(cfg.dt > 0.0, "config: simulation.dt must be positive");
  detail::require(cfg.t_final >= cfg.dt, "config: simulation.t_final must be at least one step");
  detail::require(cfg.grid_n >= 1, "config: simulation.grid_n must be >= 1");
  detail::require(cfg.lo < cfg.hi, "config: simulation.lo must be below simulation.hi");

  if (j.is_object() && j.contains("dictionary")) cfg.dictionary = io::dictionary_from_json(j.at("dictionary"));

  const json est = j.is_object() && j.contains("estimate") ? j.at("estimate") : json::object();
  cfg.eps = d::field_or<double>(est, "eps", cfg.eps, "estimate.");
  detail::require(cfg.eps >= 0.0, "config: estimate.eps must be >= 0");

  const json hmc = j.is_object() && j.contains("hmc") ? j.at("hmc") : json::object();
  cfg.hmc = io::hmc_config_from_json(hmc);
  if (hmc.contains("constrain_rho") && !hmc.at("constrain_rho").is_null()) {
    cfg.constrain_rho = d::field<double>(hmc, "constrain_rho", "hmc.");
    detail::require(*cfg.constrain_rho > 0.0, "config: hmc.constrain_rho must be positive");
  }
  validate(cfg.hmc);

  const json an = j.is_object() && j.contains("analysis") ? j.at("analysis") : json::object();
  cfg.basins.grid_n = d::field_or<int>(an, "grid_n", cfg.basins.grid_n, "analysis.");
  cfg.basins.lo = d::field_or<double>(an, "lo", cfg.basins.lo, "analysis.");
  cfg.basins.hi = d::field_or<double>(an, "hi", cfg.basins.hi, "analysis.");
  cfg.basins.horizon = d::field_or<double>(an, "horizon", cfg.basins.horizon, "analysis.");
  cfg.basins.attractor_tol = d::field_or<double>(an, "attractor_tol", cfg.basins.attractor_tol, "analysis.");
  cfg.basins.divergence_radius =
      d::field_or<double>(an, "divergence_radius", cfg.basins.divergence_radius, "analysis.");
  cfg.basins.mode = parse_prediction_mode(d::field_or<std::string>(an, "mode", "relift", "analysis."));
  cfg.center_tol = d::field_or<double>(an, "center_tol", cfg.center_tol, "analysis.");
  detail::require(cfg.basins.grid_n >= 1 && cfg.basins.horizon > 0.0, "config: analysis grid/horizon invalid");

  cfg.outputs = d::field_or<std::string>(j, "outputs", cfg.outputs, "");
  return cfg;
}

inline json to_json(const ExperimentConfig& cfg) {
  json sys = json::object();
  if (cfg.experiment == Experiment::Lti2x2) {
    if (cfg.generator) sys["a"] = io::to_json(*cfg.generator);
    else sys["kind"] = ksamp::to_string(cfg.kind);
  } else if (cfg.experiment == Experiment::Duffing) {
    sys["damping"] = cfg.damping;
  } else {
    sys["dataset"] = cfg.dataset;
  }
  json hmc = io::to_json(cfg.hmc);
  hmc["constrain_rho"] = cfg.constrain_rho ? json(*cfg.constrain_rho) : json(nullptr);
  return {{"experiment", to_string(cfg.experiment)},
          {"system", sys},
          {"simulation", {{"dt", cfg.dt}, {"t_final", cfg.t_final}, {"grid_n", cfg.grid_n}, {"lo", cfg.lo}, {"hi", cfg.hi}}},
          {"dictionary", io::to_json(cfg.dictionary)},
          {"estimate", {{"eps", cfg.eps}}},
          {"hmc", hmc},
          {"analysis",
           {{"grid_n", cfg.basins.grid_n},
            {"lo", cfg.basins.lo},
            {"hi", cfg.basins.hi},
            {"horizon", cfg.basins.horizon},
            {"attractor_tol", cfg.basins.attractor_tol},
            {"divergence_radius", cfg.basins.divergence_radius},
            {"mode", to_string(cfg.basins.mode)},
            {"center_tol", cfg.center_tol}}},
          {"outputs", cfg.outputs}};
}

inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the effective configuration; the output location is excluded.
inline std::string config_hash(const ExperimentConfig& cfg) {
  json j = to_json(cfg);
  j.erase("outputs");
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(j.dump());
  return os.str();
}

// ---------------------------------------------------------------------------
// Output directory with a manifest entry per written file and a sidecar log.

class OutputDir {
public:
  OutputDir(fs::path root, std::string config_hash, std::string command)
      : root_(std::move(root)), hash_(std::move(config_hash)), command_(std::move(command)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec || !fs::is_directory(root_))
      throw InvalidArgument("cannot create output directory '" + root_.string() + "'");
    const fs::path probe = root_ / ".ksamp_write_probe";
    {
      std::ofstream out(probe);
      if (!out) throw InvalidArgument("output directory '" + root_.string() + "' is not writable");
    }
    fs::remove(probe, ec);
  }

  const fs::path& root() const { return root_; }
  fs::path path(const std::string& rel) const { return root_ / rel; }

  void write(const std::string& rel, const std::string& content) {
    const fs::path p = root_ / rel;
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write '" + p.string() + "'");
    out << content;
    if (!out) throw InvalidArgument("failed writing '" + p.string() + "'");
    written_.push_back(rel);
  }

  void write_json(const std::string& rel, const json& j) { write(rel, j.dump(2) + "\n"); }

  /// Merges this run's files into manifest.json and appends to run.log.
  void finish() const {
    const fs::path mpath = root_ / "manifest.json";
    json manifest = json::object();
    if (fs::exists(mpath)) {
      std::ifstream in(mpath);
      try {
        manifest = json::parse(in);
      } catch (const json::exception&) {
        manifest = json::object();
      }
    }
    if (!manifest.contains("files") || !manifest.at("files").is_object()) manifest["files"] = json::object();
    for (const auto& rel : written_)
      manifest["files"][rel] = {{"config_hash", hash_}, {"version", kVersion}, {"command", command_}};
    {
      std::ofstream out(mpath, std::ios::binary | std::ios::trunc);
      if (!out) throw InvalidArgument("cannot write '" + mpath.string() + "'");
      out << manifest.dump(2) << "\n";
    }
    std::ofstream log(root_ / "run.log", std::ios::app);
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    log << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << command_ << " config=" << hash_ << " files=" << written_.size()
        << '\n';
  }

private:
  fs::path root_;
  std::string hash_;
  std::string command_;
  std::vector<std::string> written_;
};

inline std::string to_csv(const Mat& m) {
  std::ostringstream os;
  io::write_matrix_csv(os, m);
  return os.str();
}

inline std::string to_csv(const Trajectory& t) {
  std::ostringstream os;
  io::write_trajectory_csv(os, t);
  return os.str();
}

// ---------------------------------------------------------------------------
// simulate

inline Mat lti_generator(const ExperimentConfig& cfg) {
  return cfg.generator ? *cfg.generator : canonical_2x2(cfg.kind);
}

/// Fixed initial conditions for linear datasets; two independent directions
/// plus two mixed ones so X X^T is well conditioned.
inline std::vector<State> lti_initial_conditions() { return {{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}, {-1.0, 0.5}}; }

inline std::vector<Trajectory> simulate_trajectories(const ExperimentConfig& cfg, int threads = 1) {
  if (cfg.experiment == Experiment::Custom)
    throw InvalidArgument("simulate: the custom experiment reads an existing dataset");
  if (cfg.experiment == Experiment::Lti2x2) {
    std::vector<Trajectory> out;
    const LinearSystem sys{lti_generator(cfg)};
    for (const auto& x0 : lti_initial_conditions())
      out.push_back(simulate(sys, x0, cfg.dt, cfg.n_steps(), Integrator::ExactLinear));
    return out;
  }
  const auto grid = uniform_grid(cfg.grid_n, cfg.lo, cfg.hi);
  std::vector<Trajectory> out(grid.size());
  const DuffingSystem sys{cfg.damping};
  parallel_for(grid.size(), threads, [&](std::size_t i) { out[i] = simulate(sys, grid[i], cfg.dt, cfg.n_steps()); });
  return out;
}

inline std::string trajectory_name(std::size_t i) {
  std::ostringstream os;
  os << "trajectories/traj_" << std::setw(3) << std::setfill('0') << i << ".csv";
  return os.str();
}

struct SimulateSummary {
  std::size_t n_trajectories = 0;
  std::optional<Mat> discrete_operator;
};

inline SimulateSummary cmd_simulate(const ExperimentConfig& cfg, OutputDir& out, int threads, bool snapshots) {
  SimulateSummary summary;
  const auto trajs = simulate_trajectories(cfg, threads);
  summary.n_trajectories = trajs.size();
  for (std::size_t i = 0; i < trajs.size(); ++i) out.write(trajectory_name(i), to_csv(trajs[i]));
  if (cfg.experiment == Experiment::Lti2x2) {
    const Mat a = lti_generator(cfg);
    const Mat ad = lti_discretize(a, cfg.dt);
    summary.discrete_operator = ad;
    out.write("system/generator.csv", to_csv(a));
    out.write("system/discrete_operator.csv", to_csv(ad));
    out.write_json("system/discrete_operator.json", io::to_json(TransferOperator(ad, linear_dictionary(), cfg.dt)));
  }
  if (snapshots) {
    const auto [x, y] = lift_all(cfg.dictionary, trajs);
    out.write("snapshots/x.csv", to_csv(x));
    out.write("snapshots/y.csv", to_csv(y));
  }
  out.write_json("dataset.json", {{"experiment", to_string(cfg.experiment)},
                                  {"n_trajectories", trajs.size()},
                                  {"dt", cfg.dt},
                                  {"n_steps", cfg.n_steps()},
                                  {"dictionary", io::to_json(cfg.dictionary)}});
  return summary;
}

// ---------------------------------------------------------------------------
// estimate

inline std::vector<Trajectory> read_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InvalidArgument("dataset directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InvalidArgument("dataset directory '" + dir.string() + "' holds no trajectory CSVs");
  std::vector<Trajectory> out;
  for (const auto& f : files) out.push_back(io::read_trajectory_csv(f.string()));
  return out;
}

inline fs::path dataset_dir(const ExperimentConfig& cfg) {
  return cfg.experiment == Experiment::Custom ? fs::path(cfg.dataset) : fs::path(cfg.outputs) / "trajectories";
}

inline TransferOperator estimate_from_trajectories(const ExperimentConfig& cfg, const std::vector<Trajectory>& trajs) {
  const auto [x, y] = lift_all(cfg.dictionary, trajs);
  const double dt = trajs.front().dt;
  return dmd_estimate(x, y, cfg.eps, cfg.dictionary, dt);
}

inline TransferOperator cmd_estimate(const ExperimentConfig& cfg, OutputDir& out, const fs::path& data) {
  const TransferOperator op = estimate_from_trajectories(cfg, read_dataset(data));
  out.write_json("nominal.json", io::to_json(op));
  out.write("nominal.csv", to_csv(op.k));
  return op;
}

inline TransferOperator read_operator(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open operator file '" + path.string() + "'");
  try {
    return io::operator_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw InvalidArgument("operator file '" + path.string() + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// sample

inline HmcConfig resolve_hmc(const ExperimentConfig& cfg, const TransferOperator& nominal) {
  HmcConfig hmc = cfg.hmc;
  if (cfg.constrain_rho) {
    const double rho0 = spectral_radius(nominal.k);
    hmc.constraint = ConstraintSpec{ConstraintFunction::SpectralRadius, rho0 - *cfg.constrain_rho,
                                    rho0 + *cfg.constrain_rho};
  }
  return hmc;
}

inline SampleSet cmd_sample(const ExperimentConfig& cfg, OutputDir& out, const TransferOperator& nominal,
                            const std::string& name, int threads) {
  SampleSet set = run(resolve_hmc(cfg, nominal), nominal, threads);
  std::ostringstream csv;
  io::write_samples_csv(csv, set);
  out.write(name + ".csv", csv.str());
  out.write_json(name + ".json", io::samples_manifest(set));
  return set;
}

struct LoadedSamples {
  TransferOperator nominal;
  std::vector<SampleRecord> samples;
  double accept_rate = 0.0;
};

/// Loads <stem>.json and <stem>.csv.
inline LoadedSamples load_samples(const fs::path& stem) {
  fs::path base = stem;
  if (base.extension() == ".json" || base.extension() == ".csv") base.replace_extension();
  const fs::path mpath = fs::path(base.string() + ".json");
  std::ifstream in(mpath);
  if (!in) throw InvalidArgument("cannot open sample manifest '" + mpath.string() + "'");
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument("sample manifest '" + mpath.string() + "': " + e.what());
  }
  LoadedSamples out;
  out.nominal = io::operator_from_json(manifest.at("nominal"));
  out.accept_rate = manifest.value("accept_rate", 0.0);
  out.samples = io::read_samples_csv(base.string() + ".csv", out.nominal.dim());
  return out;
}

// ---------------------------------------------------------------------------
// analyze

inline std::string tracedet_csv(const TraceDetReport& r) {
  std::ostringstream os;
  os << "chain,index,distance,spectral_radius,trace,det,class,has_log\n";
  for (const auto& row : r.rows)
    os << row.chain << ',' << row.index << ',' << io::fmt_double(row.distance) << ','
       << io::fmt_double(row.spectral_radius) << ',' << io::fmt_double(row.point.trace) << ','
       << io::fmt_double(row.point.det) << ',' << ksamp::to_string(row.point.label) << ','
       << (row.point.has_log ? 1 : 0) << '\n';
  return os.str();
}

inline json tracedet_summary(const TraceDetReport& r) {
  return {{"kind", "tracedet"},          {"n_samples", r.rows.size()},        {"histogram", r.histogram},
          {"trace_iqr", r.trace_iqr},    {"median_distance", r.median_distance}, {"accept_rate", r.accept_rate},
          {"without_log", r.without_log}};
}

inline std::string basin_csv(const BasinReport& r) {
  std::ostringstream os;
  os << "chain,index,distance,spectral_radius,left,right,diverged,undecided\n";
  for (const auto& row : r.rows)
    os << row.chain << ',' << row.index << ',' << io::fmt_double(row.distance) << ','
       << io::fmt_double(row.spectral_radius) << ',' << row.counts[0] << ',' << row.counts[1] << ','
       << row.counts[2] << ',' << row.counts[3] << '\n';
  return os.str();
}

inline json basin_summary(const BasinReport& r) {
  return {{"kind", "basins"},
          {"n_samples", r.rows.size()},
          {"counts", {{"left", r.totals[0]}, {"right", r.totals[1]}, {"diverged", r.totals[2]}, {"undecided", r.totals[3]}}},
          {"diverged_fraction", r.diverged_fraction},
          {"accept_rate", r.accept_rate}};
}

inline bool uses_tracedet(const ExperimentConfig& cfg, const TransferOperator& nominal) {
  if (cfg.experiment == Experiment::Lti2x2) return true;
  if (cfg.experiment == Experiment::Duffing) return false;
  return nominal.dim() == 2 && (!nominal.dict || *nominal.dict == linear_dictionary());
}

inline json cmd_analyze(const ExperimentConfig& cfg, OutputDir& out, const fs::path& samples_stem, int threads) {
  const LoadedSamples loaded = load_samples(samples_stem);
  const std::string stem = fs::path(samples_stem).replace_extension().filename().string();
  if (uses_tracedet(cfg, loaded.nominal)) {
    const auto report = analyze_tracedet(loaded.samples, loaded.nominal.dt, cfg.center_tol, loaded.accept_rate);
    out.write(stem + "_analysis.csv", tracedet_csv(report));
    const json summary = tracedet_summary(report);
    out.write_json(stem + "_analysis.json", summary);
    return summary;
  }
  if (!loaded.nominal.dict) throw InvalidArgument("analyze: samples carry no dictionary for basin prediction");
  if (!(*loaded.nominal.dict == cfg.dictionary))
    throw InvalidArgument("analyze: sample dictionary does not match the configured dictionary");
  const auto report =
      analyze_basins(loaded.samples, *loaded.nominal.dict, loaded.nominal.dt, cfg.basins, threads, loaded.accept_rate);
  out.write(stem + "_analysis.csv", basin_csv(report));
  const json summary = basin_summary(report);
  out.write_json(stem + "_analysis.json", summary);
  return summary;
}

// ---------------------------------------------------------------------------
// repro

enum class Scale { Desk, Full };

inline Scale parse_scale(const std::string& s) {
  if (s == "desk") return Scale::Desk;
  if (s == "full") return Scale::Full;
  throw InvalidArgument("repro: scale must be desk or full");
}

inline std::string to_string(Scale s) { return s == Scale::Desk ? "desk" : "full"; }

/// Center system sampled with the trace and Koopman kernels.
/// desk: N = 200 over 10 chains; full: N = 1000 over 50 chains.
inline ExperimentConfig fig1_config(Scale scale, std::uint64_t seed) {
  ExperimentConfig cfg = experiment_from_json({{"experiment", "lti2x2"}, {"system", {{"kind", "center"}}}});
  cfg.hmc.step_size = 1e-4;
  cfg.hmc.n_leapfrog = 100;
  cfg.hmc.n_samples = scale == Scale::Desk ? 200 : 1000;
  cfg.hmc.n_chains = scale == Scale::Desk ? 10 : 50;
  cfg.hmc.n_prerun = cfg.hmc.n_chains;
  cfg.hmc.density = BetaDensity{1.0, 5.0};
  cfg.hmc.seed = seed;
  return cfg;
}

// fig1 discounts with lambda = 2 log rho(K0); fig3 uses lambda = 0.
inline KoopmanKernel repro_koopman_kernel(bool auto_lambda) {
  KoopmanKernel k;
  k.m = 2;
  k.t_horizon = 80;
  k.lambda = 0.0;
  k.lambda_auto = auto_lambda;
  return k;
}

/// Duffing system sampled with the trace and Koopman kernels.
/// desk: N = 100 over 10 chains, 100 s of data and prediction, 8x8 grid;
/// full: N = 2000 over 200 chains, 400 s, 12x12 grid.
inline constexpr int kFig3DeskBurnIn = 100;

inline ExperimentConfig fig3_config(Scale scale, std::uint64_t seed) {
  ExperimentConfig cfg = experiment_from_json({{"experiment", "duffing"}});
  const bool desk = scale == Scale::Desk;
  cfg.t_final = desk ? 100.0 : 400.0;
  cfg.hmc.step_size = 5e-5;
  cfg.hmc.n_leapfrog = 200;
  cfg.hmc.n_samples = desk ? 100 : 2000;
  cfg.hmc.n_chains = desk ? 10 : 200;
  cfg.hmc.n_prerun = cfg.hmc.n_chains;
  cfg.hmc.burn_in = kFig3DeskBurnIn;
  cfg.hmc.density = BetaDensity{1.0, 5.0};
  cfg.hmc.seed = seed;
  cfg.basins.grid_n = desk ? 8 : 12;
  cfg.basins.horizon = cfg.t_final;
  return cfg;
}

struct Fig1Report {
  TraceDetReport trace;
  TraceDetReport koopman;
  double seconds = 0.0;
  bool spread_tighter() const { return koopman.trace_iqr < trace.trace_iqr; }
  bool distance_matched() const { return koopman.median_distance >= trace.median_distance; }
  bool holds() const { return spread_tighter() && distance_matched(); }
};

struct Fig3Report {
  BasinReport trace;
  BasinReport koopman;
  double nominal_rho = 0.0;
  double seconds = 0.0;
  bool holds() const { return trace.diverged_fraction > koopman.diverged_fraction; }
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline Fig1Report run_fig1(ExperimentConfig cfg, OutputDir* out, int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  Fig1Report report;
  const TransferOperator nominal(lti_discretize(lti_generator(cfg), cfg.dt), linear_dictionary(), cfg.dt);
  if (out) {
    out->write("system/discrete_operator.csv", to_csv(nominal.k));
    out->write_json("system/discrete_operator.json", io::to_json(nominal));
  }
  for (const bool koop : {false, true}) {
    ExperimentConfig c = cfg;
    c.hmc.kernel = koop ? KernelSpec(repro_koopman_kernel(true)) : KernelSpec(TraceKernel{});
    const std::string name = koop ? "samples_koopman" : "samples_trace";
    SampleSet set = out ? cmd_sample(c, *out, nominal, name, threads) : run(resolve_hmc(c, nominal), nominal, threads);
    auto r = analyze_tracedet(set.samples, nominal.dt, c.center_tol, set.accept_rate);
    if (out) {
      out->write(name + "_analysis.csv", tracedet_csv(r));
      out->write_json(name + "_analysis.json", tracedet_summary(r));
    }
    (koop ? report.koopman : report.trace) = std::move(r);
  }
  report.seconds = seconds_since(t0);
  return report;
}

inline Fig3Report run_fig3(ExperimentConfig cfg, OutputDir* out, int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  Fig3Report report;
  const auto trajs = simulate_trajectories(cfg, threads);
  if (out)
    for (std::size_t i = 0; i < trajs.size(); ++i) out->write(trajectory_name(i), to_csv(trajs[i]));
  const TransferOperator nominal = estimate_from_trajectories(cfg, trajs);
  report.nominal_rho = spectral_radius(nominal.k);
  if (out) {
    out->write_json("nominal.json", io::to_json(nominal));
    out->write("nominal.csv", to_csv(nominal.k));
  }
  for (const bool koop : {false, true}) {
    ExperimentConfig c = cfg;
    c.hmc.kernel = koop ? KernelSpec(repro_koopman_kernel(false)) : KernelSpec(TraceKernel{});
    const std::string name = koop ? "samples_koopman" : "samples_trace";
    SampleSet set = out ? cmd_sample(c, *out, nominal, name, threads) : run(resolve_hmc(c, nominal), nominal, threads);
    auto r = analyze_basins(set.samples, cfg.dictionary, nominal.dt, c.basins, threads, set.accept_rate);
    if (out) {
      out->write(name + "_analysis.csv", basin_csv(r));
      out->write_json(name + "_analysis.json", basin_summary(r));
    }
    (koop ? report.koopman : report.trace) = std::move(r);
  }
  report.seconds = seconds_since(t0);
  return report;
}

inline json to_json(const Fig1Report& r) {
  return {{"figure", "fig1"},
          {"trace_kernel", tracedet_summary(r.trace)},
          {"koopman_kernel", tracedet_summary(r.koopman)},
          {"koopman_spread_tighter", r.spread_tighter()},
          {"koopman_median_distance_not_smaller", r.distance_matched()},
          {"comparison_holds", r.holds()}};
}

inline json to_json(const Fig3Report& r) {
  return {{"figure", "fig3"},
          {"nominal_spectral_radius", r.nominal_rho},
          {"trace_kernel", basin_summary(r.trace)},
          {"koopman_kernel", basin_summary(r.koopman)},
          {"comparison_holds", r.holds()}};
}

inline std::string describe(const Fig1Report& r) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "fig1: trace(A) IQR  trace kernel " << r.trace.trace_iqr << "  koopman kernel " << r.koopman.trace_iqr << '\n'
     << "fig1: median cosine distance  trace kernel " << r.trace.median_distance << "  koopman kernel "
     << r.koopman.median_distance << '\n'
     << "fig1: accept rate  trace kernel " << r.trace.accept_rate << "  koopman kernel " << r.koopman.accept_rate << '\n'
     << "fig1: koopman spread tighter at no smaller median distance: " << (r.holds() ? "yes" : "no") << '\n';
  return os.str();
}

inline std::string describe(const Fig3Report& r) {
  std::ostringstream os;
  os << std::setprecision(6);
  auto line = [&](const char* name, const BasinReport& b) {
    os << "fig3: " << name << " kernel  left " << b.totals[0] << "  right " << b.totals[1] << "  diverged "
       << b.totals[2] << "  undecided " << b.totals[3] << "  diverged fraction " << b.diverged_fraction
       << "  accept rate " << b.accept_rate << '\n';
  };
  line("trace", r.trace);
  line("koopman", r.koopman);
  os << "fig3: trace kernel diverges more often than koopman kernel: " << (r.holds() ? "yes" : "no") << '\n';
  return os.str();
}

} // namespace ksamp::pipeline
