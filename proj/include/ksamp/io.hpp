#pragma once

// File formats: matrix CSV blocks, trajectory CSV, sample tables, and JSON
// encodings of matrices, operators, kernel/density specs and HMC configs.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ksamp/dynamics.hpp"
#include "ksamp/error.hpp"
#include "ksamp/kernels.hpp"
#include "ksamp/operator.hpp"
#include "ksamp/sampler.hpp"

namespace ksamp::io {

using json = nlohmann::json;

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Matrix CSV: a "rows,cols" header line followed by the row-major values.

inline void write_matrix_csv(std::ostream& os, const Mat& m) {
  os << m.rows() << ',' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << fmt_double(m(i, j));
    }
    os << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  while (used < s.size() && (s[used] == ' ' || s[used] == '\r')) ++used;
  if (used != s.size() || s.empty()) throw InvalidArgument(where + ": cannot parse number '" + s + "'");
  return v;
}

inline long parse_long(const std::string& s, const std::string& where) {
  const double v = parse_double(s, where);
  if (v != static_cast<double>(static_cast<long>(v))) throw InvalidArgument(where + ": expected an integer");
  return static_cast<long>(v);
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open '" + path + "' for reading");
  return in;
}

} // namespace detail

/// Reads every matrix block in the stream.
inline std::vector<Mat> read_matrix_csv(std::istream& is, const std::string& where = "matrix csv") {
  std::vector<Mat> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto head = detail::split(line);
    if (head.size() != 2) throw InvalidArgument(where + ": expected a 'rows,cols' header, got '" + line + "'");
    const long rows = detail::parse_long(head[0], where);
    const long cols = detail::parse_long(head[1], where);
    if (rows <= 0 || cols <= 0) throw InvalidArgument(where + ": non-positive matrix shape");
    Mat m(rows, cols);
    for (long i = 0; i < rows; ++i) {
      if (!std::getline(is, line)) throw InvalidArgument(where + ": truncated matrix block");
      const auto cells = detail::split(line);
      if (static_cast<long>(cells.size()) != cols) throw InvalidArgument(where + ": wrong number of columns");
      for (long j = 0; j < cols; ++j) m(i, j) = detail::parse_double(cells[static_cast<std::size_t>(j)], where);
    }
    require_finite(m, where.c_str());
    out.push_back(std::move(m));
  }
  return out;
}

inline std::vector<Mat> read_matrix_csv_file(const std::string& path) {
  auto in = detail::open_in(path);
  return read_matrix_csv(in, path);
}

inline Mat read_single_matrix_csv(const std::string& path) {
  auto blocks = read_matrix_csv_file(path);
  if (blocks.size() != 1) throw InvalidArgument(path + ": expected exactly one matrix block");
  return std::move(blocks.front());
}

// ---------------------------------------------------------------------------
// JSON helpers with field paths in error messages.

namespace detail {

template <class T>
T field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw InvalidArgument("config: missing field '" + path + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument("config: field '" + path + key + "' has the wrong type");
  }
}

template <class T>
T field_or(const json& j, const std::string& key, T fallback, const std::string& path) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return field<T>(j, key, path);
}

} // namespace detail

inline json to_json(const Mat& m) {
  json entries = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) entries.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"entries", entries}};
}

inline Mat matrix_from_json(const json& j, const std::string& path = "") {
  const auto rows = detail::field<long>(j, "rows", path);
  const auto cols = detail::field<long>(j, "cols", path);
  const auto entries = detail::field<std::vector<double>>(j, "entries", path);
  if (rows <= 0 || cols <= 0 || static_cast<long>(entries.size()) != rows * cols)
    throw InvalidArgument("config: matrix '" + path + "' has inconsistent shape");
  Mat m(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long k = 0; k < cols; ++k) m(i, k) = entries[static_cast<std::size_t>(i * cols + k)];
  require_finite(m, "matrix json");
  return m;
}

inline json to_json(const ObservableDictionary& dict) {
  json exps = json::array();
  for (const auto& [i, j] : dict.exponents) exps.push_back({i, j});
  return {{"max_total_degree", dict.max_total_degree}, {"exponents", exps}};
}

/// Accepts {"exponents": [[i, j], ...]} or {"max_total_degree": D}
/// (optionally "linear": true for the plain {x, y} dictionary).
inline ObservableDictionary dictionary_from_json(const json& j, const std::string& path = "dictionary.") {
  if (j.is_object() && j.contains("exponents")) {
    std::vector<std::pair<int, int>> exps;
    for (const auto& e : j.at("exponents")) {
      if (!e.is_array() || e.size() != 2) throw InvalidArgument("config: '" + path + "exponents' entries must be [i, j]");
      exps.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    return make_dictionary(std::move(exps));
  }
  if (detail::field_or<bool>(j, "linear", false, path)) return linear_dictionary();
  return poly_dictionary(detail::field_or<int>(j, "max_total_degree", 4, path));
}

inline json to_json(const TransferOperator& op) {
  json out = {{"k", to_json(op.k)}, {"dt", op.dt}, {"d", op.dim()},
              {"spectral_radius", spectral_radius(op.k)}};
  out["dictionary"] = op.dict ? to_json(*op.dict) : json(nullptr);
  return out;
}

inline TransferOperator operator_from_json(const json& j) {
  std::optional<ObservableDictionary> dict;
  if (j.contains("dictionary") && !j.at("dictionary").is_null()) dict = dictionary_from_json(j.at("dictionary"));
  return TransferOperator(matrix_from_json(j.at("k"), "k."), dict, detail::field<double>(j, "dt", ""));
}

inline json to_json(const KernelSpec& spec) {
  return std::visit(
      ksamp::detail::overloaded{
          [](const TraceKernel&) { return json{{"type", "trace"}}; },
          [](const KoopmanKernel& k) {
            json out = {{"type", "koopman"}, {"m", k.m}, {"T", k.t_horizon}};
            out["lambda"] = k.lambda_auto ? json("auto") : json(k.lambda);
            return out;
          },
          [](const ProjectionKernel& p) { return json{{"type", "projection"}, {"stab_tol", p.stab_tol}}; },
          [](const TrajectoryKernel& t) {
            return json{{"type", "trajectory"}, {"m", t.m}, {"T", t.t_horizon}, {"feature", to_json(t.feature)}};
          }},
      spec);
}

/// Accepts the JSON object form {type, m, T, lambda, stab_tol} or a
/// shorthand string such as "koopman:m=2,T=80,lambda=auto".
inline KernelSpec kernel_from_json(const json& j, const std::string& path = "kernel.") {
  if (j.is_string()) return parse_kernel_spec(j.get<std::string>());
  const auto type = detail::field<std::string>(j, "type", path);
  if (type == "trace") return TraceKernel{};
  if (type == "projection") {
    ProjectionKernel p;
    p.stab_tol = detail::field_or<double>(j, "stab_tol", p.stab_tol, path);
    ksamp::detail::require(p.stab_tol > 0.0, "config: " + path + "stab_tol must be positive");
    return p;
  }
  if (type == "koopman") {
    KoopmanKernel k;
    k.m = detail::field_or<int>(j, "m", k.m, path);
    k.t_horizon = detail::field_or<int>(j, "T", k.t_horizon, path);
    if (j.contains("lambda") && j.at("lambda").is_string()) {
      if (j.at("lambda").get<std::string>() != "auto")
        throw InvalidArgument("config: field '" + path + "lambda' must be a number or \"auto\"");
      k.lambda_auto = true;
    } else {
      k.lambda = detail::field_or<double>(j, "lambda", k.lambda, path);
    }
    ksamp::detail::require(k.m >= 1 && k.t_horizon >= 1 && k.lambda >= 0.0,
                           "config: " + path + " requires m >= 1, T >= 1, lambda >= 0");
    return k;
  }
  if (type == "trajectory") {
    TrajectoryKernel t;
    t.m = detail::field_or<int>(j, "m", t.m, path);
    t.t_horizon = detail::field_or<int>(j, "T", t.t_horizon, path);
    if (j.contains("feature")) t.feature = dictionary_from_json(j.at("feature"), path + "feature.");
    return t;
  }
  throw InvalidArgument("config: field '" + path + "type' has unknown kernel '" + type + "'");
}

inline json to_json(const DensitySpec& spec) {
  if (const auto* b = std::get_if<BetaDensity>(&spec)) return {{"type", "beta"}, {"alpha", b->alpha}, {"beta", b->beta}};
  return {{"type", "exponential"}, {"rate", std::get<ExponentialDensity>(spec).rate}};
}

inline DensitySpec density_from_json(const json& j, const std::string& path = "density.") {
  const auto type = detail::field_or<std::string>(j, "type", "beta", path);
  if (type == "beta") {
    BetaDensity b;
    b.alpha = detail::field_or<double>(j, "alpha", b.alpha, path);
    b.beta = detail::field_or<double>(j, "beta", b.beta, path);
    return b;
  }
  if (type == "exponential") return ExponentialDensity{detail::field_or<double>(j, "rate", 10.0, path)};
  throw InvalidArgument("config: field '" + path + "type' has unknown density '" + type + "'");
}

inline std::string to_string(ConstraintFunction f) {
  return f == ConstraintFunction::SpectralRadius ? "spectral_radius" : "trace";
}

inline json to_json(const ConstraintSpec& c) {
  return {{"f", to_string(c.f)},
          {"a", c.a},
          {"b", c.b},
          {"reflect_tol", c.reflect_tol},
          {"boundary_tol", c.boundary_tol},
          {"max_reflections", c.max_reflections}};
}

inline ConstraintSpec constraint_from_json(const json& j, const std::string& path = "constraint.") {
  ConstraintSpec c;
  const auto f = detail::field_or<std::string>(j, "f", "spectral_radius", path);
  if (f == "spectral_radius") c.f = ConstraintFunction::SpectralRadius;
  else if (f == "trace") c.f = ConstraintFunction::Trace;
  else throw InvalidArgument("config: field '" + path + "f' has unknown constraint function '" + f + "'");
  c.a = detail::field<double>(j, "a", path);
  c.b = detail::field<double>(j, "b", path);
  c.reflect_tol = detail::field_or<double>(j, "reflect_tol", c.reflect_tol, path);
  c.boundary_tol = detail::field_or<double>(j, "boundary_tol", c.boundary_tol, path);
  c.max_reflections = detail::field_or<int>(j, "max_reflections", c.max_reflections, path);
  return c;
}

inline json to_json(const HmcConfig& cfg) {
  json out = {{"step_size", cfg.step_size},   {"n_leapfrog", cfg.n_leapfrog},
              {"n_samples", cfg.n_samples},   {"n_chains", cfg.n_chains},
              {"n_prerun", cfg.n_prerun},     {"burn_in", cfg.effective_burn_in()},
              {"thin", cfg.thin},             {"seed", cfg.seed},
              {"density", to_json(cfg.density)}, {"kernel", to_json(cfg.kernel)}};
  out["constraint"] = cfg.constraint ? to_json(*cfg.constraint) : json(nullptr);
  return out;
}

/// Missing fields keep their defaults.
inline HmcConfig hmc_config_from_json(const json& j, HmcConfig cfg = {}, const std::string& path = "hmc.") {
  if (j.is_null()) return cfg;
  if (!j.is_object()) throw InvalidArgument("config: '" + path + "' must be an object");
  cfg.step_size = detail::field_or<double>(j, "step_size", cfg.step_size, path);
  cfg.n_leapfrog = detail::field_or<int>(j, "n_leapfrog", cfg.n_leapfrog, path);
  cfg.n_samples = detail::field_or<int>(j, "n_samples", cfg.n_samples, path);
  cfg.n_chains = detail::field_or<int>(j, "n_chains", cfg.n_chains, path);
  cfg.n_prerun = detail::field_or<int>(j, "n_prerun", cfg.n_prerun, path);
  if (j.contains("burn_in") && !j.at("burn_in").is_null()) cfg.burn_in = detail::field<int>(j, "burn_in", path);
  cfg.thin = detail::field_or<int>(j, "thin", cfg.thin, path);
  cfg.seed = detail::field_or<std::uint64_t>(j, "seed", cfg.seed, path);
  if (j.contains("density")) cfg.density = density_from_json(j.at("density"), path + "density.");
  if (j.contains("kernel")) cfg.kernel = kernel_from_json(j.at("kernel"), path + "kernel.");
  if (j.contains("constraint") && !j.at("constraint").is_null())
    cfg.constraint = constraint_from_json(j.at("constraint"), path + "constraint.");
  return cfg;
}

// ---------------------------------------------------------------------------
// Trajectories and sample tables

inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "t,x,y\n";
  for (std::size_t i = 0; i < traj.states.size(); ++i)
    os << fmt_double(static_cast<double>(i) * traj.dt) << ',' << fmt_double(traj.states[i][0]) << ','
       << fmt_double(traj.states[i][1]) << '\n';
}

inline Trajectory read_trajectory_csv(const std::string& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("t,x,y", 0) != 0) throw InvalidArgument(path + ": missing 't,x,y' header");
  Trajectory traj;
  std::vector<double> times;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split(line);
    if (cells.size() != 3) throw InvalidArgument(path + ": expected three columns");
    times.push_back(detail::parse_double(cells[0], path));
    traj.states.push_back({detail::parse_double(cells[1], path), detail::parse_double(cells[2], path)});
  }
  traj.dt = times.size() >= 2 ? times[1] - times[0] : 1.0;
  return traj;
}

inline std::string entry_column(Eigen::Index i, Eigen::Index j, Eigen::Index d) {
  // k_ij for single-digit indices, k_i_j otherwise so names stay unambiguous.
  if (d <= 10) return "k_" + std::to_string(i) + std::to_string(j);
  return "k_" + std::to_string(i) + "_" + std::to_string(j);
}

inline void write_samples_csv(std::ostream& os, const SampleSet& set) {
  const auto d = set.nominal.dim();
  os << "chain,index,distance,spectral_radius";
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) os << ',' << entry_column(i, j, d);
  os << '\n';
  for (const auto& s : set.samples) {
    os << s.chain << ',' << s.index << ',' << fmt_double(s.distance) << ',' << fmt_double(s.spectral_radius);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) os << ',' << fmt_double(s.k(i, j));
    os << '\n';
  }
}

inline json samples_manifest(const SampleSet& set) {
  return {{"config_echo", to_json(set.config_echo)},
          {"accept_rate", set.accept_rate},
          {"chain_accept_rates", set.chain_accept_rates},
          {"nominal", to_json(set.nominal)},
          {"n_samples", set.samples.size()},
          {"d", set.nominal.dim()}};
}

/// Reads a sample table written by write_samples_csv.
inline std::vector<SampleRecord> read_samples_csv(const std::string& path, Eigen::Index d) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument(path + ": empty sample table");
  const auto header = detail::split(line);
  if (static_cast<Eigen::Index>(header.size()) != 4 + d * d)
    throw InvalidArgument(path + ": header does not match operator dimension " + std::to_string(d));
  std::vector<SampleRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split(line);
    if (cells.size() != header.size()) throw InvalidArgument(path + ": ragged row");
    SampleRecord rec;
    rec.chain = static_cast<int>(detail::parse_long(cells[0], path));
    rec.index = static_cast<int>(detail::parse_long(cells[1], path));
    rec.distance = detail::parse_double(cells[2], path);
    rec.spectral_radius = detail::parse_double(cells[3], path);
    rec.k.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        rec.k(i, j) = detail::parse_double(cells[static_cast<std::size_t>(4 + i * d + j)], path);
    out.push_back(std::move(rec));
  }
  return out;
}

} // namespace ksamp::io
