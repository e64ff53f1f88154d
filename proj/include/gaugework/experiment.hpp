#pragma once

// Experiment driver behind the gaugework command line tool: config parsing,
// sweeps over (n_max, support, beta, seed, lambda) and CSV / JSON-lines output.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "gaugework/counterexample.hpp"
#include "gaugework/fields.hpp"
#include "gaugework/gauss.hpp"
#include "gaugework/hamiltonian.hpp"
#include "gaugework/model_space.hpp"
#include "gaugework/thermo.hpp"

#ifndef GAUGEWORK_VERSION
#define GAUGEWORK_VERSION "0.1.0"
#endif

namespace gaugework::cli {

inline constexpr int kSchemaVersion = 1;

enum ExitCode : int { kOk = 0, kConfigError = 2, kCapExceeded = 3, kNumericFailure = 4 };

class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& message)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

enum class SupportChoice { full, physical, both };

enum class Format { csv, jsonl };

struct ExperimentConfig {
  LatticeConfig model;
  KickSpec kick;
  std::vector<std::uint64_t> seeds{1};
  std::vector<double> lambda_grid{0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0};
  std::vector<double> beta_grid;  // empty: model.beta
  std::vector<int> n_max_grid;    // empty: model.n_max
  SupportChoice support = SupportChoice::full;
  std::string output_dir = "gaugework-out";
  Format format = Format::csv;

  std::vector<double> betas() const { return beta_grid.empty() ? std::vector<double>{model.beta} : beta_grid; }
  std::vector<int> n_maxes() const { return n_max_grid.empty() ? std::vector<int>{model.n_max} : n_max_grid; }
  std::vector<Support> supports() const {
    switch (support) {
      case SupportChoice::full: return {Support::full};
      case SupportChoice::physical: return {Support::physical};
      case SupportChoice::both: return {Support::full, Support::physical};
    }
    return {};
  }
};

// ---------------------------------------------------------------------------
// Formatting

/// %.17g, with negative zero printed as 0.
inline std::string fmt(double v) {
  if (v == 0.0) v = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string_view to_string(SupportChoice s) {
  switch (s) {
    case SupportChoice::full: return "full";
    case SupportChoice::physical: return "physical";
    case SupportChoice::both: return "both";
  }
  return "full";
}

inline std::string_view to_string(Format f) { return f == Format::csv ? "csv" : "jsonl"; }

inline std::string extension(Format f) { return f == Format::csv ? ".csv" : ".jsonl"; }

// ---------------------------------------------------------------------------
// Config

namespace detail {

template <class T>
T scalar_as(const YAML::Node& node, const std::string& key, int line, const char* expected) {
  if (!node.IsScalar()) throw ConfigError(line, key + ": expected " + std::string(expected));
  try {
    return node.as<T>();
  } catch (const YAML::BadConversion&) {
    throw ConfigError(line, key + ": expected " + std::string(expected) + ", got '" + node.Scalar() + "'");
  }
}

inline double real_value(const YAML::Node& node, const std::string& key, int line) {
  const auto v = scalar_as<double>(node, key, line, "a real number");
  if (!std::isfinite(v)) throw ConfigError(line, key + ": must be finite");
  return v;
}

inline int int_value(const YAML::Node& node, const std::string& key, int line) {
  return scalar_as<int>(node, key, line, "an integer");
}

inline std::uint64_t seed_value(const YAML::Node& node, const std::string& key, int line) {
  const auto v = scalar_as<long long>(node, key, line, "a non-negative integer");
  if (v < 0) throw ConfigError(line, key + ": seeds must be non-negative");
  return static_cast<std::uint64_t>(v);
}

template <class F>
auto list_value(const YAML::Node& node, const std::string& key, int line, F&& item) {
  using T = decltype(item(node, key, line));
  std::vector<T> out;
  if (node.IsSequence()) {
    for (const auto& v : node) out.push_back(item(v, key, v.Mark().line + 1));
  } else {
    out.push_back(item(node, key, line));
  }
  if (out.empty()) throw ConfigError(line, key + ": list must not be empty");
  return out;
}

}  // namespace detail

/// Flat mapping of dotted keys, e.g. `model.n_max: 2`. See configs/ and README.md for
/// the schema.
inline ExperimentConfig parse_config(const YAML::Node& root) {
  if (!root.IsMap()) throw ConfigError(root.Mark().line + 1, "top level must be a mapping of dotted keys");
  ExperimentConfig c;
  std::set<std::string> seen;
  bool has_version = false;
  for (auto it = root.begin(); it != root.end(); ++it) {
    const int line = it->first.Mark().line + 1;
    if (!it->first.IsScalar()) throw ConfigError(line, "keys must be plain strings");
    const std::string key = it->first.Scalar();
    const YAML::Node& v = it->second;
    if (!seen.insert(key).second) throw ConfigError(line, "duplicate key '" + key + "'");
    if (v.IsMap()) throw ConfigError(line, key + ": nested mappings are not allowed, use dotted keys");

    using namespace detail;
    if (key == "schema_version") {
      const int version = int_value(v, key, line);
      if (version != kSchemaVersion) {
        throw ConfigError(line, "unsupported schema_version " + std::to_string(version) + " (expected " +
                                    std::to_string(kSchemaVersion) + ")");
      }
      has_version = true;
    } else if (key == "model.num_sites") {
      c.model.num_sites = int_value(v, key, line);
    } else if (key == "model.dimension") {
      c.model.dimension = int_value(v, key, line);
    } else if (key == "model.width") {
      c.model.width = int_value(v, key, line);
    } else if (key == "model.n_max") {
      c.model.n_max = int_value(v, key, line);
    } else if (key == "model.mass") {
      c.model.mass = real_value(v, key, line);
    } else if (key == "model.charge") {
      c.model.charge = real_value(v, key, line);
    } else if (key == "model.beta") {
      c.model.beta = real_value(v, key, line);
    } else if (key == "model.dim_cap") {
      c.model.dim_cap = static_cast<std::size_t>(seed_value(v, key, line));
    } else if (key == "model.dense_cap") {
      c.model.dense_cap = static_cast<std::size_t>(seed_value(v, key, line));
    } else if (key == "kick.kind") {
      const auto name = scalar_as<std::string>(v, key, line, "a kick kind");
      const auto kind = parse_kick_kind(name);
      if (!kind) throw ConfigError(line, key + ": unknown kick kind '" + name + "'");
      c.kick.kind = *kind;
    } else if (key == "kick.strength") {
      c.kick.strength = real_value(v, key, line);
    } else if (key == "kick.duration") {
      c.kick.duration = real_value(v, key, line);
    } else if (key == "kick.seeds") {
      c.seeds = list_value(v, key, line, seed_value);
    } else if (key == "sweep.lambda") {
      c.lambda_grid = list_value(v, key, line, real_value);
    } else if (key == "sweep.beta") {
      c.beta_grid = list_value(v, key, line, real_value);
      for (double b : c.beta_grid) {
        if (!(b > 0.0)) throw ConfigError(line, key + ": beta must be positive");
      }
    } else if (key == "sweep.n_max") {
      c.n_max_grid = list_value(v, key, line, int_value);
    } else if (key == "sweep.support") {
      const auto s = scalar_as<std::string>(v, key, line, "full, physical or both");
      if (s == "full") c.support = SupportChoice::full;
      else if (s == "physical") c.support = SupportChoice::physical;
      else if (s == "both") c.support = SupportChoice::both;
      else throw ConfigError(line, key + ": expected full, physical or both, got '" + s + "'");
    } else if (key == "output.dir") {
      c.output_dir = scalar_as<std::string>(v, key, line, "a path");
    } else if (key == "output.format") {
      const auto s = scalar_as<std::string>(v, key, line, "csv or jsonl");
      if (s == "csv") c.format = Format::csv;
      else if (s == "jsonl") c.format = Format::jsonl;
      else throw ConfigError(line, key + ": expected csv or jsonl, got '" + s + "'");
    } else {
      throw ConfigError(line, "unknown key '" + key + "'");
    }
  }
  if (!has_version) throw ConfigError(1, "missing schema_version");
  if (!(c.model.beta > 0.0)) throw ConfigError(0, "model.beta must be positive");
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  try {
    return parse_config(YAML::Load(text));
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.mark.line + 1, e.msg);
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot read config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config_text(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(0, path + ": " + e.what());
  }
}

/// Resolved configuration as sorted key=value lines; input of the config hash.
inline std::string canonical_text(const ExperimentConfig& c) {
  auto join = [](const auto& values) {
    std::string s;
    for (const auto& v : values) {
      if (!s.empty()) s += ',';
      if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>) s += fmt(v);
      else s += std::to_string(v);
    }
    return s;
  };
  std::map<std::string, std::string> kv;
  kv["schema_version"] = std::to_string(kSchemaVersion);
  kv["model.num_sites"] = std::to_string(c.model.num_sites);
  kv["model.dimension"] = std::to_string(c.model.dimension);
  kv["model.width"] = std::to_string(c.model.width);
  kv["model.mass"] = fmt(c.model.mass);
  kv["model.charge"] = fmt(c.model.charge);
  kv["model.dim_cap"] = std::to_string(c.model.dim_cap);
  kv["model.dense_cap"] = std::to_string(c.model.dense_cap);
  kv["kick.kind"] = std::string(to_string(c.kick.kind));
  kv["kick.strength"] = fmt(c.kick.strength);
  kv["kick.duration"] = fmt(c.kick.duration);
  kv["kick.seeds"] = join(c.seeds);
  kv["sweep.lambda"] = join(c.lambda_grid);
  kv["sweep.beta"] = join(c.betas());
  kv["sweep.n_max"] = join(c.n_maxes());
  kv["sweep.support"] = std::string(to_string(c.support));
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(fnv1a(canonical_text(c))));
  return buf;
}

// ---------------------------------------------------------------------------
// Output

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::ordered_json provenance(const ExperimentConfig& c, std::string_view subcommand) {
  nlohmann::ordered_json p;
  p["tool"] = "gaugework";
  p["code_version"] = GAUGEWORK_VERSION;
  p["subcommand"] = subcommand;
  p["schema_version"] = kSchemaVersion;
  p["config_hash"] = config_hash(c);
  p["seeds"] = c.seeds;
  p["kick"] = {{"kind", to_string(c.kick.kind)}, {"strength", c.kick.strength}, {"duration", c.kick.duration}};
  p["tolerances"] = {{"hermitian", tol::hermitian},
                     {"unitary", tol::unitary},
                     {"kernel", tol::kernel},
                     {"trace_orderings", tol::trace_orderings},
                     {"kick_reject", tol::kick_reject}};
  p["timestamp"] = utc_timestamp();
  return p;
}

/// One output table. CSV: '#' provenance lines, a header row, data rows.
/// JSON-lines: a provenance object on the first line, then one object per row.
class TableWriter {
 public:
  TableWriter(const std::filesystem::path& path, Format format, const nlohmann::ordered_json& prov,
              std::vector<std::string> columns)
      : out_(path), format_(format), columns_(std::move(columns)) {
    if (!out_) throw std::runtime_error("cannot write '" + path.string() + "'");
    if (format_ == Format::csv) {
      for (const auto& [k, v] : prov.items()) out_ << "# " << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << '\n';
      for (std::size_t i = 0; i < columns_.size(); ++i) out_ << (i ? "," : "") << columns_[i];
      out_ << '\n';
    } else {
      out_ << nlohmann::ordered_json{{"provenance", prov}}.dump() << '\n';
    }
  }

  /// `row` must hold every column; in JSON-lines mode extra keys are kept as well.
  void write(const nlohmann::ordered_json& row) {
    if (format_ == Format::jsonl) {
      out_ << row.dump() << '\n';
      return;
    }
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      const auto& v = row.at(columns_[i]);
      out_ << (i ? "," : "");
      if (v.is_number_float()) out_ << fmt(v.get<double>());
      else if (v.is_string()) out_ << v.get<std::string>();
      else out_ << v.dump();
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
  Format format_;
  std::vector<std::string> columns_;
};

/// Lines of an output file that are not provenance: for CSV everything except
/// '#' lines, for JSON-lines everything after the first line.
inline std::string data_section(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line, out;
  bool first = true;
  const bool jsonl = path.extension() == ".jsonl";
  while (std::getline(in, line)) {
    const bool skip = jsonl ? first : (!line.empty() && line[0] == '#');
    first = false;
    if (!skip) out += line + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Model operators for one n_max; shared read-only by every grid point.
struct ModelBundle {
  LatticeConfig config;
  FieldSet fields;
  HamiltonianParts hamiltonian;
  GaussSet gauss;
};

inline LatticeConfig model_for(const ExperimentConfig& c, int n_max) {
  LatticeConfig m = c.model;
  m.n_max = n_max;
  return m;
}

/// Checks every grid point against the caps before any work is done. Throws
/// CapExceeded whose message names the point.
inline void precheck_caps(const ExperimentConfig& c, bool needs_dense) {
  for (int n : c.n_maxes()) {
    const std::string point = "grid point n_max=" + std::to_string(n);
    SpaceDescriptor space;
    try {
      space = build_space(model_for(c, n));
    } catch (const CapExceeded& e) {
      throw CapExceeded(point + ", Hilbert space (model.dim_cap)", e.required(), e.cap());
    }
    if (needs_dense) space.require_dense(point + ", dense stages (model.dense_cap)");
  }
}

inline std::unique_ptr<ModelBundle> build_bundle(const ExperimentConfig& c, int n_max, bool with_gauss) {
  auto b = std::make_unique<ModelBundle>();
  b->config = model_for(c, n_max);
  const auto space = build_space(b->config);
  b->fields = build_fields(space, b->config);
  b->hamiltonian = build_h_total(b->fields, b->config);
  if (with_gauss) b->gauss = build_gauss(b->fields);
  return b;
}

struct SeriesKey {
  std::size_t bundle = 0;
  int n_max = 0;
  Support support = Support::full;
  double beta = 0.0;
  std::uint64_t seed = 0;
};

/// One (n_max, support, beta, seed) group: a thermal state, a kick and the lambda sweep.
struct SeriesResult {
  SeriesKey key;
  double w0 = 0.0;
  double sum_div_sq = 0.0;
  double max_abs_div = 0.0;
  double oracle = 0.0;
  double mean_energy = 0.0;
  double current_imaginary = 0.0;
  double kick_gauss_defect = 0.0;
  bool projected = false;
  std::vector<PointResult> points;

  double lambda_star() const {
    return sum_div_sq > 0.0 ? w0 / sum_div_sq : std::numeric_limits<double>::infinity();
  }
};

/// Runs `task(i)` for i in [0, count) on `threads` workers; results are stored by
/// index so the merged order never depends on scheduling.
template <class Result, class Task>
std::vector<Result> parallel_map(std::size_t count, int threads, Task task) {
  std::vector<Result> out(count);
  std::size_t workers = threads <= 0 ? std::max(1u, std::thread::hardware_concurrency())
                                     : static_cast<std::size_t>(threads);
  workers = std::min(workers, std::max<std::size_t>(count, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = task(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          out[i] = task(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

inline SeriesResult run_series(const ModelBundle& b, const SeriesKey& key, const ExperimentConfig& c,
                               bool with_identities) {
  SeriesResult r;
  r.key = key;
  const ThermalState state = gibbs_state(b.hamiltonian.total, key.beta, key.support, b.gauss);
  KickSpec spec = c.kick;
  spec.seed = key.seed;
  const Kick kick = build_kick(spec, b.gauss, b.fields);
  r.kick_gauss_defect = kick.gauss_defect;
  r.projected = kick.projected;
  const KickContext ctx(b.fields, b.hamiltonian, b.gauss, state, kick.unitary);
  r.w0 = ctx.w0;
  r.mean_energy = ctx.mean_energy;
  r.current_imaginary = ctx.currents.max_imaginary;
  for (double d : ctx.currents.divergence) {
    r.sum_div_sq += d * d;
    r.max_abs_div = std::max(r.max_abs_div, std::abs(d));
  }
  r.oracle = min_work_oracle(b.hamiltonian.total, state);
  for (double lambda : c.lambda_grid) {
    PointResult p = evaluate_point(ctx, lambda, r.oracle, with_identities);
    if (p.defects) p.defects->seed = key.seed;
    r.points.push_back(std::move(p));
  }
  return r;
}

struct SweepResult {
  std::vector<std::unique_ptr<ModelBundle>> bundles;
  std::vector<SeriesResult> series;
};

inline SweepResult run_sweep(const ExperimentConfig& c, int threads, bool with_identities) {
  SweepResult out;
  std::vector<SeriesKey> keys;
  const auto n_maxes = c.n_maxes();
  for (std::size_t i = 0; i < n_maxes.size(); ++i) {
    out.bundles.push_back(build_bundle(c, n_maxes[i], true));
    for (Support s : c.supports()) {
      for (double beta : c.betas()) {
        for (std::uint64_t seed : c.seeds) keys.push_back({i, n_maxes[i], s, beta, seed});
      }
    }
  }
  out.series = parallel_map<SeriesResult>(keys.size(), threads, [&](std::size_t i) {
    return run_series(*out.bundles[keys[i].bundle], keys[i], c, with_identities);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Tables

inline const std::vector<std::string>& work_columns() {
  static const std::vector<std::string> cols{
      "n_max",  "beta",           "lambda",     "seed",                  "support",
      "w_direct", "w0",           "w_pred33",   "w_pred35",              "w_pred37",
      "oracle_bound", "ccr_budget", "max_identity_residual", "gauss_defect_U", "gauss_defect_V"};
  return cols;
}

inline nlohmann::ordered_json work_row(const SeriesResult& s, const PointResult& p) {
  const WorkReport& w = p.work;
  nlohmann::ordered_json row;
  row["n_max"] = s.key.n_max;
  row["beta"] = s.key.beta;
  row["lambda"] = w.lambda;
  row["seed"] = s.key.seed;
  row["support"] = to_string(s.key.support);
  row["w_direct"] = w.w_direct;
  row["w0"] = w.w0;
  row["w_pred33"] = w.w_pred33;
  row["w_pred35"] = w.w_pred35;
  row["w_pred37"] = w.w_pred37;
  row["oracle_bound"] = w.oracle_bound;
  row["ccr_budget"] = p.defects ? p.defects->ccr_budget : 0.0;
  row["max_identity_residual"] = p.defects ? p.defects->max_residual() : 0.0;
  row["gauss_defect_U"] = p.gauss_defect_u;
  row["gauss_defect_V"] = p.gauss_defect_v;
  row["w_via_eq2"] = w.w_via_eq2;
  row["gap"] = w.gap();
  row["defect_budget"] = w.defect_budget;
  row["sum_div_sq"] = w.sum_div_sq;
  row["cross_defect"] = w.cross_defect;
  return row;
}

inline std::vector<std::string> identity_columns() {
  std::vector<std::string> cols{"n_max", "beta", "lambda", "seed", "support"};
  for (const auto& [name, r] : DefectReport{}.entries()) {
    cols.push_back(std::string(name) + "_op");
    cols.push_back(std::string(name) + "_thermal");
  }
  for (const char* extra : {"eq30_interior_plus", "eq30_interior_minus", "eq30_sign", "ccr_budget", "defect_budget"}) cols.emplace_back(extra);
  return cols;
}

inline nlohmann::ordered_json identity_row(const SeriesResult& s, const PointResult& p, Format format) {
  const DefectReport& d = *p.defects;
  nlohmann::ordered_json row;
  row["n_max"] = s.key.n_max;
  row["beta"] = s.key.beta;
  row["lambda"] = p.work.lambda;
  row["seed"] = s.key.seed;
  row["support"] = to_string(s.key.support);
  if (format == Format::csv) {
    for (const auto& [name, r] : d.entries()) {
      row[std::string(name) + "_op"] = r.op;
      row[std::string(name) + "_thermal"] = r.thermal;
    }
  } else {
    nlohmann::ordered_json residuals;
    for (const auto& [name, r] : d.entries()) residuals[std::string(name)] = {{"op", r.op}, {"thermal", r.thermal}};
    row["residuals"] = residuals;
  }
  row["eq30_interior_plus"] = d.eq30_interior_plus;
  row["eq30_interior_minus"] = d.eq30_interior_minus;
  row["eq30_sign"] = d.eq30_sign;
  row["ccr_budget"] = d.ccr_budget;
  row["defect_budget"] = d.budget;
  return row;
}

inline const std::vector<std::string>& min_work_columns() {
  static const std::vector<std::string> cols{"n_max",       "beta",          "support",
                                             "oracle_bound", "mean_energy", "log_partition"};
  return cols;
}

inline const std::vector<std::string>& algebra_columns() {
  static const std::vector<std::string> cols{
      "n_max",        "beta",          "car_defect",           "cross_defect",
      "link_commutator_defect", "ccr_defect", "ccr_defect_below_edge", "ccr_budget",
      "gauss_commutator_defect", "hamiltonian_gauss_defect", "projector_idempotence", "physical_dim"};
  return cols;
}

inline const std::vector<std::string>& model_columns() {
  static const std::vector<std::string> cols{
      "n_max",     "num_sites", "dimension",  "extent_x",  "extent_y",   "links",      "plaquettes",
      "fermion_modes", "fermion_dim", "boson_dim", "total_dim", "psi_operators", "link_operators",
      "plaquette_operators", "gauss_generators"};
  return cols;
}

// ---------------------------------------------------------------------------
// Subcommands

struct RunOptions {
  std::string subcommand;
  ExperimentConfig config;
  std::filesystem::path out_dir;
  int threads = 1;
};

class Runner {
 public:
  Runner(RunOptions opts, std::ostream& out) : o_(std::move(opts)), out_(out) {}

  void run() {
    std::filesystem::create_directories(o_.out_dir);
    const auto& s = o_.subcommand;
    if (s == "model") return model();
    precheck_caps(o_.config, true);
    if (s == "algebra") return algebra();
    if (s == "min-work") return min_work();
    if (s == "identities" || s == "work-sweep") {
      const SweepResult sweep = run_sweep(o_.config, o_.threads, true);
      if (s == "identities") identities(sweep);
      else work_sweep(sweep);
      return;
    }
    if (s == "report") return report();
    throw ConfigError(0, "unknown subcommand '" + s + "'");
  }

 private:
  TableWriter table(const std::string& name, std::vector<std::string> columns) {
    const auto path = o_.out_dir / (name + extension(o_.config.format));
    out_ << "wrote " << path.string() << '\n';
    return TableWriter(path, o_.config.format, provenance(o_.config, o_.subcommand), std::move(columns));
  }

  void model() {
    precheck_caps(o_.config, false);
    auto t = table("model", model_columns());
    for (int n : o_.config.n_maxes()) {
      const auto sp = build_space(model_for(o_.config, n));
      nlohmann::ordered_json row;
      row["n_max"] = n;
      row["num_sites"] = sp.num_sites;
      row["dimension"] = sp.dimension;
      row["extent_x"] = sp.extent_x;
      row["extent_y"] = sp.extent_y;
      row["links"] = sp.links;
      row["plaquettes"] = sp.plaquettes;
      row["fermion_modes"] = sp.fermion_modes;
      row["fermion_dim"] = sp.fermion_dim;
      row["boson_dim"] = sp.boson_dim;
      row["total_dim"] = sp.total_dim;
      row["psi_operators"] = sp.fermion_modes;
      row["link_operators"] = 2 * sp.links;
      row["plaquette_operators"] = sp.plaquettes;
      row["gauss_generators"] = sp.num_sites;
      t.write(row);
      out_ << "n_max=" << n << " sites " << sp.num_sites << " links " << sp.links << " plaquettes "
           << sp.plaquettes << " dim " << sp.total_dim << " (fermion " << sp.fermion_dim << " x boson "
           << sp.boson_dim << ")\n";
    }
  }

  void algebra() {
    auto t = table("algebra", algebra_columns());
    for (int n : o_.config.n_maxes()) {
      const auto b = build_bundle(o_.config, n, true);
      const FieldSet& f = b->fields;
      const double car = car_defect(f);
      const double cross = cross_defect(f);
      const double link = link_commutator_defect(f);
      double ccr = 0.0, below = 0.0;
      for (double v : ccr_defect(f)) ccr = std::max(ccr, v);
      for (double v : ccr_defect_below_edge(f)) below = std::max(below, v);
      const double gauss_pairs = generator_commutator_defect(b->gauss);
      const double idempotence = projector_idempotence_defect(b->gauss);
      for (double beta : o_.config.betas()) {
        const ThermalState st = gibbs_state(b->hamiltonian.total, beta);
        double budget = 0.0;
        for (double p : edge_population(f, st.rho.matrix())) budget = std::max(budget, p);
        nlohmann::ordered_json row;
        row["n_max"] = n;
        row["beta"] = beta;
        row["car_defect"] = car;
        row["cross_defect"] = cross;
        row["link_commutator_defect"] = link;
        row["ccr_defect"] = ccr;
        row["ccr_defect_below_edge"] = below;
        row["ccr_budget"] = budget;
        row["gauss_commutator_defect"] = gauss_pairs;
        row["hamiltonian_gauss_defect"] = b->hamiltonian.gauss_defect;
        row["projector_idempotence"] = idempotence;
        row["physical_dim"] = b->gauss.physical_dim;
        t.write(row);
        out_ << "n_max=" << n << " beta=" << fmt(beta) << " car " << fmt(car) << " ccr " << fmt(ccr)
             << " ccr_budget " << fmt(budget) << '\n';
      }
    }
  }

  void min_work() {
    auto t = table("min-work", min_work_columns());
    for (int n : o_.config.n_maxes()) {
      const auto b = build_bundle(o_.config, n, o_.config.support != SupportChoice::full);
      for (Support s : o_.config.supports()) {
        for (double beta : o_.config.betas()) {
          const ThermalState st = gibbs_state(b->hamiltonian.total, beta, s, b->gauss);
          nlohmann::ordered_json row;
          row["n_max"] = n;
          row["beta"] = beta;
          row["support"] = to_string(s);
          row["oracle_bound"] = min_work_oracle(b->hamiltonian.total, st);
          row["mean_energy"] = trace_product(b->hamiltonian.total, st.rho.matrix()).real();
          row["log_partition"] = st.log_partition;
          t.write(row);
          out_ << "n_max=" << n << " beta=" << fmt(beta) << " support=" << to_string(s)
               << " oracle " << fmt(row["oracle_bound"].get<double>()) << '\n';
        }
      }
    }
  }

  void identities(const SweepResult& sweep) {
    auto t = table("identities", identity_columns());
    for (const auto& s : sweep.series) {
      for (const auto& p : s.points) t.write(identity_row(s, p, o_.config.format));
    }
  }

  void work_sweep(const SweepResult& sweep) {
    auto t = table("work-sweep", work_columns());
    for (const auto& s : sweep.series) {
      for (const auto& p : s.points) t.write(work_row(s, p));
    }
  }

  void report() {
    model();
    algebra();
    min_work();
    const SweepResult sweep = run_sweep(o_.config, o_.threads, true);
    identities(sweep);
    work_sweep(sweep);
    series(sweep);
    summary(sweep);
  }

  void series(const SweepResult& sweep) {
    auto t = table("series", {"n_max", "beta", "seed", "support", "w0", "sum_div_sq", "max_abs_div",
                              "lambda_star", "w_pred37_at_max_lambda", "w_direct_at_max_lambda",
                              "kick_projected", "kick_gauss_defect"});
    for (const auto& s : sweep.series) {
      nlohmann::ordered_json row;
      row["n_max"] = s.key.n_max;
      row["beta"] = s.key.beta;
      row["seed"] = s.key.seed;
      row["support"] = to_string(s.key.support);
      row["w0"] = s.w0;
      row["sum_div_sq"] = s.sum_div_sq;
      row["max_abs_div"] = s.max_abs_div;
      row["lambda_star"] = s.lambda_star();
      row["w_pred37_at_max_lambda"] = s.points.back().work.w_pred37;
      row["w_direct_at_max_lambda"] = s.points.back().work.w_direct;
      row["kick_projected"] = s.projected ? 1 : 0;
      row["kick_gauss_defect"] = s.kick_gauss_defect;
      t.write(row);
    }
  }

  void summary(const SweepResult& sweep) {
    double min_w_direct = std::numeric_limits<double>::infinity();
    double max_oracle = 0.0, max_chain = 0.0, max_orderings = 0.0, max_lambda0 = 0.0;
    double max_gap_ratio = 0.0, max_gauss_u = 0.0, max_gauss_v = 0.0;
    int points = 0, passivity_violations = 0, budget_violations = 0;
    int diverging = 0, negative_in_grid = 0, sign_plus = 0, sign_minus = 0, sign_tie = 0;
    for (const auto& s : sweep.series) {
      if (s.sum_div_sq > 1e-10) {
        ++diverging;
        if (s.points.back().work.w_pred37 < 0.0) ++negative_in_grid;
      }
      for (const auto& p : s.points) {
        const WorkReport& w = p.work;
        ++points;
        if (s.key.support == Support::full) {
          min_w_direct = std::min(min_w_direct, w.w_direct);
          max_oracle = std::max(max_oracle, std::abs(w.oracle_bound));
          if (w.w_direct < -1e-9) ++passivity_violations;
        }
        max_chain = std::max({max_chain, std::abs(w.w_pred33 - w.w_pred35), std::abs(w.w_pred35 - w.w_pred37)});
        max_orderings = std::max(max_orderings, std::abs(w.w_direct - w.w_via_eq2));
        if (w.lambda == 0.0) max_lambda0 = std::max(max_lambda0, std::abs(w.w_direct - w.w0));
        max_gap_ratio = std::max(max_gap_ratio, std::abs(w.gap()) / (w.defect_budget + 1e-10));
        if (std::abs(w.gap()) > w.defect_budget + 1e-10) ++budget_violations;
        max_gauss_u = std::max(max_gauss_u, p.gauss_defect_u);
        max_gauss_v = std::max(max_gauss_v, p.gauss_defect_v);
        if (p.defects && w.lambda != 0.0) {
          const double gap = p.defects->eq30_interior_plus - p.defects->eq30_interior_minus;
          if (std::abs(gap) <= 1e-12) ++sign_tie;
          else if (gap < 0.0) ++sign_plus;
          else ++sign_minus;
        }
      }
    }
    nlohmann::ordered_json sum;
    sum["grid_points"] = points;
    sum["series"] = sweep.series.size();
    sum["min_w_direct_full"] = std::isfinite(min_w_direct) ? min_w_direct : 0.0;
    sum["passivity_violations_full"] = passivity_violations;
    sum["max_abs_oracle_full"] = max_oracle;
    sum["max_trace_ordering_gap"] = max_orderings;
    sum["max_prediction_chain_gap"] = max_chain;
    sum["max_lambda0_gap"] = max_lambda0;
    sum["max_gap_over_budget"] = max_gap_ratio;
    sum["budget_violations"] = budget_violations;
    sum["series_with_divergence"] = diverging;
    sum["series_negative_prediction_in_grid"] = negative_in_grid;
    sum["eq30_sign_plus"] = sign_plus;
    sum["eq30_sign_minus"] = sign_minus;
    sum["eq30_sign_tie"] = sign_tie;
    sum["max_gauss_defect_U"] = max_gauss_u;
    sum["max_gauss_defect_V"] = max_gauss_v;

    auto t = table("summary", {"key", "value"});
    out_ << "summary\n";
    for (const auto& [k, v] : sum.items()) {
      const std::string value = v.is_number_float() ? fmt(v.get<double>()) : v.dump();
      out_ << "  " << k << " = " << value << '\n';
      if (o_.config.format == Format::csv) t.write({{"key", k}, {"value", value}});
    }
    if (o_.config.format == Format::jsonl) t.write(sum);
  }

  RunOptions o_;
  std::ostream& out_;
};

/// Parses arguments (without the program name), runs the subcommand and returns the
/// exit code. Errors go to `err`.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Gauge-invariant work extraction experiments on small lattices", "gaugework"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir, format;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  app.add_option("--config", config_path, "Config file (flat YAML)")->required();
  app.add_option("--out", out_dir, "Output directory (overrides output.dir)");
  app.add_option("--format", format, "csv or jsonl (overrides output.format)")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  app.add_option("--seed", seed, "Single kick seed (overrides kick.seeds)");
  app.add_option("--threads", threads, "Worker threads, 0 = auto")->check(CLI::NonNegativeNumber);
  const std::pair<const char*, const char*> commands[] = {
      {"model", "Dimensions and operator counts per n_max"},
      {"algebra", "CAR, CCR, link and Gauss commutator defects"},
      {"identities", "Operator identity residuals over the sweep"},
      {"work-sweep", "Direct and predicted work over the sweep"},
      {"min-work", "Minimal-work oracle per thermal state"},
      {"report", "All of the above plus series and summary tables"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "gaugework: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    RunOptions opts;
    opts.subcommand = app.get_subcommands().front()->get_name();
    opts.config = load_config(config_path);
    if (seed) opts.config.seeds = {*seed};
    if (!format.empty()) opts.config.format = format == "csv" ? Format::csv : Format::jsonl;
    opts.out_dir = out_dir.empty() ? opts.config.output_dir : out_dir;
    opts.threads = threads;
    Runner(std::move(opts), out).run();
    return kOk;
  } catch (const ConfigError& e) {
    err << "gaugework: config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const CapExceeded& e) {
    err << "gaugework: cap exceeded: " << e.what() << '\n';
    return kCapExceeded;
  } catch (const NumericFailure& e) {
    err << "gaugework: numeric failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const KickRejected& e) {
    err << "gaugework: numeric failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const std::invalid_argument& e) {
    err << "gaugework: config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "gaugework: error: " << e.what() << '\n';
    return 1;
  }
}

inline int main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace gaugework::cli
