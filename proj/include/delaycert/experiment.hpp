#pragma once

/// Experiment orchestration shared by the command-line tool and the tests:
/// JSON config ingestion with schema validation, the results ledger, and the
/// certify / sweep / simulate / selftest drivers.
///
/// Config layout (all physical quantities in the units of the owning types):
///
/// {
///   "system": {
///     "type": "lti" | "reaction_diffusion" | "spectral",
///     -- lti --          "A": [[..]], "B": [[..]], "K": [[..]] or "poles": [..],
///     -- rd --           "a", "c", "L", "N0", "N_sim", "K" or "poles",
///     -- spectral --     "eigenvalues": [x or [re,im], ..], "input_coeffs": [[..]],
///                        "N0", "N_sim", "K" or "poles"
///   },
///   "certification": { "D0", "kappa", "tol", "eps_pd", "mu_grid_size" },
///   "delay": { "kind": "constant"|"sinusoid"|"table",
///              "amplitude", "omega", "phase", "samples": [[t, v], ..] },
///   "simulation": { "t0", "T", "h", "x0": [..] | "X0": {"kind": "poly"|"modal", ..},
///                   "x_grid_points", "fit_window": [a, b] },
///   "sweep": { "D0_values": [..] } or { "min", "max", "points" },
///   "output": { "dir", "prefix" }
/// }
///
/// Every complex scalar is a number or a [re, im] pair.

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "delaycert/certify.hpp"
#include "delaycert/csv.hpp"
#include "delaycert/delay_sim.hpp"
#include "delaycert/modal_pde.hpp"
#include "delaycert/scalar_oracle.hpp"

namespace delaycert {

using nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace cfgdetail {

[[noreturn]] inline void fail(const std::string& where, const std::string& what) {
  throw ConfigError("config error at " + where + ": " + what);
}

inline const json& need(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) fail(where, "missing required key '" + key + "'");
  return j.at(key);
}

inline double num(const json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  return j.get<double>();
}

inline double num_at(const json& j, const std::string& key, const std::string& where) {
  return num(need(j, key, where), where + "." + key);
}

inline double num_or(const json& j, const std::string& key, double fallback,
                     const std::string& where) {
  if (!j.contains(key)) return fallback;
  return num(j.at(key), where + "." + key);
}

inline int int_at(const json& j, const std::string& key, const std::string& where) {
  const json& v = need(j, key, where);
  if (!v.is_number_integer()) fail(where + "." + key, "expected an integer");
  return v.get<int>();
}

inline std::complex<double> cplx(const json& j, const std::string& where) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return {j[0].get<double>(), j[1].get<double>()};
  fail(where, "expected a number or [re, im] pair");
}

inline RealMatrix matrix_at(const json& j, const std::string& key, const std::string& where) {
  const json& m = need(j, key, where);
  const std::string loc = where + "." + key;
  if (!m.is_array() || m.empty()) fail(loc, "expected a non-empty array of rows");
  const std::size_t cols = m[0].is_array() ? m[0].size() : 0;
  if (cols == 0) fail(loc, "expected rows to be non-empty arrays");
  RealMatrix out(m.size(), cols);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i].is_array() || m[i].size() != cols) fail(loc, "ragged rows");
    for (std::size_t k = 0; k < cols; ++k)
      out(i, k) = num(m[i][k], loc + "[" + std::to_string(i) + "]");
  }
  return out;
}

inline ComplexMatrix cmatrix_at(const json& j, const std::string& key,
                                const std::string& where) {
  const json& m = need(j, key, where);
  const std::string loc = where + "." + key;
  if (!m.is_array() || m.empty() || !m[0].is_array() || m[0].empty())
    fail(loc, "expected a non-empty array of rows");
  const std::size_t cols = m[0].size();
  ComplexMatrix out(m.size(), cols);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i].is_array() || m[i].size() != cols) fail(loc, "ragged rows");
    for (std::size_t k = 0; k < cols; ++k)
      out(i, k) = cplx(m[i][k], loc + "[" + std::to_string(i) + "]");
  }
  return out;
}

}  // namespace cfgdetail

struct X0Spec {
  enum class Kind { poly, modal };
  Kind kind = Kind::poly;
  std::vector<double> values;  // poly coefficients (ascending) or modal values

  std::function<double(double)> as_function() const {
    if (kind != Kind::poly) throw std::logic_error("X0Spec: not a polynomial profile");
    auto coeffs = values;
    return [coeffs](double x) {
      double acc = 0.0;
      for (std::size_t k = coeffs.size(); k-- > 0;) acc = acc * x + coeffs[k];
      return acc;
    };
  }
};

struct ExperimentConfig {
  enum class SystemKind { lti, reaction_diffusion, spectral };
  SystemKind kind = SystemKind::lti;

  // lti payload
  RealMatrix A, B, K;

  // reaction-diffusion payload
  ReactionDiffusionConfig rd;
  int N0 = 3;
  int N_sim = 10;

  // generic spectral payload
  SpectralSystem spectral;
  ComplexMatrix K_complex;

  std::vector<std::complex<double>> poles;  // used when K is not inline

  // certification block
  double D0 = 1.0;
  double kappa = 0.2;
  double tol = 1e-4;
  double eps_pd = 1e-6;
  int mu_grid_size = 40;

  // delay block
  DelaySignal delay;

  // simulation block
  double t0 = 0.5;
  double T = 40.0;
  double h = 0.0;  // 0 -> default_step
  RealVector x0;
  X0Spec X0;
  int x_grid_points = 201;
  double fit_start = -1.0, fit_end = -1.0;  // negative -> [T/4, T]

  // sweep block
  std::vector<double> sweep_D0;

  // output block
  std::string out_dir = "out";
  std::string prefix = "run";

  json raw;

  bool has_inline_gain = false;
};

inline ExperimentConfig parse_config_json(const json& j) {
  using namespace cfgdetail;
  ExperimentConfig cfg;
  cfg.raw = j;

  const json& sys = need(j, "system", "config");
  const std::string type = need(sys, "type", "system").get<std::string>();
  if (type == "lti") {
    cfg.kind = ExperimentConfig::SystemKind::lti;
    cfg.A = matrix_at(sys, "A", "system");
    cfg.B = matrix_at(sys, "B", "system");
    if (cfg.A.rows() != cfg.A.cols()) fail("system.A", "must be square");
    if (cfg.B.rows() != cfg.A.rows()) fail("system.B", "row count must match A");
  } else if (type == "reaction_diffusion") {
    cfg.kind = ExperimentConfig::SystemKind::reaction_diffusion;
    cfg.rd.a = num_at(sys, "a", "system");
    cfg.rd.c = num_at(sys, "c", "system");
    cfg.rd.L = num_at(sys, "L", "system");
    try {
      cfg.rd.validate();
    } catch (const std::exception& e) {
      fail("system", e.what());
    }
    cfg.N0 = int_at(sys, "N0", "system");
    cfg.N_sim = sys.contains("N_sim") ? int_at(sys, "N_sim", "system") : 10;
    if (cfg.N0 < 1 || cfg.N_sim < cfg.N0) fail("system.N0", "need 1 <= N0 <= N_sim");
  } else if (type == "spectral") {
    cfg.kind = ExperimentConfig::SystemKind::spectral;
    const json& ev = need(sys, "eigenvalues", "system");
    if (!ev.is_array() || ev.empty()) fail("system.eigenvalues", "expected an array");
    cfg.spectral.eigenvalues.resize(ev.size());
    for (std::size_t i = 0; i < ev.size(); ++i)
      cfg.spectral.eigenvalues(i) = cplx(ev[i], "system.eigenvalues");
    cfg.spectral.input_coeffs = cmatrix_at(sys, "input_coeffs", "system");
    if (cfg.spectral.input_coeffs.rows() != cfg.spectral.eigenvalues.size())
      fail("system.input_coeffs", "one row per eigenvalue required");
    cfg.spectral.N0 = int_at(sys, "N0", "system");
    cfg.spectral.N_sim =
        sys.contains("N_sim") ? int_at(sys, "N_sim", "system") : cfg.spectral.N0;
    if (cfg.spectral.N_sim > cfg.spectral.eigenvalues.size())
      fail("system.N_sim", "exceeds the supplied eigenvalue count");
    if (cfg.spectral.N_sim > cfg.spectral.N0) {
      const double re = cfg.spectral.eigenvalues(cfg.spectral.N0).real();
      if (!(re < 0.0)) fail("system", "first residual mode is not stable");
      cfg.spectral.alpha = -re;
    } else {
      cfg.spectral.alpha = num_or(sys, "alpha", std::numeric_limits<double>::infinity(),
                                  "system");
    }
    try {
      cfg.spectral.validate();
    } catch (const std::exception& e) {
      fail("system", e.what());
    }
  } else {
    fail("system.type", "unknown type '" + type + "'");
  }

  // gain: inline K or pole list
  if (sys.contains("K")) {
    cfg.has_inline_gain = true;
    if (cfg.kind == ExperimentConfig::SystemKind::spectral)
      cfg.K_complex = cmatrix_at(sys, "K", "system");
    else
      cfg.K = matrix_at(sys, "K", "system");
  } else if (sys.contains("poles")) {
    const json& p = sys.at("poles");
    if (!p.is_array() || p.empty()) fail("system.poles", "expected an array");
    for (std::size_t i = 0; i < p.size(); ++i)
      cfg.poles.push_back(cplx(p[i], "system.poles"));
  } else {
    fail("system", "provide either 'K' or 'poles'");
  }

  const json cert = j.contains("certification") ? j.at("certification") : json::object();
  cfg.D0 = num_or(cert, "D0", 1.0, "certification");
  cfg.kappa = num_or(cert, "kappa", 0.2, "certification");
  cfg.tol = num_or(cert, "tol", 1e-4, "certification");
  cfg.eps_pd = num_or(cert, "eps_pd", 1e-6, "certification");
  cfg.mu_grid_size = cert.contains("mu_grid_size")
                         ? int_at(cert, "mu_grid_size", "certification")
                         : 40;
  if (!(cfg.D0 > 0.0)) fail("certification.D0", "must be > 0");
  if (!(cfg.kappa >= 0.0)) fail("certification.kappa", "must be >= 0");
  if (!(cfg.tol > 0.0)) fail("certification.tol", "must be > 0");
  if (cfg.mu_grid_size < 1) fail("certification.mu_grid_size", "must be >= 1");

  const json delay = j.contains("delay") ? j.at("delay") : json::object();
  const std::string dkind =
      delay.contains("kind") ? delay.at("kind").get<std::string>() : "constant";
  if (dkind == "constant") {
    cfg.delay = DelaySignal::constant(cfg.D0);
  } else if (dkind == "sinusoid") {
    cfg.delay = DelaySignal::sinusoid(cfg.D0, num_at(delay, "amplitude", "delay"),
                                      num_at(delay, "omega", "delay"),
                                      num_or(delay, "phase", 0.0, "delay"));
  } else if (dkind == "table") {
    const json& samples = need(delay, "samples", "delay");
    if (!samples.is_array() || samples.empty()) fail("delay.samples", "expected an array");
    std::vector<std::pair<double, double>> tbl;
    for (const auto& s : samples) {
      if (!s.is_array() || s.size() != 2) fail("delay.samples", "expected [t, value] pairs");
      tbl.emplace_back(s[0].get<double>(), s[1].get<double>());
    }
    try {
      cfg.delay = DelaySignal::from_table(cfg.D0, std::move(tbl));
    } catch (const std::exception& e) {
      fail("delay.samples", e.what());
    }
  } else {
    fail("delay.kind", "unknown kind '" + dkind + "'");
  }
  if (!(cfg.delay.max_deviation() < cfg.D0))
    fail("delay", "deviation exceeds the nominal delay");

  const json sim = j.contains("simulation") ? j.at("simulation") : json::object();
  cfg.t0 = num_or(sim, "t0", 0.5, "simulation");
  cfg.T = num_or(sim, "T", 40.0, "simulation");
  cfg.h = num_or(sim, "h", 0.0, "simulation");
  cfg.x_grid_points =
      sim.contains("x_grid_points") ? int_at(sim, "x_grid_points", "simulation") : 201;
  if (!(cfg.t0 > 0.0)) fail("simulation.t0", "must be > 0");
  if (!(cfg.T > 0.0)) fail("simulation.T", "must be > 0");
  if (sim.contains("x0")) {
    const json& x0 = sim.at("x0");
    if (!x0.is_array() || x0.empty()) fail("simulation.x0", "expected an array");
    cfg.x0.resize(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i)
      cfg.x0(i) = cfgdetail::num(x0[i], "simulation.x0");
  }
  if (sim.contains("X0")) {
    const json& x0 = sim.at("X0");
    const std::string kind = need(x0, "kind", "simulation.X0").get<std::string>();
    const json& vals = need(x0, kind == "poly" ? "coeffs" : "values", "simulation.X0");
    if (!vals.is_array() || vals.empty()) fail("simulation.X0", "expected value array");
    cfg.X0.kind = (kind == "poly") ? X0Spec::Kind::poly : X0Spec::Kind::modal;
    if (kind != "poly" && kind != "modal") fail("simulation.X0.kind", "poly or modal");
    for (const auto& v : vals) cfg.X0.values.push_back(v.get<double>());
  }
  if (sim.contains("fit_window")) {
    const json& w = sim.at("fit_window");
    if (!w.is_array() || w.size() != 2) fail("simulation.fit_window", "expected [a, b]");
    cfg.fit_start = w[0].get<double>();
    cfg.fit_end = w[1].get<double>();
  }

  if (j.contains("sweep")) {
    const json& sw = j.at("sweep");
    if (sw.contains("D0_values")) {
      for (const auto& v : sw.at("D0_values"))
        cfg.sweep_D0.push_back(cfgdetail::num(v, "sweep.D0_values"));
    } else {
      const double lo = num_at(sw, "min", "sweep");
      const double hi = num_at(sw, "max", "sweep");
      const int pts = int_at(sw, "points", "sweep");
      if (pts < 1) fail("sweep.points", "must be >= 1");
      for (int i = 0; i < pts; ++i)
        cfg.sweep_D0.push_back(pts == 1 ? lo : lo + (hi - lo) * double(i) / double(pts - 1));
    }
    for (const double v : cfg.sweep_D0)
      if (!(v > 0.0 && v <= 5.0)) fail("sweep", "grid values must lie in (0, 5]");
  }

  const json out = j.contains("output") ? j.at("output") : json::object();
  if (out.contains("dir")) cfg.out_dir = out.at("dir").get<std::string>();
  if (out.contains("prefix")) cfg.prefix = out.at("prefix").get<std::string>();
  return cfg;
}

/// Parse a config file; syntax errors carry the line number.
inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config error: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i)
      if (text[i] == '\n') ++line;
    throw ConfigError("config error at line " + std::to_string(line) + ": " + e.what());
  }
  return parse_config_json(j);
}

// ---------------------------------------------------------------------------
// results ledger

inline std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t hash = 1469598103934665603ull;
  for (const unsigned char c : data) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

inline std::string config_hash(const json& raw) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(raw.dump())));
  return buf;
}

struct ResultRecord {
  std::string command;
  std::string config_hash;
  std::string timestamp;
  json results;
  std::vector<std::string> artifacts;
  bool duplicate = false;
};

inline std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&tt, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

/// Append one record to <out_dir>/results.jsonl; reruns of an identical
/// (command, config hash) pair are flagged as duplicates. The line is written
/// with a single append so concurrent writers do not interleave.
inline ResultRecord append_record(const std::string& out_dir, const std::string& command,
                                  const json& raw_config, json results,
                                  std::vector<std::string> artifacts) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path ledger = fs::path(out_dir) / "results.jsonl";

  ResultRecord rec;
  rec.command = command;
  rec.config_hash = config_hash(raw_config);
  rec.timestamp = iso8601_now();
  rec.results = std::move(results);
  rec.artifacts = std::move(artifacts);

  if (fs::exists(ledger)) {
    std::ifstream in(ledger);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json past = json::parse(line, nullptr, false);
      if (past.is_discarded()) continue;
      if (past.value("config_hash", "") == rec.config_hash &&
          past.value("command", "") == rec.command) {
        rec.duplicate = true;
        break;
      }
    }
  }

  json out{{"command", rec.command},
           {"config_hash", rec.config_hash},
           {"timestamp", rec.timestamp},
           {"results", rec.results},
           {"artifacts", rec.artifacts},
           {"duplicate", rec.duplicate}};
  std::ofstream app(ledger, std::ios::app);
  app << out.dump() << "\n";
  return rec;
}

// ---------------------------------------------------------------------------
// command drivers

namespace driver {

/// (A, B, K) of the certified finite-dimensional model, resolving pole
/// placement when the gain is not inline. Complex spectral data is realified
/// into an equivalent real problem downstream.
struct ResolvedSystem {
  RealMatrix A, B, K;          // real path
  ComplexMatrix Ac, Bc, Kc;    // complex path
  bool complex_path = false;
};

inline ResolvedSystem resolve_system(const ExperimentConfig& cfg) {
  ResolvedSystem out;
  switch (cfg.kind) {
    case ExperimentConfig::SystemKind::lti: {
      out.A = cfg.A;
      out.B = cfg.B;
      out.K = cfg.has_inline_gain ? cfg.K : place_poles(cfg.A, cfg.B, cfg.poles);
      break;
    }
    case ExperimentConfig::SystemKind::reaction_diffusion: {
      const auto [A0, B0] = truncated_matrices(cfg.rd, cfg.N0);
      out.A = A0;
      out.B = B0;
      out.K = cfg.has_inline_gain ? cfg.K : place_poles(A0, B0, cfg.poles);
      break;
    }
    case ExperimentConfig::SystemKind::spectral: {
      const ComplexMatrix A0 =
          ComplexMatrix(cfg.spectral.eigenvalues.head(cfg.spectral.N0).asDiagonal());
      const ComplexMatrix B0 = cfg.spectral.input_coeffs.topRows(cfg.spectral.N0);
      ComplexMatrix K = cfg.has_inline_gain ? cfg.K_complex : place_poles(A0, B0, cfg.poles);
      const bool real_data = cfg.spectral.is_real() &&
                             K.imag().cwiseAbs().maxCoeff() == 0.0;
      if (real_data) {
        out.A = A0.real();
        out.B = B0.real();
        out.K = K.real();
      } else {
        out.complex_path = true;
        out.Ac = A0;
        out.Bc = B0;
        out.Kc = K;
      }
      break;
    }
  }
  return out;
}

inline CertificationProblem problem_for(const ResolvedSystem& sys, double D0, double kappa,
                                        double eps_pd) {
  return sys.complex_path ? build_problem(sys.Ac, sys.Bc, sys.Kc, D0, kappa, eps_pd)
                          : build_problem(sys.A, sys.B, sys.K, D0, kappa, eps_pd);
}

inline std::vector<double> default_mu_grid(const RealMatrix& Acl, int size) {
  const double mu_max = -spectral_abscissa(Acl);
  std::vector<double> grid;
  grid.reserve(size);
  for (int i = 1; i <= size; ++i) grid.push_back(mu_max * double(i) / double(size + 1));
  return grid;
}

struct CertifyOutput {
  double delta_lmi = 0.0;
  std::optional<double> delta_star_value;
  double delta_E_value = 0.0;
  double delta_smallgain = 0.0;
  SmallGainEnvelope envelope;
  bool indeterminate_seen = false;
  int exit_code = 0;
  ResultRecord record;
};

inline CertifyOutput run_certify(const ExperimentConfig& cfg) {
  const ResolvedSystem sys = resolve_system(cfg);
  const CertificationProblem prob = problem_for(sys, cfg.D0, cfg.kappa, cfg.eps_pd);

  CertifyOutput out;
  const MaxDeltaResult lmi = max_delta(prob, cfg.tol);
  out.delta_lmi = lmi.delta;
  out.indeterminate_seen = lmi.indeterminate_seen;
  try {
    out.delta_star_value = delta_star(prob);
  } catch (const PreconditionError&) {
    out.delta_star_value.reset();  // kappa outside the admissible Lemma-2 range
  }

  if (sys.complex_path) {
    // the realified problem carries the same norms, so evaluate the closed
    // forms on the realified data
    const RealMatrix A = realify(sys.Ac), B = realify(sys.Bc), K = realify(sys.Kc);
    out.delta_E_value = delta_E(A, B, K, cfg.D0);
    const auto sg = small_gain_delta(A, B, K, cfg.D0,
                                     default_mu_grid(prob.M, cfg.mu_grid_size));
    out.delta_smallgain = sg.delta;
    out.envelope = sg.envelope;
  } else {
    out.delta_E_value = delta_E(sys.A, sys.B, sys.K, cfg.D0);
    const auto sg = small_gain_delta(sys.A, sys.B, sys.K, cfg.D0,
                                     default_mu_grid(prob.M, cfg.mu_grid_size));
    out.delta_smallgain = sg.delta;
    out.envelope = sg.envelope;
  }

  json results{{"delta_lmi", out.delta_lmi},
               {"delta_E", out.delta_E_value},
               {"delta_smallgain", out.delta_smallgain},
               {"envelope_M", out.envelope.M_const},
               {"envelope_mu", out.envelope.mu},
               {"kappa", cfg.kappa},
               {"D0", cfg.D0},
               {"indeterminate_seen", out.indeterminate_seen}};
  if (out.delta_star_value)
    results["delta_star"] = *out.delta_star_value;
  out.record = append_record(cfg.out_dir, "certify", cfg.raw, results, {});

  if (out.indeterminate_seen && out.delta_lmi == 0.0)
    out.exit_code = 3;
  else if (out.delta_lmi == 0.0)
    out.exit_code = 2;
  return out;
}

struct SweepOutput {
  std::string csv_path;
  int failures = 0;
  int exit_code = 0;
  std::vector<std::array<double, 4>> rows;  // D0, delta_E, delta_lmi, delta_smallgain
  std::vector<std::array<bool, 3>> ok;      // per-column validity
  ResultRecord record;
};

/// Sweep the nominal delay; grid points run concurrently up to `jobs`.
/// Per-point failures leave empty cells and the run continues.
inline SweepOutput run_sweep(const ExperimentConfig& cfg, int jobs = 1) {
  if (cfg.sweep_D0.empty()) throw ConfigError("config error at sweep: empty grid");
  const ResolvedSystem sys = resolve_system(cfg);

  const std::size_t npts = cfg.sweep_D0.size();
  SweepOutput out;
  out.rows.resize(npts);
  out.ok.assign(npts, {false, false, false});

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= npts) return;
      const double D0 = cfg.sweep_D0[i];
      out.rows[i][0] = D0;
      try {
        if (sys.complex_path) {
          const RealMatrix A = realify(sys.Ac), B = realify(sys.Bc), K = realify(sys.Kc);
          out.rows[i][1] = delta_E(A, B, K, D0);
        } else {
          out.rows[i][1] = delta_E(sys.A, sys.B, sys.K, D0);
        }
        out.ok[i][0] = true;
      } catch (const std::exception&) {
      }
      try {
        const CertificationProblem prob = problem_for(sys, D0, cfg.kappa, cfg.eps_pd);
        out.rows[i][2] = max_delta(prob, cfg.tol).delta;
        out.ok[i][1] = true;
      } catch (const std::exception&) {
      }
      try {
        const CertificationProblem prob = problem_for(sys, D0, cfg.kappa, cfg.eps_pd);
        if (sys.complex_path) {
          const RealMatrix A = realify(sys.Ac), B = realify(sys.Bc), K = realify(sys.Kc);
          out.rows[i][3] =
              small_gain_delta(A, B, K, D0, default_mu_grid(prob.M, cfg.mu_grid_size)).delta;
        } else {
          out.rows[i][3] = small_gain_delta(sys.A, sys.B, sys.K, D0,
                                            default_mu_grid(prob.M, cfg.mu_grid_size))
                               .delta;
        }
        out.ok[i][2] = true;
      } catch (const std::exception&) {
      }
    }
  };
  std::vector<std::thread> pool;
  const int nthreads = std::max(1, jobs);
  for (int w = 0; w < nthreads; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  out.csv_path = (fs::path(cfg.out_dir) / (cfg.prefix + "_sweep.csv")).string();
  {
    CsvWriter csv(out.csv_path);
    csv.header({"D0", "delta_E", "delta_lmi", "delta_smallgain"});
    for (std::size_t i = 0; i < npts; ++i) {
      std::vector<std::string> cells{format_g15(out.rows[i][0])};
      for (int c = 0; c < 3; ++c)
        cells.push_back(out.ok[i][c] ? format_g15(out.rows[i][c + 1]) : std::string{});
      csv.row_optional(cells);
      if (!out.ok[i][0] || !out.ok[i][1] || !out.ok[i][2]) ++out.failures;
    }
  }

  out.record = append_record(cfg.out_dir, "sweep", cfg.raw,
                             json{{"points", npts}, {"failures", out.failures}},
                             {out.csv_path});
  return out;
}

struct SimulateOutput {
  std::vector<std::string> files;
  double fitted_rate = 0.0;
  int exit_code = 0;
  ResultRecord record;
};

inline SimulateOutput run_simulate(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  SimulateOutput out;

  const double delta = cfg.delay.max_deviation();
  const double h = cfg.h > 0.0 ? cfg.h : default_step(cfg.t0, cfg.D0, delta);
  const double fit_start = cfg.fit_start >= 0.0 ? cfg.fit_start : cfg.T / 4.0;
  const double fit_end = cfg.fit_end >= 0.0 ? cfg.fit_end : cfg.T;

  json results{{"h", h}, {"T", cfg.T}};
  try {
    if (cfg.kind == ExperimentConfig::SystemKind::reaction_diffusion) {
      const ResolvedSystem sys = resolve_system(cfg);
      std::function<double(double)> profile;
      RealVector modal_init;
      if (cfg.X0.kind == X0Spec::Kind::poly && !cfg.X0.values.empty()) {
        profile = cfg.X0.as_function();
      } else if (cfg.X0.kind == X0Spec::Kind::modal && !cfg.X0.values.empty()) {
        modal_init = Eigen::Map<const RealVector>(cfg.X0.values.data(),
                                                  long(cfg.X0.values.size()));
        // expand to a profile through the basis
        const ReactionDiffusionConfig rd = cfg.rd;
        const RealVector c0 = modal_init;
        profile = [rd, c0](double x) {
          double acc = 0.0;
          for (int n = 1; n <= c0.size(); ++n)
            acc += c0(n - 1) * eigenfunction(rd, n, x);
          return acc;
        };
      } else {
        throw ConfigError("config error at simulation.X0: required for pde simulation");
      }
      const auto traj = simulate_pde_closed_loop(cfg.rd, cfg.N0, cfg.N_sim, sys.K, cfg.D0,
                                                 cfg.delay, {cfg.t0}, profile, cfg.T, h,
                                                 cfg.x_grid_points);
      const std::string modal_path =
          (fs::path(cfg.out_dir) / (cfg.prefix + "_modal.csv")).string();
      const std::string field_path =
          (fs::path(cfg.out_dir) / (cfg.prefix + "_field.csv")).string();
      write_modal_csv(modal_path, traj);
      write_field_csv(field_path, traj);
      out.files = {modal_path, field_path};
      const auto series = traj.truncated_norm_series(cfg.N0);
      out.fitted_rate = fit_decay_series(traj.times, series, fit_start, fit_end).rate;
    } else if (cfg.kind == ExperimentConfig::SystemKind::lti) {
      const ResolvedSystem sys = resolve_system(cfg);
      if (cfg.x0.size() != sys.A.rows())
        throw ConfigError("config error at simulation.x0: dimension must match A");
      const auto traj = simulate_closed_loop(sys.A, sys.B, sys.K, cfg.D0, cfg.delay,
                                             {cfg.t0}, cfg.x0, cfg.T, h);
      const std::string traj_path =
          (fs::path(cfg.out_dir) / (cfg.prefix + "_trajectory.csv")).string();
      write_trajectory_csv(traj_path, traj);
      out.files = {traj_path};
      out.fitted_rate = fit_decay(traj, fit_start, fit_end).rate;
    } else {
      throw ConfigError(
          "config error at system: simulate supports lti and reaction_diffusion systems");
    }
  } catch (const DivergenceError& e) {
    results["diverged_at"] = e.time;
    out.exit_code = 3;
    out.record = append_record(cfg.out_dir, "simulate", cfg.raw, results, out.files);
    return out;
  }

  results["fitted_rate"] = out.fitted_rate;
  results["fit_window"] = json::array({fit_start, fit_end});
  out.record = append_record(cfg.out_dir, "simulate", cfg.raw, results, out.files);
  return out;
}

struct SelftestOutput {
  int pairs = 0;
  int disagreements = 0;
  int exit_code = 0;
};

/// Scalar brute-force oracle suite: random (M, N) pairs on a (delta, kappa)
/// grid, LMI route vs grid search. Disagreements are tolerated only inside a
/// one-cell band around the oracle's own feasibility frontier.
inline SelftestOutput run_selftest(int pairs = 5, int grid = 10, unsigned seed = 2024,
                                   std::ostream* log = nullptr) {
  SelftestOutput out;
  out.pairs = pairs;
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> mdist(-2.0, -0.3);
  std::uniform_real_distribution<double> ndist(-1.5, 1.5);

  for (int p = 0; p < pairs; ++p) {
    ScalarThetaInstance sys;
    sys.M = mdist(rng);
    sys.N = ndist(rng);
    sys.D0 = 1.0;

    std::vector<std::vector<int>> lmi(grid, std::vector<int>(grid));
    std::vector<std::vector<int>> oracle(grid, std::vector<int>(grid));
    for (int i = 0; i < grid; ++i) {
      const double delta = 0.9 * sys.D0 * double(i + 1) / double(grid + 1);
      for (int k = 0; k < grid; ++k) {
        const double kappa = 0.5 * double(k) / double(grid);
        sys.kappa = kappa;
        CertificationProblem prob;
        prob.M = sys.M * RealMatrix::Identity(1, 1);
        prob.N = sys.N * RealMatrix::Identity(1, 1);
        prob.D0 = sys.D0;
        prob.kappa = kappa;
        lmi[i][k] = check_feasibility(prob, delta).verdict == Feasibility::feasible;
        oracle[i][k] = scalar_bruteforce_feasible(sys, delta);
      }
    }
    // flag disagreements outside the oracle's frontier band
    for (int i = 0; i < grid; ++i)
      for (int k = 0; k < grid; ++k) {
        if (lmi[i][k] == oracle[i][k]) continue;
        bool frontier = false;
        for (int di = -1; di <= 1 && !frontier; ++di)
          for (int dk = -1; dk <= 1 && !frontier; ++dk) {
            const int ni = i + di, nk = k + dk;
            if (ni < 0 || nk < 0 || ni >= grid || nk >= grid) continue;
            if (oracle[ni][nk] != oracle[i][k]) frontier = true;
          }
        if (!frontier) {
          ++out.disagreements;
          if (log)
            (*log) << "selftest disagreement: M=" << sys.M << " N=" << sys.N
                   << " delta index " << i << " kappa index " << k << "\n";
        }
      }
  }
  out.exit_code = out.disagreements == 0 ? 0 : 3;
  return out;
}

}  // namespace driver

}  // namespace delaycert
