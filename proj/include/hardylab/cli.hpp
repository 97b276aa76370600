#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hardylab/io.hpp"

namespace hardylab {

enum ExitCode : int { kExitOk = 0, kExitInternal = 1, kExitInvalid = 2, kExitHypothesis = 3, kExitDiverged = 4 };

namespace detail {

inline void emit_json(const Json& doc, const std::string& path, std::ostream& out) {
  std::string text = doc.dump(2) + "\n";
  if (path.empty()) {
    out << text;
  } else {
    write_text_file(path, text);
  }
}

inline double parse_cli_real(const std::string& s, const std::string& what) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  require(!s.empty() && end != nullptr && *end == '\0' && std::isfinite(v), "malformed " + what + " '" + s + "'");
  return v;
}

// "<c>,<r>" with c a real (n = 1) or "<x>:<y>" (n = 2).
inline Ball parse_ball(const std::string& s, int dim) {
  auto comma = s.rfind(',');
  require(comma != std::string::npos, "ball must be written <center>,<radius>");
  std::string c = s.substr(0, comma);
  double r = parse_cli_real(s.substr(comma + 1), "ball radius");
  auto colon = c.find(':');
  if (dim == 1) {
    require(colon == std::string::npos, "a one-dimensional ball center is a single real");
    return Ball(parse_cli_real(c, "ball center"), r);
  }
  require(colon != std::string::npos, "a two-dimensional ball center is written <x>:<y>");
  return Ball(Point{parse_cli_real(c.substr(0, colon), "ball center"), parse_cli_real(c.substr(colon + 1), "ball center")},
              r);
}

struct CommandResult {
  Json doc;
  std::string out_path;
  int code = kExitOk;
  std::string reason;
};

struct WeightsArgs {
  std::string weight;
  std::vector<double> p, s;
  int depth = 8;
  int dim = 1;
  std::size_t N = 1024;
  double R = 1.0;
  bool indices = false;
  std::string out;
};

inline CommandResult run_weights(const WeightsArgs& a) {
  WeightSpec w = parse_weight_spec(a.weight);
  Grid g(a.dim, a.R, a.N);
  BallFamily fam = BallFamily::dyadic(g, a.depth);
  CommandResult res;
  res.out_path = a.out;
  Json& doc = res.doc = json_document("weights");
  doc["weight"] = w.describe();
  doc["grid"] = to_json(g);
  doc["family_depth"] = a.depth;
  doc["family_balls"] = fam.size();
  bool diverged = false;
  Json ap = Json::object(), rh = Json::object();
  for (double p : a.p) {
    Characteristic c = ap_characteristic(w, p, fam);
    diverged = diverged || c.diverged;
    ap[format_real(p)] = to_json(c, g.dim());
    if (a.p.size() == 1) doc["ap_char"] = json_real(c.value);
  }
  for (double s : a.s) {
    Characteristic c = rh_characteristic(w, s, fam);
    diverged = diverged || c.diverged;
    rh[format_real(s)] = to_json(c, g.dim());
    if (a.s.size() == 1) doc["rh_char"] = json_real(c.value);
  }
  doc["ap"] = std::move(ap);
  doc["rh"] = std::move(rh);
  if (a.indices) doc["critical_indices"] = to_json(critical_indices(w, fam));
  doc["diverged"] = diverged;
  if (diverged) {
    res.code = kExitDiverged;
    res.reason = "a weight characteristic diverged";
  }
  return res;
}

struct MaximalArgs {
  std::string op;
  std::string in;
  std::string weight = "one";
  std::optional<double> p;
  std::optional<double> alpha;
  int depth = -1;
  std::optional<int> k_min, k_max;
  std::string bump = "exp";
  double aperture = 0.0;
  std::string out;
  std::string grid_out;
};

inline CommandResult run_maximal(const MaximalArgs& a) {
  GridFunction f = read_grid_file(a.in);
  WeightSpec w = parse_weight_spec(a.weight);
  MaximalConfig cfg;
  cfg.family_depth = a.depth;
  if (a.k_min) cfg.k_min = *a.k_min;
  if (a.k_max) cfg.k_max = *a.k_max;
  require(a.bump == "exp" || a.bump == "plateau", "bump must be exp or plateau");
  cfg.bump = a.bump == "exp" ? BumpProfile::exp_cutoff : BumpProfile::plateau;
  cfg.aperture = a.aperture;

  CommandResult res;
  res.out_path = a.out;
  Json& doc = res.doc = json_document("maximal");
  doc["op"] = a.op;
  doc["input"] = a.in;
  doc["grid"] = to_json(f.grid());
  doc["weight"] = w.describe();
  doc["config"] = to_json(cfg);
  std::optional<GridFunction> mf;
  if (a.op == "hl") {
    mf = hl_maximal(f, cfg);
  } else if (a.op == "frac") {
    require(a.alpha.has_value(), "--alpha is required for the fractional maximal function");
    doc["alpha"] = *a.alpha;
    mf = fractional_maximal(f, *a.alpha, cfg);
  } else if (a.op == "smooth" || a.op == "hardy-norm") {
    SmoothMaximal sm = smooth_maximal(f, cfg);
    doc["scales"] = {{"k_min", sm.k_min}, {"k_max", sm.k_max}, {"clipped", sm.clipped}};
    mf = std::move(sm.values);
  } else {
    throw InvalidArgument("unknown maximal operator '" + a.op + "'");
  }
  require(a.op != "hardy-norm" || a.p.has_value(), "--p is required for hardy-norm");
  double mx = 0;
  for (double v : mf->values()) mx = std::max(mx, v);
  doc["max"] = json_real(mx);
  bool diverged = false;
  if (a.p) {
    require(*a.p > 0, "p must be positive");
    Measured m = weighted_lp_norm(*mf, *a.p, cell_masses(w, f.grid()));
    diverged = m.diverged;
    doc["p"] = *a.p;
    doc[a.op == "hardy-norm" ? "hardy_norm" : "weighted_norm"] = json_real(m.value);
  }
  doc["diverged"] = diverged;
  if (!a.grid_out.empty()) {
    write_grid_file(a.grid_out, *mf);
    doc["grid_out"] = a.grid_out;
  }
  if (diverged) {
    res.code = kExitDiverged;
    res.reason = "weighted norm diverged";
  }
  return res;
}

struct ValidateArgs {
  std::string kind;
  std::string in;
  std::string weight = "one";
  double p = 1.0;
  std::string p0 = "2";
  int d = 0;
  std::string ball;
  double tol = 1e-9;
  std::string out;
};

inline CommandResult run_validate(const ValidateArgs& a) {
  require(a.kind == "atom" || a.kind == "molecule", "--kind must be atom or molecule");
  GridFunction f = read_grid_file(a.in);
  AtomParams params;
  params.p = a.p;
  params.p0 = parse_cli_real(a.p0, "p0");
  params.d = a.d;
  params.weight = parse_weight_spec(a.weight);
  params.ball = parse_ball(a.ball, f.grid().dim());
  require(a.tol >= 0 && std::isfinite(a.tol), "tolerance must be finite and nonnegative");
  ValidationTolerances tol{a.tol, a.tol, a.tol};
  ValidationReport rep = a.kind == "atom" ? validate_atom(f, params, tol) : validate_molecule(f, params, tol);
  CommandResult res;
  res.out_path = a.out;
  Json& doc = res.doc = json_document("validate");
  doc["input"] = a.in;
  doc["grid"] = to_json(f.grid());
  doc["params"] = to_json(params, f.grid().dim());
  doc["report"] = to_json(rep);
  return res;
}

struct DecomposeArgs {
  std::string in;
  std::string weight = "one";
  double p = 1.0;
  std::string p0 = "2";
  int d = 0;
  int depth = -1;
  double dilation = 9.0 / 8.0;
  int min_cube = 0;
  std::string out;
};

inline CommandResult run_decompose(const DecomposeArgs& a) {
  GridFunction f = read_grid_file(a.in);
  AtomParams params;
  params.p = a.p;
  params.p0 = parse_cli_real(a.p0, "p0");
  params.d = a.d;
  params.weight = parse_weight_spec(a.weight);
  int depth = a.depth >= 0 ? a.depth : std::min(f.grid().levels(), 10);
  CriticalIndices ci = critical_indices(params.weight, f.grid(), depth);
  DecompositionConfig cfg;
  cfg.dilation = a.dilation;
  cfg.min_cube_cells = a.min_cube;
  AtomicDecomposition dec = decompose(f, params, ci, cfg);
  CommandResult res;
  res.out_path = a.out;
  Json& doc = res.doc = json_document("decompose");
  doc["input"] = a.in;
  doc["critical_indices"] = to_json(ci);
  doc["admissibility"] = to_json(check_parameters(params, ci, f.grid().dim()));
  doc["decomposition"] = to_json(dec);
  return res;
}

struct OperatorArgs {
  std::string op;
  std::string method = "multiplier";
  std::string in;
  std::string out;
  std::optional<double> epsilon;
  bool no_near_correction = false;
  std::string report;
};

inline CommandResult run_operator(const OperatorArgs& a) {
  GridFunction f = read_grid_file(a.in);
  OperatorSpec spec;
  if (a.op.rfind("kernel:", 0) == 0) {
    // Ω samples: {Ω(-1), Ω(1)} in 1-D, equispaced angles from 0 in 2-D.
    std::string path = a.op.substr(7);
    require(a.method == "multiplier" || a.method == "quadrature", "unknown method: " + a.method);
    spec = OperatorSpec::truncated_kernel(parse_real_list(read_text_file(path)), 0.0);
    spec.method = a.method == "multiplier" ? OperatorMethod::multiplier : OperatorMethod::quadrature;
  } else {
    spec = parse_operator_spec(a.op, a.method);
  }
  if (a.epsilon) spec.epsilon = *a.epsilon;
  if (a.no_near_correction) spec.near_correction = false;
  OperatorResult r = apply_operator(f, spec);
  write_grid_file(a.out, r.values);
  CommandResult res;
  res.out_path = a.report;
  Json& doc = res.doc = json_document("operator");
  doc["input"] = a.in;
  doc["output"] = a.out;
  doc["grid"] = to_json(f.grid());
  doc["operator"] = to_json(spec);
  doc["epsilon"] = r.epsilon;
  doc["epsilon_clipped"] = r.epsilon_clipped;
  return res;
}

struct ExperimentArgs {
  std::string kind;
  std::string config;
  std::string out;
  std::string plot_csv;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
};

inline CommandResult run_experiment_command(const ExperimentArgs& a) {
  ExperimentKind kind = parse_experiment_kind(a.kind);
  ExperimentConfig cfg;
  if (!a.config.empty()) {
    Json j;
    try {
      j = Json::parse(read_text_file(a.config));
    } catch (const nlohmann::json::parse_error& e) {
      throw InvalidArgument("config is not valid JSON: " + std::string(e.what()));
    }
    if (j.contains("kind"))
      require(j["kind"] == a.kind, "config kind '" + j["kind"].dump() + "' does not match --kind " + a.kind);
    cfg = experiment_config_from_json(j);
  }
  cfg.kind = kind;
  if (a.seed) cfg.seed = *a.seed;
  if (a.trials) cfg.trials = *a.trials;
  ExperimentReport rep = run_experiment(cfg);
  if (!a.plot_csv.empty()) write_text_file(a.plot_csv, plot_csv(rep));
  CommandResult res;
  res.out_path = a.out;
  res.doc = json_document("experiment");
  res.doc["report"] = to_json(rep);
  if (!rep.hypotheses_ok) {
    res.code = kExitHypothesis;
    res.reason = "hypothesis not satisfied";
  } else if (rep.diverged) {
    res.code = kExitDiverged;
    res.reason = "a measured statistic diverged";
  }
  return res;
}

inline int report_error(std::ostream& err, int code, const std::string& type, const std::string& message) {
  err << error_document(code, type, message).dump() << "\n";
  return code;
}

}  // namespace detail

// Runs one CLI invocation; args excludes the program name. Writes the JSON
// document to its --out path or `out`, and a JSON error object to `err` on
// any nonzero exit.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weighted Hardy space toolkit", "hardylab"};
  app.require_subcommand(1);

  detail::WeightsArgs wa;
  auto* weights = app.add_subcommand("weights", "A_p / RH characteristics and critical indices of a weight");
  weights->add_option("--weight", wa.weight, "weight spec")->required();
  weights->add_option("--p", wa.p, "A_p exponents");
  weights->add_option("--s", wa.s, "reverse Hoelder exponents");
  weights->add_option("--depth", wa.depth, "ball family depth");
  weights->add_option("--dim", wa.dim, "dimension (1 or 2)");
  weights->add_option("--N", wa.N, "cells per axis");
  weights->add_option("--R", wa.R, "box half extent");
  weights->add_flag("--indices", wa.indices, "also compute the critical indices");
  weights->add_option("--out", wa.out, "report path (default stdout)");

  detail::MaximalArgs ma;
  auto* maximal = app.add_subcommand("maximal", "maximal functions and the discrete Hardy norm");
  maximal->add_option("--op", ma.op, "hl | frac | smooth | hardy-norm")->required();
  maximal->add_option("--in", ma.in, "input grid file")->required();
  maximal->add_option("--weight", ma.weight, "weight spec");
  maximal->add_option("--p", ma.p, "norm exponent");
  maximal->add_option("--alpha", ma.alpha, "fractional order");
  maximal->add_option("--depth", ma.depth, "ball family depth (-1: grid resolution)");
  maximal->add_option("--kmin", ma.k_min, "smallest dyadic scale exponent");
  maximal->add_option("--kmax", ma.k_max, "largest dyadic scale exponent");
  maximal->add_option("--bump", ma.bump, "exp | plateau");
  maximal->add_option("--aperture", ma.aperture, "nontangential aperture (0: radial)");
  maximal->add_option("--out", ma.out, "report path (default stdout)");
  maximal->add_option("--grid-out", ma.grid_out, "write the maximal function as a grid file");

  detail::ValidateArgs va;
  auto* validate = app.add_subcommand("validate", "check atom or molecule conditions");
  validate->add_option("--kind", va.kind, "atom | molecule")->required();
  validate->add_option("--in", va.in, "input grid file")->required();
  validate->add_option("--weight", va.weight, "weight spec");
  validate->add_option("--p", va.p, "p in (0, 1]");
  validate->add_option("--p0", va.p0, "p0 > 1 or inf");
  validate->add_option("--d", va.d, "vanishing moments");
  validate->add_option("--ball", va.ball, "<center>,<radius>; 2-D centers are <x>:<y>")->required();
  validate->add_option("--tol", va.tol, "tolerance for size, decay and moments");
  validate->add_option("--out", va.out, "report path (default stdout)");

  detail::DecomposeArgs da;
  auto* decompose_cmd = app.add_subcommand("decompose", "atomic decomposition of a 1-D grid function");
  decompose_cmd->add_option("--in", da.in, "input grid file")->required();
  decompose_cmd->add_option("--weight", da.weight, "weight spec");
  decompose_cmd->add_option("--p", da.p, "p in (0, 1]");
  decompose_cmd->add_option("--p0", da.p0, "p0 > 1 or inf");
  decompose_cmd->add_option("--d", da.d, "vanishing moments");
  decompose_cmd->add_option("--depth", da.depth, "family depth for the critical indices");
  decompose_cmd->add_option("--dilation", da.dilation, "Q* dilation factor");
  decompose_cmd->add_option("--min-cube", da.min_cube, "smallest Whitney cube in cells (0: automatic)");
  decompose_cmd->add_option("--out", da.out, "report path (default stdout)");

  detail::OperatorArgs oa;
  auto* op = app.add_subcommand("operator", "apply a singular integral or the Riesz potential");
  op->add_option("--op", oa.op, "hilbert | riesz:<j> | ialpha:<alpha> | kernel:<omega file>")->required();
  op->add_option("--method", oa.method, "multiplier | quadrature | periodic");
  op->add_option("--in", oa.in, "input grid file")->required();
  op->add_option("--out", oa.out, "output grid file")->required();
  op->add_option("--epsilon", oa.epsilon, "quadrature truncation radius");
  op->add_flag("--no-near-correction", oa.no_near_correction, "drop the p.v. correction inside epsilon");
  op->add_option("--report", oa.report, "report path (default stdout)");

  detail::ExperimentArgs ea;
  auto* experiment = app.add_subcommand("experiment", "run a seeded experiment");
  experiment->add_option("--kind", ea.kind, "experiment kind")->required();
  experiment->add_option("--config", ea.config, "JSON config file");
  experiment->add_option("--out", ea.out, "report path (default stdout)");
  experiment->add_option("--plot-csv", ea.plot_csv, "plot series (trial, statistic, grid_N)");
  experiment->add_option("--seed", ea.seed, "overrides the config seed");
  experiment->add_option("--trials", ea.trials, "overrides the config trial count");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    return detail::report_error(err, kExitInvalid, "invalid_argument", e.what());
  }

  try {
    detail::CommandResult res;
    if (weights->parsed()) {
      res = detail::run_weights(wa);
    } else if (maximal->parsed()) {
      res = detail::run_maximal(ma);
    } else if (validate->parsed()) {
      res = detail::run_validate(va);
    } else if (decompose_cmd->parsed()) {
      res = detail::run_decompose(da);
    } else if (op->parsed()) {
      res = detail::run_operator(oa);
    } else {
      res = detail::run_experiment_command(ea);
    }
    detail::emit_json(res.doc, res.out_path, out);
    if (res.code != kExitOk)
      return detail::report_error(err, res.code, res.code == kExitHypothesis ? "hypothesis_not_satisfied" : "diverged",
                                  res.reason);
    return kExitOk;
  } catch (const HypothesisNotSatisfied& e) {
    return detail::report_error(err, kExitHypothesis, "hypothesis_not_satisfied", e.what());
  } catch (const GridResolutionError& e) {
    return detail::report_error(err, kExitInvalid, "grid_resolution", e.what());
  } catch (const std::invalid_argument& e) {
    return detail::report_error(err, kExitInvalid, "invalid_argument", e.what());
  } catch (const std::out_of_range& e) {
    return detail::report_error(err, kExitInvalid, "invalid_argument", e.what());
  } catch (const nlohmann::json::exception& e) {
    return detail::report_error(err, kExitInvalid, "invalid_argument", e.what());
  } catch (const std::exception& e) {
    return detail::report_error(err, kExitInternal, "internal", e.what());
  }
}

}  // namespace hardylab
