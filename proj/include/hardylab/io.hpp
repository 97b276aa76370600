#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "hardylab/atoms.hpp"
#include "hardylab/czdecomp.hpp"
#include "hardylab/error.hpp"
#include "hardylab/experiments.hpp"
#include "hardylab/grid.hpp"
#include "hardylab/maximal.hpp"
#include "hardylab/operators.hpp"
#include "hardylab/weights.hpp"

namespace hardylab {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// JSON has no infinities: non-finite reals are written as "inf", "-inf", "nan".
inline Json json_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double real_from_json(const Json& j, const std::string& key) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw InvalidArgument("'" + key + "' must be a number");
}

inline Json json_reals(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(json_real(x));
  return a;
}

// Top-level wrapper shared by every command.
inline Json json_document(const std::string& command) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = command;
  j["version"] = kLibraryVersion;
  return j;
}

inline Json error_document(int code, const std::string& type, const std::string& message) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["error"] = {{"code", code}, {"type", type}, {"message", message}};
  return j;
}

inline Json to_json(const Grid& g) {
  return {{"n", g.dim()}, {"N", g.cells_per_axis()}, {"R", g.half_extent()}, {"h", g.spacing()}};
}

inline Json to_json(const Ball& b, int dim) {
  Json c = dim == 1 ? Json(b.center[0]) : Json::array({b.center[0], b.center[1]});
  return {{"center", c}, {"radius", b.radius}};
}

inline Json to_json(const Characteristic& c, int dim) {
  return {{"value", json_real(c.value)},     {"diverged", c.diverged},   {"balls", c.balls},
          {"unresolved", c.unresolved},      {"witness", to_json(c.witness, dim)},
          {"threshold", c.threshold},        {"overflow_cap", c.overflow_cap}};
}

inline Json to_json(const CriticalIndices& ci) {
  return {{"q_critical", json_real(ci.q_critical)},
          {"q_exceeds_cap", ci.q_exceeds_cap},
          {"r_critical", json_real(ci.r_critical)},
          {"r_capped", ci.r_capped},
          {"p_cap", ci.p_cap},
          {"r_cap", ci.r_cap},
          {"threshold", ci.threshold},
          {"tolerance", ci.tolerance},
          {"family_depth", ci.family_depth}};
}

inline Json to_json(const AdmissibilityReport& a) {
  Json j = {{"pass", a.pass},
            {"p_ok", a.p_ok},
            {"p0_ok", a.p0_ok},
            {"d_ok", a.d_ok},
            {"p0_lower", json_real(a.p0_lower)},
            {"p0_margin", json_real(a.p0_margin)},
            {"d_min", a.d_min},
            {"q_critical", json_real(a.q_critical)},
            {"r_critical", json_real(a.r_critical)},
            {"r_capped", a.r_capped},
            {"rh_exponent", json_real(a.rh_exponent)}};
  if (a.rh_witness_finite) j["rh_witness_finite"] = *a.rh_witness_finite;
  return j;
}

inline Json to_json(const ValidationReport& r) {
  Json j = {{"kind", r.kind},
            {"pass", r.pass},
            {"support_ok", r.support_ok},
            {"size_ok", r.size_ok},
            {"decay_ok", r.decay_ok},
            {"moments_ok", r.moments_ok},
            {"outside_mass", json_real(r.outside_mass)},
            {"size_residual", json_real(r.size_residual)},
            {"norm", json_real(r.norm)},
            {"bound", json_real(r.bound)},
            {"full_norm_ratio", json_real(r.full_norm_ratio)},
            {"moment_residuals", json_reals(r.moment_residuals)},
            {"moment_thresholds", json_reals(r.moment_thresholds)},
            {"tolerances", {{"moment", r.tolerances.moment}, {"size", r.tolerances.size}, {"decay", r.tolerances.decay}}}};
  if (r.kind == "molecule") {
    j["decay_exponent"] = r.decay_exponent;
    j["decay_max_violation"] = json_real(r.decay_max_violation);
  }
  return j;
}

inline Json to_json(const AtomParams& a, int dim) {
  return {{"p", a.p}, {"p0", json_real(a.p0)}, {"d", a.d}, {"ball", to_json(a.ball, dim)}, {"weight", a.weight.describe()}};
}

inline Json to_json(const MaximalConfig& c) {
  auto scale = [](int k) { return k == kAutoScale ? Json(nullptr) : Json(k); };
  return {{"family_depth", c.family_depth},
          {"k_min", scale(c.k_min)},
          {"k_max", scale(c.k_max)},
          {"bump", c.bump == BumpProfile::exp_cutoff ? "exp" : "plateau"},
          {"min_ball_volume", c.min_ball_volume},
          {"aperture", c.aperture}};
}

inline std::string method_name(OperatorMethod m) {
  switch (m) {
    case OperatorMethod::multiplier: return "multiplier";
    case OperatorMethod::quadrature: return "quadrature";
    case OperatorMethod::periodic_multiplier: return "periodic";
  }
  return "unknown";
}

inline Json to_json(const OperatorSpec& s) {
  Json j = {{"op", s.describe()}, {"method", method_name(s.method)}};
  if (s.kind == OperatorKind::truncated_kernel) j["omega"] = json_reals(s.omega);
  if (s.method == OperatorMethod::quadrature) {
    j["epsilon"] = s.epsilon;
    j["near_correction"] = s.near_correction;
  }
  return j;
}

// Atoms are stored as windows: the hardylab-grid v1 header of the full grid,
// the first cell index and the values on the window; every other cell is 0.
inline Json to_json(const AtomicDecomposition& dec) {
  Json j;
  j["grid"] = to_json(dec.grid);
  j["grid_header"] = grid_header(dec.grid);
  j["params"] = to_json(dec.params, dec.grid.dim());
  j["dilation"] = dec.dilation;
  j["min_cube_cells"] = dec.min_cube_cells;
  j["j_range"] = {dec.j_lo, dec.j_hi};
  Json rec = Json::object();
  for (const auto& [s, err] : dec.reconstruction_error) rec[format_real(s)] = json_real(err);
  j["reconstruction_error"] = rec;
  j["reconstruction_ok"] = dec.reconstruction_ok;
  j["coefficient_mass_p"] = json_real(dec.coefficient_mass_p);
  j["hardy_norm_p"] = json_real(dec.hardy_norm_p);
  j["mass_ratio"] = json_real(dec.mass_ratio);
  j["height_constant"] = json_real(dec.height_constant);
  j["coefficient_constant"] = json_real(dec.coefficient_constant);
  j["containment_constant"] = json_real(dec.containment_constant);
  j["max_overlap"] = dec.max_overlap;
  j["support_outside_mass"] = json_real(dec.support_outside_mass);
  j["dropped_pieces"] = dec.dropped_pieces;
  j["atoms_failed"] = dec.atoms_failed;
  j["all_atoms_pass"] = dec.all_atoms_pass;
  Json entries = Json::array();
  for (const auto& e : dec.entries) {
    Json a;
    a["j"] = e.j;
    a["k"] = e.k;
    a["remainder"] = e.remainder;
    a["lambda"] = json_real(e.lambda);
    a["ball"] = to_json(e.ball, dec.grid.dim());
    a["height"] = json_real(e.height);
    a["coefficient_ratio"] = json_real(e.coefficient_ratio);
    a["containment"] = json_real(e.containment);
    a["validation"] = to_json(e.validation);
    a["first_cell"] = e.first_cell;
    a["values"] = json_reals(e.values);
    entries.push_back(std::move(a));
  }
  j["entries"] = std::move(entries);
  return j;
}

inline Json to_json(const ExperimentConfig& c) {
  return {{"kind", experiment_name(c.kind)},
          {"weight", c.weight.describe()},
          {"operator", c.op.describe()},
          {"method", method_name(c.op.method)},
          {"epsilon", c.op.epsilon},
          {"p", c.p},
          {"p0", json_real(c.p0)},
          {"d", c.d},
          {"q", c.q},
          {"q0", c.q0},
          {"trials", c.trials},
          {"seed", c.seed},
          {"grid", {{"n", c.grid.dim()}, {"N", c.grid.cells_per_axis()}, {"R", c.grid.half_extent()}}},
          {"maximal", to_json(c.maximal)},
          {"molecules", c.molecules},
          {"refinement", c.refinement},
          {"family_depth", c.family_depth},
          {"index_cells", c.index_cells}};
}

inline Json to_json(const ExperimentReport& r) {
  Json j;
  j["config"] = to_json(r.config);
  j["version"] = r.version;
  Json hyp = Json::array();
  for (const auto& h : r.hypotheses)
    hyp.push_back({{"name", h.name}, {"ok", h.ok}, {"value", json_real(h.value)}, {"bound", json_real(h.bound)}});
  j["hypotheses"] = std::move(hyp);
  j["hypotheses_ok"] = r.hypotheses_ok;
  Json idx = Json::object();
  for (const auto& [k, v] : r.indices) idx[k] = json_real(v);
  j["indices"] = std::move(idx);
  Json trials = Json::array();
  for (const auto& t : r.trials) {
    Json e = Json::object();
    for (const auto& [k, v] : t.extra) e[k] = json_real(v);
    trials.push_back({{"trial", t.trial},
                      {"seed", t.seed},
                      {"value", json_real(t.value)},
                      {"coarse_value", json_real(t.coarse_value)},
                      {"pass", t.pass},
                      {"extra", std::move(e)}});
  }
  j["trials"] = std::move(trials);
  j["running_max"] = json_reals(r.running_max);
  j["summary"] = {{"max", json_real(r.max_value)},
                  {"median", json_real(r.median_value)},
                  {"max_coarse", json_real(r.max_coarse)},
                  {"stability_ratio", json_real(r.stability_ratio)},
                  {"stability_window", {kStabilityLow, kStabilityHigh}},
                  {"stable", r.stable},
                  {"all_pass", r.all_pass},
                  {"diverged", r.diverged},
                  {"conclusion_ok", r.conclusion_ok}};
  j["notes"] = r.notes;
  j["constants"] = {{"divergence_threshold", kDivergenceThreshold}, {"overflow_cap", kOverflowCap}};
  j["wall_seconds"] = r.wall_seconds;
  return j;
}

// Report minus wall time, for reproducibility comparisons.
inline Json reproducible_part(const ExperimentReport& r) {
  Json j = to_json(r);
  j.erase("wall_seconds");
  return j;
}

// One row per trial and grid: trial, statistic, grid_N.
inline std::string plot_csv(const ExperimentReport& r) {
  std::string out = "trial,statistic,grid_N\n";
  std::size_t N = r.config.grid.cells_per_axis();
  for (const auto& t : r.trials) out += std::to_string(t.trial) + "," + format_real(t.value) + "," + std::to_string(N) + "\n";
  if (r.config.refinement)
    for (const auto& t : r.trials)
      out += std::to_string(t.trial) + "," + format_real(t.coarse_value) + "," + std::to_string(N / 2) + "\n";
  return out;
}

namespace detail {

inline void reject_unknown_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  require(j.is_object(), where + " must be a JSON object");
  for (const auto& item : j.items())
    require(allowed.count(item.key()) != 0, "unknown key '" + item.key() + "' in " + where);
}

inline int int_from_json(const Json& j, const std::string& key) {
  require(j.is_number_integer(), "'" + key + "' must be an integer");
  return j.get<int>();
}

}  // namespace detail

// Experiment config file, in the same layout as the report's config echo.
// Every key is optional; unknown keys are rejected.
inline ExperimentConfig experiment_config_from_json(const Json& j) {
  detail::reject_unknown_keys(j,
                              {"kind", "weight", "operator", "method", "epsilon", "p", "p0", "d", "q", "q0", "trials",
                               "seed", "grid", "maximal", "molecules", "refinement", "family_depth", "index_cells"},
                              "experiment config");
  ExperimentConfig c;
  if (j.contains("kind")) {
    require(j["kind"].is_string(), "'kind' must be a string");
    c.kind = parse_experiment_kind(j["kind"].get<std::string>());
  }
  if (j.contains("weight")) {
    require(j["weight"].is_string(), "'weight' must be a weight spec string");
    c.weight = parse_weight_spec(j["weight"].get<std::string>());
  }
  std::string method = "multiplier";
  if (j.contains("method")) {
    require(j["method"].is_string(), "'method' must be a string");
    method = j["method"].get<std::string>();
  }
  if (j.contains("operator")) {
    require(j["operator"].is_string(), "'operator' must be a string");
    c.op = parse_operator_spec(j["operator"].get<std::string>(), method);
  } else {
    c.op = parse_operator_spec("hilbert", method);
  }
  if (j.contains("epsilon")) c.op.epsilon = real_from_json(j["epsilon"], "epsilon");
  if (j.contains("p")) c.p = real_from_json(j["p"], "p");
  if (j.contains("p0")) c.p0 = real_from_json(j["p0"], "p0");
  if (j.contains("d")) c.d = detail::int_from_json(j["d"], "d");
  if (j.contains("q")) c.q = real_from_json(j["q"], "q");
  if (j.contains("q0")) c.q0 = real_from_json(j["q0"], "q0");
  if (j.contains("trials")) c.trials = detail::int_from_json(j["trials"], "trials");
  if (j.contains("seed")) {
    require(j["seed"].is_number_unsigned(), "'seed' must be a nonnegative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("grid")) {
    const Json& g = j["grid"];
    detail::reject_unknown_keys(g, {"n", "N", "R"}, "grid");
    int n = g.contains("n") ? detail::int_from_json(g["n"], "grid.n") : 1;
    require(!g.contains("N") || g["N"].is_number_unsigned(), "'grid.N' must be a positive integer");
    std::size_t N = g.contains("N") ? g["N"].get<std::size_t>() : 2048;
    double R = g.contains("R") ? real_from_json(g["R"], "grid.R") : 1.0;
    c.grid = Grid(n, R, N);
  }
  if (j.contains("maximal")) {
    const Json& m = j["maximal"];
    detail::reject_unknown_keys(m, {"family_depth", "k_min", "k_max", "bump", "min_ball_volume", "aperture"}, "maximal");
    if (m.contains("family_depth")) c.maximal.family_depth = detail::int_from_json(m["family_depth"], "maximal.family_depth");
    if (m.contains("k_min") && !m["k_min"].is_null()) c.maximal.k_min = detail::int_from_json(m["k_min"], "maximal.k_min");
    if (m.contains("k_max") && !m["k_max"].is_null()) c.maximal.k_max = detail::int_from_json(m["k_max"], "maximal.k_max");
    if (m.contains("bump")) {
      require(m["bump"].is_string(), "'maximal.bump' must be a string");
      auto b = m["bump"].get<std::string>();
      require(b == "exp" || b == "plateau", "'maximal.bump' must be exp or plateau");
      c.maximal.bump = b == "exp" ? BumpProfile::exp_cutoff : BumpProfile::plateau;
    }
    if (m.contains("min_ball_volume")) c.maximal.min_ball_volume = real_from_json(m["min_ball_volume"], "maximal.min_ball_volume");
    if (m.contains("aperture")) c.maximal.aperture = real_from_json(m["aperture"], "maximal.aperture");
  }
  if (j.contains("molecules")) c.molecules = detail::int_from_json(j["molecules"], "molecules");
  if (j.contains("refinement")) {
    require(j["refinement"].is_boolean(), "'refinement' must be a boolean");
    c.refinement = j["refinement"].get<bool>();
  }
  if (j.contains("family_depth")) c.family_depth = detail::int_from_json(j["family_depth"], "family_depth");
  if (j.contains("index_cells")) {
    require(j["index_cells"].is_number_unsigned(), "'index_cells' must be a positive integer");
    c.index_cells = j["index_cells"].get<std::size_t>();
  }
  return c;
}

}  // namespace hardylab
