#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "yamabe/constants.hpp"
#include "yamabe/io.hpp"
#include "yamabe/iterate.hpp"
#include "yamabe/prescribe.hpp"
#include "yamabe/quotient.hpp"
#include "yamabe/spectral.hpp"

using namespace yamabe;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "1.0.0";

enum class Type { integer, real, text, real_list, int_range };

struct Key {
  std::string name;
  Type type;
  std::string fallback;  // default, as text
  std::string help;
};

// ---------------------------------------------------------------- schema

const std::vector<Key> kGridKeys = {
    {"n", Type::integer, "3", "dimension"},
    {"L", Type::real, "4", "torus side"},
    {"m", Type::integer, "33", "nodes per axis"},
    {"curvature", Type::text, "gaussian", "constant | gaussian | random"},
    {"S0", Type::real, "1", "background scalar curvature"},
    {"amp", Type::real, "-2", "gaussian or random amplitude"},
    {"var", Type::real, "0.16", "gaussian variance"},
    {"modes", Type::integer, "6", "random Fourier modes"},
};

std::vector<Key> with_grid(std::vector<Key> extra) {
  std::vector<Key> k = kGridKeys;
  k.insert(k.end(), extra.begin(), extra.end());
  return k;
}

const std::map<std::string, std::vector<Key>>& schema() {
  static const std::map<std::string, std::vector<Key>> s = {
      {"constants", {{"n", Type::int_range, "3..8", "dimensions, e.g. 3..8 or 5"}}},
      {"quotient-scan",
       {{"n", Type::integer, "5", "dimension"},
        {"r", Type::real, "0.1", "ball radius"},
        {"beta", Type::real, "-1", "perturbation"},
        {"S0", Type::real, "-1", "scalar curvature at the center"},
        {"eps", Type::real_list, "1e-4,2e-4,4e-4", "epsilon values"}}},
      {"eigen",
       with_grid({{"kind", Type::text, "periodic", "periodic | radial"},
                  {"r", Type::real, "0.1", "ball radius (radial)"},
                  {"operator", Type::text, "conformal", "conformal | laplacian"},
                  {"beta", Type::real, "0", "perturbation added to S"}})},
      {"local-solve",
       {{"n", Type::integer, "3", "dimension"},
        {"r", Type::real, "0.5", "ball radius"},
        {"m", Type::integer, "51", "radial nodes"},
        {"S0", Type::real, "-1", "constant scalar curvature"},
        {"beta", Type::real, "0", "perturbation"},
        {"c", Type::real, "1", "boundary value"},
        {"lambda", Type::real, "nan", "override; nan selects the default"},
        {"max-iter", Type::integer, "500", "iteration cap"}}},
      {"global-solve",
       with_grid({{"beta", Type::real, "-0.05", "perturbation"},
                  {"kappa", Type::real, "-1", "slack; negative selects 0.1 lambda_beta"},
                  {"c", Type::real, "1", "boundary constant (eta1 < 0)"},
                  {"max-iter", Type::integer, "20000", "monotone iteration cap"}})},
      {"continuation",
       with_grid({{"beta0", Type::real, "-0.2", "first beta"},
                  {"steps", Type::integer, "4", "schedule length"},
                  {"kappa", Type::real, "-1", "slack; negative selects 0.1 lambda_beta0"},
                  {"max-iter", Type::integer, "20000", "monotone iteration cap"}})},
      {"prescribe",
       {{"n", Type::integer, "3", "dimension"},
        {"L", Type::real, "1", "torus side"},
        {"m", Type::integer, "32", "nodes per axis"},
        {"S0", Type::real, "0", "constant background curvature"},
        {"sign", Type::text, "negative", "negative | positive"},
        {"C", Type::real, "2", "bump depth"},
        {"r", Type::real, "0.1", "bump radius"},
        {"center", Type::integer, "-1", "node index of q; -1 selects the center node"}}},
  };
  return s;
}

const std::vector<Key> kCommon = {
    {"tol", Type::real, "1e-9", "solver tolerance"},
    {"seed", Type::integer, "1", "seed for randomized fields"},
};

// ---------------------------------------------------------------- config parsing

bool parse_real(const std::string& s, double& v) {
  try {
    std::size_t pos = 0;
    v = std::stod(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

bool parse_int(const std::string& s, long long& v) {
  try {
    std::size_t pos = 0;
    v = std::stoll(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

// text or JSON value -> typed JSON, appending to errs on failure
json convert(const Key& k, const json& raw, std::vector<std::string>& errs) {
  const std::string where = "'" + k.name + "'";
  std::string text;
  if (raw.is_string())
    text = raw.get<std::string>();
  else if (raw.is_number() || raw.is_boolean())
    text = raw.dump();
  else if (raw.is_array() && k.type == Type::real_list) {
    json out = json::array();
    for (const auto& e : raw) {
      if (!e.is_number()) {
        errs.push_back(where + ": list entries must be numbers");
        return {};
      }
      out.push_back(e.get<double>());
    }
    return out;
  } else if (raw.is_array() && k.type == Type::int_range && raw.size() == 2 && raw[0].is_number_integer() &&
             raw[1].is_number_integer() && raw[0] <= raw[1]) {
    return raw;
  } else {
    errs.push_back(where + ": unsupported value " + raw.dump());
    return {};
  }

  switch (k.type) {
    case Type::integer: {
      long long v;
      if (!parse_int(text, v)) {
        errs.push_back(where + ": expected an integer, got '" + text + "'");
        return {};
      }
      return v;
    }
    case Type::real: {
      double v;
      if (!parse_real(text, v)) {
        errs.push_back(where + ": expected a number, got '" + text + "'");
        return {};
      }
      if (std::isnan(v)) return "nan";
      return v;
    }
    case Type::text:
      return text;
    case Type::real_list: {
      json out = json::array();
      std::istringstream is(text);
      std::string cell;
      while (std::getline(is, cell, ',')) {
        double v;
        if (!parse_real(cell, v)) {
          errs.push_back(where + ": '" + cell + "' is not a number");
          return {};
        }
        out.push_back(v);
      }
      if (out.empty()) errs.push_back(where + ": empty list");
      return out;
    }
    case Type::int_range: {
      long long lo, hi;
      const auto dots = text.find("..");
      const bool ok = dots == std::string::npos
                          ? parse_int(text, lo) && (hi = lo, true)
                          : parse_int(text.substr(0, dots), lo) && parse_int(text.substr(dots + 2), hi);
      if (!ok || lo > hi) {
        errs.push_back(where + ": expected N or A..B, got '" + text + "'");
        return {};
      }
      return json::array({lo, hi});
    }
  }
  return {};
}

double real(const json& cfg, const std::string& k) {
  const json& v = cfg.at(k);
  return v.is_string() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}
long long integer(const json& cfg, const std::string& k) { return cfg.at(k).get<long long>(); }
std::string text(const json& cfg, const std::string& k) { return cfg.at(k).get<std::string>(); }

void check_ranges(const std::string& sub, const json& c, std::vector<std::string>& errs) {
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) errs.push_back(msg);
  };
  auto has = [&](const char* k) { return c.contains(k) && !c.at(k).is_null(); };
  if (has("n") && !c.at("n").is_array()) need(integer(c, "n") >= 3, "'n' must be at least 3");
  if (has("n") && c.at("n").is_array()) need(c.at("n")[0].get<long long>() >= 3, "'n' range must start at 3 or above");
  if (has("m")) need(integer(c, "m") >= 4, "'m' must be at least 4");
  if (has("L")) need(real(c, "L") > 0, "'L' must be positive");
  if (has("r")) need(real(c, "r") > 0, "'r' must be positive");
  if (has("var")) need(real(c, "var") > 0, "'var' must be positive");
  if (has("modes")) need(integer(c, "modes") >= 1, "'modes' must be at least 1");
  if (has("steps")) need(integer(c, "steps") >= 1, "'steps' must be at least 1");
  if (has("tol")) need(real(c, "tol") > 0, "'tol' must be positive");
  if (has("max-iter")) need(integer(c, "max-iter") >= 1, "'max-iter' must be at least 1");
  if (has("C")) need(real(c, "C") > 1, "'C' must exceed 1");
  if (has("curvature")) {
    const std::string k = text(c, "curvature");
    need(k == "constant" || k == "gaussian" || k == "random", "'curvature' must be constant, gaussian or random");
  }
  if (has("kind")) {
    const std::string k = text(c, "kind");
    need(k == "periodic" || k == "radial", "'kind' must be periodic or radial");
  }
  if (has("operator")) {
    const std::string k = text(c, "operator");
    need(k == "conformal" || k == "laplacian", "'operator' must be conformal or laplacian");
  }
  if (has("sign")) {
    const std::string k = text(c, "sign");
    need(k == "negative" || k == "positive", "'sign' must be negative or positive");
  }
  if (has("eps") && c.at("eps").is_array())
    for (const auto& e : c.at("eps")) need(e.get<double>() > 0, "'eps' entries must be positive");
  if (sub == "continuation" && has("beta0")) need(real(c, "beta0") < 0, "'beta0' must be negative");
}

// defaults < config file < command line
json build_config(const std::string& sub, const std::string& config_path, const std::map<std::string, std::string>& flags,
                  std::vector<std::string>& errs) {
  std::vector<Key> keys = schema().at(sub);
  keys.insert(keys.end(), kCommon.begin(), kCommon.end());
  json raw = json::object();
  for (const auto& k : keys) raw[k.name] = k.fallback;

  if (!config_path.empty()) {
    std::ifstream is(config_path);
    json file;
    if (!is) {
      errs.push_back("cannot read config file " + config_path);
    } else {
      try {
        is >> file;
      } catch (const std::exception& e) {
        errs.push_back("config file is not valid JSON: " + std::string(e.what()));
      }
    }
    if (file.is_object()) {
      // an emitted manifest can be fed back as a config
      if (file.contains("config") && file["config"].is_object()) {
        if (file.contains("subcommand") && file["subcommand"] != sub)
          errs.push_back("manifest was written by '" + file["subcommand"].get<std::string>() + "', not '" + sub + "'");
        file = file["config"];
      }
      for (auto it = file.begin(); it != file.end(); ++it) {
        const bool known = std::any_of(keys.begin(), keys.end(), [&](const Key& k) { return k.name == it.key(); });
        if (!known)
          errs.push_back("unknown key '" + it.key() + "' for " + sub);
        else
          raw[it.key()] = it.value();
      }
    } else if (!file.is_null()) {
      errs.push_back("config file must hold a JSON object of flat keys");
    }
  }
  for (const auto& [k, v] : flags) raw[k] = v;

  json cfg = json::object();
  for (const auto& k : keys) {
    json v = convert(k, raw[k.name], errs);
    cfg[k.name] = v;
  }
  check_ranges(sub, cfg, errs);
  return cfg;
}

// ---------------------------------------------------------------- shared builders

MetricField torus_metric(const json& c) {
  const int n = int(integer(c, "n"));
  const double L = real(c, "L");
  const GridSpec grid = build_periodic_grid(n, L, int(integer(c, "m")));
  const std::string kind = text(c, "curvature");
  const double S0 = real(c, "S0"), amp = real(c, "amp"), var = real(c, "var");
  const Eigen::VectorXd ctr = Eigen::VectorXd::Constant(n, L / 2);
  ScalarField S;
  if (kind == "constant") {
    S = constant_field(grid, S0);
  } else if (kind == "gaussian") {
    S = sample(grid, [&](const Eigen::VectorXd& x) { return S0 + amp * std::exp(-(x - ctr).squaredNorm() / (2 * var)); });
  } else {
    std::mt19937_64 rng(std::uint64_t(integer(c, "seed")));
    std::uniform_int_distribution<int> wave(-2, 2);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const int modes = int(integer(c, "modes"));
    std::vector<Eigen::VectorXd> k(modes);
    std::vector<double> coef(modes), phase(modes);
    for (int j = 0; j < modes; ++j) {
      k[j] = Eigen::VectorXd::Zero(n);
      while (k[j].squaredNorm() == 0)
        for (int d = 0; d < n; ++d) k[j][d] = wave(rng);
      coef[j] = unit(rng);
      phase[j] = std::numbers::pi * unit(rng);
    }
    S = sample(grid, [&](const Eigen::VectorXd& x) {
      double s = 0;
      for (int j = 0; j < modes; ++j) s += coef[j] * std::cos(2 * std::numbers::pi * k[j].dot(x) / L + phase[j]);
      return S0 + amp * s / modes;
    });
  }
  return with_scalar_curvature(flat_metric(grid), S.values);
}

json gates_json(const std::vector<Gate>& gates) {
  json a = json::array();
  for (const auto& g : gates) a.push_back({{"name", g.name}, {"ok", g.ok}, {"value", g.value}});
  return a;
}

json certificate_json(const Certificate& c) {
  json j = {{"kind", c.kind}, {"ok", c.ok}, {"margin", c.margin}, {"worst_node", c.worst},
            {"worst_residual", c.worst_residual}, {"interface_nodes", c.interface_nodes}};
  if (std::isfinite(c.interface_margin)) j["interface_margin"] = c.interface_margin;
  return j;
}

json trace_json(const IterationTrace& t) {
  json j = {{"steps", t.residual.size()}};
  if (!t.residual.empty()) {
    j["final_residual"] = t.residual.back();
    j["final_min"] = t.umin.back();
    j["final_max"] = t.umax.back();
  }
  bool mono = true;
  for (std::size_t k = 1; k < t.monotone.size(); ++k) mono = mono && t.monotone[k];
  j["monotone"] = mono;
  return j;
}

json partition_json(const PartitionResult& p) {
  json regions = json::array();
  for (const auto& r : p.regions)
    regions.push_back({{"region", r.region}, {"nodes", r.nodes},
                       {"margin", std::isfinite(r.margin) ? json(r.margin) : json(nullptr)}});
  return {{"gamma", p.used.gamma}, {"delta", p.used.delta}, {"moll_eps", p.used.moll_eps},
          {"beta_prime", p.used.beta_prime}, {"beta_prime_literal", p.beta_prime_literal},
          {"dominance", p.dominance}, {"crossings", p.crossings}, {"above_u3", p.above_u3}, {"ok", p.ok},
          {"regions", regions}};
}

// ---------------------------------------------------------------- run context

struct Run {
  std::string sub;
  std::filesystem::path out;
  json cfg;
  json stages = json::array();
  json summary = json::object();
  std::vector<std::string> failures;
  bool certificate_failure = false;

  // every printed number also lands in the manifest summary
  template <typename T>
  void claim(const std::string& key, const T& v) {
    summary[key] = v;
    std::cout << key << " = " << json(v).dump() << '\n';
  }
  std::string path(const std::string& file) const { return (out / file).string(); }
};

// ---------------------------------------------------------------- subcommands

void run_constants(Run& r) {
  const auto range = r.cfg.at("n");
  CsvTable t{{"n", "a", "p", "T", "K1", "K2", "K3", "omega_n", "T_minus_K1_over_K2", "closure_residual",
              "moment_residual", "quadrature_discrepancy"},
             {}};
  double worst = 0;
  for (long long n = range[0]; n <= range[1]; ++n) {
    const ConstantsTable c = constants_for(int(n));
    const double ratio = std::abs(c.T - c.K1 / c.K2) / c.T;
    const double closure = n >= 5 ? closure_identity_check(int(n)) : std::nan("");
    const double moment = n >= 5 ? moment_ratio_check(int(n)) : std::nan("");
    worst = std::max(worst, ratio);
    t.rows.push_back({double(n), c.a, c.p, c.T, c.K1, c.K2, c.K3.value_or(std::nan("")), c.omega_n, ratio, closure,
                      moment, c.quadrature_discrepancy});
  }
  write_csv(r.path("constants.csv"), t);
  r.stages.push_back({{"stage", "constants"}, {"rows", t.rows.size()}, {"csv", "constants.csv"}});
  r.claim("max_relative_T_gap", worst);
  if (worst > 1e-8) r.failures.push_back("T and K1/K2 disagree beyond 1e-8");
}

void run_quotient(Run& r) {
  const int n = int(integer(r.cfg, "n"));
  std::vector<double> eps = r.cfg.at("eps").get<std::vector<double>>();
  CurvatureSpec curv;
  curv.S0 = real(r.cfg, "S0");
  const QuotientReport q = quotient_scan(n, real(r.cfg, "r"), real(r.cfg, "beta"), curv, eps);
  CsvTable t{{"epsilon", "Q", "T", "margin"}, {}};
  for (std::size_t k = 0; k < q.epsilons.size(); ++k) t.rows.push_back({q.epsilons[k], q.Q[k], q.T, q.T - q.Q[k]});
  write_csv(r.path("quotient.csv"), t);
  r.stages.push_back({{"stage", "quotient_scan"}, {"csv", "quotient.csv"},
                      {"fit", {{"regime", q.fit.regime}, {"coefficient", q.fit.coefficient},
                               {"secondary", q.fit.secondary}, {"predicted", q.fit.predicted}, {"ok", q.fit.ok}}}});
  r.claim("T", q.T);
  r.claim("min_margin", q.margin);
  r.claim("fit_regime", q.fit.regime);
  r.claim("fit_coefficient", q.fit.coefficient);
  if (q.fit.predicted != 0) r.claim("fit_predicted", q.fit.predicted);
  if (!(q.margin > 0)) r.failures.push_back("Q >= T at some epsilon");
}

void run_eigen(Run& r) {
  const bool lap = text(r.cfg, "operator") == "laplacian";
  const int n = int(integer(r.cfg, "n"));
  const double a = lap ? 1.0 : conformal_a(n);
  const double beta = real(r.cfg, "beta");
  EigenOptions eo;
  eo.tol = std::min(1e-10, real(r.cfg, "tol"));
  SpectralResult s;
  GridSpec grid;
  if (text(r.cfg, "kind") == "radial") {
    grid = build_radial_grid(n, real(r.cfg, "r"), int(integer(r.cfg, "m")));
    CurvatureSpec cs;
    cs.S0 = real(r.cfg, "S0");
    const MetricField g = synthesize_normal_metric(grid, cs);
    const ScalarField V = lap ? constant_field(grid, 0.0) : ScalarField(grid, (g.scalar_curv.array() + beta).matrix());
    s = first_eigenpair(assemble_operator(g, a, V, radial_interior_mask(grid)), eo);
  } else {
    const MetricField g = torus_metric(r.cfg);
    grid = g.grid;
    const ScalarField V = lap ? constant_field(grid, 0.0) : ScalarField(grid, (g.scalar_curv.array() + beta).matrix());
    s = first_eigenpair(assemble_operator(g, a, V, Boundary::periodic), eo);
  }
  write_fields(r.path("eigenfunction"), FieldBundle{grid, {"phi"}, {s.eigenfunction.values}});
  r.stages.push_back({{"stage", "first_eigenpair"}, {"iterations", s.iterations}, {"residual", s.residual},
                      {"shift", s.shift}, {"field", "eigenfunction.csv"}});
  r.claim("eta1", s.eigenvalue);
  r.claim("sign", std::string(to_string(s.sign)));
  r.claim("residual", s.residual);
}

void run_local(Run& r) {
  const int n = int(integer(r.cfg, "n"));
  const double a = conformal_a(n), p = critical_p(n);
  const GridSpec grid = build_radial_grid(n, real(r.cfg, "r"), int(integer(r.cfg, "m")));
  CurvatureSpec cs;
  cs.S0 = real(r.cfg, "S0");
  const MetricField g = synthesize_normal_metric(grid, cs);
  const double beta = real(r.cfg, "beta"), c = real(r.cfg, "c");
  double lambda = real(r.cfg, "lambda");
  const double h = cs.S0 + beta;
  if (std::isnan(lambda)) lambda = h < 0 ? select_lambda_negative_scalar(2 * c, -h, p)
                                   : h > 0 ? select_lambda_positive_scalar(c, a, p)
                                           : 0.0;
  const LocalResult loc =
      double_iteration_local(make_local_problem(g, lambda, beta, c), real(r.cfg, "tol"), int(integer(r.cfg, "max-iter")));
  write_fields(r.path("solution"), FieldBundle{grid, {"u"}, {loc.u.values}});
  write_csv(r.path("trace.csv"), trace_table(loc.trace));
  r.stages.push_back({{"stage", "double_iteration_local"}, {"case", to_string(loc.kind)}, {"trace", trace_json(loc.trace)},
                      {"C_Mn", loc.trace.C_Mn}, {"field", "solution.csv"}, {"trace_csv", "trace.csv"}});
  r.claim("case", std::string(to_string(loc.kind)));
  r.claim("lambda", lambda);
  r.claim("residual", loc.trace.residual.back());
  r.claim("min", loc.u.values.minCoeff());
  r.claim("max", loc.u.values.maxCoeff());
  r.claim("boundary_extreme_gap", loc.boundary_extreme_gap);
  r.claim("lambda_ok", loc.lambda_ok);
  if (!loc.lambda_ok) r.failures.push_back("lambda condition fails with the realized C_Mn");
}

PipelineConfig pipeline_config(const json& c) {
  PipelineConfig cfg;
  cfg.tol = real(c, "tol");
  cfg.max_iter = int(integer(c, "max-iter"));
  if (c.contains("c")) cfg.c = real(c, "c");
  return cfg;
}

void run_global(Run& r) {
  const MetricField g = torus_metric(r.cfg);
  const double beta = real(r.cfg, "beta");
  const PipelineConfig cfg = pipeline_config(r.cfg);
  const int n = g.grid.n;
  const SpectralResult box =
      first_eigenpair(assemble_operator(g, conformal_a(n), g.curvature(), Boundary::periodic));
  const GlobalReport rep = box.eigenvalue < 0 ? solve_global_negative(g, beta, cfg)
                                              : solve_perturbed_positive(g, beta, real(r.cfg, "kappa"), cfg);
  write_fields(r.path("solution"), FieldBundle{g.grid, {"u", "u_minus", "u_plus"},
                                               {rep.u.values, rep.u_minus.values, rep.u_plus.values}});
  write_csv(r.path("trace.csv"), trace_table(rep.monotone_trace));
  json st = {{"stage", "global"},
             {"path", rep.path},
             {"gates", gates_json(rep.gates)},
             {"local_trace", trace_json(rep.local_trace)},
             {"monotone_trace", trace_json(rep.monotone_trace)},
             {"sub", certificate_json(rep.sub)},
             {"super", certificate_json(rep.super)},
             {"fallback", rep.fallback},
             {"field", "solution.csv"},
             {"trace_csv", "trace.csv"}};
  if (rep.fallback) st["fallback_reason"] = rep.fallback_reason;
  if (!rep.partition.regions.empty()) st["partition"] = partition_json(rep.partition);
  r.stages.push_back(st);
  r.claim("path", rep.path);
  r.claim("eta1", rep.eta1);
  r.claim("lambda", rep.lambda);
  if (rep.lambda_beta != 0) r.claim("lambda_beta", rep.lambda_beta);
  r.claim("residual", rep.residual);
  r.claim("min_u", rep.u.values.minCoeff());
  if (std::isfinite(rep.oracle_difference)) r.claim("newton_difference", rep.oracle_difference);
  r.claim("sub_ok", rep.sub.ok);
  r.claim("super_ok", rep.super.ok);
  r.claim("fallback", rep.fallback);
  if (!rep.sub.ok || !rep.super.ok) {
    r.certificate_failure = true;
    r.failures.push_back(std::string("certificate failed:") + (rep.sub.ok ? "" : " sub") + (rep.super.ok ? "" : " super"));
  }
  if (!(rep.residual <= cfg.tol)) r.failures.push_back("residual above tolerance");
}

void run_continuation(Run& r) {
  const MetricField g = torus_metric(r.cfg);
  const PipelineConfig cfg = pipeline_config(r.cfg);
  const ContinuationReport c =
      beta_continuation(g, real(r.cfg, "beta0"), int(integer(r.cfg, "steps")), real(r.cfg, "kappa"), cfg);
  CsvTable t{{"beta", "lambda_beta", "lambda_used", "lp_norm", "h1_norm", "contraction", "residual", "fallback"}, {}};
  for (const auto& s : c.steps)
    t.rows.push_back({s.beta, s.lambda_beta, s.lambda_used, s.lp_norm, s.h1_norm, s.contraction, s.residual,
                      s.fallback ? 1.0 : 0.0});
  write_csv(r.path("continuation.csv"), t);
  write_fields(r.path("solution"), FieldBundle{g.grid, {"u"}, {c.u.values}});
  r.stages.push_back({{"stage", "beta_continuation"}, {"steps", t.rows.size()}, {"kappa", c.kappa},
                      {"csv", "continuation.csv"}, {"field", "solution.csv"}});
  bool fallback = false;
  for (const auto& s : c.steps) fallback = fallback || s.fallback;
  r.claim("kappa", c.kappa);
  r.claim("final_residual", c.final_residual);
  r.claim("lambda_monotone", c.lambda_monotone);
  r.claim("lp_lower_bound", c.lp_lower_bound);
  r.claim("contraction_ok", c.contraction_ok);
  r.claim("below_aT", c.below_aT);
  r.claim("metric_scale", c.metric_scale);
  r.claim("any_fallback", fallback);
  if (!(c.final_residual <= 1e-7)) r.failures.push_back("final residual above 1e-7");
  if (!c.lambda_monotone) r.failures.push_back("lambda_beta decreased along the schedule");
  if (!c.lp_lower_bound) r.failures.push_back("L^p lower bound violated");
  if (!c.contraction_ok) r.failures.push_back("contraction factor >= 1");
  if (fallback) {
    r.certificate_failure = true;
    r.failures.push_back("sub/super certificates failed at some step (fallback solve used)");
  }
}

void run_prescribe(Run& r) {
  const int n = int(integer(r.cfg, "n"));
  const GridSpec grid = build_periodic_grid(n, real(r.cfg, "L"), int(integer(r.cfg, "m")));
  const MetricField g = with_scalar_curvature(flat_metric(grid), Eigen::VectorXd::Constant(grid.node_count(), real(r.cfg, "S0")));
  const long long q = integer(r.cfg, "center");
  const bool neg = text(r.cfg, "sign") == "negative";
  BumpSpec spec{q < 0 ? grid.center_node() : Index(q), real(r.cfg, "r"), real(r.cfg, "C"),
                neg ? BumpSign::negative : BumpSign::positive};
  const PrescribeResult p = neg ? flip_curvature_negative(g, spec) : flip_curvature_positive(g, spec);
  write_fields(r.path("prescribe"), FieldBundle{grid, {"u", "H", "F"}, {p.u.values, p.H.values, p.F.values}});
  r.stages.push_back({{"stage", "prescribe"}, {"sign", to_string(spec.sign)}, {"halvings", p.halvings},
                      {"radius_used", p.used.radius}, {"field", "prescribe.csv"}});
  r.claim("H_q", p.H_q);
  r.claim("eps", p.eps);
  r.claim("integral_F", p.integral_F);
  r.claim("sup_u_prime", p.sup_u_prime);
  r.claim("u_min", p.u_min);
  r.claim("u_max", p.u_max);
  r.claim("band_ok", p.band_ok);
  r.claim("flipped", p.flipped);
  if (!p.flipped) r.failures.push_back("H(q) does not have the requested sign");
  if (!p.band_ok) r.failures.push_back("u leaves the [C/8, 3C/8] band");
}

}  // namespace

const std::map<std::string, std::string> kAbout = {
    {"constants", "Sobolev and moment constants per dimension"},
    {"quotient-scan", "perturbed quotient of a bubble against the sphere constant"},
    {"eigen", "first eigenpair of the conformal Laplacian"},
    {"local-solve", "Dirichlet problem on a geodesic ball by double iteration"},
    {"global-solve", "global solution from certified sub- and supersolutions"},
    {"continuation", "beta continuation towards the unperturbed equation"},
    {"prescribe", "conformal change flipping the curvature sign at a point"},
};

int main(int argc, char** argv) {
  CLI::App app{"Numerical experiments for Yamabe-type equations"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "out";
  std::map<std::string, std::string> flags;
  std::map<std::string, CLI::App*> subs;

  for (const auto& [name, keys] : schema()) {
    CLI::App* s = app.add_subcommand(name, kAbout.at(name));
    s->allow_extras();
    s->add_option("--config", config_path, "flat-key JSON config, or a manifest from an earlier run");
    s->add_option("--out", out_dir, "output directory");
    std::vector<Key> all = keys;
    all.insert(all.end(), kCommon.begin(), kCommon.end());
    for (const auto& k : all)
      s->add_option_function<std::string>(
          "--" + k.name, [&flags, key = k.name](const std::string& v) { flags[key] = v; },
          k.help + " (default " + k.fallback + ")");
    subs[name] = s;
  }
  CLI11_PARSE(app, argc, argv);

  std::string sub;
  for (const auto& [name, s] : subs)
    if (s->parsed()) sub = name;

  std::vector<std::string> errs;
  for (const auto& extra : subs[sub]->remaining())
    if (extra.rfind("--", 0) == 0) errs.push_back("unknown flag '" + extra + "' for " + sub);
    else errs.push_back("unexpected argument '" + extra + "'");
  const json cfg = build_config(sub, config_path, flags, errs);
  if (!errs.empty()) {
    std::cerr << "invalid configuration (" << errs.size() << " problem" << (errs.size() > 1 ? "s" : "") << "):\n";
    for (const auto& e : errs) std::cerr << "  " << e << '\n';
    return 2;
  }

  Run r{sub, out_dir, cfg};
  std::error_code ec;
  std::filesystem::create_directories(r.out, ec);
  if (ec) {
    std::cerr << "cannot create output directory " << out_dir << ": " << ec.message() << '\n';
    return 2;
  }

  const auto t0 = std::chrono::steady_clock::now();
  int status = 0;
  std::string error;
  try {
    if (sub == "constants") run_constants(r);
    else if (sub == "quotient-scan") run_quotient(r);
    else if (sub == "eigen") run_eigen(r);
    else if (sub == "local-solve") run_local(r);
    else if (sub == "global-solve") run_global(r);
    else if (sub == "continuation") run_continuation(r);
    else if (sub == "prescribe") run_prescribe(r);
    status = r.failures.empty() ? 0 : (r.certificate_failure ? 3 : 1);
  } catch (const GateError& e) {
    error = std::string("gate failed: ") + e.what();
    status = 1;
  } catch (const PreconditionError& e) {
    error = std::string("precondition: ") + e.what();
    status = 1;
  } catch (const std::exception& e) {
    error = std::string("numerical failure: ") + e.what();
    status = 1;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json manifest = {{"tool", "yamabe_cli"},
                   {"version", kVersion},
                   {"subcommand", sub},
                   {"config", cfg},
                   {"stages", r.stages},
                   {"summary", r.summary},
                   {"status", status == 0 ? "ok" : "fail"},
                   {"exit_code", status},
                   {"failures", r.failures},
                   {"wall_clock_seconds", secs}};
  if (!error.empty()) manifest["error"] = error;
  std::ofstream(r.path("manifest.json")) << manifest.dump(2) << '\n';

  if (!error.empty()) std::cerr << error << '\n';
  for (const auto& f : r.failures) std::cerr << "FAIL: " << f << '\n';
  std::cout << "status = " << (status == 0 ? "ok" : "fail") << '\n';
  return status;
}
