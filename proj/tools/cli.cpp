#include "cli.hpp"

#include "dathermo/criteria.hpp"
#include "dathermo/decomposition.hpp"
#include "dathermo/random.hpp"
#include "dathermo/shadowing.hpp"
#include "dathermo/srb_multifractal.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <boost/version.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <unistd.h>

#ifndef DA_THERMO_VERSION
#define DA_THERMO_VERSION "0.0.0"
#endif

namespace da_cli {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace dathermo;

namespace {

enum class Kind { number, integer, string, number_array, int_array, int_matrix };

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::number: return "number";
    case Kind::integer: return "integer";
    case Kind::string: return "string";
    case Kind::number_array: return "array of numbers";
    case Kind::int_array: return "array of integers";
    default: return "square integer matrix";
  }
}

struct Field {
  std::string path;
  Kind kind;
  json def;
  bool nullable = false;
  std::optional<double> min;
  bool min_exclusive = false;
  std::vector<std::string> choices;
};

Field num(std::string p, json d, std::optional<double> min = {}, bool excl = false, bool nullable = false) {
  return {std::move(p), Kind::number, std::move(d), nullable, min, excl, {}};
}
Field integer(std::string p, json d, std::optional<double> min = {}, bool nullable = false) {
  return {std::move(p), Kind::integer, std::move(d), nullable, min, false, {}};
}
Field choice(std::string p, std::string d, std::vector<std::string> c) {
  return {std::move(p), Kind::string, d, false, {}, false, std::move(c)};
}

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = {
      choice("/map/type", "mane", {"mane", "linear"}),
      {"/map/matrix", Kind::int_matrix, json::array({{3, 2, 1}, {2, 2, 1}, {1, 1, 1}})},
      {"/map/q", Kind::number_array, nullptr, true},
      num("/map/rho", 0.05, 0.0, true),
      num("/map/lambda_c", 1.05, 0.0, true),
      num("/map/transverse_ratio", 0.45, 0.0, true),
      num("/map/core_ratio", 0.0, 0.0),
      num("/map/safety", 0.5, 0.0, true),
      choice("/potential/type", "zero", {"zero", "constant", "expression", "geometric"}),
      num("/potential/value", 0.0),
      {"/potential/expression", Kind::string, ""},
      num("/potential/alpha", 1.0, 0.0, true),
      num("/scales/eta", 0.0, 0.0),
      num("/scales/epsilon", 0.05, 0.0, true),
      num("/scales/delta", 0.01, 0.0, true),
      num("/scales/r", 0.1, 0.0, true),
      num("/scales/deviation", 0.1, 0.0, true),
      integer("/budgets/n_min", 6, 1),
      integer("/budgets/n_max", 14, 1),
      integer("/budgets/candidates", 2000000, 1),
      integer("/budgets/steps", 10000, 1000),
      integer("/budgets/n_transient", 100, 0),
      integer("/budgets/n_sample", 10000, 1),
      integer("/budgets/seeds", 2000, 1),
      integer("/budgets/batches", 2, 1),
      integer("/budgets/bins", 32, 1),
      integer("/budgets/stride", 5, 1),
      integer("/budgets/samples", 100000, 1),
      {"/budgets/n_grid", Kind::int_array, json::array({50, 100, 200, 400})},
      integer("/budgets/pseudo_orbits", 100, 1),
      integer("/budgets/length", 100, 2),
      num("/budgets/error", 1e-4, 0.0),
      {"/budgets/segment_lengths", Kind::int_array, json::array({20, 20, 20})},
      integer("/budgets/tau_max", 24, 1),
      integer("/budgets/tau_pairs", 32, 1),
      integer("/budgets/L_n_max", 10, 1),
      {"/t_grid", Kind::number_array, json::array({-0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5})},
      {"/chi_grid", Kind::number_array, nullptr, true},
      num("/criterion/L", nullptr, 1.0, false, true),
      num("/criterion/L_safety", 2.0, 0.0, true),
      num("/criterion/V", nullptr, 0.0, false, true),
      integer("/criterion/tau", nullptr, 0, true),
      num("/criterion/range", nullptr, 0.0, false, true),
      num("/criterion/seminorm", nullptr, 0.0, false, true),
      num("/criterion/Q1", nullptr, 0.0, false, true),
      num("/criterion/alpha", 1.0, 0.0, true),
      num("/criterion/K", 2.0, 0.0, true),
      num("/criterion/diam", 0.8660254037844386, 0.0, true),
      num("/criterion/Q", 1.0, 0.0, true),
      num("/criterion/delta_coef", 0.25, 0.0, true),
      integer("/criterion/sweep", 0, 0),
      choice("/precision", "high", {"high", "double"}),
      integer("/seed", 1, 0),
      integer("/workers", 1, 1),
      {"/out", Kind::string, nullptr, true},
  };
  return fields;
}

std::string escape_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

const Field* find_field(const std::string& path) {
  for (const Field& f : schema())
    if (f.path == path) return &f;
  return nullptr;
}

bool is_prefix(const std::string& path) {
  for (const Field& f : schema())
    if (f.path.size() > path.size() && f.path.compare(0, path.size(), path) == 0 && f.path[path.size()] == '/')
      return true;
  return false;
}

void check_value(const Field& f, const json& v) {
  if (v.is_null()) {
    if (!f.nullable) throw SchemaError(f.path, std::string("expected ") + kind_name(f.kind) + ", got null");
    return;
  }
  auto fail = [&] { throw SchemaError(f.path, std::string("expected ") + kind_name(f.kind)); };
  auto check_min = [&](double x, const std::string& where) {
    if (!std::isfinite(x)) throw SchemaError(where, "must be finite");
    if (f.min && (f.min_exclusive ? !(x > *f.min) : !(x >= *f.min))) {
      std::ostringstream os;
      os << "must be " << (f.min_exclusive ? "> " : ">= ") << *f.min;
      throw SchemaError(where, os.str());
    }
  };
  switch (f.kind) {
    case Kind::number:
      if (!v.is_number()) fail();
      check_min(v.get<double>(), f.path);
      break;
    case Kind::integer:
      if (!v.is_number_integer()) fail();
      if (v.is_number_unsigned()) {
        if (f.path != "/seed" && v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT32_MAX))
          throw SchemaError(f.path, "out of range");
        check_min(static_cast<double>(v.get<std::uint64_t>()), f.path);
      } else {
        check_min(static_cast<double>(v.get<long long>()), f.path);
        if (v.get<long long>() > INT32_MAX) throw SchemaError(f.path, "out of range");
      }
      break;
    case Kind::string:
      if (!v.is_string()) fail();
      if (!f.choices.empty() &&
          std::find(f.choices.begin(), f.choices.end(), v.get<std::string>()) == f.choices.end()) {
        std::string opts;
        for (const auto& c : f.choices) opts += (opts.empty() ? "" : " | ") + c;
        throw SchemaError(f.path, "expected one of " + opts);
      }
      break;
    case Kind::number_array:
    case Kind::int_array:
      if (!v.is_array()) fail();
      for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string where = f.path + "/" + std::to_string(i);
        if (f.kind == Kind::int_array ? !v[i].is_number_integer() : !v[i].is_number())
          throw SchemaError(where, f.kind == Kind::int_array ? "expected integer" : "expected number");
        if (!std::isfinite(v[i].get<double>())) throw SchemaError(where, "must be finite");
      }
      break;
    case Kind::int_matrix:
      if (!v.is_array() || v.empty()) fail();
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_array() || v[i].size() != v.size()) throw SchemaError(f.path + "/" + std::to_string(i), "row length must equal row count");
        for (std::size_t j = 0; j < v[i].size(); ++j)
          if (!v[i][j].is_number_integer())
            throw SchemaError(f.path + "/" + std::to_string(i) + "/" + std::to_string(j), "expected integer");
      }
      break;
  }
}

void walk(const json& node, const std::string& path) {
  if (!node.is_object()) throw SchemaError(path.empty() ? "/" : path, "expected object");
  for (auto it = node.begin(); it != node.end(); ++it) {
    const std::string p = path + "/" + escape_token(it.key());
    if (const Field* f = find_field(p)) {
      check_value(*f, it.value());
    } else if (is_prefix(p)) {
      walk(it.value(), p);
    } else {
      throw SchemaError(p, "unknown field");
    }
  }
}

}  // namespace

json resolve_config(const json& user) {
  walk(user, "");
  json out = json::object();
  for (const Field& f : schema()) {
    json::json_pointer ptr(f.path);
    out[ptr] = user.contains(ptr) ? user.at(ptr) : f.def;
  }
  if (out["/budgets/n_min"_json_pointer].get<int>() > out["/budgets/n_max"_json_pointer].get<int>())
    throw SchemaError("/budgets/n_min", "must be <= /budgets/n_max");
  if (out["/t_grid"_json_pointer].empty()) throw SchemaError("/t_grid", "must not be empty");
  if (out["/budgets/n_grid"_json_pointer].empty()) throw SchemaError("/budgets/n_grid", "must not be empty");
  for (std::size_t i = 0; i < out["/budgets/n_grid"_json_pointer].size(); ++i)
    if (out["/budgets/n_grid"_json_pointer][i].get<long long>() < 1)
      throw SchemaError("/budgets/n_grid/" + std::to_string(i), "must be >= 1");
  for (std::size_t i = 0; i < out["/budgets/segment_lengths"_json_pointer].size(); ++i)
    if (out["/budgets/segment_lengths"_json_pointer][i].get<long long>() < 1)
      throw SchemaError("/budgets/segment_lengths/" + std::to_string(i), "must be >= 1");
  if (out["/potential/type"_json_pointer] == "expression" && out["/potential/expression"_json_pointer] == "")
    throw SchemaError("/potential/expression", "required when /potential/type is expression");
  const std::size_t d = out["/map/matrix"_json_pointer].size();
  if (!out["/map/q"_json_pointer].is_null() && out["/map/q"_json_pointer].size() != d)
    throw SchemaError("/map/q", "length must equal the matrix dimension");
  return out;
}

json schema_description() {
  json out = json::object();
  for (const Field& f : schema()) {
    json e = {{"kind", kind_name(f.kind)}, {"default", f.def}};
    if (f.nullable) e["nullable"] = true;
    if (f.min) e[f.min_exclusive ? "exclusive_min" : "min"] = *f.min;
    if (!f.choices.empty()) e["choices"] = f.choices;
    out[f.path] = e;
  }
  return out;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const std::string& command, const json& resolved) {
  json key = resolved;
  key.erase("workers");
  key.erase("out");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(json{{"command", command}, {"config", key}}.dump())));
  return buf;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string quote_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

Csv::Csv(std::vector<std::string> header) : width_(header.size()) {
  std::vector<Cell> cells(header.begin(), header.end());
  line(cells);
}

void Csv::row(const std::vector<Cell>& cells) {
  if (cells.size() != width_) throw std::logic_error("csv: row width mismatch");
  line(cells);
}

void Csv::line(const std::vector<Cell>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) text_ += ',';
    std::visit(
        [this](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, double>)
            text_ += format_number(v);
          else if constexpr (std::is_same_v<T, long long>)
            text_ += std::to_string(v);
          else
            text_ += quote_field(v);
        },
        cells[i]);
  }
  text_ += "\r\n";
}

namespace {

struct Output {
  json result = json::object();
  std::vector<std::pair<std::string, std::string>> files;  // csv name, content
  std::string summary;
};

struct Job {
  json cfg;
  int workers = 1;
  std::uint64_t seed = 1;

  double num(const char* p) const { return cfg[json::json_pointer(p)].get<double>(); }
  int integer(const char* p) const { return cfg[json::json_pointer(p)].get<int>(); }
  std::string str(const char* p) const { return cfg[json::json_pointer(p)].get<std::string>(); }
  bool null(const char* p) const { return cfg[json::json_pointer(p)].is_null(); }
  std::vector<double> numbers(const char* p) const { return cfg[json::json_pointer(p)].get<std::vector<double>>(); }
  std::vector<int> ints(const char* p) const { return cfg[json::json_pointer(p)].get<std::vector<int>>(); }
};

ToralAutomorphism build_base(const Job& job) {
  return ToralAutomorphism::from_matrix(matrix_from_json(job.cfg["map"]["matrix"]));
}

DAMap build_map(const Job& job) {
  ToralAutomorphism A = build_base(job);
  if (job.str("/map/type") == "linear") return DAMap::linear(A);
  ManeParams p;
  Vecd q = Vecd::Zero(A.dim());
  if (!job.null("/map/q")) {
    auto v = job.numbers("/map/q");
    for (int i = 0; i < A.dim(); ++i) q(i) = v[static_cast<std::size_t>(i)];
  }
  p.q = reduce(q);
  p.rho = job.num("/map/rho");
  p.lambda_c_target = job.num("/map/lambda_c");
  p.profile.transverse_ratio = job.num("/map/transverse_ratio");
  p.profile.core_ratio = job.num("/map/core_ratio");
  p.profile.safety = job.num("/map/safety");
  MapBuildOptions o;
  o.eta = job.num("/scales/eta");
  return build_mane(A, p, o);
}

StatsOptions stats_options(const DAMap& g) {
  StatsOptions so;
  so.q = g.q();
  so.rho = g.rho();
  return so;
}

Potential build_potential(const Job& job, const DAMap& g) {
  const std::string type = job.str("/potential/type");
  if (type == "zero") return Potential::constant(0.0, g.dim());
  if (type == "constant") return Potential::constant(job.num("/potential/value"), g.dim());
  if (type == "geometric") return geometric_potential(g, 30, stats_options(g));
  return Potential::from_expression(job.str("/potential/expression"), g.dim(), job.num("/potential/alpha"),
                                    stats_options(g));
}

double L_value(const Job& job, const ToralAutomorphism& A, bool safety, json& extra) {
  if (!job.null("/criterion/L")) return job.num("/criterion/L");
  LEstimate le = estimate_L(A, job.num("/scales/epsilon"), job.integer("/budgets/L_n_max"), 100000, job.workers);
  extra["L_estimate"] = le.value;
  extra["L_argmax_n"] = le.argmax_n;
  return safety ? le.value * job.num("/criterion/L_safety") : le.value;
}

std::vector<OrbitSegment> sample_G_segments(const Job& job, const DAMap& g, std::uint64_t stream_index) {
  Rng rng = stream(job.seed, stream_index);
  const double r = job.num("/scales/r");
  std::vector<OrbitSegment> segs;
  for (int n : job.ints("/budgets/segment_lengths")) {
    for (int tries = 0;; ++tries) {
      if (tries > 100000) throw NumericalRejection("glue: no segment in G found after 1e5 samples");
      OrbitSegment s{uniform_point(rng, g.dim()), n};
      if (in_G(g, g.q(), g.rho(), r, s)) {
        segs.push_back(s);
        break;
      }
    }
  }
  return segs;
}

// ---- commands ----

Output cmd_spectral(const Job& job) {
  ToralAutomorphism A = build_base(job);
  const SpectralData& s = A.spectral();
  Output o;
  o.result = to_json(s);
  o.result["matrix"] = to_json(A.matrix());
  o.result["char_poly"] = A.char_poly();
  o.result["det"] = A.det();
  o.result["irrational_certified"] = A.irrational_certified();
  o.result["irreducible_certified"] = A.irreducible_certified();
  o.result["kappa"] = kappa(s);
  o.result["eta_heuristic"] = eta_heuristic(s);
  Csv csv({"index", "eigenvalue", "log_abs", "role"});
  for (int i = 0; i < s.dim(); ++i) {
    const double l = s.eigenvalues[static_cast<std::size_t>(i)];
    csv.row({static_cast<long long>(i), l, std::log(std::abs(l)),
             std::string(i == s.index_u() ? "unstable" : i == s.index_c() ? "center" : "stable")});
  }
  o.files.emplace_back("eigenvalues.csv", csv.str());
  std::ostringstream os;
  os << std::setprecision(10) << "h = " << s.h << ", lambda_u = " << s.lambda_u;
  o.summary = os.str();
  return o;
}

Output cmd_build_map(const Job& job) {
  DAMap g = build_map(job);
  const double r = job.num("/scales/r");
  Output o;
  o.result = g.describe();
  MembershipReport m = check_membership(g, r);
  o.result["membership"] = {{"support_ok", m.support_ok},
                            {"max_deviation_outside", m.max_deviation_outside},
                            {"cones_passed", m.cones.passed},
                            {"gamma", m.gamma},
                            {"gamma_ok", m.gamma_ok},
                            {"member", m.member()}};
  GammaValue gv = gamma_of(g);
  o.result["gamma"] = {{"value", gv.value}, {"degenerate", gv.degenerate}};
  if (r < 1) o.result["theta_r"] = theta_r(g, r);
  std::vector<std::string> header = {"c"};
  for (int i = 0; i < g.dim(); ++i) header.push_back("x" + std::to_string(i + 1));
  Csv csv(header);
  std::vector<double> cs = center_fixed_points(g);
  for (double c : cs) {
    Vecd x = reduce_coords<double>(Vecd(g.q() + c * g.spectral().F_c));
    std::vector<Csv::Cell> row = {c};
    for (int i = 0; i < g.dim(); ++i) row.emplace_back(x(i));
    csv.row(row);
  }
  o.result["center_fixed_points"] = cs;
  o.files.emplace_back("center_fixed_points.csv", csv.str());
  std::ostringstream os;
  os << "member of U_{rho,r}: " << (m.member() ? "yes" : "no") << ", fixed points on the center line: " << cs.size();
  o.summary = os.str();
  return o;
}

Output cmd_pressure(const Job& job) {
  DAMap g = build_map(job);
  Potential phi = build_potential(job, g);
  PressureOptions po;
  po.candidate_budget = static_cast<std::size_t>(job.integer("/budgets/candidates"));
  po.workers = job.workers;
  PressureEstimate P = pressure(g, phi, job.num("/scales/epsilon"), job.integer("/budgets/n_min"),
                                job.integer("/budgets/n_max"), po);
  Output o;
  o.result = P.to_json();
  o.result["potential"] = phi.label();
  Csv csv({"n", "log_lambda", "used"});
  for (const auto& [n, v] : P.log_sums) {
    bool used = std::find(P.dropped_n.begin(), P.dropped_n.end(), n) == P.dropped_n.end();
    csv.row({static_cast<long long>(n), v, static_cast<long long>(used)});
  }
  o.files.emplace_back("log_sums.csv", csv.str());
  std::ostringstream os;
  os << std::setprecision(6) << "P = " << P.value << " +/- " << P.tolerance << " (lower bound " << P.lower_bound
     << ")";
  o.summary = os.str();
  return o;
}

PressureCurve curve_for(const Job& job, const DAMap& g, const Potential& phi_u) {
  PressureOptions po;
  po.candidate_budget = static_cast<std::size_t>(job.integer("/budgets/candidates"));
  po.workers = job.workers;
  return pressure_curve(g, phi_u, job.numbers("/t_grid"), job.num("/scales/epsilon"), job.integer("/budgets/n_min"),
                        job.integer("/budgets/n_max"), po);
}

std::string curve_csv(const PressureCurve& curve) {
  Csv csv({"t", "P_est", "P_lower", "fit_r2"});
  for (std::size_t i = 0; i < curve.t.size(); ++i)
    csv.row({curve.t[i], curve.estimates[i].value, curve.estimates[i].lower_bound, curve.estimates[i].slope_r2});
  return csv.str();
}

Output cmd_pressure_curve(const Job& job) {
  DAMap g = build_map(job);
  Potential phi_u = geometric_potential(g, 30, stats_options(g));
  PressureCurve curve = curve_for(job, g, phi_u);
  Output o;
  json est = json::array();
  for (const auto& e : curve.estimates) est.push_back(e.to_json());
  o.result["t"] = curve.t;
  o.result["estimates"] = est;
  try {
    PressureRoot root = pressure_root(curve);
    o.result["root"] = {{"t", root.root},
                        {"bracket", {root.bracket_lo, root.bracket_hi}},
                        {"evaluations", root.evaluations}};
    std::ostringstream os;
    os << std::setprecision(6) << "root of t -> P(t phi^u) at t = " << root.root;
    o.summary = os.str();
  } catch (const NumericalRejection& e) {
    o.result["root"] = nullptr;
    o.result["root_diagnostic"] = e.what();
    o.summary = "no sign change on the t grid";
  }
  o.files.emplace_back("curve.csv", curve_csv(curve));
  return o;
}

Output cmd_decompose_audit(const Job& job) {
  DAMap g = build_map(job);
  Potential phi = build_potential(job, g);
  const double r = job.num("/scales/r");
  std::vector<SegmentAudit> rows;
  CollectionOptions co;
  co.workers = job.workers;
  co.audit = &rows;
  PressureEstimate P = empirical_collection_pressure(g, phi, g.q(), g.rho(), r, job.num("/scales/epsilon"),
                                                     job.integer("/budgets/n_min"), job.integer("/budgets/n_max"), co);
  Output o;
  o.result["estimate"] = P.to_json();
  std::ostringstream os;
  os << std::setprecision(6) << "collection pressure = " << P.value << " +/- " << P.tolerance;
  if (r > 0 && r < 0.5) {
    json extra = json::object();
    const double L = L_value(job, g.base(), false, extra);
    const double h = g.spectral().h;
    const double bound = collection_pressure_bound<double>(r, h, L, phi.sup_ball(), phi.sup());
    o.result["bound"] = bound;
    o.result["L"] = L;
    o.result["L_info"] = extra;
    o.result["within_band"] = P.value <= bound + P.tolerance;
    os << ", bound = " << bound;
  }
  Csv csv({"n", "chi_sum", "p", "g"});
  for (const auto& a : rows)
    csv.row({static_cast<long long>(a.n), static_cast<long long>(a.chi_sum), static_cast<long long>(a.p),
             static_cast<long long>(a.g)});
  o.files.emplace_back("segments.csv", csv.str());
  o.summary = os.str();
  return o;
}

BowenVariation measure_variation(const Job& job, const DAMap& g, const Potential& phi) {
  return audit_bowen_property(g, phi, sample_G_segments(job, g, 7), job.num("/scales/epsilon"),
                              job.num("/scales/r"), 8, job.seed);
}

CriterionReport criterion_theorem_a(const Job& job) {
  DAMap g = build_map(job);
  Potential phi = build_potential(job, g);
  TheoremAConfig tc;
  tc.r = job.num("/scales/r");
  tc.epsilon = job.num("/scales/epsilon");
  tc.n_min = job.integer("/budgets/n_min");
  tc.n_max = job.integer("/budgets/n_max");
  tc.candidate_budget = static_cast<std::size_t>(job.integer("/budgets/candidates"));
  tc.L = job.null("/criterion/L") ? 0.0 : job.num("/criterion/L");
  tc.L_safety = job.num("/criterion/L_safety");
  tc.L_n_max = job.integer("/budgets/L_n_max");
  tc.workers = job.workers;
  return check_theorem_A(g, phi, tc);
}

CriterionReport criterion_bounded_range(const Job& job) {
  DAMap g = build_map(job);
  Potential phi = build_potential(job, g);
  json extra = json::object();
  double V;
  if (job.null("/criterion/V")) {
    BowenVariation bv = measure_variation(job, g, phi);
    V = bv.measured;
    extra["V_measured_pairs"] = bv.pairs;
  } else {
    V = job.num("/criterion/V");
  }
  const double L = L_value(job, g.base(), true, extra);
  CriterionReport rep = bounded_range_criterion(phi.stats(), V, job.num("/scales/r"), g.spectral().h, L);
  rep.extra.update(extra);
  return rep;
}

CriterionReport criterion_srb(const Job& job) {
  DAMap g = build_map(job);
  Potential phi_u = geometric_potential(g, 30, stats_options(g));
  json extra = json::object();
  const double L = L_value(job, g.base(), true, extra);
  CriterionReport rep = srb_condition(job.num("/scales/r"), g.spectral().h, L, phi_u.sup(), phi_u.inf());
  rep.extra.update(extra);
  return rep;
}

CriterionReport criterion_threshold(const Job& job, std::string& csv_out) {
  ToralAutomorphism A = build_base(job);
  json extra = json::object();
  ThresholdInputs in;
  in.alpha = job.num("/criterion/alpha");
  in.K = job.num("/criterion/K");
  in.diam = job.num("/criterion/diam");
  in.h = A.spectral().h;
  in.L = L_value(job, A, true, extra);
  in.Q = job.num("/criterion/Q");
  in.delta_coef = job.num("/criterion/delta_coef");
  const double rho = job.num("/map/rho");
  const double r = job.num("/scales/r");
  if (!(r < 0.5)) throw std::invalid_argument("threshold-T: /scales/r must be < 1/2");
  Csv csv({"i", "rho", "r", "T", "residual"});
  double worst = 0;
  bool increasing = true;
  Precise50 prev(-1), T0(0);
  for (int i = 0; i <= job.integer("/criterion/sweep"); ++i) {
    Precise50 rho_i = Precise50(rho) / pow(Precise50(2), i);
    Precise50 r_i = Precise50(r) / pow(Precise50(2), i);
    Precise50 T = T_threshold<Precise50>(rho_i, r_i, in);
    double res = static_cast<double>(abs(T_residual<Precise50>(T, rho_i, r_i, in)));
    if (T == Precise50(0)) res = 0;
    worst = std::max(worst, res);
    if (i > 0 && !(T > prev)) increasing = false;
    if (i == 0) T0 = T;
    prev = T;
    csv.row({static_cast<long long>(i), static_cast<double>(rho_i), static_cast<double>(r_i), static_cast<double>(T),
             res});
  }
  csv_out = csv.str();
  CriterionReport rep;
  rep.name = "threshold-T";
  rep.inputs = {{"rho", rho}, {"r", r},        {"alpha", in.alpha}, {"K", in.K},
                {"diam", in.diam}, {"h", in.h}, {"L", in.L}, {"Q", in.Q}, {"delta_coef", in.delta_coef}};
  rep.lhs = worst;
  rep.rhs = 1e-9;
  rep.verdict = decide(rep.lhs, 0, rep.rhs, 0);
  std::ostringstream digits;
  digits << std::setprecision(30) << T0;
  extra["T"] = static_cast<double>(T0);
  extra["T_digits"] = digits.str();
  extra["sweep_strictly_increasing"] = increasing;
  rep.extra = extra;
  rep.notes.push_back("lhs: max bisection residual over the sweep");
  if (T0 == Precise50(0)) rep.notes.push_back("S2 >= delta log 2: no admissible T > 0");
  return rep;
}

CriterionReport criterion_delta_gap(const Job& job) {
  DAMap g = build_map(job);
  Potential phi = build_potential(job, g);
  json extra = json::object();
  std::optional<BowenVariation> bv;
  auto variation_once = [&]() -> const BowenVariation& {
    if (!bv) bv = measure_variation(job, g, phi);
    return *bv;
  };
  const double V = job.null("/criterion/V") ? variation_once().measured : job.num("/criterion/V");
  int tau;
  if (job.null("/criterion/tau")) {
    GlueOptions go;
    go.r = job.num("/scales/r");
    go.tau_max = job.integer("/budgets/tau_max");
    go.tau_pairs = job.integer("/budgets/tau_pairs");
    go.seed = job.seed;
    tau = measure_transition_time(g, job.num("/scales/delta"), go);
  } else {
    tau = job.integer("/criterion/tau");
  }
  const double range = job.null("/criterion/range") ? phi.sup() - phi.inf() : job.num("/criterion/range");
  const double seminorm = job.null("/criterion/seminorm") ? phi.seminorm() : job.num("/criterion/seminorm");
  double Q1 = 0;
  if (!job.null("/criterion/Q1"))
    Q1 = job.num("/criterion/Q1");
  else if (seminorm > 0)
    Q1 = variation_once().measured / seminorm;
  const double Delta = delta_gap<double>(V, tau, range);
  GapConstants gc = gap_constants(tau, Q1, job.num("/criterion/alpha"), job.num("/criterion/diam"));
  CriterionReport rep;
  rep.name = "delta-gap";
  rep.inputs = {{"V", V}, {"tau", tau}, {"range", range}, {"seminorm", seminorm}, {"Q1", Q1}};
  rep.lhs = 0;
  rep.rhs = Delta;
  rep.verdict = decide(0, 0, Delta, 0);
  extra["Delta"] = Delta;
  extra["delta_coef"] = gc.delta_coef;
  extra["Q"] = gc.Q;
  extra["entropy_gap"] = entropy_gap_bound<double>(seminorm, gc.Q, gc.delta_coef);
  rep.extra = extra;
  rep.notes.push_back("verdict: Delta > 0");
  return rep;
}

std::string criterion_table(const CriterionReport& rep) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "criterion" << std::setw(30) << "lhs +/- tol" << std::setw(30)
     << "rhs +/- tol"
     << "verdict\n";
  auto cell = [](double v, double t) {
    std::ostringstream c;
    c << std::setprecision(8) << v << " +/- " << std::setprecision(3) << t;
    return c.str();
  };
  os << std::setw(16) << rep.name << std::setw(30) << cell(rep.lhs, rep.lhs_tol) << std::setw(30)
     << cell(rep.rhs, rep.rhs_tol) << to_string(rep.verdict);
  for (const auto& n : rep.notes) os << "\n  note: " << n;
  return os.str();
}

Output cmd_criteria(const Job& job, const std::string& which) {
  CriterionReport rep;
  std::string sweep_csv;
  if (which == "theorem-a")
    rep = criterion_theorem_a(job);
  else if (which == "bounded-range")
    rep = criterion_bounded_range(job);
  else if (which == "srb")
    rep = criterion_srb(job);
  else if (which == "threshold-T")
    rep = criterion_threshold(job, sweep_csv);
  else
    rep = criterion_delta_gap(job);
  Output o;
  o.result = rep.to_json();
  Csv csv({"name", "lhs", "lhs_tol", "rhs", "rhs_tol", "verdict"});
  csv.row({rep.name, rep.lhs, rep.lhs_tol, rep.rhs, rep.rhs_tol, std::string(to_string(rep.verdict))});
  o.files.emplace_back("criterion.csv", csv.str());
  if (!sweep_csv.empty()) o.files.emplace_back("sweep.csv", sweep_csv);
  o.summary = criterion_table(rep);
  return o;
}

Output cmd_lyapunov(const Job& job) {
  DAMap g = build_map(job);
  Rng rng = stream(job.seed, 0);
  LyapunovSpectrum L = lyapunov_spectrum(g, uniform_point(rng, g.dim()), job.integer("/budgets/steps"),
                                         job.integer("/budgets/n_transient"));
  Output o;
  o.result = L.to_json();
  Csv csv({"index", "exponent", "base_log_eigenvalue"});
  const auto& ev = g.spectral().eigenvalues;
  for (std::size_t i = 0; i < L.exponents.size(); ++i)
    csv.row({static_cast<long long>(i), L.exponents[i], std::log(std::abs(ev[i]))});
  o.files.emplace_back("exponents.csv", csv.str());
  std::ostringstream os;
  os << std::setprecision(10) << "exponents:";
  for (double e : L.exponents) os << ' ' << e;
  o.summary = os.str();
  return o;
}

Output cmd_srb(const Job& job) {
  DAMap g = build_map(job);
  SrbOptions so;
  so.bins = job.integer("/budgets/bins");
  so.stride = job.integer("/budgets/stride");
  so.batches = job.integer("/budgets/batches");
  so.seed = job.seed;
  so.workers = job.workers;
  SrbEstimate est = srb_estimate(g, job.integer("/budgets/n_transient"), job.integer("/budgets/n_sample"),
                                 job.integer("/budgets/seeds"), so);
  Output o;
  o.result = est.to_json();
  std::ostringstream os;
  os << std::setprecision(6) << "lambda_plus = " << est.lambda_plus << ", |int phi^u + lambda_plus| = "
     << est.entropy_defect;
  if (est.batch_histograms.size() >= 2) {
    const double tv = tv_distance(est.batch_histograms[0], est.batch_histograms[1]);
    const double q95 = tv_bootstrap_quantile(est.batch_histograms[0], est.batch_histograms[1], 0.95, 200, job.seed);
    o.result["tv_batches"] = tv;
    o.result["tv_q95"] = q95;
    os << ", TV(batch 0, batch 1) = " << tv << " (bootstrap q95 " << q95 << ")";
  }
  ChiSquare cs = chi_square_uniform(est.histogram);
  o.result["chi_square_uniform"] = {{"statistic", cs.statistic}, {"dof", cs.dof}, {"p_value", cs.p_value}};
  std::vector<std::string> header = {"cell", "count"};
  for (std::size_t b = 0; b < est.batch_histograms.size(); ++b) header.push_back("batch_" + std::to_string(b));
  Csv csv(header);
  for (std::size_t c = 0; c < est.histogram.size(); ++c) {
    std::vector<Csv::Cell> row = {static_cast<long long>(c), est.histogram[c]};
    for (const auto& h : est.batch_histograms) row.emplace_back(h[c]);
    csv.row(row);
  }
  o.files.emplace_back("histogram.csv", csv.str());
  o.summary = os.str();
  return o;
}

Output cmd_spectrum(const Job& job) {
  DAMap g = build_map(job);
  Potential phi_u = geometric_potential(g, 30, stats_options(g));
  PressureCurve curve = curve_for(job, g, phi_u);
  std::vector<double> chi;
  if (job.null("/chi_grid")) {
    const double h = g.spectral().h;
    for (int i = 0; i <= 20; ++i) chi.push_back(h * (0.9 + 0.01 * i));
  } else {
    chi = job.numbers("/chi_grid");
  }
  MultifractalSpectrum ms = legendre_spectrum(curve, chi);
  Output o;
  o.result = ms.to_json();
  Csv csv({"chi", "entropy", "achieving_t", "degenerate"});
  for (std::size_t i = 0; i < ms.chi_grid.size(); ++i)
    csv.row({ms.chi_grid[i], ms.entropy_values[i], ms.achieving_t[i], static_cast<long long>(ms.degenerate[i])});
  o.files.emplace_back("spectrum.csv", csv.str());
  o.files.emplace_back("curve.csv", curve_csv(curve));
  std::ostringstream os;
  os << std::setprecision(8) << "chi_1 = " << ms.chi_1 << ", chi_0 = " << ms.chi_0;
  o.summary = os.str();
  return o;
}

Output cmd_ldp(const Job& job) {
  DAMap g = build_map(job);
  Potential psi = build_potential(job, g);
  LdpOptions lo;
  lo.n_transient = job.integer("/budgets/n_transient");
  lo.seed = job.seed;
  lo.workers = job.workers;
  LdpResult res = ldp_rate(g, static_cast<std::size_t>(job.integer("/budgets/samples")), psi,
                           job.num("/scales/deviation"), job.ints("/budgets/n_grid"), lo);
  Output o;
  o.result = res.to_json();
  Csv csv({"n", "deviating", "log_fraction", "rate", "zero_count"});
  for (const auto& p : res.points)
    csv.row({static_cast<long long>(p.n), static_cast<long long>(p.deviating), p.log_fraction, p.rate,
             static_cast<long long>(p.zero_count)});
  o.files.emplace_back("ldp.csv", csv.str());
  std::ostringstream os;
  os << std::setprecision(6) << "mean = " << res.mean << ", rate evidence = " << res.rate_evidence;
  o.summary = os.str();
  return o;
}

template <class S>
double shadow_one(const ToralAutomorphism& A, const PseudoOrbit& po) {
  Vec<S> y = shadow<S>(A, po);
  auto res = shadow_residuals<S>(A, y, po);
  return *std::max_element(res.begin(), res.end());
}

Output cmd_shadow(const Job& job) {
  ToralAutomorphism A = build_base(job);
  const double C = shadowing_constant(A);
  const double err = job.num("/budgets/error");
  const int len = job.integer("/budgets/length");
  const bool high = job.str("/precision") == "high";
  Rng rng = stream(job.seed, 0);
  Csv csv({"orbit", "measured_error", "max_residual", "ratio"});
  double worst_ratio = 0;
  for (int k = 0; k < job.integer("/budgets/pseudo_orbits"); ++k) {
    PseudoOrbit po = make_pseudo_orbit(A, uniform_point(rng, A.dim()), len, err, rng);
    const double measured = pseudo_orbit_error(A, po.points);
    const double res = high ? shadow_one<HighPrecision>(A, po) : shadow_one<double>(A, po);
    const double ratio = err > 0 ? res / err : 0.0;
    worst_ratio = std::max(worst_ratio, ratio);
    csv.row({static_cast<long long>(k), measured, res, ratio});
  }
  PseudoOrbit exact = make_pseudo_orbit(A, uniform_point(rng, A.dim()), len, 0.0, rng);
  Vec<HighPrecision> y = shadow<HighPrecision>(A, exact);
  Vecd yd(A.dim());
  for (int i = 0; i < A.dim(); ++i) yd(i) = static_cast<double>(y(i));
  const double exact_distance = flat_distance<double>(yd, exact.points.front());
  Output o;
  o.result = {{"C", C},
              {"error", err},
              {"length", len},
              {"worst_ratio", worst_ratio},
              {"within_C", worst_ratio <= C},
              {"exact_orbit_distance", exact_distance},
              {"precision", job.str("/precision")}};
  o.files.emplace_back("shadow.csv", csv.str());
  std::ostringstream os;
  os << std::setprecision(6) << "worst residual / error = " << worst_ratio << " (C = " << C << ")";
  o.summary = os.str();
  return o;
}

Output cmd_glue(const Job& job) {
  DAMap g = build_map(job);
  std::vector<OrbitSegment> segs = sample_G_segments(job, g, 1);
  GlueOptions go;
  go.r = job.num("/scales/r");
  go.tau_max = job.integer("/budgets/tau_max");
  go.tau_pairs = job.integer("/budgets/tau_pairs");
  go.seed = job.seed;
  const double delta = job.num("/scales/delta");
  GluingPlan plan = glue_specification(g, segs, delta, go);
  Output o;
  o.result = plan.to_json();
  Csv windows({"j", "n", "m", "window_distance", "bound"});
  for (std::size_t j = 0; j < plan.window_distance.size(); ++j)
    windows.row({static_cast<long long>(j + 1), static_cast<long long>(plan.segments[j].n),
                 static_cast<long long>(plan.m[j]), plan.window_distance[j], 3 * delta});
  Csv ladder({"j", "i", "distance"});
  for (std::size_t j = 0; j < plan.ladder.size(); ++j)
    for (std::size_t i = 0; i < plan.ladder[j].size(); ++i)
      ladder.row({static_cast<long long>(j + 1), static_cast<long long>(i + 1), plan.ladder[j][i]});
  o.files.emplace_back("windows.csv", windows.str());
  o.files.emplace_back("ladder.csv", ladder.str());
  std::ostringstream os;
  os << "tau = " << plan.tau << ", verified: " << (plan.verified ? "yes" : "no");
  o.summary = os.str();
  return o;
}

json versions() {
  return {{"da_thermo", DA_THERMO_VERSION},
          {"compiler", __VERSION__},
          {"cxx", static_cast<long>(__cplusplus)},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"boost", BOOST_LIB_VERSION},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary);
  f << content;
  if (!f) throw std::runtime_error("cannot write " + p.string());
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Thermodynamic formalism experiments for derived-from-Anosov maps", "da-thermo"};
  app.require_subcommand(1);
  std::string config_path, out_dir, which;
  int workers = 0;
  std::uint64_t seed = 0;
  bool no_cache = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output root (default: $DA_THERMO_OUT or ./da_thermo_out)");
    sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "random seed");
    sub->add_flag("--no-cache", no_cache, "recompute even if a result for this config exists");
  };
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"spectral", "eigen-data of the linear part"},
      {"build-map", "build the map and check class membership"},
      {"pressure", "pressure estimate of the configured potential"},
      {"pressure-curve", "t -> P(t phi^u) and its root"},
      {"decompose-audit", "collection pressure with per-segment decomposition audit"},
      {"criteria", "closed-form criteria"},
      {"lyapunov", "Lyapunov spectrum"},
      {"srb", "empirical SRB histograms"},
      {"spectrum", "Legendre multifractal spectrum"},
      {"ldp", "large-deviation evidence"},
      {"shadow", "shadowing of random pseudo-orbits of the linear part"},
      {"glue", "specification gluing plan"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub);
    if (name == "criteria")
      sub->add_option("which", which, "theorem-a | bounded-range | srb | threshold-T | delta-gap")
          ->required()
          ->check(CLI::IsMember({"theorem-a", "bounded-range", "srb", "threshold-T", "delta-gap"}));
  }
  app.add_subcommand("schema", "print the config schema");

  std::vector<std::string> argv_store = {"da-thermo"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  if (command == "schema") {
    out << schema_description().dump(2) << "\n";
    return 0;
  }
  const std::string key = command == "criteria" ? "criteria-" + which : command;

  try {
    json user = json::object();
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      try {
        user = json::parse(f);
      } catch (const json::parse_error& e) {
        throw SchemaError("/", std::string("config is not valid JSON: ") + e.what());
      }
    }
    if (!user.is_object()) throw SchemaError("/", "expected object");
    if (sub->count("--seed")) user["seed"] = seed;
    if (sub->count("--workers")) user["workers"] = workers;
    if (sub->count("--out")) user["out"] = out_dir;
    const json cfg = resolve_config(user);

    fs::path root;
    if (!cfg["out"].is_null())
      root = cfg["out"].get<std::string>();
    else if (const char* env = std::getenv("DA_THERMO_OUT"); env && *env)
      root = env;
    else
      root = "da_thermo_out";
    const std::string hash = config_hash(key, cfg);
    fs::path dir = root / (key + "-" + hash);
    if (fs::exists(dir / "manifest.json") && !no_cache) {
      out << "cached: " << dir.string() << "\n";
      return 0;
    }

    Job job;
    job.cfg = cfg;
    job.workers = cfg["workers"].get<int>();
    job.seed = cfg["seed"].get<std::uint64_t>();
    const auto t0 = std::chrono::steady_clock::now();
    Output o;
    if (command == "spectral") o = cmd_spectral(job);
    else if (command == "build-map") o = cmd_build_map(job);
    else if (command == "pressure") o = cmd_pressure(job);
    else if (command == "pressure-curve") o = cmd_pressure_curve(job);
    else if (command == "decompose-audit") o = cmd_decompose_audit(job);
    else if (command == "criteria") o = cmd_criteria(job, which);
    else if (command == "lyapunov") o = cmd_lyapunov(job);
    else if (command == "srb") o = cmd_srb(job);
    else if (command == "spectrum") o = cmd_spectrum(job);
    else if (command == "ldp") o = cmd_ldp(job);
    else if (command == "shadow") o = cmd_shadow(job);
    else o = cmd_glue(job);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // Never touch an existing result directory: pick a fresh suffix instead.
    for (int k = 1; fs::exists(dir); ++k) dir = root / (key + "-" + hash + "." + std::to_string(k));
    fs::create_directories(root);
    const fs::path tmp = root / (".tmp-" + key + "-" + hash + "-" + std::to_string(::getpid()));
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    json result = {{"command", key}, {"config_hash", hash}, {"config", cfg}, {"result", o.result}};
    json artifacts = json::array();
    auto emit = [&](const std::string& name, const std::string& content) {
      write_file(tmp / name, content);
      char h[17];
      std::snprintf(h, sizeof h, "%016llx", static_cast<unsigned long long>(fnv1a64(content)));
      artifacts.push_back({{"file", name}, {"bytes", content.size()}, {"fnv1a64", h}});
    };
    emit("result.json", result.dump(2) + "\n");
    for (const auto& [name, content] : o.files) emit(name, content);
    json manifest = {{"command", key},       {"config_hash", hash}, {"config", cfg},
                     {"versions", versions()}, {"wall_time_s", wall}, {"artifacts", artifacts}};
    write_file(tmp / "manifest.json", manifest.dump(2) + "\n");
    fs::rename(tmp, dir);

    out << o.summary << "\n" << "output: " << dir.string() << "\n";
    return 0;
  } catch (const SchemaError& e) {
    err << "schema error at " << e.what() << "\n";
    return 2;
  } catch (const NumericalRejection& e) {
    err << "numerical rejection: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    err << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace da_cli
