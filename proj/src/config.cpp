#include "mulform/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "mulform/errors.hpp"
#include "mulform/parallel.hpp"

namespace mulform {

namespace {

// A form is a list of terms [i1, ..., ik, "coefficient"] with 1-based indices.
constexpr const char* kSchema = R"json({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "mulform problem configuration",
  "type": "object",
  "additionalProperties": false,
  "required": ["schema_version", "kind", "chart"],
  "properties": {
    "schema_version": {"enum": [1]},
    "kind": {"enum": ["poisson", "nijenhuis", "gcs", "dirac", "jacobi", "raw_algebroid"]},
    "description": {"type": "string"},
    "chart": {
      "type": "object",
      "additionalProperties": false,
      "required": ["dim"],
      "properties": {
        "dim": {"type": "integer", "minimum": 1, "maximum": 8},
        "box": {"type": "array", "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "number"}}}
      }
    },
    "pi": {"type": "array", "items": {"type": "array", "minItems": 3, "maxItems": 3, "items": {"type": ["integer", "string"]}}},
    "reeb": {"type": "array", "items": {"type": "string"}},
    "l": {"type": "array", "items": {"type": "array", "items": {"type": "string"}}},
    "holomorphic": {"type": "boolean"},
    "varpi": {"type": "array", "items": {"type": "array", "minItems": 1, "items": {"type": ["integer", "string"]}}},
    "exact_forms": {
      "type": "array",
      "items": {"type": "array", "items": {"type": "array", "minItems": 1, "items": {"type": ["integer", "string"]}}}
    },
    "frame": {
      "type": "array",
      "items": {
        "type": "object",
        "additionalProperties": false,
        "required": ["v", "alpha"],
        "properties": {
          "v": {"type": "array", "items": {"type": "string"}},
          "alpha": {"type": "array", "items": {"type": "string"}}
        }
      }
    },
    "H": {"type": "array", "items": {"type": "array", "minItems": 1, "items": {"type": ["integer", "string"]}}},
    "graph_form": {"type": "array", "items": {"type": "array", "minItems": 1, "items": {"type": ["integer", "string"]}}},
    "rank": {"type": "integer", "minimum": 1, "maximum": 8},
    "anchor": {"type": "array", "items": {"type": "array", "items": {"type": "string"}}},
    "brackets": {"type": "array", "items": {"type": "array", "minItems": 4, "maxItems": 4, "items": {"type": ["integer", "string"]}}},
    "im_form": {
      "type": "object",
      "additionalProperties": false,
      "required": ["degree", "l"],
      "properties": {
        "degree": {"type": "integer", "minimum": 1, "maximum": 4},
        "l": {"type": "array", "items": {"type": "array", "items": {"type": "array", "minItems": 1, "items": {"type": ["integer", "string"]}}}},
        "nu": {"type": "array", "items": {"type": "array", "items": {"type": "array", "minItems": 1, "items": {"type": ["integer", "string"]}}}}
      }
    },
    "numerics": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "quadrature": {"enum": ["simpson", "gauss_legendre"]},
        "quadrature_n": {"type": "integer", "minimum": 1, "maximum": 4096},
        "steps_per_unit": {"type": "integer", "minimum": 1, "maximum": 65536},
        "samples": {"type": "integer", "minimum": 1},
        "pair_samples": {"type": "integer", "minimum": 1},
        "triple_samples": {"type": "integer", "minimum": 1},
        "multiply_steps": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "fiber_radius": {"type": "number", "minimum": 0},
        "base_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "nondegeneracy_min": {"type": "number", "minimum": 0},
        "multiplication_checks": {"type": "boolean"}
      }
    },
    "tolerances": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
    "convergence": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "ladder": {"type": "array", "minItems": 2, "items": {"type": "integer", "minimum": 2}},
        "points": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "fine_steps": {"type": "integer", "minimum": 1}
      }
    },
    "eval": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "point": {"type": "array", "items": {"type": "number"}},
        "vectors": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "compose": {"type": "array", "items": {"type": "number"}}
      }
    },
    "outputs": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "report": {"type": "string"},
        "residuals": {"type": "string"},
        "convergence": {"type": "string"}
      }
    }
  }
})json";

const std::map<std::string, std::set<std::string>> kKindKeys = {
    {"poisson", {"pi", "exact_forms"}},
    {"nijenhuis", {"pi", "l", "holomorphic"}},
    {"gcs", {"pi", "l", "varpi"}},
    {"dirac", {"frame", "H", "graph_form"}},
    {"jacobi", {"pi", "reeb"}},
    {"raw_algebroid", {"rank", "anchor", "brackets", "im_form"}},
};
const std::set<std::string> kCommonKeys = {"schema_version", "kind", "description", "chart", "numerics",
                                           "tolerances",     "convergence", "eval", "outputs"};

std::string type_name(const Json& v) {
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_boolean()) return "boolean";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

bool type_matches(const Json& v, const std::string& t) {
  if (t == "number") return v.is_number();
  if (t == "integer") return v.is_number_integer();
  return type_name(v) == t;
}

void validate_at(const Json& doc, const Json& s, const std::string& path) {
  auto fail = [&](const std::string& why) { throw ConfigError(path + ": " + why); };
  if (s.contains("type")) {
    const Json& t = s["type"];
    bool ok = false;
    if (t.is_string()) ok = type_matches(doc, t.get<std::string>());
    for (const auto& alt : t.is_array() ? t : Json::array()) ok = ok || type_matches(doc, alt.get<std::string>());
    if (!ok) fail("expected " + t.dump() + ", got " + type_name(doc));
  }
  if (s.contains("enum")) {
    bool ok = false;
    for (const auto& e : s["enum"]) ok = ok || e == doc;
    if (!ok) fail("value " + doc.dump() + " is not one of " + s["enum"].dump());
  }
  if (doc.is_number()) {
    const double x = doc.get<double>();
    if (s.contains("minimum") && x < s["minimum"].get<double>()) fail("below minimum " + s["minimum"].dump());
    if (s.contains("maximum") && x > s["maximum"].get<double>()) fail("above maximum " + s["maximum"].dump());
  }
  if (doc.is_array()) {
    if (s.contains("minItems") && doc.size() < s["minItems"].get<std::size_t>()) fail("too few items");
    if (s.contains("maxItems") && doc.size() > s["maxItems"].get<std::size_t>()) fail("too many items");
    if (s.contains("items"))
      for (std::size_t i = 0; i < doc.size(); ++i) validate_at(doc[i], s["items"], path + "[" + std::to_string(i) + "]");
  }
  if (doc.is_object()) {
    for (const auto& r : s.value("required", Json::array()))
      if (!doc.contains(r.get<std::string>())) fail("missing required key '" + r.get<std::string>() + "'");
    const Json props = s.value("properties", Json::object());
    for (const auto& [key, value] : doc.items()) {
      const std::string sub = path + "." + key;
      if (props.contains(key)) {
        validate_at(value, props[key], sub);
      } else if (s.contains("additionalProperties")) {
        const Json& ap = s["additionalProperties"];
        if (ap.is_boolean() && !ap.get<bool>()) throw ConfigError(sub + ": unknown key");
        if (ap.is_object()) validate_at(value, ap, sub);
      }
    }
  }
}

// ---------------------------------------------------------------- parsing helpers

struct Parser {
  int n = 0;
  VariableSet vars;

  Expr expr(const Json& s, const std::string& where) const {
    try {
      return parse(s.get<std::string>(), vars);
    } catch (const ParseError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }

  int index(const Json& v, int bound, const std::string& where) const {
    if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer index");
    const int i = v.get<int>();
    if (i < 1 || i > bound) throw ConfigError(where + ": index " + std::to_string(i) + " outside 1.." + std::to_string(bound));
    return i - 1;
  }

  FormField form(const Json& terms, const std::string& where, int expect_degree = -1) const {
    int degree = expect_degree;
    FormField f;
    for (std::size_t t = 0; t < terms.size(); ++t) {
      const Json& term = terms[t];
      const std::string w = where + "[" + std::to_string(t) + "]";
      if (!term.back().is_string()) throw ConfigError(w + ": last entry must be the coefficient expression");
      const int k = static_cast<int>(term.size()) - 1;
      if (degree < 0) degree = k;
      if (k != degree) throw ConfigError(w + ": degree " + std::to_string(k) + " differs from " + std::to_string(degree));
      if (f.dim() == 0) f = FormField(n, degree);
      std::vector<int> idx;
      for (int i = 0; i < k; ++i) idx.push_back(index(term[static_cast<std::size_t>(i)], n, w));
      std::set<int> uniq(idx.begin(), idx.end());
      if (static_cast<int>(uniq.size()) != k) throw ConfigError(w + ": repeated index");
      f += FormField::monomial(n, expr(term.back(), w), idx);
    }
    if (f.dim() == 0) f = FormField(n, std::max(degree, 0));
    return f;
  }

  std::vector<Expr> row(const Json& a, std::size_t len, const std::string& where) const {
    if (a.size() != len) throw ConfigError(where + ": expected " + std::to_string(len) + " entries");
    std::vector<Expr> out;
    for (std::size_t i = 0; i < a.size(); ++i) out.push_back(expr(a[i], where + "[" + std::to_string(i) + "]"));
    return out;
  }

  Vec numbers(const Json& a, int len, const std::string& where) const {
    if (static_cast<int>(a.size()) != len)
      throw ConfigError(where + ": expected " + std::to_string(len) + " numbers, got " + std::to_string(a.size()));
    Vec v(len);
    for (int i = 0; i < len; ++i) v[i] = a[static_cast<std::size_t>(i)].get<double>();
    return v;
  }
};

BivectorField parse_pi(const Parser& P, const Json& terms) {
  BivectorField pi(P.n);
  std::set<std::pair<int, int>> seen;
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const std::string w = "pi[" + std::to_string(t) + "]";
    const int i = P.index(terms[t][0], P.n, w);
    const int j = P.index(terms[t][1], P.n, w);
    if (i == j) throw ConfigError(w + ": diagonal entry");
    if (!terms[t][2].is_string()) throw ConfigError(w + ": third entry must be an expression");
    if (!seen.insert({std::min(i, j), std::max(i, j)}).second) throw ConfigError(w + ": entry given twice");
    pi.set(i, j, P.expr(terms[t][2], w));
  }
  return pi;
}

}  // namespace

const Json& config_schema() {
  static const Json schema = Json::parse(kSchema);
  return schema;
}

void validate_schema(const Json& doc, const Json& schema) { validate_at(doc, schema, "$"); }

ProblemConfig parse_config(const Json& doc) {
  validate_schema(doc, config_schema());
  ProblemConfig c;
  c.kind = doc["kind"].get<std::string>();
  c.description = doc.value("description", "");
  const auto& allowed = kKindKeys.at(c.kind);
  for (const auto& [key, value] : doc.items())
    if (!kCommonKeys.count(key) && !allowed.count(key))
      throw ConfigError("$." + key + ": key does not apply to kind '" + c.kind + "'");

  c.dim = doc["chart"]["dim"].get<int>();
  const int n = c.dim;
  Parser P{n, VariableSet::chart(n, 0)};
  c.box = Box{Vec::Constant(n, -1.0), Vec::Constant(n, 1.0)};
  if (doc["chart"].contains("box")) {
    const Json& b = doc["chart"]["box"];
    if (static_cast<int>(b.size()) != n) throw ConfigError("$.chart.box: expected one interval per coordinate");
    for (int i = 0; i < n; ++i) {
      c.box.lo[i] = b[static_cast<std::size_t>(i)][0].get<double>();
      c.box.hi[i] = b[static_cast<std::size_t>(i)][1].get<double>();
      if (!(c.box.lo[i] < c.box.hi[i])) throw ConfigError("$.chart.box[" + std::to_string(i) + "]: empty interval");
    }
  }

  if (doc.contains("numerics")) {
    const Json& m = doc["numerics"];
    ScenarioOptions& o = c.opt;
    if (m.contains("quadrature"))
      o.quadrature = m["quadrature"] == "simpson" ? QuadratureKind::Simpson : QuadratureKind::GaussLegendre;
    o.quadrature_n = m.value("quadrature_n", o.quadrature_n);
    o.steps_per_unit = m.value("steps_per_unit", o.steps_per_unit);
    o.samples = m.value("samples", o.samples);
    o.pair_samples = m.value("pair_samples", o.pair_samples);
    o.triple_samples = m.value("triple_samples", o.triple_samples);
    o.multiply_steps = m.value("multiply_steps", o.multiply_steps);
    o.seed = m.value("seed", o.seed);
    o.fiber_radius = m.value("fiber_radius", o.fiber_radius);
    o.base_fraction = m.value("base_fraction", o.base_fraction);
    o.nondegeneracy_min = m.value("nondegeneracy_min", o.nondegeneracy_min);
    o.multiplication_checks = m.value("multiplication_checks", o.multiplication_checks);
    if (o.quadrature == QuadratureKind::Simpson && o.quadrature_n % 2 != 0)
      throw ConfigError("$.numerics.quadrature_n: Simpson needs an even number of intervals");
    if (o.quadrature == QuadratureKind::GaussLegendre && o.quadrature_n > 64)
      throw ConfigError("$.numerics.quadrature_n: at most 64 Gauss-Legendre nodes");
  }
  if (doc.contains("tolerances"))
    for (const auto& [key, value] : doc["tolerances"].items()) c.tolerances[key] = value.get<double>();

  auto require = [&](const char* key) {
    if (!doc.contains(key)) throw ConfigError(std::string("$: kind '") + c.kind + "' requires key '" + key + "'");
  };
  if (c.kind == "poisson" || c.kind == "nijenhuis" || c.kind == "gcs") require("pi");
  if (doc.contains("pi")) c.pi = parse_pi(P, doc["pi"]);
  else c.pi = BivectorField(n);
  if (c.kind == "poisson" && doc.contains("exact_forms"))
    for (std::size_t i = 0; i < doc["exact_forms"].size(); ++i)
      c.exact_forms.push_back(P.form(doc["exact_forms"][i], "$.exact_forms[" + std::to_string(i) + "]"));

  if (c.kind == "nijenhuis" || c.kind == "gcs") {
    require("l");
    const Json& l = doc["l"];
    if (static_cast<int>(l.size()) != n) throw ConfigError("$.l: expected an n x n matrix");
    c.l.n = n;
    for (int i = 0; i < n; ++i) {
      const auto r = P.row(l[static_cast<std::size_t>(i)], static_cast<std::size_t>(n), "$.l[" + std::to_string(i) + "]");
      c.l.m.insert(c.l.m.end(), r.begin(), r.end());
    }
    c.holomorphic = doc.value("holomorphic", false);
  }
  if (c.kind == "gcs") {
    require("varpi");
    c.varpi = P.form(doc["varpi"], "$.varpi", 2);
  }
  if (c.kind == "jacobi") {
    require("reeb");
    c.reeb = VectorField(P.row(doc["reeb"], static_cast<std::size_t>(n), "$.reeb"));
  }
  if (c.kind == "dirac") {
    require("frame");
    auto frame = std::make_shared<DiracFrame>();
    const Json& f = doc["frame"];
    for (std::size_t i = 0; i < f.size(); ++i) {
      const std::string w = "$.frame[" + std::to_string(i) + "]";
      frame->v.emplace_back(P.row(f[i]["v"], static_cast<std::size_t>(n), w + ".v"));
      const auto a = P.row(f[i]["alpha"], static_cast<std::size_t>(n), w + ".alpha");
      FormField alpha(n, 1);
      for (int k = 0; k < n; ++k) alpha.at(static_cast<std::size_t>(k)) = a[static_cast<std::size_t>(k)];
      frame->alpha.push_back(alpha);
    }
    if (static_cast<int>(frame->v.size()) != n) throw ConfigError("$.frame: a Dirac frame has exactly dim sections");
    frame->H = doc.contains("H") ? P.form(doc["H"], "$.H", 3) : FormField(n, 0);
    if (doc.contains("H") && n < 3) throw ConfigError("$.H: a 3-form needs dimension at least 3");
    if (doc.contains("graph_form")) c.graph_form = P.form(doc["graph_form"], "$.graph_form", 2);
    c.frame = frame;
  }
  if (c.kind == "raw_algebroid") {
    require("rank");
    require("anchor");
    c.rank = doc["rank"].get<int>();
    const int r = c.rank;
    if (n + r > 12) throw ConfigError("$.rank: total dimension above 12 is not supported");
    const Json& a = doc["anchor"];
    if (static_cast<int>(a.size()) != n) throw ConfigError("$.anchor: expected dim rows (one per coordinate)");
    for (int m = 0; m < n; ++m) {
      const auto row = P.row(a[static_cast<std::size_t>(m)], static_cast<std::size_t>(r), "$.anchor[" + std::to_string(m) + "]");
      c.anchor.insert(c.anchor.end(), row.begin(), row.end());
    }
    c.brackets.assign(static_cast<std::size_t>(r * r * r), Expr());
    for (std::size_t t = 0; t < doc.value("brackets", Json::array()).size(); ++t) {
      const Json& b = doc["brackets"][t];
      const std::string w = "$.brackets[" + std::to_string(t) + "]";
      int i = P.index(b[0], r, w), j = P.index(b[1], r, w);
      const int k = P.index(b[2], r, w);
      if (!b[3].is_string()) throw ConfigError(w + ": fourth entry must be an expression");
      Expr e = P.expr(b[3], w);
      if (i == j) throw ConfigError(w + ": [e_a, e_a] is zero");
      if (i > j) {
        std::swap(i, j);
        e = -e;
      }
      c.brackets[static_cast<std::size_t>((i * r + j) * r + k)] += e;
    }
    if (doc.contains("im_form")) {
      const Json& f = doc["im_form"];
      const int k = f["degree"].get<int>();
      IMFormData d = IMFormData::zero(k, n, r);
      if (static_cast<int>(f["l"].size()) != r) throw ConfigError("$.im_form.l: expected one form per frame element");
      for (int j = 0; j < r; ++j)
        d.l[static_cast<std::size_t>(j)] = P.form(f["l"][static_cast<std::size_t>(j)], "$.im_form.l[" + std::to_string(j) + "]", k - 1);
      if (f.contains("nu")) {
        if (static_cast<int>(f["nu"].size()) != r) throw ConfigError("$.im_form.nu: expected one form per frame element");
        for (int j = 0; j < r; ++j)
          d.nu[static_cast<std::size_t>(j)] = P.form(f["nu"][static_cast<std::size_t>(j)], "$.im_form.nu[" + std::to_string(j) + "]", k);
      }
      c.im_form = d;
    }
  }

  if (doc.contains("convergence")) {
    const Json& cv = doc["convergence"];
    if (cv.contains("ladder")) c.ladder = cv["ladder"].get<std::vector<int>>();
    c.fine_steps = cv.value("fine_steps", c.fine_steps);
    const int d = c.kind == "jacobi" ? 2 * n + 1 : c.kind == "raw_algebroid" ? n + c.rank : 2 * n;
    for (std::size_t i = 0; i < cv.value("points", Json::array()).size(); ++i)
      c.convergence_points.push_back(P.numbers(cv["points"][i], d, "$.convergence.points[" + std::to_string(i) + "]"));
    for (int N : c.ladder)
      if (N % 2) throw ConfigError("$.convergence.ladder: Simpson levels must be even");
  }
  if (doc.contains("eval")) {
    const Json& e = doc["eval"];
    if (e.contains("point")) {
      const auto v = e["point"].get<std::vector<double>>();
      c.eval_point = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    for (const auto& v : e.value("vectors", Json::array())) {
      const auto x = v.get<std::vector<double>>();
      c.eval_vectors.push_back(Eigen::Map<const Vec>(x.data(), static_cast<Eigen::Index>(x.size())));
    }
    if (e.contains("compose")) {
      const auto v = e["compose"].get<std::vector<double>>();
      c.eval_compose = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
  }
  if (doc.contains("outputs")) {
    const Json& o = doc["outputs"];
    c.report_name = o.value("report", c.report_name);
    c.residuals_name = o.value("residuals", c.residuals_name);
    c.convergence_name = o.value("convergence", c.convergence_name);
  }
  return c;
}

ProblemConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

// ---------------------------------------------------------------- pipelines

namespace {

void raw_checks(Pipeline& p, const ProblemConfig& c, bool run_checks) {
  const ScenarioOptions& o = c.opt;
  AlgebroidChart A = raw_algebroid(c.dim, c.rank, c.anchor, c.brackets, c.box);
  Spray V = default_spray(A);
  if (run_checks) {
    p.report.merge(check_algebroid(A, o.samples, o.seed), "algebroid");
    p.report.merge(check_spray(V, A, o.samples, o.seed, o.fiber_radius), "spray");
  }
  if (!c.im_form) {
    p.G = std::make_shared<SprayGroupoid>(std::move(A), std::move(V), Expr(), o.steps_per_unit);
    return;
  }
  const IMFormData& pair = *c.im_form;
  if (run_checks) {
    p.report.merge(im_residuals(A, pair, o.samples, o.seed), "im");
    const SpencerData sp = pair.spencer();
    p.report.merge(linear_form_checks(linear_form(pair), &sp, c.box, o.samples, o.seed), "linear_form");
  }
  p.G = std::make_shared<SprayGroupoid>(std::move(A), std::move(V), Expr(), o.steps_per_unit);
  p.omega = std::make_shared<MultFormEvaluator>(p.G, linear_form(pair), o.rule());
  ValidityOptions vo;
  vo.fiber_radius = o.fiber_radius;
  vo.base_fraction = o.base_fraction;
  vo.seed = o.seed;
  p.G->set_validity_box(discover_validity_box(*p.G, vo));
  if (!run_checks) return;

  const MultFormEvaluator& M = *p.omega;
  const SprayGroupoid& G = *p.G;
  const int n = G.n();
  const IMFormData dpair = d_IM(pair);
  const MultFormEvaluator dM(p.G, linear_form(dpair), o.rule());
  const bool has_d = pair.k < G.dim();
  std::vector<std::pair<double, double>> out(static_cast<std::size_t>(o.samples));
  std::vector<std::vector<double>> pts(out.size());
  const SplitMix64 root = SplitMix64(o.seed).fork(90);
  parallel_for(out.size(), [&](std::size_t i) {
    SplitMix64 rng = root.fork(i);
    const Vec g = sample_validity(G, rng);
    const Trajectory tr = G.compute_trajectory(g, M.grid());
    out[i].first = has_d ? (M.domega(tr) - dM.omega(tr)).max_abs() : 0.0;
    Vec x = sample_point(Box{G.validity_box().lo.head(n), G.validity_box().hi.head(n)}, rng);
    out[i].second = units_round_trip_residual(differentiate_at_units(M, x), pair, as_span(x));
    pts[i] = as_vector(g);
  });
  WorstCase chain, trip;
  for (std::size_t i = 0; i < out.size(); ++i) {
    chain.update(out[i].first, pts[i]);
    trip.update(out[i].second, pts[i]);
  }
  p.report.add("domega_chain_map", chain.value, 1e-7, chain.point, "dω against the form of d_IM(l, ν) = (ν, 0)");
  p.report.add("im_round_trip", trip.value, 1e-7, trip.point, "differentiation at units recovers (l, ν)");
  SplitMix64 rng = SplitMix64(o.seed).fork(91);
  Vec a = sample_validity(G, rng);
  for (int j = 0; j < G.r(); ++j)
    if (std::abs(a[n + j]) < 0.1) a[n + j] = 0.1;
  const LinearizationResult lin = linearization_check(M, a);
  if (lin.exact)
    p.report.add("linearization_slope", 0.0, 0.2, as_vector(a), "remainder vanishes identically (linear flow data)");
  else
    p.report.add("linearization_slope", std::abs(lin.slope - 1.0), 0.2, as_vector(a), "|slope - 1|");
}

}  // namespace

Pipeline build_pipeline(const ProblemConfig& c, bool run_checks) {
  Pipeline p;
  const ScenarioOptions& o = c.opt;
  if (c.kind == "poisson" || c.kind == "nijenhuis" || c.kind == "gcs") {
    SymplecticGroupoid S = build_symplectic_groupoid(c.pi, c.box, o, run_checks);
    p.G = S.G;
    p.omega = S.omega;
    p.report = S.report;
    if (c.kind != "poisson") p.omega_l = omega_L(S, c.l);
    if (run_checks) {
      for (std::size_t i = 0; i < c.exact_forms.size(); ++i)
        p.report.merge(exact_form_checks(S.G, c.exact_forms[i], o), "exact_form" + std::to_string(i + 1));
      if (c.kind == "nijenhuis") {
        p.report.merge(nijenhuis_checks(S, c.l, o), "nijenhuis");
        if (c.holomorphic) p.report.merge(holomorphic_checks(S, c.l, o), "holomorphic");
      }
      if (c.kind == "gcs") p.report.merge(gcs_identity_check(S, c.l, *c.varpi, o), "gcs");
    }
    p.poisson = std::move(S);
  } else if (c.kind == "dirac") {
    DiracScenario D = build_dirac(c.frame, c.box, o, c.graph_form ? &*c.graph_form : nullptr, run_checks);
    p.G = D.G;
    p.omega = D.omega;
    p.report = D.report;
  } else if (c.kind == "jacobi") {
    JacobiScenario J = build_jacobi(c.pi, c.reeb, c.box, o, run_checks);
    p.G = J.G;
    p.omega = J.omega;
    p.report = J.report;
    p.jacobi = std::move(J);
  } else {
    raw_checks(p, c, run_checks);
  }
  return p;
}

namespace {

// Re-judges entries whose tolerance the config overrides.
CheckReport apply_tolerances(const CheckReport& in, const std::map<std::string, double>& tol) {
  if (tol.empty()) return in;
  CheckReport out;
  for (const CheckEntry& e : in.entries()) {
    const auto it = tol.find(e.name);
    if (e.skipped) {
      out.add_skipped(e.name, e.note);
    } else if (e.lower_bound) {
      out.add_margin(e.name, e.residual, it == tol.end() ? e.tolerance : it->second, e.worst_point, e.note);
    } else {
      out.add(e.name, e.residual, it == tol.end() ? e.tolerance : it->second, e.worst_point, e.note);
    }
  }
  return out;
}

}  // namespace

RunResult run_check(const ProblemConfig& c) {
  RunResult r;
  auto record = [&](const std::string& check, const std::string& message, double residual) {
    r.math_error = true;
    r.error_check = check;
    r.error_message = message;
    r.report.add(check, residual, 0.0, {}, message);
  };
  try {
    Pipeline p = build_pipeline(c, true);
    r.report = apply_tolerances(p.report, c.tolerances);
    if (p.G && p.G->validity_box().dim() > 0) r.validity = p.G->validity_box();
  } catch (const PreconditionError& e) {
    record(e.check(), e.what(), e.residual());
  } catch (const DomainExit& e) {
    record("domain_exit", e.what(), e.exit_time());
  } catch (const DegeneracyError& e) {
    record("nondegeneracy", e.what(), e.smallest_singular_value());
  } catch (const StepUnderflow& e) {
    record("step_underflow", e.what(), std::nan(""));
  } catch (const DomainError& e) {
    record("domain", e.what(), std::nan(""));
  }
  return r;
}

// ---------------------------------------------------------------- convergence

namespace {

bool all_constant(const BivectorField& pi) {
  for (int i = 0; i < pi.dim(); ++i)
    for (int j = i + 1; j < pi.dim(); ++j)
      if (!pi(i, j).is_constant()) return false;
  return true;
}

}  // namespace

ConvergenceResult run_convergence(const ProblemConfig& c) {
  const Pipeline p = build_pipeline(c, false);
  if (!p.omega) throw ConfigError("convergence needs an evaluator (raw_algebroid without im_form)");
  const SprayGroupoid& G = *p.G;
  const AlgebroidChart A = G.algebroid();
  const Spray V = G.spray();
  const LinearForm L = p.omega->linear_form();
  const Expr rate = p.jacobi ? p.jacobi->cocycle : Expr();
  EvaluatorFactory make = [&](const QuadratureRule& rule, int steps) {
    auto H = std::make_shared<SprayGroupoid>(A, V, rate, steps);
    return std::make_shared<MultFormEvaluator>(H, L, rule);
  };
  std::vector<Vec> points = c.convergence_points;
  if (points.empty()) {
    SplitMix64 rng = SplitMix64(c.opt.seed).fork(100);
    for (int i = 0; i < 4; ++i) points.push_back(sample_validity(G, rng));
  }
  std::function<AltTensor(const Vec&)> oracle;
  if (p.poisson && all_constant(c.pi)) {
    // Affine flow (x + t π♯p, p): the pulled-back ω0 is quadratic in t, so
    // two Simpson intervals integrate it exactly.
    const int n = c.dim;
    const Mat P = c.pi.eval(as_span(Vec::Zero(n)));
    oracle = [P, n](const Vec&) {
      Mat O0 = Mat::Zero(2 * n, 2 * n);
      O0.topRightCorner(n, n).setIdentity();
      O0.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
      Mat acc = Mat::Zero(2 * n, 2 * n);
      const double t[3] = {0.0, 0.5, 1.0}, w[3] = {1.0 / 6, 4.0 / 6, 1.0 / 6};
      for (int k = 0; k < 3; ++k) {
        Mat Phi = Mat::Identity(2 * n, 2 * n);
        Phi.topRightCorner(n, n) = t[k] * P.transpose();
        acc += w[k] * (Phi.transpose() * O0 * Phi);
      }
      return AltTensor::from_matrix(acc);
    };
  } else if (p.jacobi && jacobi_line_closed_form(*p.jacobi, points.front())) {
    const JacobiScenario* J = &*p.jacobi;
    oracle = [J](const Vec& g) { return *jacobi_line_closed_form(*J, g); };
  }
  return convergence_study(make, points, c.ladder, oracle, c.fine_steps);
}

// ---------------------------------------------------------------- eval

namespace {

Json form_json(const AltTensor& a) {
  Json j;
  j["degree"] = a.degree();
  Json comps = Json::array();
  const MultiIndexTable& t = multi_indices(a.dim(), a.degree());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.at(i) == 0.0) continue;
    std::vector<int> idx;
    for (int k : t.indices[i]) idx.push_back(k + 1);
    comps.push_back({{"indices", idx}, {"value", a.at(i)}});
  }
  j["components"] = comps;
  return j;
}

Json matrix_json(const Mat& m) {
  Json rows = Json::array();
  for (int i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j) == 0.0 ? 0.0 : m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Json vec_json(const Vec& v) { return as_vector(v); }

}  // namespace

Json run_eval(const ProblemConfig& c) {
  if (!c.eval_point) throw ConfigError("eval: no point given");
  const Pipeline p = build_pipeline(c, false);
  if (!p.omega) throw ConfigError("eval needs an evaluator (raw_algebroid without im_form)");
  const SprayGroupoid& G = *p.G;
  const Vec& g = *c.eval_point;
  if (g.size() != G.dim()) throw ConfigError("eval: point must have " + std::to_string(G.dim()) + " coordinates");
  const MultFormEvaluator& M = *p.omega;
  const Trajectory tr = G.compute_trajectory(g, M.grid());
  const AltTensor w = M.omega(tr);
  Json out;
  out["schema_version"] = 1;
  out["kind"] = c.kind;
  out["point"] = vec_json(g);
  out["source"] = vec_json(G.source(g));
  out["target"] = vec_json(tr.x.back().head(G.n()));
  out["omega"] = form_json(w);
  if (w.degree() == 2) out["omega_matrix"] = matrix_json(w.to_matrix());
  if (w.degree() < G.dim()) out["domega"] = form_json(M.domega(tr));
  if (!c.eval_vectors.empty()) {
    if (static_cast<int>(c.eval_vectors.size()) != w.degree())
      throw ConfigError("eval: expected " + std::to_string(w.degree()) + " vectors");
    Mat vs(G.dim(), w.degree());
    for (int i = 0; i < w.degree(); ++i) {
      if (c.eval_vectors[static_cast<std::size_t>(i)].size() != G.dim())
        throw ConfigError("eval: vectors must have " + std::to_string(G.dim()) + " components");
      vs.col(i) = c.eval_vectors[static_cast<std::size_t>(i)];
    }
    out["omega_on_vectors"] = w.evaluate(vs);
  }
  if (p.poisson) {
    out["Pi"] = matrix_json(invert_2form(w));
    if (p.omega_l) out["omega_L"] = form_json(p.omega_l->omega(tr));
    if (c.eval_compose) {
      if (c.eval_compose->size() != G.dim()) throw ConfigError("eval: compose point has the wrong dimension");
      out["mu"] = vec_json(multiply_poisson(M, g, *c.eval_compose, MultiplyOptions{c.opt.multiply_steps}));
    }
  } else if (c.eval_compose) {
    throw ConfigError("eval: compose (the product) is only available for Poisson kinds");
  }
  if (p.jacobi) {
    out["cocycle"] = integrate_cocycle(G, p.jacobi->cocycle, g, M.rule());
    out["weight"] = transport_weight(tr).back();
  }
  return out;
}

// ---------------------------------------------------------------- serialization

namespace {

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json environment(const ProblemConfig& c) {
  const ScenarioOptions& o = c.opt;
  Json e;
  e["quadrature"] = o.quadrature == QuadratureKind::Simpson ? "simpson" : "gauss_legendre";
  e["N"] = o.quadrature_n;
  e["h"] = 1.0 / o.steps_per_unit;
  e["steps_per_unit"] = o.steps_per_unit;
  e["seed"] = o.seed;
  e["samples"] = o.samples;
  e["pair_samples"] = o.pair_samples;
  e["triple_samples"] = o.triple_samples;
  return e;
}

}  // namespace

Json report_json(const ProblemConfig& c, const RunResult& r) {
  Json j;
  j["schema_version"] = 1;
  j["command"] = "check";
  j["kind"] = c.kind;
  if (!c.description.empty()) j["description"] = c.description;
  j["passed"] = r.passed();
  j["environment"] = environment(c);
  if (r.validity)
    j["validity_box"] = {{"lo", vec_json(r.validity->lo)}, {"hi", vec_json(r.validity->hi)}};
  else
    j["validity_box"] = nullptr;
  if (r.math_error) j["error"] = {{"check", r.error_check}, {"message", r.error_message}};
  Json checks = Json::array();
  for (const CheckEntry& e : r.report.entries()) {
    Json x;
    x["name"] = e.name;
    x["residual"] = number_or_null(e.residual);
    x["tolerance"] = number_or_null(e.tolerance);
    x["bound"] = e.lower_bound ? "min" : "max";
    x["verdict"] = e.skipped ? "skipped" : e.pass ? "pass" : "fail";
    x["worst_point"] = e.worst_point;
    if (!e.note.empty()) x["note"] = e.note;
    checks.push_back(x);
  }
  j["checks"] = checks;
  return j;
}

Json convergence_json(const ProblemConfig& c, const ConvergenceResult& res) {
  Json j;
  j["schema_version"] = 1;
  j["command"] = "convergence";
  j["kind"] = c.kind;
  j["environment"] = environment(c);
  j["reference"] = res.reference;
  j["quadrature_order"] = number_or_null(res.quadrature_order);
  j["ode_order"] = number_or_null(res.ode_order);
  j["quadrature_exact"] = res.quadrature_exact;
  j["ode_exact"] = res.ode_exact;
  Json rows = Json::array();
  for (const auto& row : res.rows) rows.push_back({{"axis", row.axis}, {"N", row.N}, {"h", row.h}, {"error", row.error}});
  j["rows"] = rows;
  return j;
}

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace

std::string residual_csv(const CheckReport& report) {
  std::ostringstream s;
  s << "name,residual,tolerance,bound,verdict,worst_point\n";
  for (const CheckEntry& e : report.entries()) {
    s << e.name << ',' << fmt(e.residual) << ',' << fmt(e.tolerance) << ',' << (e.lower_bound ? "min" : "max") << ','
      << (e.skipped ? "skipped" : e.pass ? "pass" : "fail") << ',';
    for (std::size_t i = 0; i < e.worst_point.size(); ++i) s << (i ? ";" : "") << fmt(e.worst_point[i]);
    s << '\n';
  }
  return s.str();
}

std::string convergence_csv(const ConvergenceResult& c) {
  std::ostringstream s;
  s << "axis,N,h,error\n";
  for (const auto& r : c.rows) s << r.axis << ',' << r.N << ',' << fmt(r.h) << ',' << fmt(r.error) << '\n';
  return s.str();
}

}  // namespace mulform
