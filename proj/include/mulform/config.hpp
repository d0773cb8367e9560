#pragma once

// Problem configurations (JSON), the scenario runner behind the command-line
// tool and the Python bindings, and report serialization.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mulform/scenarios.hpp"

namespace mulform {

using Json = nlohmann::ordered_json;

/// The published configuration schema (JSON Schema subset).
const Json& config_schema();

/// Validates `doc` against `schema`. Supported keywords: type, properties,
/// required, additionalProperties (boolean), items, enum, minimum, maximum,
/// minItems, maxItems. Throws ConfigError naming the offending JSON path.
void validate_schema(const Json& doc, const Json& schema);

struct Term {
  std::vector<int> idx;  // 0-based
  Expr coeff;
};

struct ProblemConfig {
  std::string kind;
  std::string description;
  int dim = 0;
  Box box;
  ScenarioOptions opt;
  std::map<std::string, double> tolerances;

  BivectorField pi;
  VectorField reeb;
  TensorField11 l;
  bool holomorphic = false;
  std::optional<FormField> varpi;
  std::vector<FormField> exact_forms;
  std::shared_ptr<DiracFrame> frame;
  std::optional<FormField> graph_form;

  // raw_algebroid
  int rank = 0;
  std::vector<Expr> anchor;
  std::vector<Expr> brackets;
  std::optional<IMFormData> im_form;

  std::vector<int> ladder{16, 32, 64, 128};
  std::vector<Vec> convergence_points;
  int fine_steps = 1024;

  std::optional<Vec> eval_point;
  std::vector<Vec> eval_vectors;
  std::optional<Vec> eval_compose;

  std::string report_name = "report.json";
  std::string residuals_name = "residuals.csv";
  std::string convergence_name = "convergence.csv";
};

/// Schema validation, then kind-specific checks and expression parsing.
/// Throws ConfigError (or ParseError for malformed expressions).
ProblemConfig parse_config(const Json& doc);
ProblemConfig load_config(const std::string& path);

/// A built scenario: the evaluator the kind integrates, plus extras.
struct Pipeline {
  std::shared_ptr<SprayGroupoid> G;
  std::shared_ptr<MultFormEvaluator> omega;
  std::shared_ptr<MultFormEvaluator> omega_l;  // nijenhuis / gcs
  std::optional<SymplecticGroupoid> poisson;
  std::optional<JacobiScenario> jacobi;
  CheckReport report;
};

Pipeline build_pipeline(const ProblemConfig& cfg, bool run_checks);

struct RunResult {
  CheckReport report;
  std::optional<Box> validity;
  std::string error_check;    // set when a math error stopped the run
  std::string error_message;
  bool math_error = false;

  bool passed() const { return !math_error && report.passed(); }
};

/// Runs the full check pipeline. Math errors are caught and recorded (with
/// the failing check named); configuration errors propagate.
RunResult run_check(const ProblemConfig& cfg);

ConvergenceResult run_convergence(const ProblemConfig& cfg);

/// ω, dω and kind-specific values (Π, μ, cocycle) at the configured point.
Json run_eval(const ProblemConfig& cfg);

Json report_json(const ProblemConfig& cfg, const RunResult& r);
Json convergence_json(const ProblemConfig& cfg, const ConvergenceResult& c);
std::string residual_csv(const CheckReport& report);
std::string convergence_csv(const ConvergenceResult& c);

}  // namespace mulform
