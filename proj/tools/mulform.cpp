// Command-line front end: check, convergence, eval, schema.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "mulform/config.hpp"
#include "mulform/errors.hpp"
#include "mulform/parallel.hpp"

namespace fs = std::filesystem;
using namespace mulform;

namespace {

enum Exit { kPass = 0, kCheckFailure = 1, kConfigError = 2, kMathError = 3 };

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size() && item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("cannot read number '" + item + "' in list '" + s + "'");
    }
  }
  return out;
}

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiplicative forms on local Lie groupoids: build, evaluate and check"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string out_dir = ".";
  app.add_option("--config", config_path, "Problem configuration (JSON)");
  app.add_option("--seed", seed, "Override numerics.seed");
  app.add_option("--threads", threads, "Worker threads (0: all cores, 1: deterministic single thread)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--out-dir", out_dir, "Directory for report files");

  auto* check = app.add_subcommand("check", "Run the scenario pipeline and write a report and residual table");
  auto* conv = app.add_subcommand("convergence", "Quadrature and ODE convergence ladders with fitted orders");
  std::string ladder;
  double min_order = 3.5;
  conv->add_option("--ladder", ladder, "Comma-separated levels, e.g. 16,32,64,128");
  conv->add_option("--min-order", min_order, "Fitted order below which the command reports failure");
  auto* eval = app.add_subcommand("eval", "Evaluate ω, dω and kind-specific values at a point (JSON on stdout)");
  std::string point, compose;
  std::vector<std::string> vectors;
  eval->add_option("--point", point, "Comma-separated total-space point");
  eval->add_option("--vector", vectors, "Tangent vector (repeatable), comma-separated");
  eval->add_option("--compose", compose, "Second factor b for the product μ(point, b)");
  auto* schema = app.add_subcommand("schema", "Print the configuration JSON schema");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kConfigError;
  }

  if (schema->parsed()) {
    std::cout << dump(config_schema());
    return kPass;
  }

  ProblemConfig cfg;
  try {
    if (config_path.empty()) throw ConfigError("--config is required");
    cfg = load_config(config_path);
    if (seed) cfg.opt.seed = *seed;
    if (!ladder.empty()) {
      cfg.ladder.clear();
      for (double v : parse_list(ladder)) {
        if (v < 2 || v != std::floor(v) || static_cast<int>(v) % 2) throw ConfigError("--ladder: levels must be even integers >= 2");
        cfg.ladder.push_back(static_cast<int>(v));
      }
      if (cfg.ladder.size() < 2) throw ConfigError("--ladder: at least two levels");
    }
    if (!point.empty()) cfg.eval_point = to_vec(parse_list(point));
    if (!vectors.empty()) {
      cfg.eval_vectors.clear();
      for (const auto& v : vectors) cfg.eval_vectors.push_back(to_vec(parse_list(v)));
    }
    if (!compose.empty()) cfg.eval_compose = to_vec(parse_list(compose));
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  set_thread_count(threads);
  const fs::path dir(out_dir);

  try {
    if (check->parsed()) {
      const RunResult r = run_check(cfg);
      write_file(dir / cfg.report_name, dump(report_json(cfg, r)));
      write_file(dir / cfg.residuals_name, residual_csv(r.report));
      for (const CheckEntry& e : r.report.entries()) {
        std::cout << (e.skipped ? "SKIP" : e.pass ? "PASS" : "FAIL") << "  " << e.name;
        if (!e.skipped) std::cout << "  " << e.residual << (e.lower_bound ? " >= " : " < ") << e.tolerance;
        std::cout << "\n";
      }
      if (r.math_error) {
        std::cerr << "error in check '" << r.error_check << "': " << r.error_message << "\n";
        return kMathError;
      }
      return r.passed() ? kPass : kCheckFailure;
    }
    if (conv->parsed()) {
      const ConvergenceResult c = run_convergence(cfg);
      write_file(dir / cfg.convergence_name, convergence_csv(c));
      fs::path json_name = cfg.convergence_name;
      json_name.replace_extension(".json");
      write_file(dir / json_name, dump(convergence_json(cfg, c)));
      std::cout << convergence_csv(c);
      auto order_line = [&](const char* axis, double order, bool exact) {
        std::cout << axis << " order: " << (exact ? std::string("exact") : std::to_string(order)) << "\n";
        return exact || order >= min_order;
      };
      const bool ok = order_line("quadrature", c.quadrature_order, c.quadrature_exact) &
                      order_line("ode", c.ode_order, c.ode_exact);
      return ok ? kPass : kCheckFailure;
    }
    if (eval->parsed()) {
      std::cout << dump(run_eval(cfg));
      return kPass;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const PreconditionError& e) {
    std::cerr << "error in check '" << e.check() << "': " << e.what() << "\n";
    return kMathError;
  } catch (const Error& e) {
    std::cerr << "math error: " << e.what() << "\n";
    return kMathError;
  }
  return kPass;
}
