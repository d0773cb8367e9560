// Python bindings: configuration-level entry points plus expression helpers.
// Configs and reports cross the boundary as JSON text; the package wrapper
// converts to and from dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mulform/config.hpp"
#include "mulform/errors.hpp"
#include "mulform/parallel.hpp"

namespace py = pybind11;
using namespace mulform;

namespace {

ProblemConfig config_from(const std::string& text, std::optional<std::uint64_t> seed) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ProblemConfig c = parse_config(doc);
  if (seed) c.opt.seed = *seed;
  return c;
}

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

}  // namespace

PYBIND11_MODULE(_mulform, m) {
  m.doc() = "Multiplicative forms on local Lie groupoids";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> config_error;
  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> precondition_error;
  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> math_error;
  config_error.call_once_and_store_result(
      [&] { return py::exception<ConfigError>(m, "ConfigError", PyExc_ValueError); });
  math_error.call_once_and_store_result([&] { return py::exception<Error>(m, "MathError", PyExc_RuntimeError); });
  precondition_error.call_once_and_store_result(
      [&] { return py::exception<PreconditionError>(m, "PreconditionError", math_error.get_stored()); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error.get_stored(), e.what());
    } catch (const ParseError& e) {
      py::set_error(config_error.get_stored(), e.what());
    } catch (const ShapeError& e) {
      py::set_error(config_error.get_stored(), e.what());
    } catch (const PreconditionError& e) {
      py::set_error(precondition_error.get_stored(), e.what());
    } catch (const Error& e) {
      py::set_error(math_error.get_stored(), e.what());
    }
  });

  m.def("schema", [] { return config_schema().dump(); }, "Configuration schema as JSON text.");

  m.def(
      "check",
      [](const std::string& config, std::optional<std::uint64_t> seed, int threads) {
        const ProblemConfig c = config_from(config, seed);
        set_thread_count(threads);
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_check(c);
        }
        return report_json(c, r).dump();
      },
      py::arg("config"), py::arg("seed") = py::none(), py::arg("threads") = 0,
      "Run the check pipeline; returns the report as JSON text.");

  m.def(
      "convergence",
      [](const std::string& config, std::optional<std::vector<int>> ladder, int threads) {
        ProblemConfig c = config_from(config, std::nullopt);
        if (ladder) c.ladder = *ladder;
        set_thread_count(threads);
        ConvergenceResult r;
        {
          py::gil_scoped_release release;
          r = run_convergence(c);
        }
        return convergence_json(c, r).dump();
      },
      py::arg("config"), py::arg("ladder") = py::none(), py::arg("threads") = 0);

  m.def(
      "evaluate",
      [](const std::string& config, std::vector<double> point, std::vector<std::vector<double>> vectors,
         std::optional<std::vector<double>> compose) {
        ProblemConfig c = config_from(config, std::nullopt);
        c.eval_point = to_vec(point);
        c.eval_vectors.clear();
        for (const auto& v : vectors) c.eval_vectors.push_back(to_vec(v));
        if (compose) c.eval_compose = to_vec(*compose);
        return run_eval(c).dump();
      },
      py::arg("config"), py::arg("point"), py::arg("vectors") = std::vector<std::vector<double>>{},
      py::arg("compose") = py::none());

  m.def(
      "eval_expr",
      [](const std::string& source, const std::vector<std::string>& names, const std::vector<double>& values) {
        return parse(source, VariableSet(names)).eval(values);
      },
      py::arg("source"), py::arg("names"), py::arg("values"));

  m.def(
      "diff_expr",
      [](const std::string& source, const std::vector<std::string>& names, const std::string& var) {
        const VariableSet vars(names);
        const int i = vars.find(var);
        if (i < 0) throw ConfigError("unknown variable '" + var + "'");
        return to_string(partial(parse(source, vars), i), vars);
      },
      py::arg("source"), py::arg("names"), py::arg("var"), "Symbolic partial derivative, printed in the grammar.");
}
