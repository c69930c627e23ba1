// Python bindings: configs, single runs, figure grids and the verify suites.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "starfl/convergence.hpp"
#include "starfl/scenario.hpp"
#include "starfl/verify.hpp"

namespace py = pybind11;
using namespace starfl;

namespace {

py::dict row_dict(const RoundRow& r) {
  py::dict d;
  d["t"] = r.t;
  d["gap"] = r.gap;
  d["bound"] = r.bound;
  d["mse"] = r.mse;
  d["sum_rate"] = r.sum_rate;
  d["power_w"] = r.power_w;
  d["order_ok"] = r.order_ok;
  d["qos_ok"] = r.qos_ok;
  d["mse_ok"] = r.mse_ok;
  d["power_ok"] = r.power_ok;
  return d;
}

py::dict record_dict(const RunRecord& r) {
  py::dict d;
  d["variant"] = r.variant;
  d["scheme"] = r.scheme;
  d["seed"] = r.seed;
  py::list rows;
  for (const auto& row : r.rows) rows.append(row_dict(row));
  d["rows"] = rows;
  d["upsilon_window"] = r.upsilon_window;
  d["upsilon_trace"] = r.upsilon_trace;
  d["wall_seconds"] = r.wall_seconds;
  return d;
}

ScenarioConfig config_from(const std::string& json_text) {
  return json_text.empty() ? ScenarioConfig{} : parse_config(json_text, "config");
}

}  // namespace

PYBIND11_MODULE(starfl, m) {
  m.doc() = "STAR-RIS NOMA / over-the-air FL simulator";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("default_config", [] { return config_to_json(ScenarioConfig{}); },
        "Default scenario as JSON text.");
  m.def("normalize_config", [](const std::string& text) { return config_to_json(parse_config(text)); },
        py::arg("json_text"), "Parse, validate and re-serialize a config.");

  m.def(
      "run",
      [](const std::string& config_json, const std::string& scheme, std::uint64_t seed) {
        ScenarioConfig cfg = config_from(config_json);
        RunRecord r;
        {
          py::gil_scoped_release nogil;
          r = run_one(cfg, parse_scheme(scheme.empty() ? cfg.scheme : scheme), seed);
        }
        return record_dict(r);
      },
      py::arg("config_json") = "", py::arg("scheme") = "", py::arg("seed") = 1);

  m.def(
      "run_csv",
      [](const std::string& config_json, const std::string& scheme, std::uint64_t seed) {
        ScenarioConfig cfg = config_from(config_json);
        py::gil_scoped_release nogil;
        return run_csv(run_one(cfg, parse_scheme(scheme.empty() ? cfg.scheme : scheme), seed));
      },
      py::arg("config_json") = "", py::arg("scheme") = "", py::arg("seed") = 1);

  m.def("figure_names", &figure_names);
  m.def(
      "figure",
      [](const std::string& name, const std::string& config_json, const std::string& out_dir,
         int threads) {
        ScenarioConfig cfg = config_from(config_json);
        auto cells = figure_cells(name, cfg);
        GridOutput g;
        {
          py::gil_scoped_release nogil;
          g = run_grid(cells, out_dir, threads);
        }
        py::list out;
        for (const auto& s : g.groups) {
          py::dict d;
          d["variant"] = s.variant;
          d["scheme"] = s.scheme;
          d["runs"] = s.runs;
          d["final_gap_median"] = s.final_gap_median;
          d["mean_rate_median"] = s.mean_rate_median;
          out.append(d);
        }
        return out;
      },
      py::arg("name"), py::arg("config_json") = "", py::arg("out_dir") = "", py::arg("threads") = 1);

  m.def("verify_suite_names", &verify_suite_names);
  m.def(
      "verify",
      [](const std::string& suite) {
        std::vector<Check> cs;
        {
          py::gil_scoped_release nogil;
          cs = run_suite(suite);
        }
        return report_json(cs);
      },
      py::arg("suite"), "JSON report of one verification suite.");

  m.def("lambda3", &lambda3, py::arg("effective"), py::arg("mu"), py::arg("L"), py::arg("lam"),
        py::arg("K"));
  m.def("lambda4", &lambda4, py::arg("effective"), py::arg("L"), py::arg("lam"), py::arg("K"),
        py::arg("delta_norm_sq"), py::arg("Q"), py::arg("sigma2"));
  m.def("upsilon", &upsilon, py::arg("l3"), py::arg("l4"), py::arg("initial_gap"));
}
