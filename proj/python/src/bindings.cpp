// Python bindings for problem generation, routing and the sequencers.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "attnroute/harness.hpp"

namespace py = pybind11;
using namespace attnroute;

namespace {

PadStrategy parse_pad(const std::string& s) {
  if (s == "empty") return PadStrategy::PadEmpty;
  if (s == "random") return PadStrategy::PadRandom;
  throw std::invalid_argument("pad must be 'empty' or 'random', got '" + s + "'");
}

py::dict solution_dict(const RouteSolution& sol) {
  py::dict d;
  d["cost"] = sol.cost;
  d["wirelength"] = sol.total_wirelength;
  d["opens"] = sol.open_count;
  d["order"] = sol.order;
  return d;
}

}  // namespace

PYBIND11_MODULE(_attnroute, m) {
  m.doc() = "Track-assignment detailed routing with attention and GA pair sequencing";

  py::register_exception<ProblemError>(m, "ProblemError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<InvalidOrder>(m, "InvalidOrder", PyExc_ValueError);

  py::class_<Problem>(m, "Problem")
      .def_readonly("name", &Problem::name)
      .def_property_readonly("rows", [](const Problem& p) { return p.wsp.rows; })
      .def_property_readonly("width", [](const Problem& p) { return p.wsp.width; })
      .def_property_readonly("instterm_count", [](const Problem& p) { return p.instterms.size(); })
      .def_property_readonly("net_count", [](const Problem& p) { return p.nets.size(); })
      .def("to_json", &serialize_problem)
      .def("__eq__", [](const Problem& a, const Problem& b) { return a == b; })
      .def("__repr__", [](const Problem& p) {
        return "<Problem '" + p.name + "' with " + std::to_string(p.instterms.size()) + " instTerms>";
      });

  py::class_<RoutingInstance>(m, "RoutingInstance")
      .def_readonly("name", &RoutingInstance::name)
      .def_readonly("n_max", &RoutingInstance::n_max)
      .def_readonly("unassigned_count", &RoutingInstance::unassigned_count)
      .def_readonly("mask", &RoutingInstance::mask)
      .def_readonly("features", &RoutingInstance::features)
      .def_property_readonly("pair_count", &RoutingInstance::real_count)
      .def("__len__", &RoutingInstance::real_count);

  py::class_<PolicyCheckpoint>(m, "Policy")
      .def_readonly("n_max", &PolicyCheckpoint::n_max)
      .def_readonly("meta", &PolicyCheckpoint::meta);

  m.def("parse_problem", [](const std::string& text) { return parse_problem(text); }, py::arg("text"));
  m.def("load_problem", [](const std::string& path) { return load_problem(path); }, py::arg("path"));
  m.def("validate_problem", [](const Problem& p) {
    std::vector<std::tuple<std::string, int, std::string>> out;
    for (const auto& v : validate_problem(p)) out.emplace_back(v.rule, v.entity, v.detail);
    return out;
  });
  m.def(
      "generate_problem",
      [](const std::string& config_json, std::optional<std::uint64_t> seed) {
        GenConfig cfg = config_json.empty() ? GenConfig{} : parse_gen_config(config_json);
        if (seed) cfg.seed = *seed;
        return generate_problem(cfg);
      },
      py::arg("config_json") = "", py::arg("seed") = py::none());

  m.def(
      "build_instance",
      [](const Problem& p, int n_max, const std::string& pad, std::uint64_t seed) {
        return build_instance(p, n_max, parse_pad(pad), seed);
      },
      py::arg("problem"), py::arg("n_max") = 0, py::arg("pad") = "empty", py::arg("seed") = 0);

  m.def(
      "route",
      [](const RoutingInstance& inst, const std::vector<int>& order) { return solution_dict(route_sequence(inst, order)); },
      py::arg("instance"), py::arg("order"));

  m.def(
      "ga_sequence",
      [](const RoutingInstance& inst, int generations, int population, int elites, int mutations, std::uint64_t seed) {
        GaParams params{generations, population, elites, mutations, seed};
        params.validate();
        const GaResult r = ga_sequence(inst, params);
        py::dict d;
        d["order"] = r.best_order;
        d["cost"] = r.best_cost;
        d["history"] = r.history;
        return d;
      },
      py::arg("instance"), py::arg("generations") = 10, py::arg("population") = 10, py::arg("elites") = 4,
      py::arg("mutations") = 1, py::arg("seed") = 0);

  m.def("oracle_order", &oracle_order, py::arg("instance"));
  m.def("random_order", &random_order, py::arg("instance"), py::arg("seed") = 0);

  m.def("load_policy", [](const std::string& path) { return load_policy(path); }, py::arg("path"));
  m.def(
      "greedy_order",
      [](const RoutingInstance& inst, const PolicyCheckpoint& policy) {
        if (inst.n_max != policy.n_max)
          throw DataError("instance is padded to " + std::to_string(inst.n_max) + " but the policy expects " +
                          std::to_string(policy.n_max));
        py::gil_scoped_release release;
        return greedy_rollout(inst, policy.params).order;
      },
      py::arg("instance"), py::arg("policy"));

  m.def(
      "paired_ttest",
      [](const std::vector<double>& a, const std::vector<double>& b) { return paired_ttest(a, b); }, py::arg("a"),
      py::arg("b"));
  m.def(
      "pearson", [](const std::vector<double>& a, const std::vector<double>& b) { return pearson(a, b); },
      py::arg("a"), py::arg("b"));

  m.attr("OPEN_WEIGHT") = kOpenWeight;
  m.attr("WIRELENGTH_WEIGHT") = kWirelengthWeight;
}
