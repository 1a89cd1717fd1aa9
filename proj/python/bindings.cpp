#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "dualac/checkpoint.hpp"
#include "dualac/driver.hpp"
#include "dualac/envs.hpp"
#include "dualac/errors.hpp"
#include "dualac/mdp.hpp"
#include "dualac/mdp_io.hpp"

namespace py = pybind11;
using namespace dualac;

namespace {

// Configs and records cross the boundary as JSON text; the python side wraps them in dicts.
DualAcConfig parse_config(const std::string& text) {
  return text.empty() ? DualAcConfig{} : config_from_json(nlohmann::json::parse(text));
}

class Trainer {
 public:
  Trainer(const std::string& config, const std::string& env) : cfg_(parse_config(config)) {
    cfg_.validate();
    state_ = init_training(cfg_.effective(), make_env(env));
  }

  std::string step() { return record_to_json(dual_ac_iteration(state_, cfg_.effective())).dump(); }
  int iteration() const { return state_.iteration; }
  void save(const std::filesystem::path& path) const { save_training(state_, cfg_.effective()).save(path); }

 private:
  DualAcConfig cfg_;
  TrainingState state_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  auto numerical = py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<DivergedError>(m, "DivergedError", numerical.ptr());
  py::register_exception<UnsupportedError>(m, "UnsupportedError", PyExc_NotImplementedError);
  py::register_exception<InvalidStateError>(m, "InvalidStateError", PyExc_RuntimeError);

  py::class_<TabularMdp>(m, "TabularMdp")
      .def(py::init<std::vector<Matrix>, Matrix, double, Vector>(), py::arg("transition"), py::arg("reward"),
           py::arg("gamma"), py::arg("mu"))
      .def_property_readonly("n_states", &TabularMdp::n_states)
      .def_property_readonly("n_actions", &TabularMdp::n_actions)
      .def_property_readonly("gamma", &TabularMdp::gamma)
      .def_property_readonly("reward", &TabularMdp::reward)
      .def_property_readonly("mu", &TabularMdp::mu)
      .def("transition", py::overload_cast<int>(&TabularMdp::transition, py::const_))
      .def("with_gamma", &TabularMdp::with_gamma);

  m.def("load_mdp", [](const std::filesystem::path& p) { return load_mdp(p); });
  m.def("save_mdp", [](const TabularMdp& mdp, const std::filesystem::path& p) { save_mdp(mdp, p); });
  m.def("env_mdp", [](const std::string& name) { return as_tabular(*make_env(name)); },
        "Exact model of a tabular environment.");
  m.def("registered_envs", &registered_envs);

  m.def("value_iteration", &value_iteration, py::arg("mdp"), py::arg("tol") = 1e-10);
  m.def("bellman_optimality_operator", &bellman_optimality_operator);
  m.def("k_step_bellman", &k_step_bellman);
  m.def("lambda_bellman", &lambda_bellman);
  m.def("policy_evaluation",
        [](const TabularMdp& mdp, const Matrix& probs) { return policy_evaluation(mdp, TabularPolicy(probs)); });
  m.def("duality_gap", [](const TabularMdp& mdp, const Vector& v, const Matrix& rho) {
    return duality_gap(mdp, v, OccupancyMeasure{rho});
  });
  m.def("dual_feasibility_residual",
        [](const TabularMdp& mdp, const Matrix& rho) { return dual_feasibility_residual(mdp, OccupancyMeasure{rho}); });
  m.def("solve_lp_oracles", [](const TabularMdp& mdp, double tol) {
    const auto sol = solve_lp_oracles(mdp, tol);
    py::dict d;
    d["v_star"] = sol.v_star;
    d["pi_star"] = sol.pi_star.probs;
    d["rho_star"] = sol.rho_star.rho;
    d["primal"] = sol.primal;
    d["dual"] = sol.dual;
    return d;
  }, py::arg("mdp"), py::arg("tol") = 1e-11);

  m.def("default_config", [] { return config_to_json(DualAcConfig{}).dump(); });
  m.def("normalize_config", [](const std::string& text) {
    const auto cfg = parse_config(text);
    cfg.validate();
    return config_to_json(cfg).dump();
  });

  py::class_<Trainer>(m, "Trainer")
      .def(py::init<const std::string&, const std::string&>(), py::arg("config"), py::arg("env"))
      .def("step", &Trainer::step, py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("iteration", &Trainer::iteration)
      .def("save", &Trainer::save);

  m.def("run_experiment", [](const std::string& config, const std::string& env,
                             const std::optional<std::filesystem::path>& out_dir) {
    std::vector<IterationRecord> records;
    {
      py::gil_scoped_release release;
      records = run_experiment(parse_config(config), env, out_dir);
    }
    std::vector<std::string> out;
    for (const auto& r : records) out.push_back(record_to_json(r).dump());
    return out;
  }, py::arg("config"), py::arg("env"), py::arg("out_dir") = std::nullopt);
}
