#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pgkq/errors.hpp"
#include "pgkq/gp.hpp"
#include "pgkq/harness.hpp"
#include "pgkq/quadrature.hpp"

namespace py = pybind11;
using namespace pgkq;

namespace {

QuadratureRule make_rule(std::vector<int> indices, std::vector<double> weights) {
  return QuadratureRule{std::move(indices), std::move(weights)};
}

}  // namespace

PYBIND11_MODULE(_pgkq, m) {
  m.doc() = "Policy gradient with episodic kernel quadrature";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_RuntimeError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<AlgorithmError>(m, "AlgorithmError", PyExc_RuntimeError);

  m.def("discounted_returns", &discounted_returns, py::arg("rewards"), py::arg("gamma"));

  py::class_<Environment>(m, "Environment")
      .def_readonly("id", &Environment::id)
      .def_readonly("state_dim", &Environment::state_dim)
      .def_readonly("action_dim", &Environment::action_dim)
      .def_readonly("max_horizon", &Environment::max_horizon);
  m.def("make_environment", &make_environment, py::arg("id"));
  m.def("environment_ids", &environment_ids);

  py::class_<GaussianPolicy>(m, "GaussianPolicy")
      .def_static(
          "make",
          [](int sd, int ad, std::vector<int> hidden, std::uint64_t seed) {
            Rng rng(seed);
            return GaussianPolicy::make(sd, ad, hidden, rng);
          },
          py::arg("state_dim"), py::arg("action_dim"), py::arg("hidden") = std::vector<int>{64, 64},
          py::arg("seed") = 0)
      .def_readwrite("log_std", &GaussianPolicy::log_std)
      .def("flat_params", &GaussianPolicy::flat_params)
      .def("set_flat_params", &GaussianPolicy::set_flat_params)
      .def("logprob", py::overload_cast<const VectorXd&, const VectorXd&>(&GaussianPolicy::logprob, py::const_));

  py::class_<Episode>(m, "Episode")
      .def_readonly("states", &Episode::states)
      .def_readonly("actions", &Episode::actions)
      .def_readonly("logprobs", &Episode::logprobs)
      .def_readonly("rewards", &Episode::rewards)
      .def_readonly("returns", &Episode::returns)
      .def("__len__", &Episode::length)
      .def("total_reward", &Episode::total_reward);

  py::class_<RewardMeter>(m, "RewardMeter")
      .def(py::init<>())
      .def_property_readonly("episodes_evaluated", &RewardMeter::episodes_evaluated)
      .def_property_readonly("steps_evaluated", &RewardMeter::steps_evaluated);

  m.def(
      "rollout",
      [](const Environment& env, const GaussianPolicy& policy, std::uint64_t seed) {
        Rng rng(seed);
        return rollout(env, policy, rng);
      },
      py::arg("env"), py::arg("policy"), py::arg("seed") = 0);
  m.def(
      "generate_batch",
      [](const Environment& env, const GaussianPolicy& policy, int count, std::uint64_t seed) {
        return generate_batch(env, policy, count, seed, {});
      },
      py::arg("env"), py::arg("policy"), py::arg("count"), py::arg("seed") = 0);
  m.def("evaluate_rewards", &evaluate_rewards, py::arg("env"), py::arg("episode"), py::arg("meter"),
        py::arg("gamma"));

  py::enum_<gp::GpOption>(m, "GpOption")
      .value("ReturnGP", gp::GpOption::ReturnGP)
      .value("RewardGP", gp::GpOption::RewardGP);
  py::class_<gp::GPModel>(m, "GPModel")
      .def_static(
          "make",
          [](gp::GpOption option, int input_dim, double gamma, std::uint64_t seed) {
            Rng rng(seed);
            return gp::GPModel::make(option, input_dim, gamma, rng);
          },
          py::arg("option"), py::arg("input_dim"), py::arg("gamma") = 0.995, py::arg("seed") = 0)
      .def_readonly("option", &gp::GPModel::option)
      .def_readonly("gamma", &gp::GPModel::gamma)
      .def_property(
          "log_scale", [](const gp::GPModel& g) { return g.kernel.log_scale; },
          [](gp::GPModel& g, double v) { g.kernel.log_scale = v; })
      .def_property(
          "log_noise", [](const gp::GPModel& g) { return g.kernel.log_noise; },
          [](gp::GPModel& g, double v) { g.kernel.log_noise = v; });
  m.def(
      "episodic_kernel",
      [](const gp::GPModel& model, const Episode& a, const Episode& b) {
        return model.option == gp::GpOption::ReturnGP
                   ? gp::episodic_kernel_option1(model.kernel, a, b, model.gamma)
                   : gp::episodic_kernel_option2(model.kernel, a, b, model.gamma);
      },
      py::arg("model"), py::arg("a"), py::arg("b"));
  m.def(
      "episodic_gram",
      [](const gp::GPModel& model, const std::vector<Episode>& episodes) {
        return gp::episodic_gram(model, episodes).values;
      },
      py::arg("model"), py::arg("episodes"));

  py::class_<QuadratureRule>(m, "QuadratureRule")
      .def(py::init(&make_rule), py::arg("indices"), py::arg("weights"))
      .def_static("uniform", &QuadratureRule::uniform)
      .def_readonly("indices", &QuadratureRule::indices)
      .def_readonly("weights", &QuadratureRule::weights)
      .def("validate", &QuadratureRule::validate)
      .def("__len__", &QuadratureRule::size);
  m.def(
      "wce_squared", [](const QuadratureRule& r, const MatrixXd& G) { return wce_squared(r, GramMatrix{G}); },
      py::arg("rule"), py::arg("gram"));
  m.def(
      "nystrom_features", [](const MatrixXd& G, int m_) { return nystrom_features(GramMatrix{G}, m_); },
      py::arg("gram"), py::arg("m"));
  m.def(
      "recombine",
      [](const MatrixXd& features, int n) {
        auto res = recombine_detailed(features, n);
        return py::make_tuple(res.rule, res.moment_residual);
      },
      py::arg("features"), py::arg("n"));
  m.def(
      "kquad", [](const MatrixXd& G, int n) { return kquad(GramMatrix{G}, n); }, py::arg("gram"), py::arg("n"));
  m.def(
      "herding", [](const MatrixXd& G, int n) { return herding_baseline(GramMatrix{G}, n); }, py::arg("gram"),
      py::arg("n"));
  m.def(
      "gp_sample_error",
      [](const QuadratureRule& r, const MatrixXd& G, int samples, std::uint64_t seed) {
        Rng rng(seed);
        auto est = gp_sample_error(r, GramMatrix{G}, samples, rng);
        return py::make_tuple(est.mean, est.standard_error);
      },
      py::arg("rule"), py::arg("gram"), py::arg("samples"), py::arg("seed") = 0);

  py::class_<harness::ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init<>())
      .def_readwrite("env_id", &harness::ExperimentConfig::env_id)
      .def_readwrite("algo", &harness::ExperimentConfig::algo)
      .def_readwrite("big_batch", &harness::ExperimentConfig::big_batch)
      .def_readwrite("small_batch", &harness::ExperimentConfig::small_batch)
      .def_readwrite("iterations", &harness::ExperimentConfig::iterations)
      .def_readwrite("seeds", &harness::ExperimentConfig::seeds)
      .def_readwrite("seed_base", &harness::ExperimentConfig::seed_base)
      .def_readwrite("gamma", &harness::ExperimentConfig::gamma)
      .def_readwrite("lr", &harness::ExperimentConfig::lr)
      .def_readwrite("ppo_clip", &harness::ExperimentConfig::ppo_clip)
      .def_readwrite("kernel_loss_form", &harness::ExperimentConfig::kernel_loss_form)
      .def_readwrite("gp_minibatch", &harness::ExperimentConfig::gp_minibatch)
      .def_readwrite("advantage", &harness::ExperimentConfig::advantage)
      .def_readwrite("out", &harness::ExperimentConfig::out)
      .def("validate", &harness::ExperimentConfig::validate);
  m.def(
      "run_experiment",
      [](const harness::ExperimentConfig& config) {
        std::ostringstream os;
        {
          py::gil_scoped_release release;
          harness::run_experiment(config, os);
        }
        return os.str();
      },
      py::arg("config"), "Runs every seed and returns the CSV text.");
  m.def(
      "summarize",
      [](const std::vector<std::string>& csv_texts) {
        std::ostringstream os;
        harness::write_summary(os, harness::summarize_csv(csv_texts));
        return os.str();
      },
      py::arg("csv_texts"), "Summary CSV text from run CSV texts.");
}
