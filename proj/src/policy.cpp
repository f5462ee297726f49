#include "pgkq/policy.hpp"

#include <cmath>
#include <numbers>

#include "pgkq/errors.hpp"

namespace pgkq {

namespace {

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

}  // namespace

GaussianPolicy::GaussianPolicy(nn::Mlp mean, VectorXd log_std_init)
    : mean_net(std::move(mean)), log_std(std::move(log_std_init)) {
  if (log_std.size() != mean_net.output_dim()) throw ConfigError("policy: log_std size != action dim");
  if (!log_std.allFinite()) throw ConfigError("policy: non-finite log_std");
}

GaussianPolicy GaussianPolicy::make(int state_dim, int action_dim, const std::vector<int>& hidden, Rng& rng) {
  return GaussianPolicy(nn::Mlp::initialized(layer_sizes(state_dim, hidden, action_dim), rng),
                        VectorXd::Zero(action_dim));
}

VectorXd GaussianPolicy::flat_params() const {
  VectorXd flat(num_params());
  flat << mean_net.params(), log_std;
  return flat;
}

void GaussianPolicy::set_flat_params(const VectorXd& flat) {
  if (flat.size() != num_params()) throw ConfigError("policy: flat parameter size mismatch");
  mean_net.params() = flat.head(mean_net.num_params());
  log_std = flat.tail(log_std.size());
}

VectorXd GaussianPolicy::sample_action(const VectorXd& state, Rng& rng) const {
  VectorXd mu = mean(state);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < mu.size(); ++i) mu(i) += std::exp(log_std(i)) * normal(rng);
  return mu;
}

double GaussianPolicy::logprob(const VectorXd& state, const VectorXd& action) const {
  return logprob(MatrixXd(state), MatrixXd(action))(0);
}

VectorXd GaussianPolicy::logprob(const MatrixXd& states, const MatrixXd& actions) const {
  if (actions.rows() != action_dim() || actions.cols() != states.cols())
    throw ConfigError("policy: action shape mismatch");
  const MatrixXd mu = mean_net.forward(states);
  const VectorXd inv_std = (-log_std).array().exp();
  const double constant = -log_std.sum() - 0.5 * action_dim() * std::log(2.0 * std::numbers::pi);
  const MatrixXd scaled = inv_std.asDiagonal() * (actions - mu);
  return (-0.5 * scaled.colwise().squaredNorm().array() + constant).transpose();
}

VectorXd GaussianPolicy::weighted_logprob_grad(const MatrixXd& states, const MatrixXd& actions,
                                               const VectorXd& coef) const {
  if (coef.size() != states.cols()) throw ConfigError("policy: coefficient count mismatch");
  if (actions.rows() != action_dim() || actions.cols() != states.cols())
    throw ConfigError("policy: action shape mismatch");
  const MatrixXd mu = mean_net.forward(states);
  const VectorXd inv_var = (-2.0 * log_std).array().exp();
  const MatrixXd diff = actions - mu;
  // d log pi / d mu = (a - mu) / sigma^2 ; d log pi / d log_std = (a - mu)^2 / sigma^2 - 1
  const MatrixXd upstream = (inv_var.asDiagonal() * diff) * coef.asDiagonal();
  VectorXd grad(num_params());
  grad.head(mean_net.num_params()) = mean_net.backward(states, upstream).params;
  const MatrixXd z2 = inv_var.asDiagonal() * diff.cwiseProduct(diff);
  grad.tail(log_std.size()) = (z2.array() - 1.0).matrix() * coef;
  return grad;
}

Baseline Baseline::make(int state_dim, const std::vector<int>& hidden, Rng& rng) {
  return Baseline{nn::Mlp::initialized(layer_sizes(state_dim, hidden, 1), rng)};
}

}  // namespace pgkq
