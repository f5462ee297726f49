#pragma once

#include <vector>

#include <Eigen/Dense>

#include "pgkq/nn.hpp"
#include "pgkq/random.hpp"

namespace pgkq {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Diagonal Gaussian policy with a state-dependent mean and a
/// state-independent log standard deviation.
struct GaussianPolicy {
  nn::Mlp mean_net;
  VectorXd log_std;

  GaussianPolicy() = default;
  GaussianPolicy(nn::Mlp mean, VectorXd log_std_init);

  /// state_dim -> hidden... -> action_dim, log_std = 0.
  static GaussianPolicy make(int state_dim, int action_dim, const std::vector<int>& hidden, Rng& rng);

  int state_dim() const { return mean_net.input_dim(); }
  int action_dim() const { return mean_net.output_dim(); }

  /// Flat parameter vector: mean-net parameters followed by log_std.
  VectorXd flat_params() const;
  void set_flat_params(const VectorXd& flat);
  Eigen::Index num_params() const { return mean_net.num_params() + log_std.size(); }

  VectorXd mean(const VectorXd& state) const { return mean_net.forward(state); }
  VectorXd sample_action(const VectorXd& state, Rng& rng) const;
  double logprob(const VectorXd& state, const VectorXd& action) const;

  /// Column-batched log densities; columns of states/actions are samples.
  VectorXd logprob(const MatrixXd& states, const MatrixXd& actions) const;

  /// sum_k coef[k] * grad_theta log pi(actions[:,k] | states[:,k]), flat layout.
  VectorXd weighted_logprob_grad(const MatrixXd& states, const MatrixXd& actions,
                                 const VectorXd& coef) const;
};

/// Value baseline V(s).
struct Baseline {
  nn::Mlp value_net;

  static Baseline make(int state_dim, const std::vector<int>& hidden, Rng& rng);
  double value(const VectorXd& state) const { return value_net.forward(state)(0); }
  VectorXd values(const MatrixXd& states) const { return value_net.forward(states).row(0).transpose(); }
};

}  // namespace pgkq
