#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pgkq/policy.hpp"
#include "pgkq/random.hpp"

namespace pgkq {

struct StateActionPair {
  VectorXd state;
  VectorXd action;

  /// Concatenation z = (s, a).
  VectorXd z() const;
};

/// Markov decision process with reward evaluation kept apart from episode
/// generation. `reward` must be pure.
struct Environment {
  std::string id;
  int state_dim = 0;
  int action_dim = 0;
  int max_horizon = 0;
  std::function<VectorXd(Rng&)> initial_state;
  std::function<VectorXd(const VectorXd& state, const VectorXd& action, Rng&)> transition;
  std::function<double(const VectorXd& state, const VectorXd& action)> reward;
  std::function<bool(const VectorXd& state)> is_terminal;
};

/// Built-in desk environments: "lqr1d", "pendulum", "chain".
Environment make_environment(const std::string& id);
std::vector<std::string> environment_ids();

/// A generated trajectory. Columns of `states`/`actions` are time steps.
/// Rewards and returns are attached together by evaluate_rewards.
struct Episode {
  MatrixXd states;
  MatrixXd actions;
  VectorXd logprobs;
  std::optional<VectorXd> rewards;
  std::optional<VectorXd> returns;

  int length() const { return static_cast<int>(states.cols()); }
  bool evaluated() const { return rewards.has_value(); }
  StateActionPair pair(int t) const { return {states.col(t), actions.col(t)}; }
  /// (state_dim + action_dim) x T matrix of concatenated pairs.
  MatrixXd z() const;
  double total_reward() const;
};

/// Counts reward evaluations. Only evaluate_rewards can increment it.
class RewardMeter {
 public:
  std::uint64_t episodes_evaluated() const { return episodes_.load(); }
  std::uint64_t steps_evaluated() const { return steps_.load(); }

 private:
  friend void evaluate_rewards(const Environment&, Episode&, RewardMeter&, double);
  std::atomic<std::uint64_t> episodes_{0};
  std::atomic<std::uint64_t> steps_{0};
};

/// Rolls the policy out until the horizon or a terminal state. Never calls
/// the reward function.
Episode rollout(const Environment& env, const GaussianPolicy& policy, Rng& rng);

/// N episodes, episode i drawn from its own stream derived from
/// (master_seed, stream_path..., i).
std::vector<Episode> generate_batch(const Environment& env, const GaussianPolicy& policy, int count,
                                    std::uint64_t master_seed, std::initializer_list<std::uint64_t> stream_path);

/// Attaches rewards r_t = reward(s_t, a_t) and discounted returns.
void evaluate_rewards(const Environment& env, Episode& episode, RewardMeter& meter, double gamma);

/// R_t = r_t + gamma R_{t+1}.
VectorXd discounted_returns(const VectorXd& rewards, double gamma);

void check_gamma(double gamma);

/// One JSON object per time step, fields in this order:
/// episode_index, t, state, action, logprob, reward (only when evaluated).
void write_episode_batch(std::ostream& os, const std::vector<Episode>& episodes);

}  // namespace pgkq
