#include "pgkq/episode.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <nlohmann/json.hpp>

#include "pgkq/errors.hpp"

namespace pgkq {

VectorXd StateActionPair::z() const {
  VectorXd out(state.size() + action.size());
  out << state, action;
  return out;
}

MatrixXd Episode::z() const {
  MatrixXd out(states.rows() + actions.rows(), states.cols());
  out.topRows(states.rows()) = states;
  out.bottomRows(actions.rows()) = actions;
  return out;
}

double Episode::total_reward() const {
  if (!rewards) throw ContractViolation("total_reward on an unevaluated episode");
  return rewards->sum();
}

void check_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
}

VectorXd discounted_returns(const VectorXd& rewards, double gamma) {
  check_gamma(gamma);
  if (rewards.size() == 0) throw ContractViolation("discounted_returns: empty reward sequence");
  VectorXd out(rewards.size());
  double acc = 0.0;
  for (Eigen::Index t = rewards.size() - 1; t >= 0; --t) {
    acc = rewards(t) + gamma * acc;
    out(t) = acc;
  }
  return out;
}

Episode rollout(const Environment& env, const GaussianPolicy& policy, Rng& rng) {
  if (policy.state_dim() != env.state_dim || policy.action_dim() != env.action_dim)
    throw ConfigError("rollout: policy dimensions do not match environment '" + env.id + "'");
  if (env.max_horizon < 1) throw ConfigError("rollout: max_horizon must be positive");

  std::vector<VectorXd> states, actions;
  std::vector<double> logps;
  VectorXd s = env.initial_state(rng);
  for (int t = 0; t < env.max_horizon; ++t) {
    if (s.size() != env.state_dim) throw ConfigError("rollout: environment produced wrong state size");
    VectorXd a = policy.sample_action(s, rng);
    logps.push_back(policy.logprob(s, a));
    VectorXd next = env.transition(s, a, rng);
    states.push_back(std::move(s));
    actions.push_back(std::move(a));
    if (env.is_terminal && env.is_terminal(next)) break;
    s = std::move(next);
  }

  Episode ep;
  const auto T = static_cast<Eigen::Index>(states.size());
  ep.states.resize(env.state_dim, T);
  ep.actions.resize(env.action_dim, T);
  ep.logprobs.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    ep.states.col(t) = states[t];
    ep.actions.col(t) = actions[t];
    ep.logprobs(t) = logps[t];
  }
  return ep;
}

std::vector<Episode> generate_batch(const Environment& env, const GaussianPolicy& policy, int count,
                                    std::uint64_t master_seed, std::initializer_list<std::uint64_t> stream_path) {
  std::vector<Episode> batch;
  batch.reserve(count);
  const std::uint64_t base = derive_seed(master_seed, stream_path);
  for (int i = 0; i < count; ++i) {
    Rng rng = derive_rng(base, {static_cast<std::uint64_t>(i)});
    batch.push_back(rollout(env, policy, rng));
  }
  return batch;
}

void evaluate_rewards(const Environment& env, Episode& episode, RewardMeter& meter, double gamma) {
  if (episode.rewards || episode.returns)
    throw ContractViolation("evaluate_rewards: episode already carries rewards");
  check_gamma(gamma);
  const int T = episode.length();
  VectorXd r(T);
  for (int t = 0; t < T; ++t) r(t) = env.reward(episode.states.col(t), episode.actions.col(t));
  episode.returns = discounted_returns(r, gamma);
  episode.rewards = std::move(r);
  meter.episodes_.fetch_add(1);
  meter.steps_.fetch_add(static_cast<std::uint64_t>(T));
}

void write_episode_batch(std::ostream& os, const std::vector<Episode>& episodes) {
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const auto& ep = episodes[i];
    for (int t = 0; t < ep.length(); ++t) {
      nlohmann::ordered_json rec;
      rec["episode_index"] = i;
      rec["t"] = t;
      rec["state"] = std::vector<double>(ep.states.col(t).data(), ep.states.col(t).data() + ep.states.rows());
      rec["action"] = std::vector<double>(ep.actions.col(t).data(), ep.actions.col(t).data() + ep.actions.rows());
      rec["logprob"] = ep.logprobs(t);
      if (ep.rewards) rec["reward"] = (*ep.rewards)(t);
      os << rec.dump() << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Desk environments

namespace {

Environment lqr1d() {
  Environment env;
  env.id = "lqr1d";
  env.state_dim = 1;
  env.action_dim = 1;
  env.max_horizon = 50;
  env.initial_state = [](Rng& rng) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    return VectorXd::Constant(1, u(rng));
  };
  env.transition = [](const VectorXd& s, const VectorXd& a, Rng& rng) {
    std::normal_distribution<double> noise(0.0, 1.0);
    const double u = std::clamp(a(0), -10.0, 10.0);
    return VectorXd::Constant(1, s(0) + 0.1 * u + 0.05 * noise(rng));
  };
  env.reward = [](const VectorXd& s, const VectorXd& a) {
    const double u = std::clamp(a(0), -10.0, 10.0);
    return -(s(0) * s(0) + 0.01 * u * u);
  };
  env.is_terminal = [](const VectorXd&) { return false; };
  return env;
}

double wrap_angle(double x) {
  return std::remainder(x, 2.0 * std::numbers::pi);
}

// Swing-up pendulum, state (cos th, sin th, omega), th = 0 upright.
Environment pendulum() {
  constexpr double dt = 0.05, g = 10.0, m = 1.0, l = 1.0, max_speed = 8.0, max_torque = 2.0;
  Environment env;
  env.id = "pendulum";
  env.state_dim = 3;
  env.action_dim = 1;
  env.max_horizon = 200;
  env.initial_state = [](Rng& rng) {
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
    std::uniform_real_distribution<double> speed(-1.0, 1.0);
    const double th = angle(rng);
    VectorXd s(3);
    s << std::cos(th), std::sin(th), speed(rng);
    return s;
  };
  env.transition = [=](const VectorXd& s, const VectorXd& a, Rng&) {
    const double th = std::atan2(s(1), s(0));
    const double u = std::clamp(a(0), -max_torque, max_torque);
    double w = s(2) + (3.0 * g / (2.0 * l) * std::sin(th) + 3.0 / (m * l * l) * u) * dt;
    w = std::clamp(w, -max_speed, max_speed);
    const double th_next = th + w * dt;
    VectorXd out(3);
    out << std::cos(th_next), std::sin(th_next), w;
    return out;
  };
  env.reward = [=](const VectorXd& s, const VectorXd& a) {
    const double th = wrap_angle(std::atan2(s(1), s(0)));
    const double u = std::clamp(a(0), -max_torque, max_torque);
    return -(th * th + 0.1 * s(2) * s(2) + 0.001 * u * u);
  };
  env.is_terminal = [](const VectorXd&) { return false; };
  return env;
}

// Ten cells; state is position / 9. The clipped action |a| <= 1 is the
// probability of moving one cell in the direction of its sign.
Environment chain() {
  constexpr int cells = 10;
  Environment env;
  env.id = "chain";
  env.state_dim = 1;
  env.action_dim = 1;
  env.max_horizon = 30;
  env.initial_state = [](Rng&) { return VectorXd::Constant(1, 1.0 / (cells - 1)); };
  env.transition = [](const VectorXd& s, const VectorXd& a, Rng& rng) {
    const int pos = static_cast<int>(std::lround(s(0) * (cells - 1)));
    const double u = std::clamp(a(0), -1.0, 1.0);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    int next = pos;
    if (coin(rng) < std::abs(u)) next = std::clamp(pos + (u > 0 ? 1 : -1), 0, cells - 1);
    return VectorXd::Constant(1, static_cast<double>(next) / (cells - 1));
  };
  env.reward = [](const VectorXd& s, const VectorXd&) {
    const int pos = static_cast<int>(std::lround(s(0) * (cells - 1)));
    if (pos == cells - 1) return 1.0;
    if (pos == 0) return 0.01;
    return 0.0;
  };
  env.is_terminal = [](const VectorXd&) { return false; };
  return env;
}

}  // namespace

std::vector<std::string> environment_ids() { return {"lqr1d", "pendulum", "chain"}; }

Environment make_environment(const std::string& id) {
  if (id == "lqr1d") return lqr1d();
  if (id == "pendulum") return pendulum();
  if (id == "chain") return chain();
  throw ConfigError("unknown environment '" + id + "'");
}

}  // namespace pgkq
