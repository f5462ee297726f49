#include <doctest.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "pgkq/episode.hpp"
#include "pgkq/errors.hpp"
#include "test_support.hpp"

using namespace pgkq;
using testing_support::random_vector;

namespace {

Environment counting_env(int horizon, bool terminate_after_first, int* reward_calls) {
  Environment env;
  env.id = "test";
  env.state_dim = 1;
  env.action_dim = 1;
  env.max_horizon = horizon;
  env.initial_state = [](Rng&) { return VectorXd::Constant(1, 0.5); };
  env.transition = [](const VectorXd& s, const VectorXd& a, Rng&) { return VectorXd(s + 0.1 * a); };
  env.reward = [reward_calls](const VectorXd& s, const VectorXd&) {
    if (reward_calls) ++*reward_calls;
    return -s(0) * s(0);
  };
  env.is_terminal = [terminate_after_first](const VectorXd&) { return terminate_after_first; };
  return env;
}

GaussianPolicy small_policy(int sd, int ad) {
  Rng rng(7);
  return GaussianPolicy::make(sd, ad, {8}, rng);
}

}  // namespace

TEST_CASE("rollout stops after a terminal transition") {
  auto env = counting_env(10, true, nullptr);
  Rng rng(1);
  auto ep = rollout(env, small_policy(1, 1), rng);
  CHECK(ep.length() == 1);
  CHECK_FALSE(ep.evaluated());
  CHECK_FALSE(ep.returns.has_value());
}

TEST_CASE("rollout is capped at the horizon and never reads rewards") {
  int calls = 0;
  auto env = counting_env(5, false, &calls);
  Rng rng(2);
  auto ep = rollout(env, small_policy(1, 1), rng);
  CHECK(ep.length() == 5);
  CHECK(ep.logprobs.size() == 5);
  CHECK(calls == 0);
}

TEST_CASE("rollouts with the same seed are bitwise identical") {
  auto env = make_environment("pendulum");
  auto policy = small_policy(3, 1);
  Rng a(42), b(42);
  auto e1 = rollout(env, policy, a);
  auto e2 = rollout(env, policy, b);
  CHECK(e1.states == e2.states);
  CHECK(e1.actions == e2.actions);
  CHECK(e1.logprobs == e2.logprobs);

  auto batch1 = generate_batch(env, policy, 4, 9, {3, 1});
  auto batch2 = generate_batch(env, policy, 4, 9, {3, 1});
  for (int i = 0; i < 4; ++i) {
    CHECK(batch1[i].states == batch2[i].states);
    CHECK(batch1[i].actions == batch2[i].actions);
  }
  CHECK(batch1[0].states != batch1[1].states);
}

TEST_CASE("rollout rejects mismatched policy dimensions") {
  auto env = make_environment("pendulum");
  Rng rng(3);
  CHECK_THROWS_AS(rollout(env, small_policy(2, 1), rng), ConfigError);
}

TEST_CASE("evaluate_rewards applies the reward function and counts") {
  auto env = counting_env(5, false, nullptr);
  Episode ep;
  ep.states = MatrixXd(1, 2);
  ep.states << 1.0, 2.0;
  ep.actions = MatrixXd::Zero(1, 2);
  ep.logprobs = VectorXd::Zero(2);
  RewardMeter meter;
  evaluate_rewards(env, ep, meter, 0.5);
  REQUIRE(ep.rewards.has_value());
  CHECK((*ep.rewards)(0) == -1.0);
  CHECK((*ep.rewards)(1) == -4.0);
  CHECK((*ep.returns)(0) == doctest::Approx(-3.0));
  CHECK(meter.episodes_evaluated() == 1);
  CHECK(meter.steps_evaluated() == 2);
  CHECK_THROWS_AS(evaluate_rewards(env, ep, meter, 0.5), ContractViolation);
  CHECK(meter.episodes_evaluated() == 1);
}

TEST_CASE("meter counts steps of a three-step episode") {
  auto env = counting_env(3, false, nullptr);
  Rng rng(4);
  auto ep = rollout(env, small_policy(1, 1), rng);
  RewardMeter meter;
  evaluate_rewards(env, ep, meter, 0.9);
  CHECK(meter.episodes_evaluated() == 1);
  CHECK(meter.steps_evaluated() == 3);
}

TEST_CASE("discounted returns") {
  VectorXd r(3);
  r << 1, 1, 1;
  auto R = discounted_returns(r, 0.5);
  CHECK(R(0) == 1.75);
  CHECK(R(1) == 1.5);
  CHECK(R(2) == 1.0);
  CHECK(discounted_returns(VectorXd::Constant(1, 2.0), 0.3)(0) == 2.0);
  CHECK_THROWS_AS(discounted_returns(r, 1.0), ConfigError);
  CHECK_THROWS_AS(discounted_returns(r, 0.0), ConfigError);
  CHECK_THROWS_AS(discounted_returns(VectorXd(0), 0.5), ContractViolation);
}

TEST_CASE("backward recursion matches the double-loop sum") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const VectorXd r = random_vector(rng, 100, 5.0);
    const double gamma = 0.995;
    const VectorXd R = discounted_returns(r, gamma);
    for (int t = 0; t < 100; ++t) {
      double direct = 0.0;
      for (int u = t; u < 100; ++u) direct += std::pow(gamma, u - t) * r(u);
      CHECK(std::abs(R(t) - direct) <= 1e-12 * std::max(1.0, std::abs(direct)));
    }
  }
}

TEST_CASE("desk environments") {
  for (const auto& id : environment_ids()) {
    auto env = make_environment(id);
    Rng rng(5);
    auto ep = rollout(env, small_policy(env.state_dim, env.action_dim), rng);
    CHECK(ep.length() == env.max_horizon);
    CHECK(ep.states.allFinite());
  }
  CHECK_THROWS_AS(make_environment("hopper"), ConfigError);

  auto pend = make_environment("pendulum");
  VectorXd up(3);
  up << 1.0, 0.0, 0.0;
  CHECK(pend.reward(up, VectorXd::Zero(1)) == 0.0);
  // Torque is clipped to +-2 in both dynamics and reward.
  Rng rng(6);
  CHECK(pend.transition(up, VectorXd::Constant(1, 50.0), rng) ==
        pend.transition(up, VectorXd::Constant(1, 2.0), rng));
  CHECK(pend.reward(up, VectorXd::Constant(1, 50.0)) == doctest::Approx(-0.004));

  auto lqr = make_environment("lqr1d");
  CHECK(lqr.reward(VectorXd::Constant(1, 2.0), VectorXd::Constant(1, 1.0)) == doctest::Approx(-4.01));

  auto chain = make_environment("chain");
  CHECK(chain.reward(VectorXd::Constant(1, 1.0), VectorXd::Zero(1)) == 1.0);
  CHECK(chain.reward(VectorXd::Constant(1, 0.0), VectorXd::Zero(1)) == 0.01);
}

TEST_CASE("episode batch dump keeps field order and omits missing rewards") {
  auto env = counting_env(2, false, nullptr);
  auto policy = small_policy(1, 1);
  auto batch = generate_batch(env, policy, 2, 1, {0});
  RewardMeter meter;
  evaluate_rewards(env, batch[1], meter, 0.9);
  std::ostringstream os;
  write_episode_batch(os, batch);
  std::istringstream in(os.str());
  std::string line;
  std::vector<nlohmann::ordered_json> recs;
  while (std::getline(in, line)) recs.push_back(nlohmann::ordered_json::parse(line));
  REQUIRE(recs.size() == 4);
  std::vector<std::string> keys;
  for (auto it = recs[2].begin(); it != recs[2].end(); ++it) keys.push_back(it.key());
  CHECK(keys == std::vector<std::string>{"episode_index", "t", "state", "action", "logprob", "reward"});
  CHECK_FALSE(recs[0].contains("reward"));
  CHECK(recs[3]["t"] == 1);
}
