#include <doctest.h>

#include "pgkq/errors.hpp"
#include "pgkq/trainer.hpp"
#include "test_support.hpp"

using namespace pgkq;
using namespace pgkq::pg;

namespace {

/// One step from a fixed state; reward equals the action.
Environment bandit() {
  Environment env;
  env.id = "bandit";
  env.state_dim = 1;
  env.action_dim = 1;
  env.max_horizon = 1;
  env.initial_state = [](Rng&) { return VectorXd::Constant(1, 0.5); };
  env.transition = [](const VectorXd& s, const VectorXd&, Rng&) { return s; };
  env.reward = [](const VectorXd&, const VectorXd& a) { return a(0); };
  env.is_terminal = [](const VectorXd&) { return true; };
  return env;
}

TrainerConfig small_config() {
  TrainerConfig c;
  c.big_batch = 16;
  c.small_batch = 4;
  c.policy_hidden = {8};
  c.baseline_hidden = {8};
  c.probe_episodes = 2;
  return c;
}

}  // namespace

TEST_CASE("variant names round trip") {
  for (const char* name : {"vpg-plain", "vpg-kq", "vpg-kq-no-mean", "vpg-large", "ppo-plain", "ppo-kq",
                           "ppo-kq-no-mean", "ppo-large"})
    CHECK(AlgoVariant::parse(name).name() == name);
  CHECK(AlgoVariant::parse("ppo-kq").mode == Mode::KqOption2);
  CHECK(AlgoVariant::parse("vpg-kq-no-mean").mode == Mode::KqOption1);
  CHECK_THROWS_AS(AlgoVariant::parse("trpo-kq"), ConfigError);
  CHECK_THROWS_AS(AlgoVariant::parse("vpg"), ConfigError);
  CHECK_THROWS_AS(AlgoVariant::parse("vpg-huge"), ConfigError);
}

TEST_CASE("config validation") {
  auto c = small_config();
  c.small_batch = c.big_batch;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.lr_gp = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.gamma = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("plain step follows the single-episode gradient") {
  const Environment env = bandit();
  auto config = small_config();
  config.small_batch = 1;
  const auto variant = AlgoVariant::parse("vpg-plain");

  TrainerState state(env, variant, config, 7);
  TrainerState twin(env, variant, config, 7);
  auto eps = generate_batch(env, twin.policy, 1, 7, {0, kBatchTag});
  RewardMeter meter;
  evaluate_rewards(env, eps[0], meter, config.gamma);
  const VectorXd adv = advantages(AdvantageKind::Default, eps[0], twin.baseline, config.gamma);
  // Explicit gradient of adv * log pi at the single sample.
  const VectorXd g = adv(0) * twin.policy.weighted_logprob_grad(eps[0].states, eps[0].actions, VectorXd::Ones(1));

  const VectorXd before = state.policy.flat_params();
  train_iteration(variant, config, state, env);
  const VectorXd delta = state.policy.flat_params() - before;
  int checked = 0;
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    if (std::abs(g(k)) < 1e-6) continue;
    CHECK((delta(k) > 0.0) == (g(k) > 0.0));
    ++checked;
  }
  CHECK(checked > 0);
  CHECK(delta.dot(g) > 0.0);
}

TEST_CASE("reward budget per mode") {
  const Environment env = make_environment("lqr1d");
  auto config = small_config();
  for (const char* name : {"vpg-plain", "vpg-large", "vpg-kq", "vpg-kq-no-mean", "ppo-kq", "ppo-large"}) {
    CAPTURE(name);
    const auto variant = AlgoVariant::parse(name);
    TrainerState state(env, variant, config, 3);
    std::uint64_t previous = 0;
    for (int it = 0; it < 3; ++it) {
      auto rec = train_iteration(variant, config, state, env);
      const auto used = rec.reward_evals - previous;
      previous = rec.reward_evals;
      CHECK(rec.iteration == it);
      CHECK(used == static_cast<std::uint64_t>(rec.support_size));
      switch (variant.mode) {
        case Mode::PlainSmall: CHECK(used == 4); break;
        case Mode::PlainLarge: CHECK(used == 16); break;
        default:
          CHECK(used <= 4);
          CHECK(used >= 1);
          REQUIRE(rec.wce_sq.has_value());
          CHECK(*rec.wce_sq >= 0.0);
      }
      if (!variant.uses_quadrature()) CHECK(!rec.wce_sq.has_value());
    }
    CHECK(state.probe_meter.episodes_evaluated() == 3u * config.probe_episodes);
  }
}

TEST_CASE("training is deterministic given the seed") {
  const Environment env = make_environment("chain");
  auto config = small_config();
  for (const char* name : {"vpg-kq", "ppo-kq-no-mean"}) {
    const auto variant = AlgoVariant::parse(name);
    TrainerState a(env, variant, config, 11), b(env, variant, config, 11);
    for (int it = 0; it < 2; ++it) {
      auto ra = train_iteration(variant, config, a, env);
      auto rb = train_iteration(variant, config, b, env);
      CHECK(ra.mean_total_reward == rb.mean_total_reward);
      CHECK(ra.env_steps == rb.env_steps);
      CHECK(ra.wce_sq == rb.wce_sq);
    }
    CHECK(a.policy.flat_params() == b.policy.flat_params());
    CHECK(a.gp->kernel.flat_params() == b.gp->kernel.flat_params());
  }
}

TEST_CASE("weighted baseline fit reduces the weighted error") {
  Rng rng(5);
  auto b = Baseline::make(2, {16}, rng);
  nn::AdamState opt(b.value_net.num_params());
  const MatrixXd S = testing_support::random_matrix(rng, 2, 64);
  VectorXd y(64);
  for (int k = 0; k < 64; ++k) y(k) = 3.0 + S(0, k);
  const VectorXd w = VectorXd::Constant(64, 1.0 / 64);
  auto err = [&] { return (b.values(S) - y).squaredNorm(); };
  const double start = err();
  for (int epoch = 0; epoch < 50; ++epoch) fit_baseline(b, opt, S, y, w, 1e-2, 16, rng);
  CHECK(err() < 0.1 * start);
}
