import numpy as np
import pytest

import pgkq


def test_discounted_returns():
    np.testing.assert_allclose(pgkq.discounted_returns(np.array([1.0, 1.0, 1.0]), 0.5), [1.75, 1.5, 1.0])


def test_rollout_and_rewards():
    env = pgkq.make_environment("lqr1d")
    policy = pgkq.GaussianPolicy.make(env.state_dim, env.action_dim, [8], seed=1)
    ep = pgkq.rollout(env, policy, seed=2)
    assert ep.rewards is None
    meter = pgkq.RewardMeter()
    pgkq.evaluate_rewards(env, ep, meter, 0.99)
    assert meter.episodes_evaluated == 1
    assert ep.returns.shape == (len(ep),)
    with pytest.raises(pgkq.ContractViolation):
        pgkq.evaluate_rewards(env, ep, meter, 0.99)


def test_gram_and_quadrature():
    env = pgkq.make_environment("chain")
    policy = pgkq.GaussianPolicy.make(env.state_dim, env.action_dim, [8], seed=3)
    eps = pgkq.generate_batch(env, policy, 16, seed=4)
    model = pgkq.GPModel.make(pgkq.GpOption.RewardGP, env.state_dim + env.action_dim, 0.99, seed=5)
    G = pgkq.episodic_gram(model, eps)
    assert np.allclose(G, G.T)
    assert G[0, 1] == pytest.approx(pgkq.episodic_kernel(model, eps[0], eps[1]), rel=1e-12)
    rule = pgkq.kquad(G, 4)
    rule.validate(16)
    assert len(rule) <= 4
    assert pgkq.wce_squared(pgkq.QuadratureRule.uniform(16), G) == 0.0
    assert pgkq.wce_squared(rule, G) >= 0.0
    mean, se = pgkq.gp_sample_error(rule, G, 20000, seed=6)
    assert abs(mean - pgkq.wce_squared(rule, G)) <= 4 * se + 1e-12


def test_recombine_and_herding():
    rng = np.random.default_rng(0)
    F = rng.normal(size=(30, 3))
    rule, residual = pgkq.recombine(F, 4)
    assert residual <= 1e-8
    w = np.array(rule.weights)
    np.testing.assert_allclose(w @ F[rule.indices], F.mean(axis=0), atol=1e-8)
    G = F @ F.T + np.eye(30)
    assert len(pgkq.herding(G, 5)) == 5
    assert pgkq.nystrom_features(G, 2).shape == (30, 2)


def test_experiment_and_summary():
    cfg = pgkq.ExperimentConfig()
    cfg.env_id, cfg.algo = "lqr1d", "vpg-kq"
    cfg.big_batch, cfg.small_batch, cfg.iterations, cfg.seeds = 8, 2, 2, 2
    csv = pgkq.run_experiment(cfg)
    assert csv == pgkq.run_experiment(cfg)
    lines = csv.strip().splitlines()
    assert lines[0] == "seed,iteration,env_steps,reward_evals,mean_total_reward,wce_sq"
    assert len(lines) == 5
    summary = pgkq.summarize([csv]).strip().splitlines()
    assert len(summary) == 3
    cfg.small_batch = 8
    with pytest.raises(pgkq.ConfigError):
        cfg.validate()
