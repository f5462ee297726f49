#include "pgkq/trainer.hpp"

#include "pgkq/errors.hpp"

namespace pgkq::pg {

AlgoVariant AlgoVariant::parse(const std::string& name) {
  const auto dash = name.find('-');
  if (dash == std::string::npos) throw ConfigError("algo '" + name + "' must look like <vpg|ppo>-<mode>");
  const std::string base = name.substr(0, dash), mode = name.substr(dash + 1);
  AlgoVariant v;
  if (base == "vpg") v.base = BaseAlgo::Vpg;
  else if (base == "ppo") v.base = BaseAlgo::Ppo;
  else throw ConfigError("unknown base algorithm '" + base + "'");
  if (mode == "plain") v.mode = Mode::PlainSmall;
  else if (mode == "kq") v.mode = Mode::KqOption2;
  else if (mode == "kq-no-mean") v.mode = Mode::KqOption1;
  else if (mode == "large") v.mode = Mode::PlainLarge;
  else throw ConfigError("unknown mode '" + mode + "' (plain, kq, kq-no-mean, large)");
  return v;
}

std::string AlgoVariant::name() const {
  std::string out = base == BaseAlgo::Vpg ? "vpg-" : "ppo-";
  switch (mode) {
    case Mode::PlainSmall: return out + "plain";
    case Mode::KqOption2: return out + "kq";
    case Mode::KqOption1: return out + "kq-no-mean";
    case Mode::PlainLarge: return out + "large";
  }
  return out;
}

void TrainerConfig::validate() const {
  if (small_batch < 1) throw ConfigError("small batch must be positive");
  if (small_batch >= big_batch) throw ConfigError("small batch n must be smaller than big batch N");
  check_gamma(gamma);
  if (!(lr_policy > 0.0 && lr_baseline > 0.0 && lr_gp > 0.0)) throw ConfigError("learning rates must be positive");
  if (gp_minibatch < 1 || baseline_minibatch < 1) throw ConfigError("minibatch sizes must be positive");
  if (probe_episodes < 1) throw ConfigError("probe episode count must be positive");
  if (!(kernel_divisor > 0.0)) throw ConfigError("kernel divisor must be positive");
}

TrainerState::TrainerState(const Environment& env, const AlgoVariant& variant, const TrainerConfig& config,
                           std::uint64_t seed_)
    : seed(seed_) {
  config.validate();
  Rng rng = derive_rng(seed, {kInitTag});
  policy = GaussianPolicy::make(env.state_dim, env.action_dim, config.policy_hidden, rng);
  policy_opt = nn::AdamState(policy.num_params());
  baseline = Baseline::make(env.state_dim, config.baseline_hidden, rng);
  baseline_opt = nn::AdamState(baseline.value_net.num_params());
  if (variant.uses_quadrature()) {
    const auto option = variant.mode == Mode::KqOption2 ? gp::GpOption::RewardGP : gp::GpOption::ReturnGP;
    gp = gp::GPModel::make(option, env.state_dim + env.action_dim, config.gamma, rng);
    gp->kernel.divisor = config.kernel_divisor;
    gp_opt = gp::GpOptimizer::for_model(*gp);
  }
}

void fit_baseline(Baseline& baseline, nn::AdamState& opt, const MatrixXd& states, const VectorXd& targets,
                  const VectorXd& weights, double lr, int minibatch, Rng& rng) {
  const auto total = static_cast<int>(targets.size());
  for (const auto& batch : gp::make_minibatches(total, minibatch, rng)) {
    MatrixXd s(states.rows(), static_cast<Eigen::Index>(batch.size()));
    VectorXd y(s.cols()), w(s.cols());
    for (std::size_t k = 0; k < batch.size(); ++k) {
      s.col(k) = states.col(batch[k]);
      y(k) = targets(batch[k]);
      w(k) = weights(batch[k]);
    }
    const double norm = w.sum();
    if (!(norm > 0.0)) continue;
    const VectorXd resid = baseline.values(s) - y;
    const MatrixXd upstream = (2.0 / norm * w.cwiseProduct(resid)).transpose();
    nn::adam_step(opt, baseline.value_net.params(), baseline.value_net.backward(s, upstream).params, lr);
  }
}

namespace {

struct BaselineData {
  MatrixXd states;
  VectorXd targets;
  VectorXd weights;

  void append(const Episode& e, const VectorXd& y, double w) {
    const Eigen::Index n = targets.size(), T = e.length();
    states.conservativeResize(e.states.rows(), n + T);
    targets.conservativeResize(n + T);
    weights.conservativeResize(n + T);
    states.middleCols(n, T) = e.states;
    targets.segment(n, T) = y;
    weights.segment(n, T).setConstant(w);
  }
};

void policy_step(const AlgoVariant& variant, const TrainerConfig& config, TrainerState& state,
                 const SampleBatch& batch, Rng& rng) {
  auto apply = [&](const SampleBatch& b) {
    const auto obj = policy_objective(variant.base, state.policy, b, variant.clip);
    VectorXd flat = state.policy.flat_params();
    nn::adam_step(state.policy_opt, flat, -obj.grad, config.lr_policy);
    state.policy.set_flat_params(flat);
  };
  if (variant.base == BaseAlgo::Vpg) {
    apply(batch);
    return;
  }
  for (int epoch = 0; epoch < variant.ppo_epochs; ++epoch)
    for (const auto& idx : gp::make_minibatches(static_cast<int>(batch.size()), variant.ppo_minibatch, rng))
      apply(batch.subset(idx));
}

}  // namespace

IterationRecord train_iteration(const AlgoVariant& variant, const TrainerConfig& config, TrainerState& state,
                                const Environment& env) {
  const auto iter = static_cast<std::uint64_t>(state.iteration);
  const int batch_size = variant.mode == Mode::PlainSmall ? config.small_batch : config.big_batch;

  std::vector<Episode> episodes = generate_batch(env, state.policy, batch_size, state.seed, {iter, kBatchTag});
  for (const auto& e : episodes) state.env_steps += static_cast<std::uint64_t>(e.length());

  IterationRecord rec;
  rec.seed = state.seed;
  rec.iteration = state.iteration;

  QuadratureRule rule;
  if (variant.uses_quadrature()) {
    const GramMatrix gram = gp::episodic_gram(*state.gp, episodes);
    rule = kquad(gram, config.small_batch);
    rec.wce_sq = wce_squared(rule, gram);
  } else {
    rule = QuadratureRule::uniform(batch_size);
  }
  for (int idx : rule.indices) evaluate_rewards(env, episodes[idx], state.training_meter, config.gamma);
  rec.support_size = static_cast<int>(rule.size());

  LossInputs in{variant.base, variant.advantage, config.gamma, variant.clip};
  const SampleBatch batch = variant.mode == Mode::KqOption2
                                ? noncentered_batch(in, rule, episodes, *state.gp->mean, state.baseline)
                                : centered_batch(in, rule, episodes, state.baseline);
  Rng policy_rng = derive_rng(state.seed, {iter, kPolicyTag});
  policy_step(variant, config, state, batch, policy_rng);

  BaselineData data;
  if (variant.mode == Mode::KqOption2) {
    const double w = 1.0 / batch_size;
    for (const auto& e : episodes) data.append(e, gp::fake_returns(*state.gp->mean, e, config.gamma), w);
  } else {
    for (std::size_t k = 0; k < rule.size(); ++k) {
      const auto& e = episodes[rule.indices[k]];
      data.append(e, *e.returns, rule.weights[k]);
    }
  }
  Rng baseline_rng = derive_rng(state.seed, {iter, kBaselineTag});
  fit_baseline(state.baseline, state.baseline_opt, data.states, data.targets, data.weights, config.lr_baseline,
               config.baseline_minibatch, baseline_rng);

  if (variant.uses_quadrature()) {
    Rng gp_rng = derive_rng(state.seed, {iter, kGpTag});
    gp::GpUpdateOptions opts{config.lr_gp, config.gp_minibatch, config.kernel_loss_form};
    gp::update_gp(*state.gp, state.gp_opt, rule, episodes, state.baseline, opts, gp_rng);
  }

  // Probe episodes are scored on a separate meter outside the training budget.
  std::vector<Episode> probes =
      generate_batch(env, state.policy, config.probe_episodes, state.seed, {iter, kProbeTag});
  double total = 0.0;
  for (auto& p : probes) {
    evaluate_rewards(env, p, state.probe_meter, config.gamma);
    total += p.total_reward();
  }
  rec.mean_total_reward = total / static_cast<double>(probes.size());
  rec.env_steps = state.env_steps;
  rec.reward_evals = state.training_meter.episodes_evaluated();
  state.iteration += 1;
  return rec;
}

}  // namespace pgkq::pg
