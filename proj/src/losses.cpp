#include "pgkq/losses.hpp"

#include <algorithm>
#include <cmath>

#include "pgkq/errors.hpp"

namespace pgkq::pg {

VectorXd advantages_from(AdvantageKind kind, const VectorXd& returns, const VectorXd& values, double gamma) {
  if (returns.size() != values.size()) throw ContractViolation("advantages: returns/values size mismatch");
  VectorXd adv = returns - values;
  if (kind == AdvantageKind::FinalTime && adv.size() > 0) {
    const Eigen::Index t0 = adv.size() - 1;
    const double final_adv = adv(t0);
    double g = 1.0;  // gamma^(t0 - t)
    for (Eigen::Index t = t0; t >= 0; --t) {
      adv(t) -= g * final_adv;
      g *= gamma;
    }
  }
  return adv;
}

VectorXd advantages(AdvantageKind kind, const Episode& episode, const Baseline& baseline, double gamma) {
  if (!episode.returns) throw ContractViolation("advantages: episode has no returns");
  return advantages_from(kind, *episode.returns, baseline.values(episode.states), gamma);
}

void SampleBatch::append(const Episode& episode, double weight, const VectorXd& advantages, double gamma) {
  const int T = episode.length();
  if (advantages.size() != T) throw ContractViolation("sample batch: advantage length mismatch");
  const Eigen::Index n = size();
  if (n > 0 && (states.rows() != episode.states.rows() || actions.rows() != episode.actions.rows()))
    throw ConfigError("sample batch: dimension mismatch");
  states.conservativeResize(episode.states.rows(), n + T);
  actions.conservativeResize(episode.actions.rows(), n + T);
  coef.conservativeResize(n + T);
  adv.conservativeResize(n + T);
  old_logp.conservativeResize(n + T);
  states.middleCols(n, T) = episode.states;
  actions.middleCols(n, T) = episode.actions;
  double g = 1.0;
  for (int t = 0; t < T; ++t) {
    coef(n + t) = weight * g;
    g *= gamma;
  }
  adv.segment(n, T) = advantages;
  old_logp.segment(n, T) = episode.logprobs;
}

void SampleBatch::append(const SampleBatch& other) {
  if (other.size() == 0) return;
  const Eigen::Index n = size(), m = other.size();
  states.conservativeResize(other.states.rows(), n + m);
  actions.conservativeResize(other.actions.rows(), n + m);
  coef.conservativeResize(n + m);
  adv.conservativeResize(n + m);
  old_logp.conservativeResize(n + m);
  states.middleCols(n, m) = other.states;
  actions.middleCols(n, m) = other.actions;
  coef.segment(n, m) = other.coef;
  adv.segment(n, m) = other.adv;
  old_logp.segment(n, m) = other.old_logp;
}

SampleBatch SampleBatch::subset(const std::vector<int>& idx) const {
  SampleBatch out;
  const auto k = static_cast<Eigen::Index>(idx.size());
  out.states.resize(states.rows(), k);
  out.actions.resize(actions.rows(), k);
  out.coef.resize(k);
  out.adv.resize(k);
  out.old_logp.resize(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    out.states.col(c) = states.col(idx[c]);
    out.actions.col(c) = actions.col(idx[c]);
    out.coef(c) = coef(idx[c]);
    out.adv(c) = adv(idx[c]);
    out.old_logp(c) = old_logp(idx[c]);
  }
  return out;
}

PolicyObjective policy_objective(BaseAlgo base, const GaussianPolicy& policy, const SampleBatch& batch, double clip) {
  PolicyObjective out;
  if (batch.size() == 0) {
    out.grad = VectorXd::Zero(policy.num_params());
    return out;
  }
  const VectorXd logp = policy.logprob(batch.states, batch.actions);
  VectorXd dlogp(batch.size());  // d objective / d log pi_k
  if (base == BaseAlgo::Vpg) {
    dlogp = batch.coef.cwiseProduct(batch.adv);
    out.value = dlogp.dot(logp);
  } else {
    if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("ppo: clip must lie in (0, 1)");
    if (batch.old_logp.size() != batch.size()) throw ContractViolation("ppo: missing old log densities");
    double value = 0.0;
    for (Eigen::Index k = 0; k < batch.size(); ++k) {
      const double q = std::exp(logp(k) - batch.old_logp(k));
      const double a = batch.adv(k);
      const double unclipped = q * a;
      const double clipped = std::clamp(q, 1.0 - clip, 1.0 + clip) * a;
      if (unclipped <= clipped) {
        value += batch.coef(k) * unclipped;
        dlogp(k) = batch.coef(k) * unclipped;  // d(q a)/d log pi = q a
      } else {
        value += batch.coef(k) * clipped;
        dlogp(k) = 0.0;
      }
    }
    out.value = value;
  }
  out.grad = policy.weighted_logprob_grad(batch.states, batch.actions, dlogp);
  return out;
}

namespace {

SampleBatch weighted_batch(const std::vector<Episode>& episodes, const std::vector<double>& weights,
                           const std::vector<VectorXd>& advantages, double gamma) {
  if (episodes.size() != weights.size() || episodes.size() != advantages.size())
    throw ContractViolation("loss: episode/weight/advantage counts differ");
  check_gamma(gamma);
  SampleBatch batch;
  for (std::size_t i = 0; i < episodes.size(); ++i) batch.append(episodes[i], weights[i], advantages[i], gamma);
  return batch;
}

}  // namespace

PolicyObjective vpg_loss(const GaussianPolicy& policy, const std::vector<Episode>& episodes,
                         const std::vector<double>& weights, const std::vector<VectorXd>& advantages, double gamma) {
  return policy_objective(BaseAlgo::Vpg, policy, weighted_batch(episodes, weights, advantages, gamma));
}

PolicyObjective ppo_loss(const GaussianPolicy& policy, const std::vector<Episode>& episodes,
                         const std::vector<double>& weights, const std::vector<VectorXd>& advantages, double gamma,
                         double clip) {
  return policy_objective(BaseAlgo::Ppo, policy, weighted_batch(episodes, weights, advantages, gamma), clip);
}

void check_reward_support(const QuadratureRule& rule, const std::vector<Episode>& episodes) {
  rule.validate(static_cast<int>(episodes.size()));
  std::vector<bool> in_support(episodes.size(), false);
  for (int idx : rule.indices) in_support[idx] = true;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    if (in_support[i] && !episodes[i].evaluated())
      throw ContractViolation("policy loss: support episode " + std::to_string(i) + " has no rewards");
    if (!in_support[i] && episodes[i].evaluated())
      throw ContractViolation("policy loss: episode " + std::to_string(i) + " outside the support carries rewards");
  }
}

SampleBatch centered_batch(const LossInputs& in, const QuadratureRule& rule, const std::vector<Episode>& episodes,
                           const Baseline& baseline) {
  check_reward_support(rule, episodes);
  check_gamma(in.gamma);
  SampleBatch batch;
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const auto& e = episodes[rule.indices[k]];
    batch.append(e, rule.weights[k], advantages(in.advantage, e, baseline, in.gamma), in.gamma);
  }
  return batch;
}

PolicyObjective pgkq_centered_loss(const LossInputs& in, const GaussianPolicy& policy, const QuadratureRule& rule,
                                   const std::vector<Episode>& episodes, const Baseline& baseline) {
  return policy_objective(in.base, policy, centered_batch(in, rule, episodes, baseline), in.clip);
}

SampleBatch noncentered_batch(const LossInputs& in, const QuadratureRule& rule, const std::vector<Episode>& episodes,
                              const gp::MeanNetParams& mean, const Baseline& baseline) {
  check_reward_support(rule, episodes);
  check_gamma(in.gamma);
  const double uniform = 1.0 / static_cast<double>(episodes.size());
  std::vector<VectorXd> fake(episodes.size());
  for (std::size_t i = 0; i < episodes.size(); ++i) fake[i] = gp::fake_returns(mean, episodes[i], in.gamma);

  SampleBatch batch;
  // Centered GP term on the support: true minus fake returns.
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const int idx = rule.indices[k];
    batch.append(episodes[idx], rule.weights[k], *episodes[idx].returns - fake[idx], in.gamma);
  }
  // Bias term on every episode from fake returns alone.
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const VectorXd adv = advantages_from(in.advantage, fake[i], baseline.values(episodes[i].states), in.gamma);
    batch.append(episodes[i], uniform, adv, in.gamma);
  }
  return batch;
}

PolicyObjective pgkq_noncentered_loss(const LossInputs& in, const GaussianPolicy& policy, const QuadratureRule& rule,
                                      const std::vector<Episode>& episodes, const gp::MeanNetParams& mean,
                                      const Baseline& baseline) {
  return policy_objective(in.base, policy, noncentered_batch(in, rule, episodes, mean, baseline), in.clip);
}

}  // namespace pgkq::pg
