#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pgkq/episode.hpp"
#include "pgkq/gp.hpp"
#include "pgkq/policy.hpp"
#include "pgkq/quadrature.hpp"

namespace pgkq::pg {

enum class AdvantageKind { Default, FinalTime };
enum class BaseAlgo { Vpg, Ppo };

/// Default: A_t = R_t - V(s_t).
/// FinalTime: A_t - gamma^(t0 - t) A_t0 with t0 = T - 1.
/// `returns` may be true or fake returns.
VectorXd advantages_from(AdvantageKind kind, const VectorXd& returns, const VectorXd& values, double gamma);
/// Uses the episode's attached returns.
VectorXd advantages(AdvantageKind kind, const Episode& episode, const Baseline& baseline, double gamma);

/// Flattened (episode, time) samples of a policy loss. Each sample carries
/// coef = episode weight * gamma^t, a constant advantage, and the log
/// density of its action under the generating policy.
struct SampleBatch {
  MatrixXd states;
  MatrixXd actions;
  VectorXd coef;
  VectorXd adv;
  VectorXd old_logp;

  Eigen::Index size() const { return coef.size(); }
  void append(const Episode& episode, double weight, const VectorXd& advantages, double gamma);
  void append(const SampleBatch& other);
  SampleBatch subset(const std::vector<int>& idx) const;
};

struct PolicyObjective {
  double value = 0.0;
  VectorXd grad;  // d value / d theta, GaussianPolicy::flat_params layout
};

/// vpg: sum_k coef_k adv_k log pi(a_k | s_k)
/// ppo: sum_k coef_k min(q_k adv_k, clip(q_k, 1 - eps, 1 + eps) adv_k),
///      q_k = exp(log pi(a_k | s_k) - old_logp_k)
/// Advantages are constants; no gradient flows through them.
PolicyObjective policy_objective(BaseAlgo base, const GaussianPolicy& policy, const SampleBatch& batch,
                                 double clip = 0.2);

/// sum_i weights_i L_vpg[adv_i](e_i)
PolicyObjective vpg_loss(const GaussianPolicy& policy, const std::vector<Episode>& episodes,
                         const std::vector<double>& weights, const std::vector<VectorXd>& advantages, double gamma);
/// sum_i weights_i L_ppo[adv_i](e_i), old log densities from generation time.
PolicyObjective ppo_loss(const GaussianPolicy& policy, const std::vector<Episode>& episodes,
                         const std::vector<double>& weights, const std::vector<VectorXd>& advantages, double gamma,
                         double clip);

struct LossInputs {
  BaseAlgo base = BaseAlgo::Vpg;
  AdvantageKind advantage = AdvantageKind::Default;
  double gamma = 0.995;
  double clip = 0.2;
};

/// sum_{i in I} w_i L_base[A](e_i). Exactly the rule's support may carry
/// rewards.
SampleBatch centered_batch(const LossInputs& in, const QuadratureRule& rule, const std::vector<Episode>& episodes,
                           const Baseline& baseline);
PolicyObjective pgkq_centered_loss(const LossInputs& in, const GaussianPolicy& policy, const QuadratureRule& rule,
                                   const std::vector<Episode>& episodes, const Baseline& baseline);

/// sum_{i in I} w_i L_base[R - R^psi](e_i) + (1/N) sum_i L_base[E_GP A](e_i),
/// E_GP A built from fake returns R^psi and the baseline.
SampleBatch noncentered_batch(const LossInputs& in, const QuadratureRule& rule, const std::vector<Episode>& episodes,
                              const gp::MeanNetParams& mean, const Baseline& baseline);
PolicyObjective pgkq_noncentered_loss(const LossInputs& in, const GaussianPolicy& policy, const QuadratureRule& rule,
                                      const std::vector<Episode>& episodes, const gp::MeanNetParams& mean,
                                      const Baseline& baseline);

/// Throws unless every support episode is evaluated and no other one is.
void check_reward_support(const QuadratureRule& rule, const std::vector<Episode>& episodes);

}  // namespace pgkq::pg
