#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pgkq/episode.hpp"
#include "pgkq/gp.hpp"
#include "pgkq/losses.hpp"
#include "pgkq/nn.hpp"
#include "pgkq/policy.hpp"

namespace pgkq::pg {

/// Random stream labels: init draws from (seed, kInitTag), everything else
/// from (seed, iteration, tag).
enum StreamTag : std::uint64_t {
  kInitTag = 0,
  kBatchTag = 1,
  kProbeTag = 2,
  kGpTag = 3,
  kPolicyTag = 4,
  kBaselineTag = 5,
};

enum class Mode { PlainSmall, KqOption2, KqOption1, PlainLarge };

/// Base algorithm x batching mode, e.g. "vpg-kq" or "ppo-large".
struct AlgoVariant {
  BaseAlgo base = BaseAlgo::Vpg;
  Mode mode = Mode::PlainSmall;
  double clip = 0.2;
  int ppo_epochs = 4;
  int ppo_minibatch = 256;
  AdvantageKind advantage = AdvantageKind::Default;

  /// Accepts <vpg|ppo>-<plain|kq|kq-no-mean|large>.
  static AlgoVariant parse(const std::string& name);
  std::string name() const;
  bool uses_quadrature() const { return mode == Mode::KqOption1 || mode == Mode::KqOption2; }
};

struct TrainerConfig {
  int big_batch = 64;
  int small_batch = 8;
  double gamma = 0.995;
  double lr_policy = 3e-4;
  double lr_baseline = 3e-4;
  double lr_gp = 3e-4;
  int gp_minibatch = 256;
  int baseline_minibatch = 256;
  gp::KernelLossForm kernel_loss_form = gp::KernelLossForm::Nlml;
  double kernel_divisor = 20.0;
  std::vector<int> policy_hidden{64, 64};
  std::vector<int> baseline_hidden{64, 64};
  int probe_episodes = 8;

  void validate() const;
};

struct IterationRecord {
  std::uint64_t seed = 0;
  int iteration = 0;
  std::uint64_t env_steps = 0;
  std::uint64_t reward_evals = 0;
  double mean_total_reward = 0.0;
  std::optional<double> wce_sq;
  int support_size = 0;
};

/// Everything one training run mutates.
struct TrainerState {
  std::uint64_t seed = 0;
  int iteration = 0;
  GaussianPolicy policy;
  nn::AdamState policy_opt;
  Baseline baseline;
  nn::AdamState baseline_opt;
  std::optional<gp::GPModel> gp;
  gp::GpOptimizer gp_opt;
  RewardMeter training_meter;
  RewardMeter probe_meter;
  std::uint64_t env_steps = 0;

  TrainerState(const Environment& env, const AlgoVariant& variant, const TrainerConfig& config, std::uint64_t seed);
  TrainerState(const TrainerState&) = delete;
  TrainerState& operator=(const TrainerState&) = delete;
};

/// Generate -> [Gram, kquad, support rewards] -> policy step -> baseline
/// step -> [GP step] -> probe evaluation. Deterministic given the state.
IterationRecord train_iteration(const AlgoVariant& variant, const TrainerConfig& config, TrainerState& state,
                                const Environment& env);

/// Weighted least squares of V(s) onto `targets`, one epoch of minibatches.
void fit_baseline(Baseline& baseline, nn::AdamState& opt, const MatrixXd& states, const VectorXd& targets,
                  const VectorXd& weights, double lr, int minibatch, Rng& rng);

}  // namespace pgkq::pg
