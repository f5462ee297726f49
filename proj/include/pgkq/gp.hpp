#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "pgkq/episode.hpp"
#include "pgkq/nn.hpp"
#include "pgkq/policy.hpp"
#include "pgkq/quadrature.hpp"
#include "pgkq/random.hpp"

namespace pgkq::gp {

enum class GpOption { ReturnGP, RewardGP };
enum class KernelLossForm { Nlml, AsPrinted };

inline constexpr int kEmbeddingDim = 10;

/// k(z, z') = exp(log_scale - |f(z) - f(z')|^2 / divisor)
///            + (1e-5 + exp(log_noise)) * [same sample]
struct DeepKernelParams {
  nn::Mlp embedding;  // D -> D -> D -> 10
  double log_scale = 0.0;
  double log_noise = 0.0;
  double divisor = 20.0;

  static DeepKernelParams make(int input_dim, Rng& rng);

  double noise() const;
  /// Columns of `z` are points; returns 10 x M embeddings.
  MatrixXd embed(const MatrixXd& z) const;

  /// Flat layout: embedding params, log_scale, log_noise.
  VectorXd flat_params() const;
  void set_flat_params(const VectorXd& flat);
  Eigen::Index num_params() const { return embedding.num_params() + 2; }
};

struct MeanNetParams {
  nn::Mlp net;  // D -> 200 -> 100 -> 1

  static MeanNetParams make(int input_dim, Rng& rng);
  VectorXd values(const MatrixXd& z) const { return net.forward(z).row(0).transpose(); }
};

struct GPModel {
  GpOption option = GpOption::RewardGP;
  DeepKernelParams kernel;
  std::optional<MeanNetParams> mean;  // RewardGP only
  double gamma = 0.995;

  static GPModel make(GpOption option, int input_dim, double gamma, Rng& rng);
  void validate() const;
};

/// Text checkpoint: a `gp` header line with option, gamma and divisor, the
/// `log_scale` and `log_noise` scalars, then the embedding network and, for
/// the reward GP, the mean network in the Mlp checkpoint format.
void write_checkpoint(std::ostream& os, const GPModel& model);
GPModel read_checkpoint(std::istream& is);

double base_kernel(const DeepKernelParams& psi, const VectorXd& z, const VectorXd& z2, bool same_point);
double base_kernel(const DeepKernelParams& psi, const StateActionPair& z, const StateActionPair& z2,
                   bool same_point);

/// gamma^t (ReturnGP) or (1 + t) gamma^t (RewardGP) for t < T.
VectorXd time_weights(GpOption option, int T, double gamma);

/// Embeddings and time weights of one episode, reusable across Gram entries.
struct EmbeddedEpisode {
  MatrixXd features;  // 10 x T
  VectorXd sq_norms;  // T
  VectorXd weights;   // T
};

EmbeddedEpisode embed_episode(const DeepKernelParams& psi, const Episode& e, GpOption option, double gamma);

/// sum_{t,u} w_t w'_u k(z_t, z'_u), with the noise term on t == u when
/// `same_episode`.
double episodic_kernel(const DeepKernelParams& psi, const EmbeddedEpisode& a, const EmbeddedEpisode& b,
                       bool same_episode);

/// Return-GP kernel; the noise term applies when e and e2 are the same object.
double episodic_kernel_option1(const DeepKernelParams& psi, const Episode& e, const Episode& e2, double gamma);
/// Reward-GP kernel with (1 + t)(1 + u) weights.
double episodic_kernel_option2(const DeepKernelParams& psi, const Episode& e, const Episode& e2, double gamma);

/// Gram matrix of the model's episodic kernel over a batch.
GramMatrix episodic_gram(const GPModel& model, const std::vector<Episode>& episodes);

/// R^psi_t = sum_{u >= t} gamma^{u - t} m(z_u); needs no rewards.
VectorXd fake_returns(const MeanNetParams& m, const Episode& e, double gamma);

struct LossAndGrad {
  double value = 0.0;
  VectorXd grad;
};

/// y^T K^{-1} y + log det K (Nlml) or y^T K y + log det K (AsPrinted), with K
/// the base-kernel Gram of the columns of `z` and the noise on its diagonal.
double kernel_loss(const DeepKernelParams& psi, const MatrixXd& z, const VectorXd& y,
                   KernelLossForm form = KernelLossForm::Nlml);
/// Same value plus its gradient in DeepKernelParams::flat_params layout.
LossAndGrad kernel_loss_grad(const DeepKernelParams& psi, const MatrixXd& z, const VectorXd& y,
                             KernelLossForm form = KernelLossForm::Nlml);

/// sum_{i in I} w_i sum_t (1 + t) gamma^t (r_t - m(z_t))^2
double mean_loss(const MeanNetParams& m, const QuadratureRule& rule, const std::vector<Episode>& episodes,
                 double gamma);
LossAndGrad mean_loss_grad(const MeanNetParams& m, const QuadratureRule& rule,
                           const std::vector<Episode>& episodes, double gamma);

/// Shuffled partition of [0, count) into chunks of at most `size`.
std::vector<std::vector<int>> make_minibatches(int count, int size, Rng& rng);

struct GpOptimizer {
  nn::AdamState kernel;
  nn::AdamState mean;

  static GpOptimizer for_model(const GPModel& model);
};

struct GpUpdateOptions {
  double lr = 3e-4;
  int minibatch_size = 256;
  KernelLossForm form = KernelLossForm::Nlml;
};

/// One epoch of minibatched kernel-loss steps on the time steps of the
/// rule's support, with targets R_t - V(s_t) (ReturnGP) or r_t - m(z_t)
/// (RewardGP). RewardGP additionally takes one epoch of minibatched steps on
/// the weighted least-squares mean loss.
void update_gp(GPModel& model, GpOptimizer& opt, const QuadratureRule& rule, const std::vector<Episode>& episodes,
               const Baseline& baseline, const GpUpdateOptions& options, Rng& rng);

}  // namespace pgkq::gp
