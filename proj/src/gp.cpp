#include "pgkq/gp.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include "pgkq/errors.hpp"

namespace pgkq::gp {

// ---------------------------------------------------------------------------
// Parameters

DeepKernelParams DeepKernelParams::make(int input_dim, Rng& rng) {
  DeepKernelParams psi;
  psi.embedding = nn::Mlp::initialized({input_dim, input_dim, input_dim, kEmbeddingDim}, rng);
  return psi;
}

double DeepKernelParams::noise() const { return 1e-5 + std::exp(log_noise); }

MatrixXd DeepKernelParams::embed(const MatrixXd& z) const {
  MatrixXd f = embedding.forward(z);
  if (!f.allFinite()) throw NumericalError("deep kernel: non-finite embedding");
  return f;
}

VectorXd DeepKernelParams::flat_params() const {
  VectorXd flat(num_params());
  flat << embedding.params(), log_scale, log_noise;
  return flat;
}

void DeepKernelParams::set_flat_params(const VectorXd& flat) {
  if (flat.size() != num_params()) throw ConfigError("deep kernel: flat parameter size mismatch");
  const auto n = embedding.num_params();
  embedding.params() = flat.head(n);
  log_scale = flat(n);
  log_noise = flat(n + 1);
}

MeanNetParams MeanNetParams::make(int input_dim, Rng& rng) {
  return MeanNetParams{nn::Mlp::initialized({input_dim, 200, 100, 1}, rng)};
}

GPModel GPModel::make(GpOption option, int input_dim, double gamma, Rng& rng) {
  check_gamma(gamma);
  GPModel model;
  model.option = option;
  model.gamma = gamma;
  model.kernel = DeepKernelParams::make(input_dim, rng);
  if (option == GpOption::RewardGP) model.mean = MeanNetParams::make(input_dim, rng);
  return model;
}

void GPModel::validate() const {
  check_gamma(gamma);
  if (option == GpOption::ReturnGP && mean) throw ConfigError("return GP carries no mean network");
  if (option == GpOption::RewardGP && !mean) throw ConfigError("reward GP needs a mean network");
  if (mean && mean->net.output_dim() != 1) throw ConfigError("mean network must output a scalar");
  if (!std::isfinite(kernel.log_scale) || !std::isfinite(kernel.log_noise))
    throw ConfigError("kernel scale/noise must be finite");
}

void write_checkpoint(std::ostream& os, const GPModel& model) {
  os.precision(17);
  os << "gp " << (model.option == GpOption::ReturnGP ? "return" : "reward") << " gamma " << model.gamma
     << " divisor " << model.kernel.divisor << '\n';
  os << "log_scale " << model.kernel.log_scale << '\n';
  os << "log_noise " << model.kernel.log_noise << '\n';
  model.kernel.embedding.write(os);
  if (model.mean) model.mean->net.write(os);
}

GPModel read_checkpoint(std::istream& is) {
  std::string tok, option, word;
  GPModel model;
  if (!(is >> tok) || tok != "gp") throw ConfigError("gp checkpoint: missing header");
  is >> option >> word >> model.gamma;
  if (word != "gamma") throw ConfigError("gp checkpoint: expected gamma");
  is >> word >> model.kernel.divisor;
  if (word != "divisor") throw ConfigError("gp checkpoint: expected divisor");
  is >> word >> model.kernel.log_scale;
  if (word != "log_scale") throw ConfigError("gp checkpoint: expected log_scale");
  is >> word >> model.kernel.log_noise;
  if (word != "log_noise" || !is) throw ConfigError("gp checkpoint: expected log_noise");
  if (option == "return") model.option = GpOption::ReturnGP;
  else if (option == "reward") model.option = GpOption::RewardGP;
  else throw ConfigError("gp checkpoint: unknown option '" + option + "'");
  model.kernel.embedding = nn::Mlp::read(is);
  if (model.option == GpOption::RewardGP) model.mean = MeanNetParams{nn::Mlp::read(is)};
  model.validate();
  return model;
}

// ---------------------------------------------------------------------------
// Kernels

double base_kernel(const DeepKernelParams& psi, const VectorXd& z, const VectorXd& z2, bool same_point) {
  const VectorXd f = psi.embed(MatrixXd(z)).col(0);
  const VectorXd f2 = same_point ? f : VectorXd(psi.embed(MatrixXd(z2)).col(0));
  const double value = std::exp(psi.log_scale - (f - f2).squaredNorm() / psi.divisor);
  return same_point ? value + psi.noise() : value;
}

double base_kernel(const DeepKernelParams& psi, const StateActionPair& z, const StateActionPair& z2,
                   bool same_point) {
  return base_kernel(psi, z.z(), z2.z(), same_point);
}

VectorXd time_weights(GpOption option, int T, double gamma) {
  VectorXd w(T);
  double g = 1.0;
  for (int t = 0; t < T; ++t) {
    w(t) = option == GpOption::ReturnGP ? g : (1.0 + t) * g;
    g *= gamma;
  }
  return w;
}

EmbeddedEpisode embed_episode(const DeepKernelParams& psi, const Episode& e, GpOption option, double gamma) {
  EmbeddedEpisode out;
  out.features = psi.embed(e.z());
  out.sq_norms = out.features.colwise().squaredNorm().transpose();
  out.weights = time_weights(option, e.length(), gamma);
  return out;
}

double episodic_kernel(const DeepKernelParams& psi, const EmbeddedEpisode& a, const EmbeddedEpisode& b,
                       bool same_episode) {
  // Expanded distance in one reused buffer: -||f - f'||^2 / divisor.
  thread_local MatrixXd k;
  k.noalias() = a.features.transpose() * b.features;
  const double inv = 1.0 / psi.divisor;
  auto arr = k.array();
  arr *= 2.0 * inv;
  arr.colwise() -= a.sq_norms.array() * inv;
  arr.rowwise() -= b.sq_norms.transpose().array() * inv;
  arr = (psi.log_scale + arr.min(0.0)).exp();
  double value = a.weights.dot(k * b.weights);
  if (same_episode) value += psi.noise() * a.weights.squaredNorm();
  return value;
}

double episodic_kernel_option1(const DeepKernelParams& psi, const Episode& e, const Episode& e2, double gamma) {
  check_gamma(gamma);
  const auto a = embed_episode(psi, e, GpOption::ReturnGP, gamma);
  if (&e == &e2) return episodic_kernel(psi, a, a, true);
  return episodic_kernel(psi, a, embed_episode(psi, e2, GpOption::ReturnGP, gamma), false);
}

double episodic_kernel_option2(const DeepKernelParams& psi, const Episode& e, const Episode& e2, double gamma) {
  check_gamma(gamma);
  const auto a = embed_episode(psi, e, GpOption::RewardGP, gamma);
  if (&e == &e2) return episodic_kernel(psi, a, a, true);
  return episodic_kernel(psi, a, embed_episode(psi, e2, GpOption::RewardGP, gamma), false);
}

GramMatrix episodic_gram(const GPModel& model, const std::vector<Episode>& episodes) {
  std::vector<EmbeddedEpisode> embedded;
  embedded.reserve(episodes.size());
  for (const auto& e : episodes) embedded.push_back(embed_episode(model.kernel, e, model.option, model.gamma));
  return build_gram(
      [&](int i, int j) { return episodic_kernel(model.kernel, embedded[i], embedded[j], i == j); },
      static_cast<int>(episodes.size()));
}

VectorXd fake_returns(const MeanNetParams& m, const Episode& e, double gamma) {
  check_gamma(gamma);
  const VectorXd rewards = m.values(e.z());
  VectorXd out(rewards.size());
  double acc = 0.0;
  for (Eigen::Index t = rewards.size() - 1; t >= 0; --t) {
    acc = rewards(t) + gamma * acc;
    out(t) = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Kernel learning

namespace {

struct KernelGram {
  MatrixXd features;
  MatrixXd signal;  // exp(log_scale - d / divisor)
  MatrixXd full;    // signal + noise * I (+ jitter)
};

KernelGram kernel_gram(const DeepKernelParams& psi, const MatrixXd& z) {
  KernelGram g;
  g.features = psi.embed(z);
  const VectorXd sq = g.features.colwise().squaredNorm().transpose();
  MatrixXd dist = -2.0 * (g.features.transpose() * g.features);
  dist.colwise() += sq;
  dist.rowwise() += sq.transpose();
  dist.diagonal().setZero();
  g.signal = (psi.log_scale - dist.array().max(0.0) / psi.divisor).exp().matrix();
  g.full = g.signal;
  g.full.diagonal().array() += psi.noise();
  return g;
}

void check_batch(const MatrixXd& z, const VectorXd& y) {
  if (z.cols() < 1) throw ContractViolation("kernel_loss: empty batch");
  if (z.cols() != y.size()) throw ContractViolation("kernel_loss: z and y sizes differ");
}

}  // namespace

double kernel_loss(const DeepKernelParams& psi, const MatrixXd& z, const VectorXd& y, KernelLossForm form) {
  check_batch(z, y);
  const KernelGram g = kernel_gram(psi, z);
  const auto llt = robust_cholesky(g.full);
  const double logdet = 2.0 * MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  const double quad = form == KernelLossForm::Nlml ? y.dot(llt.solve(y)) : y.dot(g.full * y);
  const double value = quad + logdet;
  if (!std::isfinite(value)) throw NumericalError("kernel_loss: non-finite value");
  return value;
}

LossAndGrad kernel_loss_grad(const DeepKernelParams& psi, const MatrixXd& z, const VectorXd& y,
                             KernelLossForm form) {
  check_batch(z, y);
  const KernelGram g = kernel_gram(psi, z);
  const auto M = z.cols();
  const auto llt = robust_cholesky(g.full);
  const MatrixXd K_inv = llt.solve(MatrixXd::Identity(M, M));
  const double logdet = 2.0 * MatrixXd(llt.matrixL()).diagonal().array().log().sum();

  // dL/dK
  MatrixXd dK;
  LossAndGrad out;
  if (form == KernelLossForm::Nlml) {
    const VectorXd alpha = llt.solve(y);
    out.value = y.dot(alpha) + logdet;
    dK = K_inv - alpha * alpha.transpose();
  } else {
    out.value = y.dot(g.full * y) + logdet;
    dK = y * y.transpose() + K_inv;
  }
  if (!std::isfinite(out.value)) throw NumericalError("kernel_loss: non-finite value");

  const MatrixXd H = dK.cwiseProduct(g.signal);
  const VectorXd row_sums = H.rowwise().sum();
  const MatrixXd d_features =
      (-4.0 / psi.divisor) * (g.features * row_sums.asDiagonal() - g.features * H);

  out.grad.resize(psi.num_params());
  const auto n = psi.embedding.num_params();
  out.grad.head(n) = psi.embedding.backward(z, d_features).params;
  out.grad(n) = H.sum();
  out.grad(n + 1) = dK.trace() * std::exp(psi.log_noise);
  return out;
}

// ---------------------------------------------------------------------------
// Mean learning

namespace {

struct WeightedSamples {
  MatrixXd z;
  VectorXd target;
  VectorXd coef;
};

WeightedSamples mean_samples(const QuadratureRule& rule, const std::vector<Episode>& episodes, double gamma) {
  check_gamma(gamma);
  rule.validate(static_cast<int>(episodes.size()));
  Eigen::Index total = 0;
  for (int idx : rule.indices) {
    if (!episodes[idx].evaluated()) throw ContractViolation("mean_loss: unevaluated episode in rule support");
    total += episodes[idx].length();
  }
  WeightedSamples s;
  const auto D = episodes[rule.indices.front()].z().rows();
  s.z.resize(D, total);
  s.target.resize(total);
  s.coef.resize(total);
  Eigen::Index col = 0;
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const auto& e = episodes[rule.indices[k]];
    const int T = e.length();
    s.z.middleCols(col, T) = e.z();
    s.target.segment(col, T) = *e.rewards;
    s.coef.segment(col, T) = rule.weights[k] * time_weights(GpOption::RewardGP, T, gamma);
    col += T;
  }
  return s;
}

LossAndGrad weighted_squares(const nn::Mlp& net, const MatrixXd& z, const VectorXd& target, const VectorXd& coef) {
  const VectorXd pred = net.forward(z).row(0).transpose();
  const VectorXd resid = target - pred;
  LossAndGrad out;
  out.value = coef.dot(resid.cwiseProduct(resid));
  const MatrixXd upstream = (-2.0 * coef.cwiseProduct(resid)).transpose();
  out.grad = net.backward(z, upstream).params;
  return out;
}

template <typename Vec>
MatrixXd gather_cols(const MatrixXd& m, const Vec& idx) {
  MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(k) = m.col(idx[k]);
  return out;
}

template <typename Vec>
VectorXd gather(const VectorXd& v, const Vec& idx) {
  VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out(k) = v(idx[k]);
  return out;
}

}  // namespace

double mean_loss(const MeanNetParams& m, const QuadratureRule& rule, const std::vector<Episode>& episodes,
                 double gamma) {
  const auto s = mean_samples(rule, episodes, gamma);
  const VectorXd resid = s.target - m.values(s.z);
  return s.coef.dot(resid.cwiseProduct(resid));
}

LossAndGrad mean_loss_grad(const MeanNetParams& m, const QuadratureRule& rule,
                           const std::vector<Episode>& episodes, double gamma) {
  const auto s = mean_samples(rule, episodes, gamma);
  return weighted_squares(m.net, s.z, s.target, s.coef);
}

std::vector<std::vector<int>> make_minibatches(int count, int size, Rng& rng) {
  if (size < 1) throw ConfigError("minibatch size must be positive");
  std::vector<int> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<int>> batches;
  for (int start = 0; start < count; start += size)
    batches.emplace_back(order.begin() + start, order.begin() + std::min(count, start + size));
  return batches;
}

GpOptimizer GpOptimizer::for_model(const GPModel& model) {
  GpOptimizer opt;
  opt.kernel = nn::AdamState(model.kernel.num_params());
  if (model.mean) opt.mean = nn::AdamState(model.mean->net.num_params());
  return opt;
}

void update_gp(GPModel& model, GpOptimizer& opt, const QuadratureRule& rule, const std::vector<Episode>& episodes,
               const Baseline& baseline, const GpUpdateOptions& options, Rng& rng) {
  model.validate();
  if (options.lr < 0.0) throw ConfigError("update_gp: negative learning rate");
  const auto samples = mean_samples(rule, episodes, model.gamma);
  const auto total = static_cast<int>(samples.z.cols());

  VectorXd y(total);
  if (model.option == GpOption::ReturnGP) {
    Eigen::Index col = 0;
    for (int idx : rule.indices) {
      const auto& e = episodes[idx];
      y.segment(col, e.length()) = *e.returns - baseline.values(e.states);
      col += e.length();
    }
  } else {
    y = samples.target - model.mean->values(samples.z);
  }

  for (const auto& batch : make_minibatches(total, options.minibatch_size, rng)) {
    const auto lg = kernel_loss_grad(model.kernel, gather_cols(samples.z, batch), gather(y, batch), options.form);
    VectorXd flat = model.kernel.flat_params();
    nn::adam_step(opt.kernel, flat, lg.grad, options.lr);
    model.kernel.set_flat_params(flat);
  }

  if (model.option == GpOption::RewardGP) {
    for (const auto& batch : make_minibatches(total, options.minibatch_size, rng)) {
      const auto lg = weighted_squares(model.mean->net, gather_cols(samples.z, batch), gather(samples.target, batch),
                                       gather(samples.coef, batch));
      nn::adam_step(opt.mean, model.mean->net.params(), lg.grad, options.lr);
    }
  }
}

}  // namespace pgkq::gp
