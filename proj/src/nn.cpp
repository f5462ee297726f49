#include "pgkq/nn.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "pgkq/errors.hpp"

namespace pgkq::nn {

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw ConfigError("mlp needs at least input and output sizes");
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw ConfigError("mlp layer sizes must be positive");
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_ = VectorXd::Zero(total);
}

Mlp Mlp::initialized(std::vector<int> sizes, Rng& rng) {
  Mlp net(std::move(sizes));
  for (int l = 0; l < net.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.sizes_[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto w = net.weight(l);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
    auto b = net.bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = dist(rng);
  }
  return net;
}

Mlp::RowMajorMap Mlp::weight(int layer) const {
  return RowMajorMap(params_.data() + offset(layer), sizes_[layer + 1], sizes_[layer]);
}

Eigen::Map<const VectorXd> Mlp::bias(int layer) const {
  return Eigen::Map<const VectorXd>(
      params_.data() + offset(layer) + static_cast<Eigen::Index>(sizes_[layer + 1]) * sizes_[layer],
      sizes_[layer + 1]);
}

Mlp::MutRowMajorMap Mlp::weight(int layer) {
  return MutRowMajorMap(params_.data() + offset(layer), sizes_[layer + 1], sizes_[layer]);
}

Eigen::Map<VectorXd> Mlp::bias(int layer) {
  return Eigen::Map<VectorXd>(
      params_.data() + offset(layer) + static_cast<Eigen::Index>(sizes_[layer + 1]) * sizes_[layer],
      sizes_[layer + 1]);
}

void Mlp::check_input(Eigen::Index rows) const {
  if (sizes_.empty()) throw ConfigError("mlp is empty");
  if (rows != input_dim())
    throw ConfigError("mlp input has " + std::to_string(rows) + " rows, expected " +
                      std::to_string(input_dim()));
}

MatrixXd Mlp::forward(const MatrixXd& inputs) const {
  check_input(inputs.rows());
  MatrixXd h = inputs;
  for (int l = 0; l < num_layers(); ++l) {
    MatrixXd next = weight(l) * h;
    next.colwise() += bias(l);
    if (l + 1 < num_layers()) next = next.cwiseMax(0.0);
    h = std::move(next);
  }
  return h;
}

VectorXd Mlp::forward(const VectorXd& input) const {
  return forward(MatrixXd(input)).col(0);
}

Mlp::Gradients Mlp::backward(const MatrixXd& inputs, const MatrixXd& upstream) const {
  check_input(inputs.rows());
  if (upstream.rows() != output_dim() || upstream.cols() != inputs.cols())
    throw ConfigError("mlp upstream gradient shape mismatch");

  // Keep pre-activations for the rectifier masks.
  std::vector<MatrixXd> acts;
  acts.reserve(num_layers() + 1);
  acts.push_back(inputs);
  for (int l = 0; l < num_layers(); ++l) {
    MatrixXd next = weight(l) * acts.back();
    next.colwise() += bias(l);
    if (l + 1 < num_layers()) next = next.cwiseMax(0.0);
    acts.push_back(std::move(next));
  }

  Gradients g;
  g.params = VectorXd::Zero(params_.size());
  MatrixXd delta = upstream;
  for (int l = num_layers() - 1; l >= 0; --l) {
    if (l + 1 < num_layers()) delta = (acts[l + 1].array() > 0.0).select(delta, 0.0);
    const Eigen::Index out = sizes_[l + 1], in = sizes_[l];
    MutRowMajorMap gw(g.params.data() + offset(l), out, in);
    gw = delta * acts[l].transpose();
    Eigen::Map<VectorXd>(g.params.data() + offset(l) + out * in, out) = delta.rowwise().sum();
    delta = weight(l).transpose() * delta;
  }
  g.inputs = std::move(delta);
  return g;
}

void Mlp::write(std::ostream& os) const {
  os.precision(17);
  os << "mlp " << num_layers() << '\n';
  for (int l = 0; l < num_layers(); ++l) {
    auto w = weight(l);
    os << "layer " << l << " weight " << w.rows() << ' ' << w.cols() << '\n';
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) os << (j ? " " : "") << w(i, j);
      os << '\n';
    }
    auto b = bias(l);
    os << "layer " << l << " bias " << b.size() << '\n';
    for (Eigen::Index i = 0; i < b.size(); ++i) os << (i ? " " : "") << b(i);
    os << '\n';
  }
}

Mlp Mlp::read(std::istream& is) {
  auto expect = [&](const std::string& word) {
    std::string tok;
    if (!(is >> tok) || tok != word) throw ConfigError("checkpoint: expected '" + word + "'");
  };
  expect("mlp");
  int layers = 0;
  if (!(is >> layers) || layers < 1) throw ConfigError("checkpoint: bad layer count");
  std::vector<std::vector<double>> weights, biases;
  std::vector<int> sizes;
  for (int l = 0; l < layers; ++l) {
    int idx = 0;
    Eigen::Index rows = 0, cols = 0, nb = 0;
    expect("layer");
    is >> idx;
    expect("weight");
    is >> rows >> cols;
    if (!is || idx != l || rows <= 0 || cols <= 0) throw ConfigError("checkpoint: bad weight header");
    if (l == 0) sizes.push_back(static_cast<int>(cols));
    else if (sizes.back() != cols) throw ConfigError("checkpoint: inconsistent layer shapes");
    sizes.push_back(static_cast<int>(rows));
    std::vector<double> w(rows * cols);
    for (auto& x : w) is >> x;
    expect("layer");
    is >> idx;
    expect("bias");
    is >> nb;
    if (!is || nb != rows) throw ConfigError("checkpoint: bad bias header");
    std::vector<double> b(nb);
    for (auto& x : b) is >> x;
    if (!is) throw ConfigError("checkpoint: truncated values");
    weights.push_back(std::move(w));
    biases.push_back(std::move(b));
  }
  Mlp net(sizes);
  for (int l = 0; l < layers; ++l) {
    auto w = net.weight(l);
    std::copy(weights[l].begin(), weights[l].end(), w.data());
    auto b = net.bias(l);
    std::copy(biases[l].begin(), biases[l].end(), b.data());
  }
  return net;
}

void adam_step(AdamState& state, VectorXd& params, const VectorXd& grads, double lr) {
  if (grads.size() != params.size()) throw ConfigError("adam: gradient/parameter size mismatch");
  if (state.m.size() != params.size()) throw ConfigError("adam: state/parameter size mismatch");
  if (!grads.allFinite()) throw NumericalError("adam: non-finite gradient");
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

}  // namespace pgkq::nn
