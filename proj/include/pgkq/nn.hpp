#pragma once

#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "pgkq/random.hpp"

namespace pgkq::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Fully connected network with rectifier hidden layers and an identity
/// output layer. Parameters live in one flat vector so that optimizers and
/// checkpoints see a single contiguous buffer.
///
/// Flat layout, layer by layer: weight matrix (out x in, row-major) followed
/// by the bias vector (out).
class Mlp {
 public:
  Mlp() = default;
  /// `sizes` = {d_in, h_1, ..., d_out}; parameters are zero.
  explicit Mlp(std::vector<int> sizes);

  /// Kaiming-style uniform fan-in initialization, bound 1/sqrt(fan_in) for
  /// both weights and biases.
  static Mlp initialized(std::vector<int> sizes, Rng& rng);

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  const std::vector<int>& sizes() const { return sizes_; }

  const VectorXd& params() const { return params_; }
  VectorXd& params() { return params_; }
  Eigen::Index num_params() const { return params_.size(); }

  using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using MutRowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  RowMajorMap weight(int layer) const;
  Eigen::Map<const VectorXd> bias(int layer) const;
  MutRowMajorMap weight(int layer);
  Eigen::Map<VectorXd> bias(int layer);

  /// Batched forward pass; columns of `inputs` are samples.
  MatrixXd forward(const MatrixXd& inputs) const;
  VectorXd forward(const VectorXd& input) const;

  struct Gradients {
    VectorXd params;  // summed over the batch, same layout as params()
    MatrixXd inputs;  // d_in x batch
  };

  /// Gradients of sum_b <upstream[:, b], output[:, b]> with respect to the
  /// parameters and the inputs. Does not modify the network.
  Gradients backward(const MatrixXd& inputs, const MatrixXd& upstream) const;

  void write(std::ostream& os) const;
  static Mlp read(std::istream& is);

 private:
  Eigen::Index offset(int layer) const { return offsets_[layer]; }
  void check_input(Eigen::Index rows) const;

  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  VectorXd params_;
};

/// Bias-corrected Adam. The update is a descent step: params -= lr * m_hat /
/// (sqrt(v_hat) + eps). Callers maximizing an objective pass its negated
/// gradient.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  VectorXd m;
  VectorXd v;

  AdamState() = default;
  explicit AdamState(Eigen::Index n) : m(VectorXd::Zero(n)), v(VectorXd::Zero(n)) {}
};

void adam_step(AdamState& state, VectorXd& params, const VectorXd& grads, double lr);

}  // namespace pgkq::nn
