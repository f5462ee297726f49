#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "pgkq/random.hpp"

namespace pgkq {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Convex weights on a subset of an N-point sample, approximating the
/// uniform empirical measure on all N points.
struct QuadratureRule {
  std::vector<int> indices;
  std::vector<double> weights;

  std::size_t size() const { return indices.size(); }
  /// Uniform 1/N weight on every point.
  static QuadratureRule uniform(int n_points);
  /// Throws ContractViolation unless indices are distinct and within
  /// [0, n_points), weights are non-negative and sum to one within 1e-10.
  void validate(int n_points) const;
};

/// Symmetric matrix of episodic-kernel values.
struct GramMatrix {
  MatrixXd values;
  int size() const { return static_cast<int>(values.rows()); }
};

/// K(i, j) for items of a batch addressed by index.
using IndexKernel = std::function<double(int, int)>;

/// Upper triangle through `kernel`, mirrored to the lower triangle.
GramMatrix build_gram(const IndexKernel& kernel, int n_items);

/// Squared worst-case error of `rule` against the uniform measure on all
/// points of `G`. Negatives in [-1e-10, 0) are clamped to zero.
double wce_squared(const QuadratureRule& rule, const GramMatrix& G);

/// Top spectral test functions: column j = sqrt(lambda_j) * u_j. Eigenvalues
/// below 1e-12 * trace are dropped, so the result may have fewer than m
/// columns.
MatrixXd nystrom_features(const GramMatrix& G, int m);

struct RecombinationResult {
  QuadratureRule rule;
  /// Max over feature columns (and the constant function) of the moment
  /// mismatch, each column scaled by its largest absolute entry.
  double moment_residual = 0.0;
};

/// Caratheodory-style elimination from the uniform weights down to at most
/// `n` support points while preserving the mean of each feature column.
RecombinationResult recombine_detailed(const MatrixXd& features, int n);
QuadratureRule recombine(const MatrixXd& features, int n);

/// Gram -> Nystrom features -> recombination -> weight refit. Ranks 1..n-1
/// are tried and the rule with the smallest wce^2 is kept.
QuadratureRule kquad(const GramMatrix& G, int n);
QuadratureRule kquad(const IndexKernel& kernel, int n_items, int n);

/// Convex weights minimizing wce^2 on the rule's support. Points whose
/// weight reaches zero are dropped. Never returns a worse rule.
QuadratureRule optimize_weights(const QuadratureRule& rule, const GramMatrix& G);

/// Greedy uniform-weight selection without replacement. `trace`, when
/// given, receives wce^2 after each addition.
QuadratureRule herding_baseline(const GramMatrix& G, int n, std::vector<double>* trace = nullptr);

struct MonteCarloEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

/// Estimates E[(sum_i w_i f(x_i) - mean_j f(x_j))^2] for f ~ N(0, G).
MonteCarloEstimate gp_sample_error(const QuadratureRule& rule, const GramMatrix& G, int num_samples, Rng& rng);

/// Cholesky factor of G with the 0 -> 1e-9 -> 1e-6 -> 1e-3 jitter ladder.
/// Throws NumericalError when every rung fails.
Eigen::LLT<MatrixXd> robust_cholesky(const MatrixXd& G, double* jitter_used = nullptr);

/// Header `# N=<N> n=<n> wce_sq=<value>` then one `index weight` line per
/// support point.
void write_rule(std::ostream& os, const QuadratureRule& rule, int n_points, int n_target, double wce_sq);

}  // namespace pgkq
