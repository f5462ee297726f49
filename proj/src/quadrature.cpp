#include "pgkq/quadrature.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "pgkq/errors.hpp"

namespace pgkq {

namespace {

constexpr double kWeightClamp = 1e-12;
constexpr double kMomentTolerance = 1e-8;

// c = (rule weights scattered over N points) - 1/N.
VectorXd signed_measure(const QuadratureRule& rule, int n_points) {
  VectorXd w = VectorXd::Zero(n_points);
  for (std::size_t k = 0; k < rule.size(); ++k) w(rule.indices[k]) += rule.weights[k];
  const double u = 1.0 / n_points;
  for (int i = 0; i < n_points; ++i) w(i) -= u;
  return w;
}

bool all_entries_equal(const MatrixXd& G) {
  const double ref = G(0, 0);
  const double tol = 1e-12 * std::max(1.0, std::abs(ref));
  return ((G.array() - ref).abs() <= tol).all();
}

VectorXd project_to_simplex(const VectorXd& v) {
  VectorXd u = v;
  std::sort(u.data(), u.data() + u.size(), std::greater<double>());
  double cumulative = 0.0, shift = 0.0;
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    cumulative += u(k);
    const double t = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (u(k) > t) shift = t;
  }
  return (v.array() - shift).max(0.0).matrix();
}

}  // namespace

QuadratureRule QuadratureRule::uniform(int n_points) {
  QuadratureRule rule;
  rule.indices.resize(n_points);
  std::iota(rule.indices.begin(), rule.indices.end(), 0);
  rule.weights.assign(n_points, 1.0 / n_points);
  return rule;
}

void QuadratureRule::validate(int n_points) const {
  if (indices.size() != weights.size()) throw ContractViolation("rule: index/weight count mismatch");
  if (indices.empty()) throw ContractViolation("rule: empty support");
  std::vector<int> sorted = indices;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ContractViolation("rule: duplicate indices");
  if (sorted.front() < 0 || sorted.back() >= n_points) throw ContractViolation("rule: index out of range");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ContractViolation("rule: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-10) throw ContractViolation("rule: weights do not sum to one");
}

GramMatrix build_gram(const IndexKernel& kernel, int n_items) {
  if (n_items < 1) throw ContractViolation("build_gram: need at least one item");
  GramMatrix G{MatrixXd(n_items, n_items)};
  for (int i = 0; i < n_items; ++i) {
    for (int j = i; j < n_items; ++j) {
      const double v = kernel(i, j);
      if (!std::isfinite(v))
        throw NumericalError("build_gram: non-finite entry at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      G.values(i, j) = v;
      G.values(j, i) = v;
    }
  }
  return G;
}

double wce_squared(const QuadratureRule& rule, const GramMatrix& G) {
  for (int idx : rule.indices)
    if (idx < 0 || idx >= G.size()) throw ContractViolation("wce_squared: rule index out of range");
  const VectorXd c = signed_measure(rule, G.size());
  const double value = c.dot(G.values * c);
  const double tol = 1e-10 * std::max(1.0, G.values.cwiseAbs().maxCoeff());
  if (value < 0.0 && value >= -tol) return 0.0;
  return value;
}

MatrixXd nystrom_features(const GramMatrix& G, int m) {
  const int N = G.size();
  if (m < 0 || m > N) throw ConfigError("nystrom_features: rank must lie in [0, N]");
  if (m == 0) return MatrixXd(N, 0);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(G.values);
  if (eig.info() != Eigen::Success) throw NumericalError("nystrom_features: eigendecomposition failed");
  const double cutoff = 1e-12 * std::max(G.values.trace(), 0.0);
  // Eigenvalues come in ascending order.
  std::vector<int> keep;
  for (int k = N - 1; k >= 0 && static_cast<int>(keep.size()) < m; --k)
    if (eig.eigenvalues()(k) > cutoff) keep.push_back(k);
  MatrixXd F(N, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c)
    F.col(c) = eig.eigenvectors().col(keep[c]) * std::sqrt(eig.eigenvalues()(keep[c]));
  return F;
}

RecombinationResult recombine_detailed(const MatrixXd& features, int n) {
  const auto N = static_cast<int>(features.rows());
  const auto m = static_cast<int>(features.cols());
  if (N < 1) throw ContractViolation("recombine: no points");
  if (n < 1) throw ConfigError("recombine: target support must be positive");
  if (n < m + 1) throw ConfigError("recombine: need n >= features + 1");
  if (!features.allFinite()) throw NumericalError("recombine: non-finite features");

  // Moment matrix: constant row plus each feature column scaled to unit max.
  MatrixXd moments(m + 1, N);
  moments.row(0).setOnes();
  for (int j = 0; j < m; ++j) {
    const double scale = features.col(j).cwiseAbs().maxCoeff();
    moments.row(j + 1) = features.col(j).transpose() / (scale > 0.0 ? scale : 1.0);
  }
  const VectorXd target = moments.rowwise().mean();

  std::vector<int> active(N);
  std::iota(active.begin(), active.end(), 0);
  VectorXd w = VectorXd::Constant(N, 1.0 / N);

  while (static_cast<int>(active.size()) > n) {
    const auto k = static_cast<Eigen::Index>(active.size());
    MatrixXd A(m + 1, k);
    for (Eigen::Index c = 0; c < k; ++c) A.col(c) = moments.col(active[c]);
    Eigen::JacobiSVD<MatrixXd> svd(A, Eigen::ComputeFullV);
    VectorXd v = svd.matrixV().col(k - 1);
    if (v.maxCoeff() <= 0.0) v = -v;

    Eigen::Index drop = -1;
    double step = 0.0;
    for (Eigen::Index c = 0; c < k; ++c) {
      if (v(c) <= 1e-14) continue;
      const double ratio = w(c) / v(c);
      if (drop < 0 || ratio < step) {
        step = ratio;
        drop = c;
      }
    }
    if (drop < 0) throw AlgorithmError("recombine: null-space direction has no positive entry");

    w.head(k) -= step * v;
    w(drop) = 0.0;

    std::vector<int> next_active;
    VectorXd next_w(k);
    Eigen::Index kept = 0;
    for (Eigen::Index c = 0; c < k; ++c) {
      double wc = w(c);
      if (wc < -kWeightClamp) throw AlgorithmError("recombine: weight became negative");
      if (wc <= 0.0) continue;
      next_active.push_back(active[c]);
      next_w(kept++) = wc;
    }
    active = std::move(next_active);
    w = next_w.head(kept);
  }

  const auto k = static_cast<Eigen::Index>(active.size());
  w /= w.sum();
  MatrixXd A(m + 1, k);
  for (Eigen::Index c = 0; c < k; ++c) A.col(c) = moments.col(active[c]);
  const double residual = (A * w - target).cwiseAbs().maxCoeff();
  if (residual > kMomentTolerance)
    throw AlgorithmError("recombine: moment residual " + std::to_string(residual) + " exceeds tolerance");

  RecombinationResult out;
  out.moment_residual = residual;
  out.rule.indices = std::move(active);
  out.rule.weights.assign(w.data(), w.data() + k);
  return out;
}

QuadratureRule recombine(const MatrixXd& features, int n) {
  return recombine_detailed(features, n).rule;
}

QuadratureRule kquad(const GramMatrix& G, int n) {
  const int N = G.size();
  if (n < 1) throw ConfigError("kquad: n must be positive");
  if (n >= N) return QuadratureRule::uniform(N);
  if (all_entries_equal(G.values)) return QuadratureRule{{0}, {1.0}};
  // Every Nystrom rank up to n - 1 yields a feasible support; keep the one
  // whose re-optimized weights give the smallest worst-case error.
  QuadratureRule best;
  double best_wce = 0.0;
  for (int m = 1; m < n; ++m) {
    const MatrixXd features = nystrom_features(G, m);
    if (features.cols() < m && m > 1) break;  // rank exhausted
    QuadratureRule rule = optimize_weights(recombine(features, m + 1), G);
    const double wce = wce_squared(rule, G);
    if (best.size() == 0 || wce < best_wce) {
      best = std::move(rule);
      best_wce = wce;
    }
  }
  return best;
}

QuadratureRule optimize_weights(const QuadratureRule& rule, const GramMatrix& G) {
  rule.validate(G.size());
  const auto n = static_cast<Eigen::Index>(rule.size());
  MatrixXd A(n, n);
  VectorXd b(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    b(i) = G.values.row(rule.indices[i]).mean();
    w(i) = rule.weights[i];
    for (Eigen::Index j = 0; j < n; ++j) A(i, j) = G.values(rule.indices[i], rule.indices[j]);
  }
  // Projected gradient on w^T A w - 2 b^T w over the simplex.
  const double L = 2.0 * Eigen::SelfAdjointEigenSolver<MatrixXd>(A, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  if (L > 0.0) {
    for (int it = 0; it < 20000; ++it) {
      const VectorXd next = project_to_simplex(w - (2.0 / L) * (A * w - b));
      const double moved = (next - w).cwiseAbs().maxCoeff();
      w = next;
      if (moved <= 1e-15) break;
    }
  }
  QuadratureRule out;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (w(i) <= 1e-12) continue;
    out.indices.push_back(rule.indices[i]);
    out.weights.push_back(w(i));
  }
  const double total = std::accumulate(out.weights.begin(), out.weights.end(), 0.0);
  for (double& x : out.weights) x /= total;
  // Never hand back something worse than the input.
  return wce_squared(out, G) <= wce_squared(rule, G) ? out : rule;
}

QuadratureRule kquad(const IndexKernel& kernel, int n_items, int n) {
  return kquad(build_gram(kernel, n_items), n);
}

QuadratureRule herding_baseline(const GramMatrix& G, int n, std::vector<double>* trace) {
  const int N = G.size();
  if (n < 1 || n > N) throw ConfigError("herding: n must lie in [1, N]");
  const MatrixXd& K = G.values;
  const VectorXd row_mean = K.rowwise().mean();
  const double total_mean = row_mean.mean();

  std::vector<int> chosen;
  std::vector<bool> used(N, false);
  VectorXd cross = VectorXd::Zero(N);  // sum over chosen i of K(i, j)
  double pair_sum = 0.0;               // sum over chosen i, j of K(i, j)
  double lin_sum = 0.0;                // sum over chosen i of row_mean(i)

  for (int step = 0; step < n; ++step) {
    const double k = step + 1;
    int best = -1;
    double best_val = 0.0;
    for (int j = 0; j < N; ++j) {
      if (used[j]) continue;
      const double quad = (pair_sum + 2.0 * cross(j) + K(j, j)) / (k * k);
      const double lin = (lin_sum + row_mean(j)) / k;
      const double val = total_mean - 2.0 * lin + quad;
      if (best < 0 || val < best_val) {
        best = j;
        best_val = val;
      }
    }
    used[best] = true;
    chosen.push_back(best);
    pair_sum += 2.0 * cross(best) + K(best, best);
    lin_sum += row_mean(best);
    cross += K.col(best);
    if (trace) trace->push_back(std::max(best_val, 0.0));
  }

  QuadratureRule rule;
  rule.indices = std::move(chosen);
  rule.weights.assign(n, 1.0 / n);
  return rule;
}

Eigen::LLT<MatrixXd> robust_cholesky(const MatrixXd& G, double* jitter_used) {
  const auto N = G.rows();
  for (double jitter : {0.0, 1e-9, 1e-6, 1e-3}) {
    Eigen::LLT<MatrixXd> llt(G + jitter * MatrixXd::Identity(N, N));
    if (llt.info() == Eigen::Success) {
      if (jitter_used) *jitter_used = jitter;
      return llt;
    }
  }
  throw NumericalError("cholesky failed after jitter 1e-3");
}

MonteCarloEstimate gp_sample_error(const QuadratureRule& rule, const GramMatrix& G, int num_samples, Rng& rng) {
  if (num_samples < 1) throw ConfigError("gp_sample_error: need at least one sample");
  const int N = G.size();
  rule.validate(N);
  const VectorXd c = signed_measure(rule, N);
  const auto llt = robust_cholesky(G.values);
  const MatrixXd L = llt.matrixL();

  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd z(N);
  double sum = 0.0, sum_sq = 0.0;
  for (int s = 0; s < num_samples; ++s) {
    for (int i = 0; i < N; ++i) z(i) = normal(rng);
    const VectorXd f = L.triangularView<Eigen::Lower>() * z;
    const double err = c.dot(f);
    const double sq = err * err;
    sum += sq;
    sum_sq += sq * sq;
  }
  MonteCarloEstimate est;
  est.mean = sum / num_samples;
  if (num_samples > 1) {
    const double var = std::max(0.0, (sum_sq - num_samples * est.mean * est.mean) / (num_samples - 1));
    est.standard_error = std::sqrt(var / num_samples);
  }
  return est;
}

void write_rule(std::ostream& os, const QuadratureRule& rule, int n_points, int n_target, double wce_sq) {
  os.precision(17);
  os << "# N=" << n_points << " n=" << n_target << " wce_sq=" << wce_sq << '\n';
  for (std::size_t k = 0; k < rule.size(); ++k) os << rule.indices[k] << ' ' << rule.weights[k] << '\n';
}

}  // namespace pgkq
