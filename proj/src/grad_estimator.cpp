#include "coreset/grad_estimator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <omp.h>

namespace coreset {

namespace {

constexpr std::size_t kSumBlock = 4096;

void check_chains(std::span<const Vector> thetas) {
  if (thetas.size() < 2) throw std::invalid_argument("centered log-likelihoods need K >= 2 chains");
}

void center_rows(Matrix& block) {
  if (block.size() == 0) return;
  const Vector mean = block.rowwise().mean();
  block.colwise() -= mean;
}

template <bool Parallel>
Matrix evaluate_block(const Model& model, std::span<const std::size_t> rows, std::span<const Vector> thetas) {
  const auto n_rows = static_cast<std::ptrdiff_t>(rows.size());
  const auto n_chains = static_cast<std::ptrdiff_t>(thetas.size());
  for (auto r : rows)
    if (r >= model.size()) throw std::out_of_range("log-likelihood index out of range");
  for (const auto& t : thetas)
    if (static_cast<std::size_t>(t.size()) != model.dim()) throw std::invalid_argument("parameter length mismatch");
  Matrix block(n_rows, n_chains);
  if constexpr (Parallel) {
#pragma omp parallel for collapse(2) schedule(static)
    for (std::ptrdiff_t k = 0; k < n_chains; ++k)
      for (std::ptrdiff_t i = 0; i < n_rows; ++i)
        block(i, k) = model.log_lik_unchecked(rows[static_cast<std::size_t>(i)], thetas[static_cast<std::size_t>(k)]);
  } else {
    for (std::ptrdiff_t k = 0; k < n_chains; ++k)
      for (std::ptrdiff_t i = 0; i < n_rows; ++i)
        block(i, k) = model.log_lik_unchecked(rows[static_cast<std::size_t>(i)], thetas[static_cast<std::size_t>(k)]);
  }
  return block;
}

template <bool Parallel>
CenteredLogLik center_impl(const Model& model, std::span<const std::size_t> coreset_indices,
                           std::span<const std::size_t> subsample, std::span<const Vector> thetas) {
  check_chains(thetas);
  CenteredLogLik out;
  out.coreset_block = evaluate_block<Parallel>(model, coreset_indices, thetas);

  // Subsample points that are also coreset points reuse the coreset row.
  std::unordered_map<std::size_t, Eigen::Index> coreset_row;
  for (std::size_t i = 0; i < coreset_indices.size(); ++i)
    coreset_row.emplace(coreset_indices[i], static_cast<Eigen::Index>(i));
  std::vector<std::size_t> fresh;
  std::vector<Eigen::Index> source(subsample.size(), -1);
  for (std::size_t j = 0; j < subsample.size(); ++j) {
    if (const auto it = coreset_row.find(subsample[j]); it != coreset_row.end())
      source[j] = it->second;
    else
      fresh.push_back(subsample[j]);
  }
  const Matrix fresh_block = evaluate_block<Parallel>(model, fresh, thetas);
  out.data_block.resize(static_cast<Eigen::Index>(subsample.size()), static_cast<Eigen::Index>(thetas.size()));
  for (std::size_t j = 0, f = 0; j < subsample.size(); ++j) {
    const auto row = static_cast<Eigen::Index>(j);
    if (source[j] >= 0)
      out.data_block.row(row) = out.coreset_block.row(source[j]);
    else
      out.data_block.row(row) = fresh_block.row(static_cast<Eigen::Index>(f++));
  }
  center_rows(out.coreset_block);
  center_rows(out.data_block);
  out.data_sums = subsample.empty() ? Vector::Zero(static_cast<Eigen::Index>(thetas.size()))
                                    : Vector(out.data_block.colwise().sum().transpose());
  return out;
}

}  // namespace

CenteredLogLik center_logliks(const Model& model, std::span<const std::size_t> coreset_indices,
                              std::span<const std::size_t> subsample, std::span<const Vector> thetas) {
  return center_impl<true>(model, coreset_indices, subsample, thetas);
}

CenteredLogLik center_logliks_serial(const Model& model, std::span<const std::size_t> coreset_indices,
                                     std::span<const std::size_t> subsample, std::span<const Vector> thetas) {
  return center_impl<false>(model, coreset_indices, subsample, thetas);
}

CenteredLogLik center_logliks_full_data(const Model& model, std::span<const std::size_t> coreset_indices,
                                        std::span<const Vector> thetas) {
  check_chains(thetas);
  CenteredLogLik out;
  out.coreset_block = evaluate_block<true>(model, coreset_indices, thetas);
  center_rows(out.coreset_block);

  const auto n_chains = static_cast<std::ptrdiff_t>(thetas.size());
  Vector sums(n_chains);
  if (model.closed_form_full_sum()) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < n_chains; ++k) sums[k] = model.sum_log_lik(thetas[static_cast<std::size_t>(k)]);
  } else {
    const std::size_t n = model.size();
    const auto n_blocks = static_cast<std::ptrdiff_t>((n + kSumBlock - 1) / kSumBlock);
    Matrix partial(n_blocks, n_chains);
#pragma omp parallel for collapse(2) schedule(dynamic)
    for (std::ptrdiff_t k = 0; k < n_chains; ++k)
      for (std::ptrdiff_t b = 0; b < n_blocks; ++b) {
        const auto first = static_cast<std::size_t>(b) * kSumBlock;
        partial(b, k) = model.sum_log_lik(thetas[static_cast<std::size_t>(k)], first, std::min(n, first + kSumBlock));
      }
    for (std::ptrdiff_t k = 0; k < n_chains; ++k) {
      double s = 0.0;
      for (std::ptrdiff_t b = 0; b < n_blocks; ++b) s += partial(b, k);
      sums[k] = s;
    }
  }
  out.data_sums = (sums.array() - sums.mean()).matrix();
  return out;
}

std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t s, Rng& rng) {
  if (s == 0 || s > n) throw std::invalid_argument("subsample_indices: need 1 <= S <= N");
  std::vector<std::size_t> out;
  out.reserve(s);
  if (s == n) {
    out.resize(n);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  // Floyd: for j = N-S .. N-1 pick t in [0, j]; take j instead if t is taken.
  if (s * 4 > n) {
    std::vector<char> taken(n, 0);
    for (std::size_t j = n - s; j < n; ++j) {
      std::size_t t = rng.below(j + 1);
      if (taken[t]) t = j;
      taken[t] = 1;
      out.push_back(t);
    }
  } else {
    std::unordered_set<std::size_t> taken;
    taken.reserve(2 * s);
    for (std::size_t j = n - s; j < n; ++j) {
      std::size_t t = rng.below(j + 1);
      if (!taken.insert(t).second) {
        t = j;
        taken.insert(t);
      }
      out.push_back(t);
    }
  }
  return out;
}

GradientEstimate estimate_gradient(const Vector& w, const CenteredLogLik& centered, std::size_t n, std::size_t s) {
  const auto start = std::chrono::steady_clock::now();
  const auto& a = centered.coreset_block;
  if (w.size() != a.rows()) throw std::invalid_argument("estimate_gradient: weight length differs from coreset block");
  if (centered.data_sums.size() != a.cols()) throw std::invalid_argument("estimate_gradient: data sums length mismatch");
  if (a.cols() < 2) throw std::invalid_argument("estimate_gradient: need K >= 2");
  if (s == 0 || s > n) throw std::invalid_argument("estimate_gradient: need 1 <= S <= N");
  if (centered.has_data_block() && static_cast<std::size_t>(centered.data_block.rows()) != s)
    throw std::invalid_argument("estimate_gradient: data block has " + std::to_string(centered.data_block.rows()) +
                                " rows, S = " + std::to_string(s));

  const double scale = static_cast<double>(n) / static_cast<double>(s);
  GradientEstimate est;
  est.g = Vector::Zero(a.rows());
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    const double c = w.dot(a.col(k)) - scale * centered.data_sums[k];
    est.g.noalias() += c * a.col(k);
  }
  est.g /= static_cast<double>(a.cols() - 1);
  est.subsample_size = s;
  est.chains = static_cast<std::size_t>(a.cols());
  est.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return est;
}

Matrix gram_matrix(const CenteredLogLik& centered) {
  const auto& a = centered.coreset_block;
  if (a.cols() < 2) throw std::invalid_argument("gram_matrix: need K >= 2");
  return (a * a.transpose()) / static_cast<double>(a.cols() - 1);
}

double subnoise_diagnostic(const CenteredLogLik& centered) {
  if (!centered.has_data_block()) throw std::invalid_argument("subnoise_diagnostic: needs the full data block");
  const auto& a = centered.coreset_block;
  const auto& data = centered.data_block;
  if (a.cols() < 2 || data.cols() != a.cols()) throw std::invalid_argument("subnoise_diagnostic: chain count mismatch");
  const Matrix delta = data.rowwise() - data.colwise().mean();  // N x K
  const Matrix inner = (a * delta.transpose()) / static_cast<double>(a.cols() - 1);  // M x N
  return inner.squaredNorm() / (static_cast<double>(a.rows()) * static_cast<double>(data.rows()));
}

namespace {

// Orthonormal basis of the complement of 1 in R^m, as an m x (m-1) matrix.
Matrix sum_zero_basis(Eigen::Index m) {
  Matrix ones_q = Matrix::Ones(m, 1);
  Eigen::HouseholderQR<Matrix> qr(ones_q);
  Matrix q = qr.householderQ() * Matrix::Identity(m, m);
  return q.rightCols(m - 1);
}

// min ||Y w - b|| over {1'w = total}, closest to the uniform point.
Vector hyperplane_least_squares(const Matrix& y, const Vector& b, double total) {
  const Eigen::Index m = y.cols();
  const Vector uniform = Vector::Constant(m, total / static_cast<double>(m));
  if (m == 1) return uniform;
  const Matrix basis = sum_zero_basis(m);
  const Matrix yb = y * basis;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(yb);
  cod.setThreshold(1e-12);
  const Vector z = cod.solve(b - y * uniform);
  return uniform + basis * z;
}

Vector simplex_least_squares(const Matrix& y, const Vector& b, double total) {
  const Eigen::Index m = y.cols();
  const FeasibleRegion simplex(RegionKind::simplex_sum_N, total);
  Vector w = Vector::Constant(m, total / static_cast<double>(m));
  const double lipschitz = std::max(Eigen::JacobiSVD<Matrix>(y).singularValues()(0), 1e-300);
  const double step = 1.0 / (lipschitz * lipschitz);
  const double target = 1e-13 * std::max(1.0, b.norm());

  Vector best = w;
  double best_res = (y * w - b).norm();
  for (int iter = 0; iter < 200000 && best_res > target; ++iter) {
    const Vector resid = y * w - b;
    const Vector grad = y.transpose() * resid;
    Vector trial = w - step * grad;
    trial = project(trial, simplex);
    const Vector dir = trial - w;
    const Vector ydir = y * dir;
    const double denom = ydir.squaredNorm();
    if (denom <= 0.0 || dir.norm() <= 1e-15 * total) break;
    const double alpha = std::clamp(-resid.dot(ydir) / denom, 0.0, 1.0);
    w += alpha * dir;
    w = w.cwiseMax(0.0);
    w *= total / w.sum();

    if (iter % 100 == 99) {
      // Polish on the current support with an equality-constrained solve.
      std::vector<Eigen::Index> support;
      for (Eigen::Index i = 0; i < m; ++i)
        if (w[i] > 1e-12 * total) support.push_back(i);
      Matrix ys(y.rows(), static_cast<Eigen::Index>(support.size()));
      for (std::size_t j = 0; j < support.size(); ++j) ys.col(static_cast<Eigen::Index>(j)) = y.col(support[j]);
      const Vector ws = hyperplane_least_squares(ys, b, total);
      if (ws.minCoeff() >= 0.0) {
        Vector cand = Vector::Zero(m);
        for (std::size_t j = 0; j < support.size(); ++j) cand[support[j]] = ws[static_cast<Eigen::Index>(j)];
        const double res = (y * cand - b).norm();
        if (res < best_res) {
          best_res = res;
          best = cand;
          w = cand;
        }
      }
    }
    const double res = (y * w - b).norm();
    if (res < best_res) {
      best_res = res;
      best = w;
    }
  }
  return best;
}

}  // namespace

std::optional<Vector> exact_coreset_weights(const GaussianLocationModel& model, std::span<const std::size_t> indices,
                                            const FeasibleRegion& region) {
  if (indices.empty()) return std::nullopt;
  const Matrix y = model.points(indices);
  const Vector& b = model.data_sum();
  const double total = static_cast<double>(model.size());
  const Vector w = region.has_nonnegativity() ? simplex_least_squares(y, b, total) : hyperplane_least_squares(y, b, total);
  const double residual = (y * w - b).norm();
  if (residual > 1e-6 * b.norm()) return std::nullopt;
  return w;
}

Vector analytic_gradient(const GaussianLocationModel& model, const Vector& w, std::span<const std::size_t> indices) {
  const auto post = model.exact_posterior(w, indices, /*allow_negative=*/true);
  const Matrix y = model.points(indices);
  const double n = static_cast<double>(model.size());
  const double d = static_cast<double>(model.dim());
  const double s2 = post.sigma2;
  // sum_j w_j (Y_j - mu) - sum_n (X_n - mu)
  const Vector diff = (y * w - w.sum() * post.mu_w) - (model.data_sum() - n * post.mu_w);
  const Matrix centered_y = y.colwise() - post.mu_w;
  return s2 * (centered_y.transpose() * diff) +
         Vector::Constant(w.size(), 0.5 * s2 * s2 * d * (w.sum() - n));
}

}  // namespace coreset
