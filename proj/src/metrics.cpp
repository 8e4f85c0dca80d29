#include "coreset/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

namespace coreset {

MomentSummary MomentSummary::from_draws(const Matrix& draws) {
  if (draws.rows() < 2) throw std::invalid_argument("moment summary needs at least two draws");
  MomentSummary s;
  s.n = static_cast<std::size_t>(draws.rows());
  s.mean = draws.colwise().mean().transpose();
  const Matrix centered = draws.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(draws.rows() - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  return s;
}

nlohmann::json MetricsRecord::to_json() const {
  nlohmann::json j;
  j["iteration"] = iteration;
  j["cost_proxy"] = cost_proxy;
  if (exact_kl) j["exact_kl"] = *exact_kl;
  if (two_moment_kl) j["two_moment_kl"] = *two_moment_kl;
  if (rel_mean_err) j["rel_mean_err"] = *rel_mean_err;
  if (rel_cov_err) j["rel_cov_err"] = *rel_cov_err;
  return j;
}

nlohmann::json MetricsRecord::timing_json() const {
  nlohmann::json j;
  j["iteration"] = iteration;
  j["wall_clock"] = wall_clock;
  if (min_ess_per_sec) j["min_ess_per_sec"] = *min_ess_per_sec;
  return j;
}

namespace {

double log_det(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace

double gaussian_kl(const Vector& mu0, const Matrix& cov0, const Vector& mu1, const Matrix& cov1) {
  const auto d = mu0.size();
  if (mu1.size() != d || cov0.rows() != d || cov1.rows() != d)
    throw std::invalid_argument("gaussian_kl: dimension mismatch");
  Eigen::LLT<Matrix> l1(cov1);
  Eigen::LLT<Matrix> l0(cov0);
  if (l1.info() != Eigen::Success || l0.info() != Eigen::Success)
    throw std::domain_error("gaussian_kl: covariance not positive definite");
  const Matrix inv_cov0 = l1.solve(cov0);
  const Vector diff = mu1 - mu0;
  const double quad = diff.dot(l1.solve(diff));
  return 0.5 * (inv_cov0.trace() - static_cast<double>(d) + quad + log_det(l1) - log_det(l0));
}

double gaussian_location_kl(const CoresetState& state, const GaussianLocationModel& model) {
  const Matrix y = model.points(state.indices);
  const double n = static_cast<double>(model.size());
  const double d = static_cast<double>(model.dim());
  const double wsum = state.w.sum();
  const Vector yw = y * state.w;
  if (std::abs(wsum - n) <= 1e-6 * n) return (yw - model.data_sum()).squaredNorm() / (2.0 * (1.0 + n));
  const double a = 1.0 + wsum;
  const double b = 1.0 + n;
  if (!(a > 0.0)) throw std::domain_error("gaussian_location_kl: 1 + sum(w) must be positive");
  const Vector mean_gap = yw / a - model.data_sum() / b;
  return 0.5 * (d * std::log(a / b) - d + d * b / a + b * mean_gap.squaredNorm());
}

double two_moment_kl(const MomentSummary& hat, const MomentSummary& ref, bool* regularized) {
  if (regularized) *regularized = false;
  auto regularize = [&](const Matrix& cov) {
    const auto d = static_cast<double>(cov.rows());
    const double bump = 1e-10 * std::max(cov.trace(), 1e-300) / d;
    if (regularized) *regularized = true;
    return Matrix(cov + bump * Matrix::Identity(cov.rows(), cov.cols()));
  };
  Matrix ref_cov = ref.cov;
  Matrix hat_cov = hat.cov;
  if (Eigen::LLT<Matrix>(ref_cov).info() != Eigen::Success) {
    ref_cov = regularize(ref_cov);
    if (Eigen::LLT<Matrix>(ref_cov).info() != Eigen::Success)
      throw std::domain_error("two_moment_kl: reference covariance is singular");
  }
  if (Eigen::LLT<Matrix>(hat_cov).info() != Eigen::Success) hat_cov = regularize(hat_cov);
  const double kl = gaussian_kl(hat.mean, hat_cov, ref.mean, ref_cov);
  return std::max(kl, 0.0);
}

namespace {

// Average ranks (1-based) of the pooled values, ties sharing their mean rank.
std::vector<double> average_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t q = i; q <= j; ++q) ranks[order[q]] = r;
    i = j + 1;
  }
  return ranks;
}

// ESS of equal-length chains with Geyer's initial monotone sequence.
double ess_of_chains(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  std::vector<double> means(m), acov0(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = std::accumulate(chains[c].begin(), chains[c].end(), 0.0) / static_cast<double>(n);
    double s = 0.0;
    for (double v : chains[c]) s += (v - means[c]) * (v - means[c]);
    acov0[c] = s / static_cast<double>(n);
  }
  auto mean_acov = [&](std::size_t lag) {
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      const auto& x = chains[c];
      for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - means[c]) * (x[i + lag] - means[c]);
      total += s / static_cast<double>(n);
    }
    return total / static_cast<double>(m);
  };

  const double nd = static_cast<double>(n);
  double mean_var = 0.0;
  for (double a : acov0) mean_var += a * nd / (nd - 1.0);
  mean_var /= static_cast<double>(m);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) {
    const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(m);
    double b = 0.0;
    for (double mu : means) b += (mu - grand) * (mu - grand);
    var_plus += b / static_cast<double>(m - 1);
  }
  auto rho = [&](std::size_t lag) { return 1.0 - (mean_var - mean_acov(lag)) / var_plus; };

  std::vector<double> rho_hat(n, 0.0);
  rho_hat[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = n > 1 ? rho(1) : 0.0;
  if (n > 1) rho_hat[1] = rho_odd;
  std::size_t t = 0;
  while (t + 5 < n && std::isfinite(rho_even + rho_odd) && rho_even + rho_odd > 0.0) {
    t += 2;
    rho_even = rho(t);
    rho_odd = rho(t + 1);
    if (rho_even + rho_odd >= 0.0) {
      rho_hat[t] = rho_even;
      rho_hat[t + 1] = rho_odd;
    }
  }
  const std::size_t max_t = t;
  if (rho_even > 0.0 && max_t < n) rho_hat[max_t] = rho_even;

  // Initial monotone sequence on the pair sums.
  t = 0;
  while (t + 4 <= max_t) {
    t += 2;
    const double prev = rho_hat[t - 2] + rho_hat[t - 1];
    if (rho_hat[t] + rho_hat[t + 1] > prev) {
      rho_hat[t] = 0.5 * prev;
      rho_hat[t + 1] = 0.5 * prev;
    }
  }
  const double total = static_cast<double>(m) * nd;
  double tau = -1.0;
  for (std::size_t i = 0; i < max_t; ++i) tau += 2.0 * rho_hat[i];
  tau += rho_hat[max_t];
  tau = std::max(tau, 1.0 / std::log10(total));
  return std::min(total / tau, total);
}

}  // namespace

double bulk_ess(const std::vector<std::vector<double>>& chains, bool* constant) {
  if (constant) *constant = false;
  if (chains.empty()) throw std::invalid_argument("bulk_ess: no chains");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw std::invalid_argument("bulk_ess: chains differ in length");
  if (n < 8) throw std::invalid_argument("bulk_ess: need at least 8 draws per chain");

  // Split each chain; the middle draw of an odd-length chain is dropped.
  const std::size_t half = n / 2;
  std::vector<std::vector<double>> split;
  for (const auto& c : chains) {
    split.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    split.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  std::vector<double> pooled;
  for (const auto& c : split) pooled.insert(pooled.end(), c.begin(), c.end());
  const double total_all = static_cast<double>(chains.size() * n);
  if (std::all_of(pooled.begin(), pooled.end(), [&](double v) { return v == pooled.front(); })) {
    if (constant) *constant = true;
    return total_all;
  }

  const auto ranks = average_ranks(pooled);
  const boost::math::normal standard;
  const double denom = static_cast<double>(pooled.size()) + 0.25;
  std::size_t pos = 0;
  for (auto& c : split)
    for (auto& v : c) v = boost::math::quantile(standard, (ranks[pos++] - 0.375) / denom);
  return std::min(ess_of_chains(split), total_all);
}

double min_ess_per_sec(const std::vector<Matrix>& chains, double sampling_seconds) {
  if (!(sampling_seconds > 0.0)) throw std::invalid_argument("min_ess_per_sec: sampling time must be positive");
  if (chains.empty()) throw std::invalid_argument("min_ess_per_sec: no chains");
  const auto d = chains.front().cols();
  // Round-robin sampling can leave chains one draw apart; use the common length.
  Eigen::Index len = chains.front().rows();
  for (const auto& c : chains) len = std::min(len, c.rows());
  double best = INFINITY;
  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<std::vector<double>> per_chain;
    for (const auto& c : chains) per_chain.emplace_back(c.col(j).begin(), c.col(j).begin() + len);
    best = std::min(best, bulk_ess(per_chain));
  }
  return best / sampling_seconds;
}

std::pair<double, double> relative_errors(const MomentSummary& hat, const MomentSummary& ref) {
  const double mean_norm = ref.mean.norm();
  const double cov_norm = ref.cov.norm();
  if (!(mean_norm > 0.0) || !(cov_norm > 0.0)) throw std::domain_error("relative_errors: zero reference norm");
  return {(ref.mean - hat.mean).norm() / mean_norm, (ref.cov - hat.cov).norm() / cov_norm};
}

double heuristic_bound(double t, double alpha, double c, double n, double m, double s, double k, double d) {
  if (t < 1.0 || k < 2.0 || s < 1.0 || s > n || !(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("heuristic_bound: parameters out of range");
  const double decay = std::exp(-2.0 * c * (std::pow(t, alpha) - 1.0) / alpha) * n / (2.0 * m);
  const double t_pow = std::pow(t, 1.0 - alpha);
  const double noise = c * (n - s) * d * (k + d) * (1.0 + std::log(t_pow)) / (4.0 * s * (k - 1.0) * t_pow);
  return decay + noise;
}

}  // namespace coreset
