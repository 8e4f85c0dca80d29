#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "coreset/coreset_state.hpp"
#include "coreset/model.hpp"

namespace coreset {

/// Mean and covariance of a set of draws (or of a known Gaussian).
struct MomentSummary {
  Vector mean;
  Matrix cov;
  std::size_t n = 0;

  /// Rows of `draws` are parameter vectors; covariance uses the n - 1
  /// denominator.
  static MomentSummary from_draws(const Matrix& draws);
};

/// One evaluation point of a run. Optional metrics are omitted from the
/// serialized record when absent.
struct MetricsRecord {
  std::uint64_t iteration = 0;
  double cost_proxy = 0.0;
  std::optional<double> exact_kl;
  std::optional<double> two_moment_kl;
  std::optional<double> min_ess_per_sec;
  std::optional<double> rel_mean_err;
  std::optional<double> rel_cov_err;
  double wall_clock = 0.0;  ///< seconds since the run started

  /// Deterministic fields only.
  nlohmann::json to_json() const;
  /// Wall-clock dependent fields (timing, ESS per second).
  nlohmann::json timing_json() const;
};

/// KL(N(mu0, cov0) || N(mu1, cov1)). Throws std::domain_error when a
/// covariance is not positive definite.
double gaussian_kl(const Vector& mu0, const Matrix& cov0, const Vector& mu1, const Matrix& cov1);

/// Exact KL(pi_w || pi) for the Gaussian location model. Uses
/// ||Yw - X1||^2 / (2(1 + N)) when |1'w - N| <= 1e-6 N, the general
/// closed form otherwise.
double gaussian_location_kl(const CoresetState& state, const GaussianLocationModel& model);

/// KL(N(hat) || N(ref)). A reference covariance that fails Cholesky is
/// regularized by 1e-10 trace/d I (same for hat) and `regularized` set.
double two_moment_kl(const MomentSummary& hat, const MomentSummary& ref, bool* regularized = nullptr);

/// Rank-normalized split-chain bulk effective sample size, capped at the
/// total draw count. Constant input yields the total count with
/// `constant` set.
double bulk_ess(const std::vector<std::vector<double>>& chains, bool* constant = nullptr);

/// min over coordinates of bulk_ess, divided by `sampling_seconds`.
/// `chains[k]` holds the draws of chain k as rows.
double min_ess_per_sec(const std::vector<Matrix>& chains, double sampling_seconds);

/// (||mu - mu_hat|| / ||mu||, ||cov - cov_hat||_F / ||cov||_F).
std::pair<double, double> relative_errors(const MomentSummary& hat, const MomentSummary& ref);

/// Approximate expected KL after t iterations on the Gaussian location model:
///   exp(-2c(t^a - 1)/a) N/(2M) + c(N-S)d(K+d)(1 + log t^(1-a)) / (4S(K-1)t^(1-a))
/// with c = gamma0 M / N the rate constant in units of N/M.
double heuristic_bound(double t, double alpha, double c, double n, double m, double s, double k, double d);

}  // namespace coreset
