#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "coreset/coreset_state.hpp"
#include "coreset/model.hpp"
#include "coreset/random.hpp"

namespace coreset {

enum class KernelKind { hit_and_run_slice, coord_slice, gaussian_ar, rwmh };

std::string_view to_string(KernelKind kind);
KernelKind parse_kernel_kind(std::string_view name);

struct KernelFamily {
  KernelKind kind = KernelKind::hit_and_run_slice;
  double init_width = 2.0;
  int max_doublings = 10;
  double beta = 0.8;            // gaussian_ar
  double proposal_scale = 0.1;  // rwmh
  int steps_per_update = 1;
};

struct KernelStats {
  std::uint64_t steps = 0;
  std::uint64_t density_evals = 0;
  std::uint64_t doublings_exhausted = 0;
  std::uint64_t accepted = 0;  // rwmh

  KernelStats& operator+=(const KernelStats& o) {
    steps += o.steps;
    density_evals += o.density_evals;
    doublings_exhausted += o.doublings_exhausted;
    accepted += o.accepted;
    return *this;
  }
};

class KernelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The coreset posterior at frozen weights, as seen by a kernel.
class CoresetTarget {
 public:
  CoresetTarget(const CoresetState& state, const Model& model);

  double log_density(const Vector& theta) const;
  const Model& model() const { return model_; }
  const CoresetState& state() const { return state_; }
  /// Present for the Gaussian location model.
  const std::optional<GaussianLocationPosterior>& gaussian_posterior() const { return posterior_; }

 private:
  const CoresetState& state_;
  const Model& model_;
  std::optional<GaussianLocationPosterior> posterior_;
};

namespace detail {

inline double finite_or_neg_inf(double v) { return std::isnan(v) ? -INFINITY : v; }

// Doubling-procedure acceptance test: reject x1 when the doubling from x1
// could not have produced the interval [left, right].
template <class LogF>
bool doubling_accepts(LogF& logf, double x0, double x1, double log_level, double left, double right,
                      double f_left, double f_right, double width, KernelStats* stats) {
  bool differ = false;
  while (right - left > 1.1 * width) {
    const double mid = 0.5 * (left + right);
    if ((x0 < mid && x1 >= mid) || (x0 >= mid && x1 < mid)) differ = true;
    const double f_mid = finite_or_neg_inf(logf(mid));
    if (stats) ++stats->density_evals;
    if (x1 < mid) {
      right = mid;
      f_right = f_mid;
    } else {
      left = mid;
      f_left = f_mid;
    }
    if (differ && f_left < log_level && f_right < log_level) return false;
  }
  return true;
}

}  // namespace detail

/// One univariate slice-sampling update with the doubling procedure and
/// shrinkage, at the given slice level. Points with logf >= log_level are
/// inside the slice. Requires logf(x0) >= log_level.
template <class LogF>
double slice_step_1d(LogF&& logf, double x0, double log_level, double width, int max_doublings, Rng& rng,
                     KernelStats* stats = nullptr) {
  if (!(width > 0.0)) throw std::invalid_argument("slice width must be positive");
  double left = x0 - width * rng.uniform();
  double right = left + width;
  double f_left = detail::finite_or_neg_inf(logf(left));
  double f_right = detail::finite_or_neg_inf(logf(right));
  if (stats) stats->density_evals += 2;
  int budget = max_doublings;
  while (budget > 0 && (f_left >= log_level || f_right >= log_level)) {
    if (rng.uniform() < 0.5) {
      left -= right - left;
      f_left = detail::finite_or_neg_inf(logf(left));
    } else {
      right += right - left;
      f_right = detail::finite_or_neg_inf(logf(right));
    }
    if (stats) ++stats->density_evals;
    --budget;
  }
  if (stats && (f_left >= log_level || f_right >= log_level)) ++stats->doublings_exhausted;

  double lo = left;
  double hi = right;
  const double floor_width = 1e-14 * std::max(1.0, std::abs(x0));
  while (true) {
    const double x1 = lo + rng.uniform() * (hi - lo);
    const double f1 = detail::finite_or_neg_inf(logf(x1));
    if (stats) ++stats->density_evals;
    if (f1 >= log_level &&
        detail::doubling_accepts(logf, x0, x1, log_level, left, right, f_left, f_right, width, stats)) {
      assert(logf(x1) >= log_level);
      return x1;
    }
    if (x1 < x0)
      lo = x1;
    else
      hi = x1;
    // The slice has collapsed onto x0 (level at the supremum).
    if (hi - lo <= floor_width) return x0;
  }
}

/// Draws the level logf(x0) - Exp(1), then steps.
template <class LogF>
double slice_step_1d(LogF&& logf, double x0, double width, int max_doublings, Rng& rng,
                     KernelStats* stats = nullptr) {
  const double f0 = logf(x0);
  if (stats) ++stats->density_evals;
  if (!std::isfinite(f0)) throw KernelError("slice sampler started at a point with non-finite log-density");
  const double level = f0 - rng.exponential();
  return slice_step_1d(logf, x0, level, width, max_doublings, rng, stats);
}

/// Uniform direction on the unit sphere in R^d.
Vector random_direction(std::size_t d, Rng& rng);

Vector hit_and_run_step(const CoresetTarget& target, const Vector& theta, const KernelFamily& kernel, Rng& rng,
                        KernelStats* stats = nullptr);
/// One sweep of univariate slice updates over the coordinates in order.
Vector coord_slice_step(const CoresetTarget& target, const Vector& theta, const KernelFamily& kernel, Rng& rng,
                        KernelStats* stats = nullptr);
/// theta' = mu_w + sqrt(beta)(theta - mu_w) + sqrt((1 - beta) sigma^2) eps.
Vector gaussian_ar_step(const CoresetTarget& target, const Vector& theta, const KernelFamily& kernel, Rng& rng,
                        KernelStats* stats = nullptr);
Vector rwmh_step(const CoresetTarget& target, const Vector& theta, const KernelFamily& kernel, Rng& rng,
                 KernelStats* stats = nullptr);

/// One transition of the selected kernel targeting the coreset posterior.
Vector kernel_step(const KernelFamily& kernel, const CoresetTarget& target, const Vector& theta, Rng& rng,
                   KernelStats* stats = nullptr);
Vector kernel_step(const KernelFamily& kernel, const CoresetState& state, const Model& model, const Vector& theta,
                   Rng& rng);

/// K chain states, each with its own random stream.
struct ChainEnsemble {
  std::vector<Vector> states;
  std::vector<Rng> rngs;

  std::size_t size() const { return states.size(); }

  /// Chain k starts at an iid N(0, I) draw from stream (seed, k + 1).
  static ChainEnsemble initialize(std::size_t k, std::size_t dim, std::uint64_t seed);
};

/// Advances every chain by kernel.steps_per_update transitions, chains in
/// parallel. The outcome is identical to ensemble_step_serial. A failing
/// chain aborts the step: the lowest-index error is rethrown after all
/// chains finish.
KernelStats ensemble_step(const KernelFamily& kernel, const CoresetTarget& target, ChainEnsemble& ensemble);
KernelStats ensemble_step_serial(const KernelFamily& kernel, const CoresetTarget& target, ChainEnsemble& ensemble);

}  // namespace coreset
