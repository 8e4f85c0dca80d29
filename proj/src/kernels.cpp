#include "coreset/kernels.hpp"

#include <exception>
#include <string>

namespace coreset {

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::hit_and_run_slice: return "hit_and_run_slice";
    case KernelKind::coord_slice: return "coord_slice";
    case KernelKind::gaussian_ar: return "gaussian_ar";
    case KernelKind::rwmh: return "rwmh";
  }
  return "unknown";
}

KernelKind parse_kernel_kind(std::string_view name) {
  if (name == "hit_and_run_slice" || name == "hit_and_run") return KernelKind::hit_and_run_slice;
  if (name == "coord_slice") return KernelKind::coord_slice;
  if (name == "gaussian_ar") return KernelKind::gaussian_ar;
  if (name == "rwmh") return KernelKind::rwmh;
  throw std::invalid_argument("unknown kernel kind: " + std::string(name));
}

CoresetTarget::CoresetTarget(const CoresetState& state, const Model& model) : state_(state), model_(model) {
  if (const auto* gl = dynamic_cast<const GaussianLocationModel*>(&model)) {
    posterior_ = gl->exact_posterior(state.w, state.indices, /*allow_negative=*/true);
  }
}

double CoresetTarget::log_density(const Vector& theta) const { return coreset_log_density(state_, model_, theta); }

Vector random_direction(std::size_t d, Rng& rng) {
  Vector dir(static_cast<Eigen::Index>(d));
  double norm = 0.0;
  do {
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = rng.normal();
    norm = dir.norm();
  } while (norm == 0.0);
  return dir / norm;
}

namespace {

void require_finite_state(const Vector& theta) {
  if (!theta.allFinite()) throw KernelError("chain state is not finite");
}

}  // namespace

Vector hit_and_run_step(const CoresetTarget& target, const Vector& theta, const KernelFamily& kernel, Rng& rng,
                        KernelStats* stats) {
  require_finite_state(theta);
  const Vector dir = random_direction(static_cast<std::size_t>(theta.size()), rng);
  Vector point(theta.size());
  auto along = [&](double s) {
    point = theta + s * dir;
    return target.log_density(point);
  };
  const double s = slice_step_1d(along, 0.0, kernel.init_width, kernel.max_doublings, rng, stats);
  if (stats) ++stats->steps;
  return theta + s * dir;
}

Vector coord_slice_step(const CoresetTarget& target, const Vector& theta, const KernelFamily& kernel, Rng& rng,
                        KernelStats* stats) {
  require_finite_state(theta);
  Vector current = theta;
  Vector point = theta;
  for (Eigen::Index i = 0; i < current.size(); ++i) {
    point = current;
    auto along = [&](double x) {
      point[i] = x;
      return target.log_density(point);
    };
    current[i] = slice_step_1d(along, current[i], kernel.init_width, kernel.max_doublings, rng, stats);
  }
  if (stats) ++stats->steps;
  return current;
}

Vector gaussian_ar_step(const CoresetTarget& target, const Vector& theta, const KernelFamily& kernel, Rng& rng,
                        KernelStats* stats) {
  const auto& post = target.gaussian_posterior();
  if (!post) throw std::invalid_argument("gaussian_ar kernel requires the Gaussian location model");
  if (!(kernel.beta >= 0.0 && kernel.beta <= 1.0)) throw std::invalid_argument("gaussian_ar beta must lie in [0, 1]");
  if (stats) ++stats->steps;
  if (kernel.beta == 1.0) return theta;
  const double keep = std::sqrt(kernel.beta);
  const double noise = std::sqrt((1.0 - kernel.beta) * post->sigma2);
  Vector next(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    next[i] = post->mu_w[i] + keep * (theta[i] - post->mu_w[i]) + noise * rng.normal();
  return next;
}

Vector rwmh_step(const CoresetTarget& target, const Vector& theta, const KernelFamily& kernel, Rng& rng,
                 KernelStats* stats) {
  const double current = target.log_density(theta);
  if (!std::isfinite(current)) throw KernelError("random-walk Metropolis started at non-finite log-density");
  Vector proposal(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) proposal[i] = theta[i] + kernel.proposal_scale * rng.normal();
  const double candidate = target.log_density(proposal);
  if (stats) {
    stats->density_evals += 2;
    ++stats->steps;
  }
  if (std::log(rng.uniform_open0()) < candidate - current) {
    if (stats) ++stats->accepted;
    return proposal;
  }
  return theta;
}

Vector kernel_step(const KernelFamily& kernel, const CoresetTarget& target, const Vector& theta, Rng& rng,
                   KernelStats* stats) {
  switch (kernel.kind) {
    case KernelKind::hit_and_run_slice: return hit_and_run_step(target, theta, kernel, rng, stats);
    case KernelKind::coord_slice: return coord_slice_step(target, theta, kernel, rng, stats);
    case KernelKind::gaussian_ar: return gaussian_ar_step(target, theta, kernel, rng, stats);
    case KernelKind::rwmh: return rwmh_step(target, theta, kernel, rng, stats);
  }
  throw std::invalid_argument("unknown kernel kind");
}

Vector kernel_step(const KernelFamily& kernel, const CoresetState& state, const Model& model, const Vector& theta,
                   Rng& rng) {
  const CoresetTarget target(state, model);
  return kernel_step(kernel, target, theta, rng);
}

ChainEnsemble ChainEnsemble::initialize(std::size_t k, std::size_t dim, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("chain ensemble needs K >= 2");
  ChainEnsemble ens;
  ens.states.reserve(k);
  ens.rngs.reserve(k);
  for (std::size_t c = 0; c < k; ++c) {
    Rng rng = Rng::stream(seed, c + 1);
    Vector theta(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = rng.normal();
    ens.states.push_back(std::move(theta));
    ens.rngs.push_back(std::move(rng));
  }
  return ens;
}

namespace {

void advance_chain(const KernelFamily& kernel, const CoresetTarget& target, ChainEnsemble& ensemble, std::size_t k,
                   KernelStats& stats) {
  for (int s = 0; s < kernel.steps_per_update; ++s)
    ensemble.states[k] = kernel_step(kernel, target, ensemble.states[k], ensemble.rngs[k], &stats);
}

void check_ensemble(const ChainEnsemble& ensemble) {
  if (ensemble.states.size() != ensemble.rngs.size())
    throw std::invalid_argument("chain ensemble has mismatched states and streams");
  if (ensemble.size() < 2) throw std::invalid_argument("chain ensemble needs K >= 2");
}

}  // namespace

KernelStats ensemble_step(const KernelFamily& kernel, const CoresetTarget& target, ChainEnsemble& ensemble) {
  check_ensemble(ensemble);
  const auto k_total = static_cast<std::ptrdiff_t>(ensemble.size());
  std::vector<KernelStats> per_chain(ensemble.size());
  std::vector<std::exception_ptr> errors(ensemble.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < k_total; ++k) {
    try {
      advance_chain(kernel, target, ensemble, static_cast<std::size_t>(k), per_chain[static_cast<std::size_t>(k)]);
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  }
  KernelStats total;
  for (std::size_t k = 0; k < ensemble.size(); ++k) {
    if (errors[k]) std::rethrow_exception(errors[k]);
    total += per_chain[k];
  }
  return total;
}

KernelStats ensemble_step_serial(const KernelFamily& kernel, const CoresetTarget& target, ChainEnsemble& ensemble) {
  check_ensemble(ensemble);
  KernelStats total;
  for (std::size_t k = 0; k < ensemble.size(); ++k) {
    KernelStats stats;
    advance_chain(kernel, target, ensemble, k, stats);
    total += stats;
  }
  return total;
}

}  // namespace coreset
