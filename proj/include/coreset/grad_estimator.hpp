#pragma once

#include <optional>
#include <span>
#include <vector>

#include "coreset/coreset_state.hpp"
#include "coreset/model.hpp"
#include "coreset/random.hpp"

namespace coreset {

/// Log-likelihoods centered across the K chain states:
/// lbar_n(theta_k) = l_n(theta_k) - (1/K) sum_j l_n(theta_j).
struct CenteredLogLik {
  Matrix coreset_block;  ///< M x K
  Matrix data_block;     ///< S x K; empty when only column sums were formed
  Vector data_sums;      ///< K column sums of the centered data block

  std::size_t chains() const { return static_cast<std::size_t>(coreset_block.cols()); }
  bool has_data_block() const { return data_block.size() > 0; }
};

struct GradientEstimate {
  Vector g;
  std::size_t subsample_size = 0;
  std::size_t chains = 0;
  double seconds = 0.0;
};

/// Builds both blocks by evaluating every (observation, chain) pair.
/// Throws std::invalid_argument when fewer than two states are given.
/// Evaluations run in parallel; the result does not depend on the thread
/// count.
CenteredLogLik center_logliks(const Model& model, std::span<const std::size_t> coreset_indices,
                              std::span<const std::size_t> subsample_indices, std::span<const Vector> thetas);
/// Single-threaded reference for center_logliks.
CenteredLogLik center_logliks_serial(const Model& model, std::span<const std::size_t> coreset_indices,
                                     std::span<const std::size_t> subsample_indices, std::span<const Vector> thetas);

/// S = N variant that never materializes the N x K data block; only its
/// centered column sums. Sums are formed over fixed 4096-row blocks and
/// combined in block order.
CenteredLogLik center_logliks_full_data(const Model& model, std::span<const std::size_t> coreset_indices,
                                        std::span<const Vector> thetas);

/// S distinct indices uniform on [0, N) (Floyd's sampling without
/// replacement). S = N returns 0..N-1 in order.
std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t s, Rng& rng);

/// g = 1/(K-1) sum_k a_k (w'a_k - (N/S) sum_s lbar_s(theta_k)), with a_k the
/// k-th column of the coreset block. Chains are reduced in index order.
GradientEstimate estimate_gradient(const Vector& w, const CenteredLogLik& centered, std::size_t n, std::size_t s);

/// G = A A' / (K-1) for the coreset block A.
Matrix gram_matrix(const CenteredLogLik& centered);

/// Subsampling noise V_t; needs the data block over all N observations.
double subnoise_diagnostic(const CenteredLogLik& centered);

/// Weights w* with Yw* = X1 and 1'w* = N (the exact coreset of the Gaussian
/// location model), searched over region and the sum constraint. Returns
/// nullopt when the best residual ||Yw - X1|| exceeds 1e-6 ||X1||. On the
/// hyperplane region the solution closest to the uniform N/M weights is
/// returned.
std::optional<Vector> exact_coreset_weights(const GaussianLocationModel& model,
                                            std::span<const std::size_t> indices, const FeasibleRegion& region);

/// Cov_{pi_w}(l_m, sum_j w_j l_j - sum_n l_n) in closed form.
Vector analytic_gradient(const GaussianLocationModel& model, const Vector& w, std::span<const std::size_t> indices);

}  // namespace coreset
