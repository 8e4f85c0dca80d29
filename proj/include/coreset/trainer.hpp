#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coreset/coreset_state.hpp"
#include "coreset/grad_estimator.hpp"
#include "coreset/kernels.hpp"
#include "coreset/metrics.hpp"
#include "coreset/optimizer.hpp"

namespace coreset {

struct TrainConfig {
  std::uint64_t T = 0;         ///< adaptation iterations
  std::size_t K = 20;          ///< chains
  std::size_t S = 0;           ///< subsample size; 0 means the full data
  std::size_t M = 30;          ///< coreset size
  std::uint64_t burn_in = 100; ///< kernel-only iterations before adaptation
  Schedule schedule;
  OptimizerKind optimizer = OptimizerKind::sgd;
  AdamParams adam;
  KernelFamily kernel;
  RegionKind region = RegionKind::nonneg;
  std::uint64_t seed = 1;
  bool stratify = false;             ///< balance classes when selecting (logistic data)
  std::uint64_t metric_every = 10;   ///< 0 disables intermediate records
  std::uint64_t trajectory_stride = 0;  ///< 0 means max(1, T / 1000)

  std::size_t subsample_size(std::size_t n) const { return S == 0 ? n : S; }
  std::uint64_t stride() const { return trajectory_stride > 0 ? trajectory_stride : std::max<std::uint64_t>(1, T / 1000); }
  /// Throws std::invalid_argument unless K >= 2, 1 <= S <= N, 1 <= M <= N.
  void validate(std::size_t n) const;
};

/// (M + S) log(K) t.
double cost_proxy(const TrainConfig& config, std::size_t n, std::uint64_t t);

struct TrainResult {
  CoresetState state;
  std::vector<std::uint64_t> trajectory_iterations;
  std::vector<Vector> trajectory;
  std::vector<MetricsRecord> records;
  ChainEnsemble chains;
  KernelFamily kernel;
  KernelStats kernel_stats;
  std::uint64_t iterations = 0;
  double train_seconds = 0.0;
  /// Set when a divergence or kernel failure stopped the run early.
  std::optional<std::string> error;
};

/// Interleaves stochastic weight updates with one ensemble kernel step per
/// iteration. Single owner of the weights and optimizer state; chains fan
/// out across threads within the kernel phase only.
class Trainer {
 public:
  Trainer(TrainConfig config, std::shared_ptr<const Model> model);

  /// Runs whatever burn-in remains.
  void burn_in();
  /// Runs up to `count` adaptation iterations (never past T). Throws
  /// DivergenceError / KernelError; the state stays at the last good
  /// iteration.
  void iterate(std::uint64_t count);
  /// burn_in() then iterate to T, converting failures into result().error.
  void run();

  std::uint64_t iteration() const { return iteration_; }
  std::uint64_t burn_in_done() const { return burn_in_done_; }
  const CoresetState& state() const { return state_; }
  const ChainEnsemble& chains() const { return chains_; }
  const TrainConfig& config() const { return config_; }
  const Model& model() const { return *model_; }

  TrainResult result() const;

  nlohmann::json checkpoint() const;
  /// Rebuilds a trainer from a checkpoint taken under the same config and
  /// model; continuing it reproduces the uninterrupted run bitwise.
  static Trainer restore(TrainConfig config, std::shared_ptr<const Model> model, const nlohmann::json& checkpoint);

 private:
  void step_once();
  void record(bool force);
  double elapsed() const;

  TrainConfig config_;
  std::shared_ptr<const Model> model_;
  const GaussianLocationModel* gaussian_ = nullptr;
  CoresetState state_;
  Optimizer optimizer_;
  ChainEnsemble chains_;
  Rng control_rng_;
  std::uint64_t iteration_ = 0;
  std::uint64_t burn_in_done_ = 0;
  KernelStats kernel_stats_;

  std::vector<std::uint64_t> trajectory_iterations_;
  std::vector<Vector> trajectory_;
  std::vector<MetricsRecord> records_;
  std::optional<std::string> error_;
  double accumulated_seconds_ = 0.0;
};

TrainResult train(const TrainConfig& config, std::shared_ptr<const Model> model);

struct SampleSet {
  Matrix draws;                 ///< n_draws x dim, round-robin over chains
  std::vector<Matrix> per_chain;
  std::uint64_t kernel_steps = 0;
  double seconds = 0.0;
};

/// Freezes the weights and keeps running the chains: draw i comes from
/// chain i mod K after `thinning` further kernel steps on that chain.
SampleSet sample_after_training(const TrainResult& result, const Model& model, std::size_t n_draws,
                                std::size_t thinning = 1);

}  // namespace coreset
