#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coreset/metrics.hpp"
#include "coreset/trainer.hpp"

namespace coreset {

/// Raised for malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataSource {
  ModelKind kind = ModelKind::gaussian_location;
  std::optional<std::filesystem::path> csv;
  std::string response_column = "y";
  std::size_t n = 10000;  ///< synthetic only
  std::size_t p = 20;
  std::uint64_t seed = 2024;
};

struct ReferenceSpec {
  std::size_t n_draws = 20000;
  std::uint64_t burn_in = 1000;
  std::size_t chains = 2;
  std::uint64_t seed = 77;
};

struct SweepSpec {
  std::string var;  ///< empty for a single configuration
  std::vector<double> values;
};

struct ExperimentSpec {
  std::string name = "experiment";
  DataSource data;
  TrainConfig train;
  /// gamma0 = step_scale * N / M unless an explicit gamma0 was given.
  double step_scale = 0.1;
  std::optional<double> gamma0;
  std::optional<double> alpha;  ///< default: 1 with full data, 0.5 when subsampling
  std::size_t n_draws = 0;      ///< post-training draws per replicate (0 skips sampling)
  std::size_t thinning = 1;
  std::optional<std::uint64_t> baseline_burn_in;  ///< default: n_draws / K
  ReferenceSpec reference;
  SweepSpec sweep;
  bool include_baseline = false;
  std::size_t replicates = 1;
  std::uint64_t seed = 1;  ///< replicate r uses seed + r
  std::filesystem::path out_dir = "out";
  std::optional<std::filesystem::path> resume_from;

  /// Config for one sweep point and replicate, with data-dependent defaults
  /// filled in. Throws ConfigError for an unknown sweep variable.
  TrainConfig resolve(std::size_t n, std::optional<double> sweep_value, std::size_t replicate) const;
};

/// Parses a JSON experiment file. Unknown keys are rejected.
ExperimentSpec parse_experiment(const nlohmann::json& config);
ExperimentSpec load_experiment(const std::filesystem::path& path);

Dataset load_data(const DataSource& source);

enum class Method { coreset_mcmc, unif };
std::string_view to_string(Method method);

struct ReplicateResult {
  Method method = Method::coreset_mcmc;
  std::optional<double> sweep_value;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> records;  ///< the last one carries the sampling metrics
  CoresetState state;
  std::optional<std::string> error;
  nlohmann::json checkpoint;  ///< trainer state at the end of adaptation
};

/// Reference posterior moments: analytic for the Gaussian location model,
/// otherwise a long full-data slice-sampling run.
MomentSummary reference_moments(const Model& model, const ReferenceSpec& spec, KernelFamily kernel);

struct ExperimentOutcome {
  std::vector<ReplicateResult> runs;
  bool any_failure() const;
};

/// Trains (or, for Unif, only burns in) and samples every replicate of every
/// sweep point. Replicates run concurrently; failures are recorded per run.
ExperimentOutcome run_experiment(const ExperimentSpec& spec, const Model& model, Method method,
                                 const std::optional<MomentSummary>& reference);
ExperimentOutcome run_unif_baseline(const ExperimentSpec& spec, const Model& model,
                                    const std::optional<MomentSummary>& reference);

/// Deterministic JSON-lines records, one per metrics record (plus one per
/// failed run). Wall-clock quantities go to `timing_lines`.
std::vector<nlohmann::json> record_lines(const ExperimentOutcome& outcome, const std::string& sweep_var);
std::vector<nlohmann::json> timing_lines(const ExperimentOutcome& outcome, const std::string& sweep_var);

struct SummaryRow {
  std::string method;
  std::string sweep_var;
  std::optional<double> sweep_value;
  std::uint64_t iteration = 0;
  double cost_proxy = 0.0;
  std::string metric_name;
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
};

/// Percentiles (linear interpolation between order statistics) of every
/// metric present, grouped by method, sweep point and iteration. Metrics
/// absent from a record contribute nothing.
std::vector<SummaryRow> emit_plot_data(const std::vector<nlohmann::json>& records);
void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path);
double percentile(std::vector<double> values, double q);

void write_jsonl(const std::vector<nlohmann::json>& lines, const std::filesystem::path& path);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

}  // namespace coreset
