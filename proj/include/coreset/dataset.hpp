#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace coreset {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ModelKind { gaussian_location, linear_reg, logistic_reg, poisson_reg };

std::string_view to_string(ModelKind kind);
/// Throws std::invalid_argument for an unknown name.
ModelKind parse_model_kind(std::string_view name);

/// N observations. Row n of `features` is x_n (or X_n for the Gaussian
/// location model, where `responses` is all zeros and unused).
struct Dataset {
  ModelKind kind = ModelKind::gaussian_location;
  Matrix features;
  Vector responses;
  std::vector<std::string> feature_names;
  /// Parameter the synthetic generator drew the data from, if any.
  std::optional<Vector> ground_truth;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t num_features() const { return static_cast<std::size_t>(features.cols()); }

  /// Binary labels for stratified coreset selection (logistic data only).
  std::vector<int> class_labels() const;

  /// Throws std::invalid_argument when an invariant fails: N >= 1, finite
  /// rows, responses in the model's domain.
  void validate() const;
};

/// Parameter dimension of `kind` for p features.
std::size_t parameter_dim(ModelKind kind, std::size_t p);

/// Deterministic synthetic data. Gaussian location: theta* ~ N(0, I_p),
/// X_n ~ N(theta*, I). Regression kinds: x_n ~ N(0, I_p), ground-truth
/// coefficients ~ N(0, 1) (linear regression also gets log sigma^2 = 0), and
/// responses drawn from the model.
Dataset generate_synthetic(ModelKind kind, std::size_t n, std::size_t p, std::uint64_t seed);

struct CsvSchema {
  ModelKind kind = ModelKind::linear_reg;
  std::string response_column = "y";
};

/// Header row required. The response column may be omitted only for the
/// Gaussian location model. Throws std::runtime_error on parse failures,
/// non-finite cells, or response domain violations.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Writes features then `y`, each value in shortest round-trip form.
void write_csv(const Dataset& data, const std::filesystem::path& path);

/// One JSON line describing the generator's ground truth.
std::string ground_truth_jsonl(const Dataset& data, std::uint64_t seed);

}  // namespace coreset
