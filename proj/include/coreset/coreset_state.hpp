#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "coreset/model.hpp"

namespace coreset {

enum class RegionKind {
  nonneg,         ///< {w : w >= 0}
  simplex_sum_N,  ///< {w : w >= 0, 1'w = total}
  sum_N,          ///< {w : 1'w = total}
};

std::string_view to_string(RegionKind kind);
RegionKind parse_region_kind(std::string_view name);

class FeasibleRegion {
 public:
  /// `total` must be positive for the sum-constrained kinds.
  FeasibleRegion(RegionKind kind, double total);

  RegionKind kind() const { return kind_; }
  double total() const { return total_; }
  bool has_sum_constraint() const { return kind_ != RegionKind::nonneg; }
  bool has_nonnegativity() const { return kind_ != RegionKind::sum_N; }

  /// w >= -1e-12 elementwise (when applicable) and |1'w - total| <= 1e-9 total.
  bool contains(const Vector& w) const;

 private:
  RegionKind kind_;
  double total_;
};

/// Euclidean projection onto the region. The simplex case uses the
/// sort-and-threshold rule and runs in O(M log M).
Vector project(const Vector& w, const FeasibleRegion& region);

struct CoresetState {
  std::vector<std::size_t> indices;
  Vector w;
  FeasibleRegion region{RegionKind::nonneg, 1.0};

  std::size_t size() const { return indices.size(); }
  /// Throws std::invalid_argument when an invariant fails.
  void validate(std::size_t n_data) const;
};

/// M distinct indices drawn uniformly without replacement from [0, N) by a
/// partial Fisher-Yates shuffle. With `labels`, the rare class is included
/// entirely when M >= 2 * (rare count), otherwise the coreset is split 50/50.
std::vector<std::size_t> select_points(std::size_t n, std::size_t m, std::uint64_t seed,
                                       std::optional<std::span<const int>> labels = std::nullopt);

/// Every entry N / M.
Vector init_weights(std::size_t m, std::size_t n);

/// sum_m w_m log_lik(indices[m], theta) + log_prior(theta).
double coreset_log_density(const CoresetState& state, const Model& model, const Vector& theta);

void write_weights_csv(const CoresetState& state, const std::filesystem::path& path);
/// Reads (index, weight) rows written by write_weights_csv.
CoresetState read_weights_csv(const std::filesystem::path& path, const FeasibleRegion& region);

}  // namespace coreset
