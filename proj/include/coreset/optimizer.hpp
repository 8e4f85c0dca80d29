#pragma once

#include <cstdint>
#include <string_view>

#include "coreset/coreset_state.hpp"
#include "coreset/grad_estimator.hpp"

namespace coreset {

/// gamma_t = gamma0 * (t + 1)^(alpha - 1).
struct Schedule {
  double gamma0 = 1.0;
  double alpha = 1.0;

  double rate(std::uint64_t t) const;
};

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view name);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Thrown when a step sees a non-finite gradient or weights blow past the
/// divergence guard.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, std::size_t m, AdamParams params = {});

  OptimizerKind kind() const { return kind_; }
  std::uint64_t iteration() const { return t_; }
  const AdamParams& params() const { return params_; }
  const Vector& first_moment() const { return m_; }
  const Vector& second_moment() const { return v_; }

  /// w' = project(w - gamma_t * direction) where direction is g for SGD and
  /// the bias-corrected ADAM ratio otherwise. Advances the counter.
  Vector step(const Vector& w, const Vector& g, const Schedule& schedule, const FeasibleRegion& region);

  /// For checkpoint restore.
  void restore(std::uint64_t t, Vector first, Vector second);

  static constexpr double kDivergenceLimit = 1e12;

 private:
  OptimizerKind kind_ = OptimizerKind::sgd;
  AdamParams params_;
  std::uint64_t t_ = 0;
  Vector m_;
  Vector v_;
};

}  // namespace coreset
