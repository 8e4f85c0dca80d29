#pragma once

#include <memory>
#include <span>

#include "coreset/dataset.hpp"

namespace coreset {

/// Black-box Bayesian model: a prior and one log-likelihood term per datum.
///
/// Observation indices are 0-based. Per-datum log-likelihoods include their
/// normalizing constants. Instances are immutable after construction and safe
/// to evaluate from many threads at once.
class Model {
 public:
  explicit Model(Dataset data);
  virtual ~Model() = default;

  virtual ModelKind kind() const = 0;
  virtual std::size_t dim() const = 0;

  std::size_t size() const { return data_.size(); }
  const Dataset& data() const { return data_; }

  /// Throws std::out_of_range / std::invalid_argument on a bad index or
  /// parameter length.
  double log_lik(std::size_t n, const Vector& theta) const;
  double log_prior(const Vector& theta) const;

  /// Unchecked variant for inner loops that validated the inputs already.
  double log_lik_unchecked(std::size_t n, const Vector& theta) const { return do_log_lik(n, theta); }

  /// Sum of log_lik over observations [first, last), compensated.
  virtual double sum_log_lik(const Vector& theta, std::size_t first, std::size_t last) const;
  double sum_log_lik(const Vector& theta) const { return sum_log_lik(theta, 0, size()); }

  /// True when the full-range sum is O(dim) (sufficient statistics), so
  /// callers should not split it into blocks.
  virtual bool closed_form_full_sum() const { return false; }

 protected:
  virtual double do_log_lik(std::size_t n, const Vector& theta) const = 0;
  virtual double do_log_prior(const Vector& theta) const = 0;

  void check_theta(const Vector& theta) const;

  Dataset data_;
};

/// Closed-form coreset posterior of the Gaussian location model.
struct GaussianLocationPosterior {
  Vector mu_w;
  double sigma2 = 1.0;
};

/// theta ~ N(0, I_d), X_n ~ N(theta, I_d).
class GaussianLocationModel final : public Model {
 public:
  explicit GaussianLocationModel(Dataset data);

  ModelKind kind() const override { return ModelKind::gaussian_location; }
  std::size_t dim() const override { return static_cast<std::size_t>(data_.features.cols()); }

  /// Full-range sums use the sufficient statistics X1 and sum ||X_n||^2.
  double sum_log_lik(const Vector& theta, std::size_t first, std::size_t last) const override;
  using Model::sum_log_lik;
  bool closed_form_full_sum() const override { return true; }

  /// X1 = sum_n X_n.
  const Vector& data_sum() const { return data_sum_; }
  /// Column m is X_{indices[m]}.
  Matrix points(std::span<const std::size_t> indices) const;

  /// Coreset posterior for weights w over `indices`. Throws
  /// std::invalid_argument for negative weights unless `allow_negative`
  /// (hyperplane-constrained weights) and 1 + sum(w) <= 0.
  GaussianLocationPosterior exact_posterior(const Vector& w, std::span<const std::size_t> indices,
                                            bool allow_negative = false) const;
  GaussianLocationPosterior full_posterior() const;

 protected:
  double do_log_lik(std::size_t n, const Vector& theta) const override;
  double do_log_prior(const Vector& theta) const override;

 private:
  Vector data_sum_;
  double data_sq_norm_sum_ = 0.0;
};

/// theta = (beta, log sigma^2), N(0, I) prior; y_n ~ N([1 x_n'] beta, sigma^2).
class LinearRegressionModel final : public Model {
 public:
  explicit LinearRegressionModel(Dataset data);
  ModelKind kind() const override { return ModelKind::linear_reg; }
  std::size_t dim() const override { return data_.num_features() + 2; }

 protected:
  double do_log_lik(std::size_t n, const Vector& theta) const override;
  double do_log_prior(const Vector& theta) const override;
};

/// beta_i ~ Cauchy(0, 1); y_n ~ Bernoulli(sigmoid([1 x_n'] beta)).
class LogisticRegressionModel final : public Model {
 public:
  explicit LogisticRegressionModel(Dataset data);
  ModelKind kind() const override { return ModelKind::logistic_reg; }
  std::size_t dim() const override { return data_.num_features() + 1; }

 protected:
  double do_log_lik(std::size_t n, const Vector& theta) const override;
  double do_log_prior(const Vector& theta) const override;
};

/// beta ~ N(0, I); y_n ~ Poisson(log(1 + exp([1 x_n'] beta))).
class PoissonRegressionModel final : public Model {
 public:
  explicit PoissonRegressionModel(Dataset data);
  ModelKind kind() const override { return ModelKind::poisson_reg; }
  std::size_t dim() const override { return data_.num_features() + 1; }

 protected:
  double do_log_lik(std::size_t n, const Vector& theta) const override;
  double do_log_prior(const Vector& theta) const override;

 private:
  Vector log_factorial_;
};

std::shared_ptr<const Model> make_model(Dataset data);

/// log(1 + exp(x)) without overflow.
double softplus(double x);

}  // namespace coreset
