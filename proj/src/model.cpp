#include "coreset/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace coreset {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

double normal_log_prior(const Vector& theta) {
  return -0.5 * theta.squaredNorm() - 0.5 * static_cast<double>(theta.size()) * kLog2Pi;
}

}  // namespace

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

Model::Model(Dataset data) : data_(std::move(data)) { data_.validate(); }

void Model::check_theta(const Vector& theta) const {
  if (static_cast<std::size_t>(theta.size()) != dim())
    throw std::invalid_argument("parameter has length " + std::to_string(theta.size()) + ", model expects " +
                                std::to_string(dim()));
}

double Model::log_lik(std::size_t n, const Vector& theta) const {
  if (n >= size()) throw std::out_of_range("observation index " + std::to_string(n) + " out of range");
  check_theta(theta);
  return do_log_lik(n, theta);
}

double Model::log_prior(const Vector& theta) const {
  check_theta(theta);
  return do_log_prior(theta);
}

double Model::sum_log_lik(const Vector& theta, std::size_t first, std::size_t last) const {
  // Neumaier summation: the centered gradient depends on small differences
  // of these sums.
  double sum = 0.0;
  double comp = 0.0;
  for (std::size_t n = first; n < last; ++n) {
    const double v = do_log_lik(n, theta);
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      comp += (sum - t) + v;
    else
      comp += (v - t) + sum;
    sum = t;
  }
  return sum + comp;
}

// ---------------------------------------------------------------------------

GaussianLocationModel::GaussianLocationModel(Dataset data) : Model(std::move(data)) {
  data_sum_ = data_.features.colwise().sum().transpose();
  data_sq_norm_sum_ = data_.features.rowwise().squaredNorm().sum();
}

double GaussianLocationModel::do_log_lik(std::size_t n, const Vector& theta) const {
  const auto d = static_cast<double>(theta.size());
  return -0.5 * (data_.features.row(static_cast<Eigen::Index>(n)).transpose() - theta).squaredNorm() -
         0.5 * d * kLog2Pi;
}

double GaussianLocationModel::do_log_prior(const Vector& theta) const { return normal_log_prior(theta); }

double GaussianLocationModel::sum_log_lik(const Vector& theta, std::size_t first, std::size_t last) const {
  if (first != 0 || last != size()) return Model::sum_log_lik(theta, first, last);
  const auto n = static_cast<double>(size());
  const auto d = static_cast<double>(theta.size());
  return -0.5 * (data_sq_norm_sum_ - 2.0 * data_sum_.dot(theta) + n * theta.squaredNorm()) - 0.5 * n * d * kLog2Pi;
}

Matrix GaussianLocationModel::points(std::span<const std::size_t> indices) const {
  Matrix y(data_.features.cols(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t m = 0; m < indices.size(); ++m) {
    if (indices[m] >= size()) throw std::out_of_range("coreset index out of range");
    y.col(static_cast<Eigen::Index>(m)) = data_.features.row(static_cast<Eigen::Index>(indices[m])).transpose();
  }
  return y;
}

GaussianLocationPosterior GaussianLocationModel::exact_posterior(const Vector& w, std::span<const std::size_t> indices,
                                                                 bool allow_negative) const {
  if (static_cast<std::size_t>(w.size()) != indices.size())
    throw std::invalid_argument("exact_posterior: weight/index length mismatch");
  if (!allow_negative && (w.array() < 0.0).any()) throw std::invalid_argument("exact_posterior: negative weight");
  const double precision = 1.0 + w.sum();
  if (!(precision > 0.0)) throw std::invalid_argument("exact_posterior: 1 + sum(w) must be positive");
  GaussianLocationPosterior post;
  post.sigma2 = 1.0 / precision;
  post.mu_w = Vector::Zero(static_cast<Eigen::Index>(dim()));
  for (std::size_t m = 0; m < indices.size(); ++m) {
    if (indices[m] >= size()) throw std::out_of_range("coreset index out of range");
    post.mu_w += w[static_cast<Eigen::Index>(m)] *
                 data_.features.row(static_cast<Eigen::Index>(indices[m])).transpose();
  }
  post.mu_w *= post.sigma2;
  return post;
}

GaussianLocationPosterior GaussianLocationModel::full_posterior() const {
  GaussianLocationPosterior post;
  post.sigma2 = 1.0 / (1.0 + static_cast<double>(size()));
  post.mu_w = post.sigma2 * data_sum_;
  return post;
}

// ---------------------------------------------------------------------------

LinearRegressionModel::LinearRegressionModel(Dataset data) : Model(std::move(data)) {}

double LinearRegressionModel::do_log_lik(std::size_t n, const Vector& theta) const {
  const auto r = static_cast<Eigen::Index>(n);
  const auto p = data_.features.cols();
  const double eta = theta[0] + data_.features.row(r).dot(theta.segment(1, p));
  const double log_var = theta[p + 1];
  const double resid = data_.responses[r] - eta;
  return -0.5 * (kLog2Pi + log_var + resid * resid * std::exp(-log_var));
}

double LinearRegressionModel::do_log_prior(const Vector& theta) const { return normal_log_prior(theta); }

LogisticRegressionModel::LogisticRegressionModel(Dataset data) : Model(std::move(data)) {}

double LogisticRegressionModel::do_log_lik(std::size_t n, const Vector& theta) const {
  const auto r = static_cast<Eigen::Index>(n);
  const double eta = theta[0] + data_.features.row(r).dot(theta.tail(theta.size() - 1));
  // log sigmoid(eta) = -softplus(-eta); log(1 - sigmoid(eta)) = -softplus(eta)
  return data_.responses[r] > 0.5 ? -softplus(-eta) : -softplus(eta);
}

double LogisticRegressionModel::do_log_prior(const Vector& theta) const {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) lp -= std::log(std::numbers::pi * (1.0 + theta[i] * theta[i]));
  return lp;
}

PoissonRegressionModel::PoissonRegressionModel(Dataset data) : Model(std::move(data)) {
  log_factorial_.resize(data_.responses.size());
  for (Eigen::Index i = 0; i < data_.responses.size(); ++i) log_factorial_[i] = std::lgamma(data_.responses[i] + 1.0);
}

double PoissonRegressionModel::do_log_lik(std::size_t n, const Vector& theta) const {
  const auto r = static_cast<Eigen::Index>(n);
  const double eta = theta[0] + data_.features.row(r).dot(theta.tail(theta.size() - 1));
  const double rate = softplus(eta);
  const double y = data_.responses[r];
  if (y == 0.0) return -rate;
  return y * std::log(rate) - rate - log_factorial_[r];
}

double PoissonRegressionModel::do_log_prior(const Vector& theta) const { return normal_log_prior(theta); }

std::shared_ptr<const Model> make_model(Dataset data) {
  switch (data.kind) {
    case ModelKind::gaussian_location: return std::make_shared<GaussianLocationModel>(std::move(data));
    case ModelKind::linear_reg: return std::make_shared<LinearRegressionModel>(std::move(data));
    case ModelKind::logistic_reg: return std::make_shared<LogisticRegressionModel>(std::move(data));
    case ModelKind::poisson_reg: return std::make_shared<PoissonRegressionModel>(std::move(data));
  }
  throw std::invalid_argument("make_model: unknown kind");
}

}  // namespace coreset
