#include "coreset/optimizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace coreset {

double Schedule::rate(std::uint64_t t) const {
  if (alpha == 1.0) return gamma0;
  return gamma0 * std::pow(static_cast<double>(t) + 1.0, alpha - 1.0);
}

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer: " + std::string(name));
}

Optimizer::Optimizer(OptimizerKind kind, std::size_t m, AdamParams params)
    : kind_(kind), params_(params), m_(Vector::Zero(static_cast<Eigen::Index>(m))),
      v_(Vector::Zero(static_cast<Eigen::Index>(m))) {}

Vector Optimizer::step(const Vector& w, const Vector& g, const Schedule& schedule, const FeasibleRegion& region) {
  if (w.size() != g.size()) throw std::invalid_argument("optimizer step: gradient/weight length mismatch");
  if (!g.allFinite()) throw DivergenceError("non-finite gradient at iteration " + std::to_string(t_));
  const double gamma = schedule.rate(t_);
  Vector next;
  if (kind_ == OptimizerKind::sgd) {
    next = w - gamma * g;
  } else {
    if (m_.size() != g.size()) {
      m_ = Vector::Zero(g.size());
      v_ = Vector::Zero(g.size());
    }
    m_ = params_.beta1 * m_ + (1.0 - params_.beta1) * g;
    v_ = params_.beta2 * v_ + (1.0 - params_.beta2) * g.cwiseAbs2();
    const double tt = static_cast<double>(t_ + 1);
    const double c1 = 1.0 - std::pow(params_.beta1, tt);
    const double c2 = 1.0 - std::pow(params_.beta2, tt);
    next = w - gamma * ((m_ / c1).array() / ((v_ / c2).array().sqrt() + params_.epsilon)).matrix();
  }
  if (!next.allFinite() || next.lpNorm<Eigen::Infinity>() > kDivergenceLimit)
    throw DivergenceError("weights diverged at iteration " + std::to_string(t_) +
                          " (max |w| = " + std::to_string(next.lpNorm<Eigen::Infinity>()) + ")");
  ++t_;
  return project(next, region);
}

void Optimizer::restore(std::uint64_t t, Vector first, Vector second) {
  t_ = t;
  m_ = std::move(first);
  v_ = std::move(second);
}

}  // namespace coreset
