#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "coreset/optimizer.hpp"
#include "coreset/trainer.hpp"

using namespace coreset;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  const Schedule constant{2.5, 1.0};
  for (std::uint64_t t : {0u, 1u, 100u, 100000u}) CHECK(constant.rate(t) == 2.5);
  const Schedule decay{4.0, 0.5};
  CHECK(decay.rate(3) == doctest::Approx(2.0));
  const Schedule defaults{10000.0 / (10.0 * 30.0), 0.5};
  CHECK(defaults.rate(0) == doctest::Approx(100.0 / 3.0));
  for (std::uint64_t t = 0; t < 1000; ++t) CHECK(decay.rate(t + 1) <= decay.rate(t));
}

TEST_CASE("sgd step examples") {
  const FeasibleRegion nonneg(RegionKind::nonneg, 10);
  const FeasibleRegion simplex(RegionKind::simplex_sum_N, 2);
  Optimizer sgd(OptimizerKind::sgd, 2);
  const Vector w = vec({0.5, 1.5});
  CHECK(sgd.step(w, Vector::Zero(2), Schedule{1.0, 1.0}, simplex) == w);
  CHECK(sgd.iteration() == 1);

  Optimizer one(OptimizerKind::sgd, 1);
  CHECK(one.step(vec({1.0}), vec({2.0}), Schedule{1.0, 1.0}, nonneg) == vec({0.0}));

  Optimizer two(OptimizerKind::sgd, 2);
  const Vector out = two.step(vec({1.0, 1.0}), vec({1.0, -1.0}), Schedule{0.5, 1.0}, simplex);
  CHECK(out(0) == doctest::Approx(0.5));
  CHECK(out(1) == doctest::Approx(1.5));
}

TEST_CASE("adam with zero gradient leaves weights fixed") {
  Optimizer adam(OptimizerKind::adam, 3);
  const FeasibleRegion region(RegionKind::nonneg, 3);
  Vector w = vec({0.2, 1.0, 3.0});
  const Vector start = w;
  for (int t = 0; t < 1000; ++t) w = adam.step(w, Vector::Zero(3), Schedule{0.1, 1.0}, region);
  CHECK(w == start);
}

TEST_CASE("adam bias-corrected first step moves by the step size") {
  Optimizer adam(OptimizerKind::adam, 2);
  const Vector w = adam.step(vec({5.0, 5.0}), vec({3.0, -0.01}), Schedule{0.1, 1.0}, FeasibleRegion(RegionKind::nonneg, 10));
  CHECK(w(0) == doctest::Approx(4.9).epsilon(1e-6));
  CHECK(w(1) == doctest::Approx(5.1).epsilon(1e-5));
}

TEST_CASE("optimizer failure modes") {
  Optimizer sgd(OptimizerKind::sgd, 2);
  const FeasibleRegion region(RegionKind::nonneg, 2);
  CHECK_THROWS_AS(sgd.step(vec({1.0, 1.0}), vec({NAN, 0.0}), Schedule{}, region), DivergenceError);
  CHECK_THROWS_AS(sgd.step(vec({1.0, 1.0}), vec({-1e13, 0.0}), Schedule{}, region), DivergenceError);
  CHECK_THROWS_AS(sgd.step(vec({1.0, 1.0}), vec({1.0}), Schedule{}, region), std::invalid_argument);
  CHECK(parse_optimizer_kind("adam") == OptimizerKind::adam);
  CHECK_THROWS(parse_optimizer_kind("lbfgs"));
}

TEST_CASE("projected steps stay feasible") {
  Rng rng(31);
  for (int rep = 0; rep < 10000; ++rep) {
    const auto m = static_cast<Eigen::Index>(1 + rng.below(20));
    const RegionKind kind = std::array{RegionKind::nonneg, RegionKind::simplex_sum_N, RegionKind::sum_N}[rep % 3];
    const double total = 1.0 + 1000.0 * rng.uniform();
    const FeasibleRegion region(kind, total);
    Optimizer opt(rep % 2 ? OptimizerKind::adam : OptimizerKind::sgd, static_cast<std::size_t>(m));
    Vector w = project(Vector::NullaryExpr(m, [&] { return total * rng.uniform(); }), region);
    for (int t = 0; t < 3; ++t) {
      const Vector g = Vector::NullaryExpr(m, [&] { return 100.0 * rng.normal(); });
      w = opt.step(w, g, Schedule{10.0 * rng.uniform(), 0.5}, region);
      REQUIRE(region.contains(w));
    }
  }
}

TEST_CASE("full-data sgd contracts toward the exact coreset") {
  // Gaussian location, exact coreset on the hyperplane; weights move only
  // within the row space of the design, so the limit is the exact coreset
  // closest to the uniform start.
  const std::size_t n = 1000, m = 8;
  const auto model = std::make_shared<GaussianLocationModel>(generate_synthetic(ModelKind::gaussian_location, n, 3, 21));
  std::vector<double> ratios;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    TrainConfig cfg;
    cfg.T = 2000;
    cfg.K = 10;
    cfg.M = m;
    cfg.region = RegionKind::sum_N;
    cfg.kernel.kind = KernelKind::gaussian_ar;
    cfg.schedule = Schedule{0.1 * double(n) / double(m), 1.0};
    cfg.seed = seed;
    cfg.trajectory_stride = 2000;
    cfg.metric_every = 0;
    Trainer trainer(cfg, model);
    const auto ws = exact_coreset_weights(*model, trainer.state().indices, trainer.state().region);
    REQUIRE(ws.has_value());
    const double start = (trainer.state().w - *ws).squaredNorm();
    trainer.run();
    REQUIRE_FALSE(trainer.result().error.has_value());
    ratios.push_back((trainer.state().w - *ws).squaredNorm() / start);
  }
  std::nth_element(ratios.begin(), ratios.begin() + 10, ratios.end());
  CHECK(ratios[10] < 0.01);
}
