#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "coreset/grad_estimator.hpp"
#include "oracles.hpp"

using namespace coreset;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

std::vector<Vector> random_states(Rng& rng, std::size_t k, std::size_t d, double scale = 1.0) {
  std::vector<Vector> out(k, Vector(static_cast<Eigen::Index>(d)));
  for (auto& v : out)
    for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = scale * rng.normal();
  return out;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

Dataset points(const Matrix& x) {
  Dataset d;
  d.kind = ModelKind::gaussian_location;
  d.features = x;
  d.responses = Vector::Zero(x.rows());
  return d;
}

}  // namespace

TEST_CASE("centering examples") {
  const auto model = make_model(generate_synthetic(ModelKind::logistic_reg, 20, 2, 1));
  const std::vector<std::size_t> core{1, 4, 7};
  const std::vector<std::size_t> sub{0, 4, 19};
  const Vector theta = vec({0.2, -0.1, 0.3});
  const std::vector<Vector> same{theta, theta};
  const CenteredLogLik z = center_logliks(*model, core, sub, same);
  CHECK(z.coreset_block.isZero(0.0));
  CHECK(z.data_block.isZero(0.0));

  Rng rng(2);
  const auto states = random_states(rng, 5, 3);
  const CenteredLogLik c = center_logliks(*model, core, sub, states);
  for (Eigen::Index i = 0; i < c.coreset_block.rows(); ++i)
    CHECK(std::abs(c.coreset_block.row(i).sum()) <= 1e-9 * (1.0 + c.coreset_block.row(i).cwiseAbs().maxCoeff()));
  for (Eigen::Index i = 0; i < c.data_block.rows(); ++i)
    CHECK(std::abs(c.data_block.row(i).sum()) <= 1e-9 * (1.0 + c.data_block.row(i).cwiseAbs().maxCoeff()));
  // Shared index 4 gives identical rows in both blocks.
  CHECK(c.coreset_block.row(1) == c.data_block.row(1));
  CHECK_THROWS_AS(center_logliks(*model, core, sub, std::vector<Vector>{theta}), std::invalid_argument);
}

TEST_CASE("centering subtracts the chain mean") {
  // Standard normal log-density at 0 gives l(theta) = -theta^2/2 - log(2 pi)/2;
  // thetas chosen so l + const = (1, 2, 6).
  const GaussianLocationModel model(points(Matrix::Zero(1, 1)));
  const std::vector<Vector> thetas{vec({std::sqrt(12.0)}), vec({std::sqrt(10.0)}), vec({std::sqrt(2.0)})};
  const std::vector<std::size_t> idx{0};
  const CenteredLogLik c = center_logliks(model, idx, idx, thetas);
  CHECK(c.coreset_block(0, 0) == doctest::Approx(-2.0));
  CHECK(c.coreset_block(0, 1) == doctest::Approx(-1.0));
  CHECK(c.coreset_block(0, 2) == doctest::Approx(3.0));
}

TEST_CASE("parallel and serial centering agree bitwise") {
  const auto model = make_model(generate_synthetic(ModelKind::poisson_reg, 500, 3, 6));
  Rng rng(8);
  const auto states = random_states(rng, 7, 4, 0.3);
  const auto core = select_points(500, 25, 1);
  const auto sub = subsample_indices(500, 200, rng);
  const CenteredLogLik a = center_logliks(*model, core, sub, states);
  const CenteredLogLik b = center_logliks_serial(*model, core, sub, states);
  CHECK(a.coreset_block == b.coreset_block);
  CHECK(a.data_block == b.data_block);
  CHECK(a.data_sums == b.data_sums);
}

TEST_CASE("subsample rows shared with the coreset match direct evaluation") {
  const auto model = make_model(generate_synthetic(ModelKind::logistic_reg, 40, 2, 6));
  Rng rng(9);
  const auto states = random_states(rng, 3, model->dim(), 0.5);
  const std::vector<std::size_t> core{3, 7, 11, 20};
  const std::vector<std::size_t> sub{7, 1, 20, 3, 39, 11};
  const CenteredLogLik c = center_logliks_serial(*model, core, sub, states);
  for (std::size_t j = 0; j < sub.size(); ++j) {
    Vector direct(3);
    for (std::size_t k = 0; k < 3; ++k) direct(static_cast<Eigen::Index>(k)) = model->log_lik(sub[j], states[k]);
    direct.array() -= direct.mean();
    CHECK((c.data_block.row(static_cast<Eigen::Index>(j)).transpose() - direct).norm() < 1e-12);
  }
}

TEST_CASE("full-data sums agree with the explicit block") {
  for (const ModelKind kind : {ModelKind::gaussian_location, ModelKind::logistic_reg}) {
    const auto model = make_model(generate_synthetic(kind, 9000, 3, 3));
    Rng rng(1);
    const auto states = random_states(rng, 4, model->dim(), 0.2);
    const auto core = select_points(9000, 10, 2);
    const CenteredLogLik full = center_logliks_full_data(*model, core, states);
    const CenteredLogLik expl = center_logliks(*model, core, iota_indices(9000), states);
    CHECK(full.coreset_block == expl.coreset_block);
    for (Eigen::Index k = 0; k < 4; ++k)
      CHECK(full.data_sums(k) == doctest::Approx(expl.data_block.col(k).sum()).epsilon(1e-9).scale(1e3));
  }
}

TEST_CASE("subsample_indices") {
  Rng rng(3);
  CHECK(subsample_indices(6, 6, rng) == iota_indices(6));
  const auto s = subsample_indices(10000, 30, rng);
  CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 30);
  CHECK(*std::max_element(s.begin(), s.end()) < 10000);
  CHECK_THROWS_AS(subsample_indices(3, 4, rng), std::invalid_argument);

  std::map<std::pair<std::size_t, std::size_t>, int> counts;
  const int reps = 100000;
  for (int seed = 0; seed < reps; ++seed) {
    Rng r(static_cast<std::uint64_t>(seed));
    auto p = subsample_indices(4, 2, r);
    std::sort(p.begin(), p.end());
    ++counts[{p[0], p[1]}];
  }
  CHECK(counts.size() == 6);
  const double sd = std::sqrt(reps * (1.0 / 6) * (5.0 / 6));
  for (const auto& [pair, c] : counts) CHECK(std::abs(c - reps / 6.0) < 3 * sd);
}

TEST_CASE("gradient estimate examples") {
  CenteredLogLik c;
  c.coreset_block = Matrix(1, 2);
  c.coreset_block << 0.5, -0.5;
  c.data_block = c.coreset_block;
  c.data_sums = c.data_block.colwise().sum().transpose();
  const GradientEstimate g = estimate_gradient(vec({3.0}), c, 1, 1);
  CHECK(g.g(0) == doctest::Approx(1.0));
  CHECK(g.chains == 2);

  CenteredLogLik zero;
  zero.coreset_block = Matrix::Zero(3, 2);
  zero.data_block = Matrix::Zero(5, 2);
  zero.data_sums = Vector::Zero(2);
  CHECK(estimate_gradient(vec({1.0, 2.0, 3.0}), zero, 10, 5).g.isZero(0.0));
  CHECK_THROWS_AS(estimate_gradient(vec({1.0, 2.0}), zero, 10, 5), std::invalid_argument);
}

TEST_CASE("gradient estimate matches the loop transcription") {
  Rng rng(12);
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.below(6));
    const Eigen::Index s = 1 + static_cast<Eigen::Index>(rng.below(9));
    const Eigen::Index k = 2 + static_cast<Eigen::Index>(rng.below(6));
    CenteredLogLik c;
    c.coreset_block = Matrix::NullaryExpr(m, k, [&] { return rng.normal(); });
    c.data_block = Matrix::NullaryExpr(s, k, [&] { return rng.normal(); });
    c.data_sums = c.data_block.colwise().sum().transpose();
    const Vector w = Vector::NullaryExpr(m, [&] { return rng.exponential(); });
    const double n = static_cast<double>(s) * 3;
    const Vector g = estimate_gradient(w, c, static_cast<std::size_t>(n), static_cast<std::size_t>(s)).g;
    const Vector ref = oracle::gradient(w, c.coreset_block, c.data_block, n, static_cast<double>(s));
    CHECK((g - ref).norm() <= 1e-12 * (1.0 + ref.norm()));
  }
}

TEST_CASE("gram matrix") {
  CenteredLogLik c;
  c.coreset_block = Matrix(1, 2);
  c.coreset_block << 1.0, -1.0;
  CHECK(gram_matrix(c)(0, 0) == doctest::Approx(2.0));
  c.coreset_block.setZero();
  CHECK(gram_matrix(c).isZero(0.0));

  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    c.coreset_block = Matrix::NullaryExpr(8, 3, [&] { return rng.normal(); });
    const Matrix g = gram_matrix(c);
    CHECK((g - g.transpose()).norm() == 0.0);
    const double lo = Eigen::SelfAdjointEigenSolver<Matrix>(g).eigenvalues().minCoeff();
    CHECK(lo >= -1e-10 * g.norm());
  }
}

TEST_CASE("subsampling noise diagnostic") {
  CenteredLogLik c;
  c.coreset_block = Matrix::Zero(2, 2);
  c.data_block = Matrix::Zero(3, 2);
  CHECK(subnoise_diagnostic(c) == 0.0);

  c.coreset_block = Matrix(1, 2);
  c.coreset_block << 0.7, -0.7;
  c.data_block = Matrix(1, 2);
  c.data_block << 0.3, -0.3;
  CHECK(subnoise_diagnostic(c) == doctest::Approx(0.0));

  c.data_block = Matrix(2, 2);
  c.data_block << 0.3, -0.3, -1.1, 1.1;
  CHECK(subnoise_diagnostic(c) == doctest::Approx(oracle::subnoise(c.coreset_block, c.data_block)));

  Rng rng(5);
  c.coreset_block = Matrix::NullaryExpr(4, 5, [&] { return rng.normal(); });
  c.data_block = Matrix::NullaryExpr(9, 5, [&] { return rng.normal(); });
  const double v = subnoise_diagnostic(c);
  CHECK(v >= 0.0);
  CHECK(v == doctest::Approx(oracle::subnoise(c.coreset_block, c.data_block)).epsilon(1e-12));
}

TEST_CASE("exact coreset weights") {
  const auto data = generate_synthetic(ModelKind::gaussian_location, 12, 3, 4);
  const GaussianLocationModel model(data);
  const auto all = iota_indices(12);
  const auto w = exact_coreset_weights(model, all, FeasibleRegion(RegionKind::simplex_sum_N, 12));
  REQUIRE(w.has_value());
  const Matrix y = model.points(all);
  CHECK((y * *w - model.data_sum()).norm() <= 1e-8 * model.data_sum().norm());

  // d = 1, Y = (0, 2), mean in (0, 2).
  Matrix x(4, 1);
  x << 0.0, 2.0, 0.5, 1.0;
  const GaussianLocationModel line(points(x));
  const std::vector<std::size_t> two{0, 1};
  const auto w2 = exact_coreset_weights(line, two, FeasibleRegion(RegionKind::simplex_sum_N, 4));
  REQUIRE(w2.has_value());
  // Solve 2 w_2 = 3.5, w_1 + w_2 = 4 by hand.
  CHECK((*w2)(1) == doctest::Approx(1.75).epsilon(1e-10));
  CHECK((*w2)(0) == doctest::Approx(2.25).epsilon(1e-10));

  const auto wide = generate_synthetic(ModelKind::gaussian_location, 50, 3, 8);
  const GaussianLocationModel model3(wide);
  const std::vector<std::size_t> pair{3, 9};
  CHECK_FALSE(exact_coreset_weights(model3, pair, FeasibleRegion(RegionKind::simplex_sum_N, 50)).has_value());
  CHECK_FALSE(exact_coreset_weights(model3, pair, FeasibleRegion(RegionKind::sum_N, 50)).has_value());
}

TEST_CASE("analytic gradient") {
  Matrix x1(1, 1);
  x1 << 0.4;
  const GaussianLocationModel single(points(x1));
  const std::vector<std::size_t> first{0};
  CHECK(analytic_gradient(single, vec({1.0}), first)(0) == doctest::Approx(0.0));

  const auto data = generate_synthetic(ModelKind::gaussian_location, 40, 2, 9);
  const GaussianLocationModel model(data);
  const auto idx = select_points(40, 6, 1);
  const auto ws = exact_coreset_weights(model, idx, FeasibleRegion(RegionKind::sum_N, 40));
  REQUIRE(ws.has_value());
  CHECK(analytic_gradient(model, *ws, idx).norm() <= 1e-10 * 40 * 40);

  // d = 1, M = 1, N = 2: Monte Carlo covariance under pi_w.
  Matrix x2(2, 1);
  x2 << 0.3, -1.2;
  const GaussianLocationModel pair(points(x2));
  const Vector w = vec({1.6});
  const Vector g = analytic_gradient(pair, w, first);
  const auto post = pair.exact_posterior(w, first);
  // Centering at the exact means makes each product an unbiased draw of
  // the covariance, so the batch standard error is direct.
  const double mu = post.mu_w(0), s2 = post.sigma2;
  const double e1 = -0.5 * ((0.3 - mu) * (0.3 - mu) + s2);
  const double e2 = -0.5 * ((-1.2 - mu) * (-1.2 - mu) + s2);
  const double ef = 0.6 * e1 - e2;
  Rng rng(77);
  const int n = 10000000;
  double sz = 0, szz = 0;
  for (int i = 0; i < n; ++i) {
    const double th = mu + std::sqrt(s2) * rng.normal();
    const double l1 = -0.5 * (0.3 - th) * (0.3 - th);
    const double l2 = -0.5 * (-1.2 - th) * (-1.2 - th);
    const double z = (l1 - e1) * (0.6 * l1 - l2 - ef);
    sz += z;
    szz += z * z;
  }
  const double cov = sz / n;
  const double se = std::sqrt((szz / n - cov * cov) / n);
  CHECK(std::abs(g(0) - cov) < 3.0 * se);
}

TEST_CASE("full-data gradient factorizes through the gram matrix") {
  const auto data = generate_synthetic(ModelKind::gaussian_location, 200, 3, 10);
  const GaussianLocationModel model(data);
  const auto idx = select_points(200, 8, 4);
  const FeasibleRegion region(RegionKind::sum_N, 200);
  const auto ws = exact_coreset_weights(model, idx, region);
  REQUIRE(ws.has_value());
  Rng rng(6);
  const Vector w = init_weights(8, 200);
  for (int rep = 0; rep < 20; ++rep) {
    const auto states = random_states(rng, 5, 3, 0.1);
    const CenteredLogLik c = center_logliks(model, idx, iota_indices(200), states);
    const Vector g = estimate_gradient(w, c, 200, 200).g;
    const Vector factor = gram_matrix(c) * (w - *ws);
    CHECK((g - factor).norm() <= 1e-8 * (1.0 + g.norm()));
    CHECK(estimate_gradient(*ws, c, 200, 200).g.norm() <= 1e-8 * (1.0 + g.norm()));
  }
}

TEST_CASE("full data gives lower estimator variance than half the data") {
  const auto data = generate_synthetic(ModelKind::gaussian_location, 40, 2, 13);
  const GaussianLocationModel model(data);
  const auto idx = select_points(40, 3, 2);
  const Vector w = init_weights(3, 40);
  Rng rng(9);
  const auto post = model.exact_posterior(w, idx);
  Vector sum_full = Vector::Zero(3), sq_full = Vector::Zero(3);
  Vector sum_half = Vector::Zero(3), sq_half = Vector::Zero(3);
  const int reps = 4000;
  for (int r = 0; r < reps; ++r) {
    std::vector<Vector> states(4);
    for (auto& s : states) s = post.mu_w + std::sqrt(post.sigma2) * Vector::NullaryExpr(2, [&] { return rng.normal(); });
    const Vector gf = estimate_gradient(w, center_logliks(model, idx, iota_indices(40), states), 40, 40).g;
    const Vector gh = estimate_gradient(w, center_logliks(model, idx, subsample_indices(40, 20, rng), states), 40, 20).g;
    sum_full += gf;
    sq_full += gf.cwiseAbs2();
    sum_half += gh;
    sq_half += gh.cwiseAbs2();
  }
  const Vector var_full = sq_full / reps - (sum_full / reps).cwiseAbs2();
  const Vector var_half = sq_half / reps - (sum_half / reps).cwiseAbs2();
  for (int i = 0; i < 3; ++i) CHECK(var_full(i) <= var_half(i));
}

TEST_CASE("finite-population variance of the subsampled sum is exact") {
  // K = 2 with a = (1, -1), w = 0 makes g = -2 (N/S) sum_s v_s.
  const Vector v = vec({0.3, -1.2, 2.5, 0.0, 0.9, -0.4});
  const std::size_t n = 6, s = 2;
  std::vector<double> values;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      CenteredLogLik c;
      c.coreset_block = Matrix(1, 2);
      c.coreset_block << 1.0, -1.0;
      c.data_block = Matrix(2, 2);
      c.data_block << v(i), -v(i), v(j), -v(j);
      c.data_sums = c.data_block.colwise().sum().transpose();
      values.push_back(estimate_gradient(Vector::Zero(1), c, n, s).g(0));
    }
  double mean = 0.0;
  for (double x : values) mean += x;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double x : values) var += (x - mean) * (x - mean);
  var /= static_cast<double>(values.size());
  const double pop_var = (v.array() - v.mean()).square().sum() / static_cast<double>(n);
  const double expected = 4.0 * double(n * n) / double(s) * double(n - s) / double(n - 1) * pop_var;
  CHECK(var == doctest::Approx(expected).epsilon(1e-12));
  CHECK(mean == doctest::Approx(-2.0 * v.sum()).epsilon(1e-12));
}
