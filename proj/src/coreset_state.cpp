#include "coreset/coreset_state.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include "coreset/random.hpp"

namespace coreset {

std::string_view to_string(RegionKind kind) {
  switch (kind) {
    case RegionKind::nonneg: return "nonneg";
    case RegionKind::simplex_sum_N: return "simplex_sum_N";
    case RegionKind::sum_N: return "sum_N";
  }
  return "unknown";
}

RegionKind parse_region_kind(std::string_view name) {
  if (name == "nonneg") return RegionKind::nonneg;
  if (name == "simplex_sum_N" || name == "simplex") return RegionKind::simplex_sum_N;
  if (name == "sum_N" || name == "hyperplane") return RegionKind::sum_N;
  throw std::invalid_argument("unknown region kind: " + std::string(name));
}

FeasibleRegion::FeasibleRegion(RegionKind kind, double total) : kind_(kind), total_(total) {
  if (kind != RegionKind::nonneg && !(total > 0.0 && std::isfinite(total)))
    throw std::invalid_argument("feasible region total must be positive and finite");
}

bool FeasibleRegion::contains(const Vector& w) const {
  if (!w.allFinite()) return false;
  if (has_nonnegativity() && w.size() > 0 && w.minCoeff() < -1e-12) return false;
  if (has_sum_constraint() && std::abs(w.sum() - total_) > 1e-9 * total_) return false;
  return true;
}

namespace {

Vector project_simplex(const Vector& w, double total) {
  // Largest rho with u_rho - (sum_{j<=rho} u_j - total) / rho > 0 on the
  // descending sort u; then clamp w - tau at zero.
  std::vector<double> u(w.begin(), w.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double tau = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumsum += u[j];
    const double candidate = (cumsum - total) / static_cast<double>(j + 1);
    if (u[j] - candidate > 0.0) tau = candidate;
  }
  Vector v = (w.array() - tau).max(0.0).matrix();
  // Floating error can leave the sum a few ulps away from total; push the
  // residual onto the largest coordinate, which stays positive.
  Eigen::Index imax = 0;
  v.maxCoeff(&imax);
  v[imax] += total - v.sum();
  return v;
}

// Feasible up to the rounding a projection itself produces; such inputs are
// returned untouched so that projection is exactly idempotent.
bool feasible_to_rounding(const Vector& w, const FeasibleRegion& region) {
  if (region.has_nonnegativity() && w.size() > 0 && w.minCoeff() < 0.0) return false;
  if (region.has_sum_constraint()) {
    const double scale = w.lpNorm<1>() + region.total();
    const double slack = 8.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(w.size() + 1) * scale;
    if (std::abs(w.sum() - region.total()) > slack) return false;
  }
  return true;
}

}  // namespace

Vector project(const Vector& w, const FeasibleRegion& region) {
  if (!w.allFinite()) throw std::invalid_argument("project: non-finite weights");
  if (feasible_to_rounding(w, region)) return w;
  switch (region.kind()) {
    case RegionKind::nonneg: return w.cwiseMax(0.0);
    case RegionKind::sum_N: {
      if (w.size() == 0) throw std::invalid_argument("project: empty weight vector");
      return (w.array() - (w.sum() - region.total()) / static_cast<double>(w.size())).matrix();
    }
    case RegionKind::simplex_sum_N:
      if (w.size() == 0) throw std::invalid_argument("project: empty weight vector");
      return project_simplex(w, region.total());
  }
  return w;
}

void CoresetState::validate(std::size_t n_data) const {
  if (static_cast<std::size_t>(w.size()) != indices.size())
    throw std::invalid_argument("coreset weights and indices differ in length");
  std::vector<std::size_t> sorted = indices;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("coreset indices are not distinct");
  if (!sorted.empty() && sorted.back() >= n_data) throw std::invalid_argument("coreset index out of range");
  if (!region.contains(w)) throw std::invalid_argument("coreset weights outside the feasible region");
}

namespace {

// First k entries of a partial Fisher-Yates shuffle of `pool`.
std::vector<std::size_t> partial_shuffle(std::vector<std::size_t> pool, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace

std::vector<std::size_t> select_points(std::size_t n, std::size_t m, std::uint64_t seed,
                                       std::optional<std::span<const int>> labels) {
  if (m == 0 || m > n) throw std::invalid_argument("select_points: need 1 <= M <= N");
  Rng rng = Rng::stream(seed, 0x5e1ec7);
  if (!labels) {
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    return partial_shuffle(std::move(pool), m, rng);
  }
  if (labels->size() != n) throw std::invalid_argument("select_points: label count differs from N");

  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < n; ++i) ((*labels)[i] != 0 ? pos : neg).push_back(i);
  auto& rare = pos.size() <= neg.size() ? pos : neg;
  auto& common = pos.size() <= neg.size() ? neg : pos;

  std::size_t take_rare = 0;
  if (m >= 2 * rare.size())
    take_rare = rare.size();
  else
    take_rare = m / 2;
  std::size_t take_common = m - take_rare;
  if (take_common > common.size()) {
    take_common = common.size();
    take_rare = m - take_common;
  }
  auto chosen = partial_shuffle(rare, take_rare, rng);
  auto rest = partial_shuffle(common, take_common, rng);
  chosen.insert(chosen.end(), rest.begin(), rest.end());
  return chosen;
}

Vector init_weights(std::size_t m, std::size_t n) {
  if (m == 0) throw std::invalid_argument("init_weights: M must be positive");
  return Vector::Constant(static_cast<Eigen::Index>(m), static_cast<double>(n) / static_cast<double>(m));
}

double coreset_log_density(const CoresetState& state, const Model& model, const Vector& theta) {
  if (static_cast<std::size_t>(theta.size()) != model.dim())
    throw std::invalid_argument("coreset_log_density: parameter length mismatch");
  double lp = model.log_prior(theta);
  for (std::size_t m = 0; m < state.indices.size(); ++m) {
    const double wm = state.w[static_cast<Eigen::Index>(m)];
    if (wm != 0.0) lp += wm * model.log_lik_unchecked(state.indices[m], theta);
  }
  return lp;
}

void write_weights_csv(const CoresetState& state, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "index,weight\n";
  char buf[32];
  for (std::size_t m = 0; m < state.indices.size(); ++m) {
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), state.w[static_cast<Eigen::Index>(m)]);
    out << state.indices[m] << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf)) << '\n';
  }
}

CoresetState read_weights_csv(const std::filesystem::path& path, const FeasibleRegion& region) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<double> weights;
  CoresetState state;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error("malformed weights row: " + line);
    std::size_t index = 0;
    double weight = 0.0;
    const auto r1 = std::from_chars(line.data(), line.data() + comma, index);
    const auto r2 = std::from_chars(line.data() + comma + 1, line.data() + line.size(), weight);
    if (r1.ec != std::errc() || r2.ec != std::errc()) throw std::runtime_error("malformed weights row: " + line);
    state.indices.push_back(index);
    weights.push_back(weight);
  }
  state.w = Eigen::Map<const Vector>(weights.data(), static_cast<Eigen::Index>(weights.size()));
  state.region = region;
  return state;
}

}  // namespace coreset
