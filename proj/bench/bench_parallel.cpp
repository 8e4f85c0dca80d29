// Serial reference vs OpenMP implementations of the two hot loops:
// log-likelihood centering and the ensemble kernel step. Also checks that
// both paths produce bitwise-identical output.
//
//   bench_parallel [--n N] [--k K] [--reps R] [--threads T]

#include <chrono>
#include <cstdio>
#include <vector>

#include <CLI11.hpp>
#include <omp.h>

#include "coreset/grad_estimator.hpp"
#include "coreset/kernels.hpp"

using namespace coreset;

namespace {

template <class F>
double time_best(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

bool same(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs parallel kernels"};
  std::size_t n = 20000;
  std::size_t k = 16;
  int reps = 5;
  int threads = omp_get_max_threads();
  app.add_option("--n", n, "observations");
  app.add_option("--k", k, "chains");
  app.add_option("--reps", reps, "repetitions (best time reported)");
  app.add_option("--threads", threads, "OpenMP threads");
  CLI11_PARSE(app, argc, argv);
  omp_set_num_threads(threads);

  const auto model = make_model(generate_synthetic(ModelKind::logistic_reg, n, 5, 11));
  Rng rng(3);
  const auto sub = subsample_indices(n, n / 2, rng);
  const auto indices = select_points(n, 100, 5);
  ChainEnsemble base = ChainEnsemble::initialize(k, model->dim(), 9);
  for (auto& s : base.states) s *= 0.1;

  std::printf("threads=%d N=%zu K=%zu\n", threads, n, k);
  std::printf("%-16s %12s %12s %8s %s\n", "kernel", "serial_s", "parallel_s", "speedup", "identical");

  CenteredLogLik a, b;
  const double ts = time_best(reps, [&] { a = center_logliks_serial(*model, indices, sub, base.states); });
  const double tp = time_best(reps, [&] { b = center_logliks(*model, indices, sub, base.states); });
  const bool eq1 = same(a.coreset_block, b.coreset_block) && same(a.data_block, b.data_block);
  std::printf("%-16s %12.4f %12.4f %8.2f %s\n", "center_logliks", ts, tp, ts / tp, eq1 ? "yes" : "NO");

  CoresetState state{indices, init_weights(100, n), FeasibleRegion(RegionKind::nonneg, static_cast<double>(n))};
  const CoresetTarget target(state, *model);
  KernelFamily kernel;
  ChainEnsemble e1 = base;
  ChainEnsemble e2 = base;
  const double ks = time_best(reps, [&] { ensemble_step_serial(kernel, target, e1); });
  const double kp = time_best(reps, [&] { ensemble_step(kernel, target, e2); });
  bool eq2 = true;
  for (std::size_t i = 0; i < k; ++i) eq2 = eq2 && (e1.states[i].array() == e2.states[i].array()).all();
  std::printf("%-16s %12.4f %12.4f %8.2f %s\n", "ensemble_step", ks, kp, ks / kp, eq2 ? "yes" : "NO");
  return eq1 && eq2 ? 0 : 1;
}
