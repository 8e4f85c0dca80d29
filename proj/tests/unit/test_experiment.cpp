#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "coreset/experiment.hpp"

using namespace coreset;
using nlohmann::json;

namespace {

json smoke_config() {
  return json::parse(R"({
    "data": {"model": "gaussian_location", "n": 300, "p": 2, "seed": 3},
    "train": {"T": 10, "K": 3, "S": 20, "M": 8, "region": "sum_N", "kernel": {"kind": "gaussian_ar"}},
    "sampling": {"n_draws": 60},
    "replicates": 1
  })");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing fills defaults") {
  const ExperimentSpec spec = parse_experiment(smoke_config());
  CHECK(spec.train.K == 3);
  CHECK(spec.train.region == RegionKind::sum_N);
  CHECK(spec.train.kernel.kind == KernelKind::gaussian_ar);
  const TrainConfig c = spec.resolve(300, std::nullopt, 2);
  CHECK(c.seed == spec.seed + 2);
  CHECK(c.schedule.alpha == 0.5);
  CHECK(c.schedule.gamma0 == doctest::Approx(0.1 * 300 / 8));

  json full = smoke_config();
  full["train"]["S"] = "N";
  const TrainConfig f = parse_experiment(full).resolve(300, std::nullopt, 0);
  CHECK(f.subsample_size(300) == 300);
  CHECK(f.schedule.alpha == 1.0);
}

TEST_CASE("config errors") {
  json bad = smoke_config();
  bad["train"]["learning_rate"] = 1;
  CHECK_THROWS_AS(parse_experiment(bad), ConfigError);
  bad = smoke_config();
  bad["train"]["optimizer"] = "lbfgs";
  CHECK_THROWS_AS(parse_experiment(bad), ConfigError);
  bad = smoke_config();
  bad["train"]["K"] = 1;
  CHECK_THROWS_AS(parse_experiment(bad).resolve(300, std::nullopt, 0), ConfigError);
  bad = smoke_config();
  bad["sweep"] = {{"var", "colour"}, {"values", {1, 2}}};
  CHECK_THROWS_AS(parse_experiment(bad).resolve(300, 1.0, 0), ConfigError);
  CHECK_THROWS_AS(load_experiment("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("smoke run emits well-formed records") {
  const ExperimentSpec spec = parse_experiment(smoke_config());
  const auto model = make_model(load_data(spec.data));
  const auto ref = reference_moments(*model, spec.reference, spec.train.kernel);
  const ExperimentOutcome out = run_experiment(spec, *model, Method::coreset_mcmc, ref);
  REQUIRE(out.runs.size() == 1);
  CHECK_FALSE(out.any_failure());
  const auto lines = record_lines(out, "");
  REQUIRE_FALSE(lines.empty());
  for (const auto& l : lines) {
    CHECK(l.at("method") == "coreset_mcmc");
    CHECK(l.contains("iteration"));
    CHECK(l.contains("exact_kl"));
    CHECK_FALSE(l.contains("wall_clock"));
  }
  CHECK(lines.back().at("iteration") == 10);
  CHECK(lines.back().contains("two_moment_kl"));
  CHECK(lines.back().contains("rel_mean_err"));
}

TEST_CASE("records are reproducible and summaries recompute from them") {
  json cfg = smoke_config();
  cfg["replicates"] = 4;
  cfg["sweep"] = {{"var", "K"}, {"values", {2, 4}}};
  const ExperimentSpec spec = parse_experiment(cfg);
  const auto model = make_model(load_data(spec.data));
  const auto ref = reference_moments(*model, spec.reference, spec.train.kernel);
  const auto a = record_lines(run_experiment(spec, *model, Method::coreset_mcmc, ref), "K");
  const auto b = record_lines(run_experiment(spec, *model, Method::coreset_mcmc, ref), "K");
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].dump() == b[i].dump());

  const auto dir = std::filesystem::temp_directory_path() / "coreset_experiment_test";
  std::filesystem::create_directories(dir);
  write_jsonl(a, dir / "records.jsonl");
  write_summary_csv(emit_plot_data(a), dir / "summary.csv");
  write_summary_csv(emit_plot_data(read_jsonl(dir / "records.jsonl")), dir / "summary2.csv");
  CHECK(slurp(dir / "summary.csv") == slurp(dir / "summary2.csv"));

  for (const auto& row : emit_plot_data(a)) {
    CHECK(row.p25 <= row.p50);
    CHECK(row.p50 <= row.p75);
    CHECK(row.sweep_var == "K");
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("plot data from a single record and missing metrics") {
  json r = {{"method", "unif"}, {"sweep_var", ""}, {"sweep_value", nullptr}, {"iteration", 0},
            {"cost_proxy", 0.0}, {"exact_kl", 0.5}};
  const auto rows = emit_plot_data({r});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].metric_name == "exact_kl");
  CHECK(rows[0].p25 == 0.5);
  CHECK(rows[0].p75 == 0.5);
  CHECK(percentile({1, 2, 3, 4}, 0.5) == 2.5);
}

TEST_CASE("uniform baseline") {
  json cfg = smoke_config();
  cfg["replicates"] = 3;
  const ExperimentSpec spec = parse_experiment(cfg);
  const auto model = make_model(load_data(spec.data));
  const auto unif = run_unif_baseline(spec, *model, std::nullopt);
  const auto trained = run_experiment(spec, *model, Method::coreset_mcmc, std::nullopt);
  for (std::size_t r = 0; r < 3; ++r) {
    REQUIRE(unif.runs[r].records.size() == 1);
    CHECK(unif.runs[r].records[0].iteration == 0);
    CHECK(*unif.runs[r].records[0].exact_kl == *trained.runs[r].records.front().exact_kl);
  }

  json all = smoke_config();
  all["train"]["M"] = 300;
  all["train"]["S"] = "N";
  const ExperimentSpec whole = parse_experiment(all);
  const auto full = run_unif_baseline(whole, *model, std::nullopt);
  CHECK(*full.runs[0].records[0].exact_kl == doctest::Approx(0.0).scale(1e-12));
}

TEST_CASE("failed runs are recorded without aborting the sweep") {
  json cfg = json::parse(R"({
    "data": {"model": "poisson_reg", "n": 200, "p": 2, "seed": 3},
    "train": {"T": 20, "K": 2, "M": 10, "gamma0": 1e15, "alpha": 1.0, "region": "nonneg"},
    "replicates": 2
  })");
  const ExperimentSpec spec = parse_experiment(cfg);
  const auto model = make_model(load_data(spec.data));
  const auto out = run_experiment(spec, *model, Method::coreset_mcmc, std::nullopt);
  CHECK(out.runs.size() == 2);
  CHECK(out.any_failure());
  const auto lines = record_lines(out, "");
  CHECK(std::count_if(lines.begin(), lines.end(), [](const json& l) { return l.contains("error"); }) == 2);
}

TEST_CASE("bundled configs parse") {
  for (const char* name : {"smoke", "gaussian_location", "gaussian_sweep_K", "logistic", "linear", "poisson"}) {
    const auto path = std::filesystem::path(CORESET_SOURCE_DIR) / "configs" / (std::string(name) + ".json");
    CHECK_NOTHROW(load_experiment(path));
  }
}
