#include "coreset/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

namespace coreset {
namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items())
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

std::uint64_t get_count(const json& obj, const char* key, std::uint64_t fallback, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw ConfigError(where + "." + key + ": expected a nonnegative integer");
  return v.get<std::uint64_t>();
}

KernelFamily parse_kernel(const json& j, KernelFamily k) {
  check_keys(j, "train.kernel", {"kind", "init_width", "max_doublings", "beta", "proposal_scale", "steps_per_update"});
  try {
    if (j.contains("kind")) k.kind = parse_kernel_kind(j.at("kind").get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train.kernel.kind: ") + e.what());
  }
  k.init_width = get_or(j, "init_width", k.init_width, "train.kernel");
  k.max_doublings = get_or(j, "max_doublings", k.max_doublings, "train.kernel");
  k.beta = get_or(j, "beta", k.beta, "train.kernel");
  k.proposal_scale = get_or(j, "proposal_scale", k.proposal_scale, "train.kernel");
  k.steps_per_update = get_or(j, "steps_per_update", k.steps_per_update, "train.kernel");
  if (!(k.init_width > 0.0) || k.max_doublings < 0 || k.beta < 0.0 || k.beta > 1.0 || !(k.proposal_scale > 0.0) ||
      k.steps_per_update < 1)
    throw ConfigError("train.kernel: parameter out of range");
  return k;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool full_data(const TrainConfig& c, std::size_t n) { return c.subsample_size(n) == n; }

std::shared_ptr<const Model> borrow(const Model& model) {
  return std::shared_ptr<const Model>(&model, [](const Model*) {});
}

ReplicateResult run_one(const ExperimentSpec& spec, const Model& model, Method method, const TrainConfig& cfg,
                        std::optional<double> sweep_value, std::size_t replicate,
                        const std::optional<MomentSummary>& reference) {
  ReplicateResult out;
  out.method = method;
  out.sweep_value = sweep_value;
  out.replicate = replicate;
  out.seed = cfg.seed;
  try {
    std::optional<Trainer> trainer;
    if (method == Method::coreset_mcmc && spec.resume_from) {
      std::ifstream in(*spec.resume_from);
      if (!in) throw ConfigError("cannot open checkpoint " + spec.resume_from->string());
      trainer.emplace(Trainer::restore(cfg, borrow(model), json::parse(in)));
    } else {
      trainer.emplace(cfg, borrow(model));
    }
    trainer->run();
    TrainResult result = trainer->result();
    out.checkpoint = trainer->checkpoint();
    out.records = result.records;
    out.state = result.state;
    out.error = result.error;
    if (out.error || spec.n_draws == 0) return out;

    const SampleSet samples = sample_after_training(result, model, spec.n_draws, spec.thinning);
    MetricsRecord& last = out.records.back();
    const MomentSummary hat = MomentSummary::from_draws(samples.draws);
    if (reference) {
      last.two_moment_kl = two_moment_kl(hat, *reference);
      const auto [rm, rc] = relative_errors(hat, *reference);
      last.rel_mean_err = rm;
      last.rel_cov_err = rc;
    }
    bool enough = samples.seconds > 0.0;
    for (const auto& c : samples.per_chain) enough = enough && c.rows() >= 8;
    if (enough) last.min_ess_per_sec = min_ess_per_sec(samples.per_chain, samples.seconds);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace

TrainConfig ExperimentSpec::resolve(std::size_t n, std::optional<double> sweep_value, std::size_t replicate) const {
  TrainConfig c = train;
  c.seed = seed + replicate;
  double scale = step_scale;
  std::optional<double> g0 = gamma0;
  std::optional<double> a = alpha;
  if (sweep_value) {
    const double v = *sweep_value;
    const auto as_count = [&](const char* what) {
      if (v < 0 || v != std::floor(v)) throw ConfigError(std::string("sweep value for ") + what + " must be a count");
      return static_cast<std::uint64_t>(v);
    };
    if (sweep.var == "K") c.K = as_count("K");
    else if (sweep.var == "S") c.S = as_count("S");
    else if (sweep.var == "M") c.M = as_count("M");
    else if (sweep.var == "T") c.T = as_count("T");
    else if (sweep.var == "burn_in") c.burn_in = as_count("burn_in");
    else if (sweep.var == "steps_per_update") c.kernel.steps_per_update = static_cast<int>(as_count("steps_per_update"));
    else if (sweep.var == "beta") c.kernel.beta = v;
    else if (sweep.var == "alpha") a = v;
    else if (sweep.var == "step_scale") scale = v;
    else if (sweep.var == "gamma0") g0 = v;
    else throw ConfigError("unknown sweep variable '" + sweep.var + "'");
  }
  if (c.S >= n) c.S = 0;
  c.schedule.gamma0 = g0.value_or(scale * static_cast<double>(n) / static_cast<double>(std::max<std::size_t>(c.M, 1)));
  c.schedule.alpha = a.value_or(full_data(c, n) ? 1.0 : 0.5);
  try {
    c.validate(n);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

ExperimentSpec parse_experiment(const json& j) {
  ExperimentSpec s;
  check_keys(j, "config", {"name", "data", "train", "sampling", "reference", "baseline", "sweep", "replicates", "seed",
                           "out", "resume_from"});
  s.name = get_or<std::string>(j, "name", s.name, "config");
  s.replicates = get_count(j, "replicates", s.replicates, "config");
  s.seed = get_count(j, "seed", s.seed, "config");
  if (j.contains("out")) s.out_dir = get_or<std::string>(j, "out", "out", "config");
  if (j.contains("resume_from")) s.resume_from = get_or<std::string>(j, "resume_from", "", "config");

  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, "data", {"model", "csv", "response_column", "n", "p", "seed"});
    try {
      s.data.kind = parse_model_kind(get_or<std::string>(d, "model", "gaussian_location", "data"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("data.model: ") + e.what());
    }
    if (d.contains("csv")) s.data.csv = get_or<std::string>(d, "csv", "", "data");
    s.data.response_column = get_or<std::string>(d, "response_column", s.data.response_column, "data");
    s.data.n = get_count(d, "n", s.data.n, "data");
    s.data.p = get_count(d, "p", s.data.p, "data");
    s.data.seed = get_count(d, "seed", s.data.seed, "data");
    if (s.data.n < 1 || s.data.p < 1) throw ConfigError("data: n and p must be positive");
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, "train", {"T", "K", "S", "M", "burn_in", "step_scale", "gamma0", "alpha", "optimizer", "adam",
                            "kernel", "region", "stratify", "metric_every", "trajectory_stride"});
    TrainConfig& c = s.train;
    c.T = get_count(t, "T", c.T, "train");
    c.K = get_count(t, "K", c.K, "train");
    if (t.contains("S") && t.at("S").is_string()) {
      if (t.at("S").get<std::string>() != "N") throw ConfigError("train.S: expected a count or \"N\"");
      c.S = 0;
    } else {
      c.S = get_count(t, "S", c.S, "train");
    }
    c.M = get_count(t, "M", c.M, "train");
    c.burn_in = get_count(t, "burn_in", c.burn_in, "train");
    s.step_scale = get_or(t, "step_scale", s.step_scale, "train");
    if (t.contains("gamma0") && !t.at("gamma0").is_null()) s.gamma0 = get_or(t, "gamma0", 0.0, "train");
    if (t.contains("alpha") && !t.at("alpha").is_null()) s.alpha = get_or(t, "alpha", 1.0, "train");
    try {
      if (t.contains("optimizer")) c.optimizer = parse_optimizer_kind(t.at("optimizer").get<std::string>());
      if (t.contains("region")) c.region = parse_region_kind(t.at("region").get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("train: ") + e.what());
    }
    if (t.contains("adam")) {
      const json& a = t.at("adam");
      check_keys(a, "train.adam", {"beta1", "beta2", "epsilon"});
      c.adam.beta1 = get_or(a, "beta1", c.adam.beta1, "train.adam");
      c.adam.beta2 = get_or(a, "beta2", c.adam.beta2, "train.adam");
      c.adam.epsilon = get_or(a, "epsilon", c.adam.epsilon, "train.adam");
    }
    if (t.contains("kernel")) c.kernel = parse_kernel(t.at("kernel"), c.kernel);
    c.stratify = get_or(t, "stratify", c.stratify, "train");
    c.metric_every = get_count(t, "metric_every", c.metric_every, "train");
    c.trajectory_stride = get_count(t, "trajectory_stride", c.trajectory_stride, "train");
  }

  if (j.contains("sampling")) {
    const json& sm = j.at("sampling");
    check_keys(sm, "sampling", {"n_draws", "thinning"});
    s.n_draws = get_count(sm, "n_draws", s.n_draws, "sampling");
    s.thinning = get_count(sm, "thinning", s.thinning, "sampling");
    if (s.thinning < 1) throw ConfigError("sampling.thinning must be at least 1");
  }
  if (j.contains("reference")) {
    const json& r = j.at("reference");
    check_keys(r, "reference", {"n_draws", "burn_in", "chains", "seed"});
    s.reference.n_draws = get_count(r, "n_draws", s.reference.n_draws, "reference");
    s.reference.burn_in = get_count(r, "burn_in", s.reference.burn_in, "reference");
    s.reference.chains = get_count(r, "chains", s.reference.chains, "reference");
    s.reference.seed = get_count(r, "seed", s.reference.seed, "reference");
    if (s.reference.chains < 1) throw ConfigError("reference.chains must be positive");
  }
  if (j.contains("baseline")) {
    const json& b = j.at("baseline");
    check_keys(b, "baseline", {"include", "burn_in"});
    s.include_baseline = get_or(b, "include", s.include_baseline, "baseline");
    if (b.contains("burn_in") && !b.at("burn_in").is_null()) s.baseline_burn_in = get_count(b, "burn_in", 0, "baseline");
  }
  if (j.contains("sweep")) {
    const json& sw = j.at("sweep");
    check_keys(sw, "sweep", {"var", "values"});
    s.sweep.var = get_or<std::string>(sw, "var", "", "sweep");
    s.sweep.values = get_or<std::vector<double>>(sw, "values", {}, "sweep");
    if (s.sweep.var.empty() != s.sweep.values.empty()) throw ConfigError("sweep: need both var and values");
  }
  if (s.replicates < 1) throw ConfigError("replicates must be positive");
  return s;
}

ExperimentSpec load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_experiment(j);
}

Dataset load_data(const DataSource& source) {
  if (source.csv) return load_csv(*source.csv, CsvSchema{source.kind, source.response_column});
  return generate_synthetic(source.kind, source.n, source.p, source.seed);
}

std::string_view to_string(Method method) { return method == Method::coreset_mcmc ? "coreset_mcmc" : "unif"; }

bool ExperimentOutcome::any_failure() const {
  return std::any_of(runs.begin(), runs.end(), [](const ReplicateResult& r) { return r.error.has_value(); });
}

MomentSummary reference_moments(const Model& model, const ReferenceSpec& spec, KernelFamily kernel) {
  if (const auto* g = dynamic_cast<const GaussianLocationModel*>(&model)) {
    const GaussianLocationPosterior post = g->full_posterior();
    MomentSummary m;
    m.mean = post.mu_w;
    m.cov = post.sigma2 * Matrix::Identity(post.mu_w.size(), post.mu_w.size());
    m.n = 0;
    return m;
  }
  const std::size_t n = model.size();
  TrainResult full;
  full.state.indices.resize(n);
  std::iota(full.state.indices.begin(), full.state.indices.end(), std::size_t{0});
  full.state.w = Vector::Ones(static_cast<Eigen::Index>(n));
  full.state.region = FeasibleRegion(RegionKind::nonneg, static_cast<double>(n));
  kernel.steps_per_update = 1;
  full.kernel = kernel;
  full.chains = ChainEnsemble::initialize(std::max<std::size_t>(spec.chains, 1), model.dim(), spec.seed);
  {
    const CoresetTarget target(full.state, model);
    for (std::uint64_t i = 0; i < spec.burn_in; ++i) ensemble_step(kernel, target, full.chains);
  }
  const SampleSet s = sample_after_training(full, model, spec.n_draws, 1);
  return MomentSummary::from_draws(s.draws);
}

ExperimentOutcome run_experiment(const ExperimentSpec& spec, const Model& model, Method method,
                                 const std::optional<MomentSummary>& reference) {
  struct Job {
    TrainConfig cfg;
    std::optional<double> sweep_value;
    std::size_t replicate;
  };
  std::vector<Job> jobs;
  std::vector<std::optional<double>> points;
  if (spec.sweep.var.empty()) points.emplace_back();
  for (double v : spec.sweep.values) points.emplace_back(v);
  const std::size_t n = model.size();
  for (const auto& point : points) {
    for (std::size_t r = 0; r < spec.replicates; ++r) {
      TrainConfig cfg = spec.resolve(n, point, r);
      if (method == Method::unif) {
        cfg.T = 0;
        cfg.burn_in = spec.baseline_burn_in.value_or(spec.n_draws / cfg.K);
      }
      jobs.push_back({std::move(cfg), point, r});
    }
  }
  if (spec.resume_from && jobs.size() != 1) throw ConfigError("resume_from needs a single run (one replicate, no sweep)");

  ExperimentOutcome outcome;
  outcome.runs.resize(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(jobs.size()); ++i) {
    const Job& job = jobs[static_cast<std::size_t>(i)];
    try {
      outcome.runs[static_cast<std::size_t>(i)] =
          run_one(spec, model, method, job.cfg, job.sweep_value, job.replicate, reference);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return outcome;
}

ExperimentOutcome run_unif_baseline(const ExperimentSpec& spec, const Model& model,
                                    const std::optional<MomentSummary>& reference) {
  return run_experiment(spec, model, Method::unif, reference);
}

namespace {

json line_header(const ReplicateResult& run, const std::string& sweep_var) {
  json j;
  j["method"] = to_string(run.method);
  j["sweep_var"] = sweep_var;
  j["sweep_value"] = run.sweep_value ? json(*run.sweep_value) : json(nullptr);
  j["replicate"] = run.replicate;
  j["seed"] = run.seed;
  return j;
}

}  // namespace

std::vector<json> record_lines(const ExperimentOutcome& outcome, const std::string& sweep_var) {
  std::vector<json> lines;
  for (const auto& run : outcome.runs) {
    for (const auto& rec : run.records) {
      json j = line_header(run, sweep_var);
      j.update(rec.to_json());
      lines.push_back(std::move(j));
    }
    if (run.error) {
      json j = line_header(run, sweep_var);
      j["error"] = *run.error;
      lines.push_back(std::move(j));
    }
  }
  return lines;
}

std::vector<json> timing_lines(const ExperimentOutcome& outcome, const std::string& sweep_var) {
  std::vector<json> lines;
  for (const auto& run : outcome.runs) {
    for (const auto& rec : run.records) {
      json j = line_header(run, sweep_var);
      j["iteration"] = rec.iteration;
      j["cost_proxy"] = rec.cost_proxy;
      j.update(rec.timing_json());
      lines.push_back(std::move(j));
    }
  }
  return lines;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<SummaryRow> emit_plot_data(const std::vector<json>& records) {
  static const char* const kMetrics[] = {"exact_kl",    "two_moment_kl", "rel_mean_err",
                                         "rel_cov_err", "min_ess_per_sec", "wall_clock"};
  using Key = std::tuple<std::string, std::optional<double>, std::uint64_t, std::size_t>;
  struct Group {
    std::string sweep_var;
    double cost_proxy = 0.0;
    std::vector<double> values;
  };
  std::map<Key, Group> groups;
  for (const auto& r : records) {
    if (r.contains("error") || !r.contains("iteration")) continue;
    const std::optional<double> sv =
        r.contains("sweep_value") && !r.at("sweep_value").is_null() ? std::optional<double>(r.at("sweep_value").get<double>())
                                                                    : std::nullopt;
    for (std::size_t m = 0; m < std::size(kMetrics); ++m) {
      if (!r.contains(kMetrics[m]) || r.at(kMetrics[m]).is_null()) continue;
      Group& g = groups[Key{r.at("method").get<std::string>(), sv, r.at("iteration").get<std::uint64_t>(), m}];
      g.sweep_var = r.value("sweep_var", "");
      g.cost_proxy = r.value("cost_proxy", 0.0);
      g.values.push_back(r.at(kMetrics[m]).get<double>());
    }
  }
  std::vector<SummaryRow> rows;
  rows.reserve(groups.size());
  for (const auto& [key, g] : groups) {
    SummaryRow row;
    row.method = std::get<0>(key);
    row.sweep_var = g.sweep_var;
    row.sweep_value = std::get<1>(key);
    row.iteration = std::get<2>(key);
    row.cost_proxy = g.cost_proxy;
    row.metric_name = kMetrics[std::get<3>(key)];
    row.p25 = percentile(g.values, 0.25);
    row.p50 = percentile(g.values, 0.50);
    row.p75 = percentile(g.values, 0.75);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "method,sweep_var,sweep_value,iteration,cost_proxy,metric_name,p25,p50,p75\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.sweep_var << ',' << (r.sweep_value ? format_double(*r.sweep_value) : "") << ','
        << r.iteration << ',' << format_double(r.cost_proxy) << ',' << r.metric_name << ',' << format_double(r.p25)
        << ',' << format_double(r.p50) << ',' << format_double(r.p75) << '\n';
  }
}

void write_jsonl(const std::vector<json>& lines, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& l : lines) out << l.dump() << '\n';
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<json> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(json::parse(line));
  return lines;
}

}  // namespace coreset
