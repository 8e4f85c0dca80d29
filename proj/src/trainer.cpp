#include "coreset/trainer.hpp"

#include <cmath>
#include <exception>
#include <stdexcept>
#include <string>

namespace coreset {
namespace {

using nlohmann::json;

json to_json_vector(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector from_json_vector(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

CoresetState initial_state(const TrainConfig& config, const Model& model) {
  const std::size_t n = model.size();
  std::vector<std::size_t> indices;
  if (config.stratify && model.kind() == ModelKind::logistic_reg) {
    const auto labels = model.data().class_labels();
    indices = select_points(n, config.M, config.seed, std::span<const int>(labels));
  } else {
    indices = select_points(n, config.M, config.seed);
  }
  CoresetState state{std::move(indices), init_weights(config.M, n),
                     FeasibleRegion(config.region, static_cast<double>(n))};
  state.validate(n);
  return state;
}

}  // namespace

void TrainConfig::validate(std::size_t n) const {
  if (K < 2) throw std::invalid_argument("need at least two chains (K >= 2)");
  if (M < 1 || M > n) throw std::invalid_argument("coreset size must satisfy 1 <= M <= N");
  if (S > n) throw std::invalid_argument("subsample size must satisfy 1 <= S <= N");
  if (!(schedule.gamma0 > 0.0) || !std::isfinite(schedule.gamma0))
    throw std::invalid_argument("step size must be positive");
  if (!(schedule.alpha > 0.0) || schedule.alpha > 1.0) throw std::invalid_argument("alpha must lie in (0, 1]");
  if (kernel.steps_per_update < 1) throw std::invalid_argument("steps_per_update must be at least 1");
}

double cost_proxy(const TrainConfig& config, std::size_t n, std::uint64_t t) {
  const double m = static_cast<double>(config.M);
  const double s = static_cast<double>(config.subsample_size(n));
  return (m + s) * std::log(static_cast<double>(config.K)) * static_cast<double>(t);
}

Trainer::Trainer(TrainConfig config, std::shared_ptr<const Model> model)
    : config_(std::move(config)), model_(std::move(model)) {
  if (!model_) throw std::invalid_argument("trainer needs a model");
  config_.validate(model_->size());
  gaussian_ = dynamic_cast<const GaussianLocationModel*>(model_.get());
  state_ = initial_state(config_, *model_);
  optimizer_ = Optimizer(config_.optimizer, config_.M, config_.adam);
  chains_ = ChainEnsemble::initialize(config_.K, model_->dim(), config_.seed);
  control_rng_ = Rng::stream(config_.seed, 0);
}

double Trainer::elapsed() const {
  return accumulated_seconds_;
}

void Trainer::burn_in() {
  while (burn_in_done_ < config_.burn_in) {
    const auto t0 = std::chrono::steady_clock::now();
    const CoresetTarget target(state_, *model_);
    kernel_stats_ += ensemble_step(config_.kernel, target, chains_);
    ++burn_in_done_;
    accumulated_seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  if (iteration_ == 0 && trajectory_.empty()) record(true);
}

void Trainer::step_once() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = model_->size();
  const std::size_t s = config_.subsample_size(n);
  CenteredLogLik centered;
  if (s == n) {
    centered = center_logliks_full_data(*model_, state_.indices, chains_.states);
  } else {
    const auto sub = subsample_indices(n, s, control_rng_);
    centered = center_logliks(*model_, state_.indices, sub, chains_.states);
  }
  const GradientEstimate g = estimate_gradient(state_.w, centered, n, s);
  state_.w = optimizer_.step(state_.w, g.g, config_.schedule, state_.region);

  const CoresetTarget target(state_, *model_);
  kernel_stats_ += ensemble_step(config_.kernel, target, chains_);
  ++iteration_;
  accumulated_seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void Trainer::iterate(std::uint64_t count) {
  if (burn_in_done_ < config_.burn_in) burn_in();
  if (iteration_ == 0 && trajectory_.empty()) record(true);
  for (std::uint64_t i = 0; i < count && iteration_ < config_.T; ++i) {
    step_once();
    record(iteration_ == config_.T);
  }
}

void Trainer::run() {
  try {
    burn_in();
    iterate(config_.T - iteration_);
  } catch (const DivergenceError& e) {
    error_ = std::string("divergence: ") + e.what();
  } catch (const KernelError& e) {
    error_ = std::string("kernel failure: ") + e.what();
  } catch (const std::domain_error& e) {
    error_ = std::string("numerical failure: ") + e.what();
  }
}

void Trainer::record(bool force) {
  const std::uint64_t t = iteration_;
  if (force || t % config_.stride() == 0) {
    if (trajectory_iterations_.empty() || trajectory_iterations_.back() != t) {
      trajectory_iterations_.push_back(t);
      trajectory_.push_back(state_.w);
    }
  }
  const bool due = force || (config_.metric_every > 0 && t % config_.metric_every == 0);
  if (!due || (!records_.empty() && records_.back().iteration == t)) return;
  MetricsRecord rec;
  rec.iteration = t;
  rec.cost_proxy = cost_proxy(config_, model_->size(), t);
  rec.wall_clock = elapsed();
  if (gaussian_) {
    const double kl = gaussian_location_kl(state_, *gaussian_);
    if (!std::isfinite(kl)) throw DivergenceError("exact KL is not finite at iteration " + std::to_string(t));
    rec.exact_kl = kl;
  }
  records_.push_back(rec);
}

TrainResult Trainer::result() const {
  TrainResult r;
  r.state = state_;
  r.trajectory_iterations = trajectory_iterations_;
  r.trajectory = trajectory_;
  r.records = records_;
  r.chains = chains_;
  r.kernel = config_.kernel;
  r.kernel_stats = kernel_stats_;
  r.iterations = iteration_;
  r.train_seconds = elapsed();
  r.error = error_;
  return r;
}

json Trainer::checkpoint() const {
  json chains = json::array();
  json rngs = json::array();
  for (std::size_t k = 0; k < chains_.size(); ++k) {
    chains.push_back(to_json_vector(chains_.states[k]));
    rngs.push_back(chains_.rngs[k].serialize());
  }
  return json{
      {"format", "coreset-checkpoint-1"},
      {"seed", config_.seed},
      {"iteration", iteration_},
      {"burn_in_done", burn_in_done_},
      {"region", to_string(state_.region.kind())},
      {"indices", state_.indices},
      {"weights", to_json_vector(state_.w)},
      {"optimizer",
       {{"kind", to_string(optimizer_.kind())},
        {"t", optimizer_.iteration()},
        {"m", to_json_vector(optimizer_.first_moment())},
        {"v", to_json_vector(optimizer_.second_moment())}}},
      {"chains", chains},
      {"chain_rngs", rngs},
      {"control_rng", control_rng_.serialize()},
      {"train_seconds", accumulated_seconds_},
  };
}

Trainer Trainer::restore(TrainConfig config, std::shared_ptr<const Model> model, const json& cp) {
  if (cp.value("format", "") != "coreset-checkpoint-1") throw std::invalid_argument("not a checkpoint");
  if (cp.at("seed").get<std::uint64_t>() != config.seed) throw std::invalid_argument("checkpoint seed differs from config");
  Trainer tr(std::move(config), std::move(model));
  const std::size_t n = tr.model_->size();
  tr.iteration_ = cp.at("iteration").get<std::uint64_t>();
  tr.burn_in_done_ = cp.at("burn_in_done").get<std::uint64_t>();
  tr.state_.indices = cp.at("indices").get<std::vector<std::size_t>>();
  tr.state_.w = from_json_vector(cp.at("weights"));
  tr.state_.region = FeasibleRegion(parse_region_kind(cp.at("region").get<std::string>()), static_cast<double>(n));
  tr.state_.validate(n);
  if (tr.state_.size() != tr.config_.M) throw std::invalid_argument("checkpoint coreset size differs from config");
  const json& opt = cp.at("optimizer");
  if (parse_optimizer_kind(opt.at("kind").get<std::string>()) != tr.config_.optimizer)
    throw std::invalid_argument("checkpoint optimizer differs from config");
  tr.optimizer_.restore(opt.at("t").get<std::uint64_t>(), from_json_vector(opt.at("m")), from_json_vector(opt.at("v")));
  const json& chains = cp.at("chains");
  const json& rngs = cp.at("chain_rngs");
  if (chains.size() != tr.config_.K || rngs.size() != tr.config_.K)
    throw std::invalid_argument("checkpoint chain count differs from config");
  for (std::size_t k = 0; k < tr.config_.K; ++k) {
    tr.chains_.states[k] = from_json_vector(chains[k]);
    if (static_cast<std::size_t>(tr.chains_.states[k].size()) != tr.model_->dim())
      throw std::invalid_argument("checkpoint chain dimension differs from model");
    tr.chains_.rngs[k] = Rng::deserialize(rngs[k].get<std::string>());
  }
  tr.control_rng_ = Rng::deserialize(cp.at("control_rng").get<std::string>());
  tr.accumulated_seconds_ = cp.value("train_seconds", 0.0);
  return tr;
}

TrainResult train(const TrainConfig& config, std::shared_ptr<const Model> model) {
  Trainer trainer(config, std::move(model));
  trainer.run();
  return trainer.result();
}

SampleSet sample_after_training(const TrainResult& result, const Model& model, std::size_t n_draws,
                                std::size_t thinning) {
  if (thinning < 1) throw std::invalid_argument("thinning must be at least 1");
  const std::size_t k_chains = result.chains.size();
  if (k_chains == 0) throw std::invalid_argument("no chains to sample from");
  const std::size_t dim = model.dim();
  ChainEnsemble chains = result.chains;
  const CoresetTarget target(result.state, model);

  SampleSet out;
  out.per_chain.resize(k_chains);
  std::vector<std::exception_ptr> errors(k_chains);
  const auto t0 = std::chrono::steady_clock::now();
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t kk = 0; kk < static_cast<std::ptrdiff_t>(k_chains); ++kk) {
    const auto k = static_cast<std::size_t>(kk);
    const std::size_t count = k < n_draws ? (n_draws - k + k_chains - 1) / k_chains : 0;
    Matrix draws(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    try {
      for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t r = 0; r < thinning; ++r)
          chains.states[k] = kernel_step(result.kernel, target, chains.states[k], chains.rngs[k]);
        draws.row(static_cast<Eigen::Index>(i)) = chains.states[k].transpose();
      }
    } catch (...) {
      errors[k] = std::current_exception();
    }
    out.per_chain[k] = std::move(draws);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  out.draws.resize(static_cast<Eigen::Index>(n_draws), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < n_draws; ++i)
    out.draws.row(static_cast<Eigen::Index>(i)) = out.per_chain[i % k_chains].row(static_cast<Eigen::Index>(i / k_chains));
  out.kernel_steps = static_cast<std::uint64_t>(n_draws) * thinning;
  return out;
}

}  // namespace coreset
