#include "pspin/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "pspin/errors.hpp"
#include "pspin/parallel.hpp"

namespace pspin {

double metropolis_acceptance(double delta, double scale) {
  return std::min(1.0, std::exp(scale * delta));
}

double pt_swap_acceptance(double scale_a, double scale_b, double energy_a,
                          double energy_b) {
  return std::min(1.0, std::exp((scale_a - scale_b) * (energy_b - energy_a)));
}

void metropolis_sweep(ChainState& state, FlipDeltaEngine& engine, double scale) {
  const int n = state.config.size();
  CounterRng rng(state.rng_key, state.rng_counter);

  // N lazy proposal slots at independently random sites. Both lazy steps and
  // random site choice are load-bearing: a permutation sweep (or any scheme
  // with a fixed flip count) is periodic whenever every proposal is accepted
  // (scale*delta = 0 everywhere, e.g. the free model). The single-site walk
  // on the hypercube is bipartite, so without the lazy coin the popcount
  // parity would alternate deterministically and even-interval samples would
  // never leave one parity class.
  for (int k = 0; k < n; ++k) {
    if (rng.next_u64() & 1u) continue;  // lazy step
    const int site = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
    const double delta = engine.total_delta(state.config, site);
    const double accept = metropolis_acceptance(delta, scale);
    if (rng.next_u01() < accept) {
      engine.apply_flip(state.config, site);
      state.cached_energy += delta;
    }
  }
  ++state.sweep_count;
  state.rng_counter = rng.counter();
}

void resync_energy(ChainState& state, FlipDeltaEngine& engine,
                   const DisorderRealization& disorder,
                   const ModelParameters& params) {
  engine.reset(state.config);
  state.cached_energy = gibbs_energy(state.config, disorder, params);
}

std::vector<double> LadderSpec::scales() const {
  if (count < 1) {
    throw ConfigError("ladder count must be >= 1");
  }
  if (count == 1) return {1.0};
  if (!(min_scale > 0.0) || min_scale >= 1.0) {
    throw ConfigError("ladder min_scale must lie in (0, 1)");
  }
  std::vector<double> s(count);
  const double ratio = std::pow(1.0 / min_scale, 1.0 / (count - 1));
  double value = min_scale;
  for (int i = 0; i < count; ++i) {
    s[i] = value;
    value *= ratio;
  }
  s.back() = 1.0;
  return s;
}

void pt_exchange(TemperedEnsemble& ensemble, CounterRng& rng) {
  const int k = static_cast<int>(ensemble.scales.size());
  if (k < 2) {
    throw ConfigError("parallel tempering needs a ladder of at least 2 scales");
  }
  // chain index currently holding each ladder position
  std::vector<int> holder(k, -1);
  for (int c = 0; c < static_cast<int>(ensemble.chains.size()); ++c) {
    holder[ensemble.chains[c].ladder_position] = c;
  }
  const int parity = static_cast<int>(ensemble.exchange_round & 1);
  for (int pos = parity; pos + 1 < k; pos += 2) {
    ChainState& a = ensemble.chains[holder[pos]];
    ChainState& b = ensemble.chains[holder[pos + 1]];
    const double accept =
        pt_swap_acceptance(ensemble.scales[pos], ensemble.scales[pos + 1],
                           a.cached_energy, b.cached_energy);
    ++ensemble.swaps_proposed;
    if (rng.next_u01() < accept) {
      std::swap(a.ladder_position, b.ladder_position);
      std::swap(holder[pos], holder[pos + 1]);
      ++ensemble.swaps_accepted;
    }
  }
  ++ensemble.exchange_round;
}

void MCSchedule::validate() const {
  if (burn_in < 0) throw ConfigError("mc.burn_in must be >= 0");
  if (thinning < 0) throw ConfigError("mc.thinning must be >= 1 (or 0 for auto)");
  if (sweeps < 1) throw ConfigError("mc.sweeps must be >= 1");
  if (resync_interval < 1) throw ConfigError("mc.resync_interval must be >= 1");
  if (ladder.count < 1) throw ConfigError("mc.ladder.count must be >= 1");
}

MCSchedule MCSchedule::resolved(int n_sites) const {
  validate();
  MCSchedule out = *this;
  if (out.thinning == 0) out.thinning = n_sites;
  if (out.sweeps < out.thinning) {
    throw ConfigError("mc.sweeps must be >= thinning");
  }
  return out;
}

std::int64_t MCSchedule::n_samples(int n_sites) const {
  const MCSchedule r = resolved(n_sites);
  return r.sweeps / r.thinning;
}

ReplicaSampler::ReplicaSampler(int n_replicas,
                               const DisorderRealization& disorder,
                               const ModelParameters& params,
                               const MCSchedule& schedule,
                               std::uint64_t master_seed,
                               std::uint64_t stream_salt)
    : disorder_(&disorder), params_(&params) {
  if (n_replicas < 1) {
    throw ConfigError("sampler needs at least 1 replica");
  }
  schedule_ = schedule.resolved(params.n_sites);
  const auto scales = schedule_.ladder.scales();
  const std::uint64_t realization = disorder.realization_index();

  ensembles_.reserve(n_replicas);
  engines_.reserve(n_replicas);
  exchange_rngs_.reserve(n_replicas);
  for (int r = 0; r < n_replicas; ++r) {
    TemperedEnsemble ensemble;
    ensemble.scales = scales;
    std::vector<FlipDeltaEngine> engines;
    for (std::size_t k = 0; k < scales.size(); ++k) {
      CounterRng init(derive_stream_key({master_seed, kTagChainInit, stream_salt,
                                         realization,
                                         static_cast<std::uint64_t>(r),
                                         static_cast<std::uint64_t>(k)}));
      ChainState state{SpinConfiguration::random(params.n_sites, init), 0.0,
                       static_cast<int>(k), 0,
                       derive_stream_key({master_seed, kTagChainSweep, stream_salt,
                                          realization,
                                          static_cast<std::uint64_t>(r),
                                          static_cast<std::uint64_t>(k)}),
                       0};
      FlipDeltaEngine engine(disorder, params);
      resync_energy(state, engine, disorder, params);
      ensemble.chains.push_back(std::move(state));
      engines.push_back(std::move(engine));
    }
    ensembles_.push_back(std::move(ensemble));
    engines_.push_back(std::move(engines));
    exchange_rngs_.emplace_back(derive_stream_key(
        {master_seed, kTagExchange, stream_salt, realization,
         static_cast<std::uint64_t>(r)}));
  }
}

void ReplicaSampler::run_sweeps(std::int64_t count) {
  for (std::int64_t s = 0; s < count; ++s) {
    for (std::size_t r = 0; r < ensembles_.size(); ++r) {
      auto& ensemble = ensembles_[r];
      for (std::size_t c = 0; c < ensemble.chains.size(); ++c) {
        auto& chain = ensemble.chains[c];
        metropolis_sweep(chain, engines_[r][c],
                         ensemble.scales[chain.ladder_position]);
      }
      if (ensemble.scales.size() > 1) {
        pt_exchange(ensemble, exchange_rngs_[r]);
      }
    }
    ++total_sweeps_;
    if (total_sweeps_ % schedule_.resync_interval == 0) {
      for (std::size_t r = 0; r < ensembles_.size(); ++r) {
        for (std::size_t c = 0; c < ensembles_[r].chains.size(); ++c) {
          resync_energy(ensembles_[r].chains[c], engines_[r][c], *disorder_,
                        *params_);
        }
      }
    }
  }
}

ReplicaSample ReplicaSampler::next() {
  if (!burned_in_) {
    run_sweeps(schedule_.burn_in);
    burned_in_ = true;
  }
  run_sweeps(schedule_.thinning);

  std::vector<SpinConfiguration> configs;
  std::vector<double> energies;
  configs.reserve(ensembles_.size());
  energies.reserve(ensembles_.size());
  const int top = static_cast<int>(ensembles_.front().scales.size()) - 1;
  for (const auto& ensemble : ensembles_) {
    for (const auto& chain : ensemble.chains) {
      if (chain.ladder_position == top) {
        configs.push_back(chain.config);
        energies.push_back(chain.cached_energy);
        break;
      }
    }
  }
  OverlapMatrix overlaps = OverlapMatrix::from_configs(configs);
  return ReplicaSample{std::move(configs), std::move(overlaps),
                       std::move(energies)};
}

double ReplicaSampler::swap_acceptance_rate() const {
  std::int64_t proposed = 0;
  std::int64_t accepted = 0;
  for (const auto& ensemble : ensembles_) {
    proposed += ensemble.swaps_proposed;
    accepted += ensemble.swaps_accepted;
  }
  return proposed > 0 ? static_cast<double>(accepted) / proposed : 0.0;
}

std::vector<ReplicaSample> sample_replicas(int n_replicas,
                                           const DisorderRealization& disorder,
                                           const ModelParameters& params,
                                           const MCSchedule& schedule,
                                           std::uint64_t master_seed,
                                           std::int64_t count) {
  if (n_replicas < 2) {
    throw ConfigError("sample_replicas needs n >= 2");
  }
  ReplicaSampler sampler(n_replicas, disorder, params, schedule, master_seed);
  std::vector<ReplicaSample> out;
  out.reserve(count);
  for (std::int64_t i = 0; i < count; ++i) out.push_back(sampler.next());
  return out;
}

namespace {

[[noreturn]] void rethrow_with_index(std::int64_t index) {
  const std::string prefix =
      "disorder realization " + std::to_string(index) + ": ";
  try {
    throw;
  } catch (const BudgetError& e) {
    throw BudgetError(prefix + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(prefix + e.what());
  }
}

}  // namespace

std::vector<EstimateWithError> disorder_average_multi(
    const std::function<std::vector<double>(const DisorderRealization&)>&
        estimator,
    std::size_t n_quantities, const ModelParameters& params,
    int n_realizations, std::uint64_t master_seed,
    const ComputeBudgets& budgets, int workers) {
  if (n_realizations < 2) {
    throw ConfigError("disorder_average needs M >= 2 realizations");
  }
  std::vector<std::vector<double>> results(n_realizations);
  parallel_for(n_realizations, workers, [&](std::int64_t i) {
    try {
      const DisorderRealization disorder =
          draw_disorder(params, master_seed, static_cast<std::uint64_t>(i),
                        budgets);
      results[i] = estimator(disorder);
      if (results[i].size() != n_quantities) {
        throw std::logic_error("estimator returned wrong number of quantities");
      }
    } catch (...) {
      rethrow_with_index(i);
    }
  });

  std::vector<EstimateWithError> out;
  out.reserve(n_quantities);
  std::vector<double> column(n_realizations);
  for (std::size_t q = 0; q < n_quantities; ++q) {
    for (int i = 0; i < n_realizations; ++i) column[i] = results[i][q];
    out.push_back(mean_and_error(column));
  }
  return out;
}

EstimateWithError disorder_average(
    const std::function<double(const DisorderRealization&)>& estimator,
    const ModelParameters& params, int n_realizations,
    std::uint64_t master_seed, const ComputeBudgets& budgets, int workers) {
  auto wrapped = [&](const DisorderRealization& d) {
    return std::vector<double>{estimator(d)};
  };
  return disorder_average_multi(wrapped, 1, params, n_realizations, master_seed,
                                budgets, workers)[0];
}

}  // namespace pspin
