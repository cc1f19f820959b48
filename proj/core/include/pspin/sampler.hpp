#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pspin/estimate.hpp"
#include "pspin/exact.hpp"
#include "pspin/model.hpp"
#include "pspin/rng.hpp"

namespace pspin {

/// One Markov chain: configuration, incrementally tracked Gibbs energy,
/// position in the tempering ladder, and the keyed RNG stream coordinates
/// that make the trajectory replayable.
struct ChainState {
  SpinConfiguration config;
  double cached_energy = 0.0;
  int ladder_position = 0;
  std::int64_t sweep_count = 0;
  std::uint64_t rng_key = 0;
  std::uint64_t rng_counter = 0;
};

/// min(1, exp(scale * delta)) -- positive-exponent Gibbs convention: higher
/// energy value means higher weight.
double metropolis_acceptance(double delta, double scale);

/// min(1, exp((scale_a - scale_b) * (energy_b - energy_a))).
double pt_swap_acceptance(double scale_a, double scale_b, double energy_a,
                          double energy_b);

/// One sweep: N proposal slots. Each slot is lazy with probability 1/2,
/// otherwise it proposes flipping an independently random site, accepted
/// with metropolis_acceptance(flip delta, scale). The lazy coin keeps the
/// chain aperiodic on the bipartite hypercube. The engine must be tracking
/// state.config.
void metropolis_sweep(ChainState& state, FlipDeltaEngine& engine, double scale);

/// Recomputes the cached energy from scratch and rebuilds the engine caches;
/// called periodically to cancel incremental drift.
void resync_energy(ChainState& state, FlipDeltaEngine& engine,
                   const DisorderRealization& disorder,
                   const ModelParameters& params);

/// Tempering ladder: `count` geometric scale points from min_scale up
/// to 1.0. count == 1 means plain Metropolis at the target measure.
struct LadderSpec {
  int count = 1;
  double min_scale = 0.2;

  std::vector<double> scales() const;
};

inline constexpr int kDefaultLadderCount = 12;

/// Chains of one replica spread over a scale ladder. Exchange moves swap
/// ladder positions only; configurations stay with their chains.
struct TemperedEnsemble {
  std::vector<double> scales;     // ascending, back() == 1.0
  std::vector<ChainState> chains; // chains[i].ladder_position is a permutation
  std::int64_t exchange_round = 0;
  std::int64_t swaps_proposed = 0;
  std::int64_t swaps_accepted = 0;
};

/// One round of adjacent-pair exchanges, alternating even/odd pairings per
/// call. Preserves the multisets of configurations and ladder positions.
void pt_exchange(TemperedEnsemble& ensemble, CounterRng& rng);

/// Monte Carlo schedule. thinning == 0 resolves to N sweeps at run time;
/// sweeps is the post-burn-in sweep count, so sweeps / thinning samples are
/// emitted per realization.
struct MCSchedule {
  std::int64_t burn_in = 2000;
  std::int64_t thinning = 0;
  std::int64_t sweeps = 20000;
  LadderSpec ladder;
  std::int64_t resync_interval = 1000;

  void validate() const;
  MCSchedule resolved(int n_sites) const;
  std::int64_t n_samples(int n_sites) const;
};

/// A joint draw of n replicas sharing one disorder realization.
struct ReplicaSample {
  std::vector<SpinConfiguration> configs;
  OverlapMatrix overlaps;
  std::vector<double> energies;  // per-replica Gibbs energies
};

/// Streams ReplicaSamples: n independent chains (each optionally with its
/// own tempering ladder) on shared disorder, measured at scale 1 after
/// burn-in, one sample every `thinning` sweeps. Replica independence given
/// the disorder comes from disjoint rng stream keys.
class ReplicaSampler {
 public:
  ReplicaSampler(int n_replicas, const DisorderRealization& disorder,
                 const ModelParameters& params, const MCSchedule& schedule,
                 std::uint64_t master_seed, std::uint64_t stream_salt = 0);

  ReplicaSample next();

  int n_replicas() const { return static_cast<int>(ensembles_.size()); }
  double swap_acceptance_rate() const;

 private:
  const DisorderRealization* disorder_;
  const ModelParameters* params_;
  MCSchedule schedule_;
  std::vector<TemperedEnsemble> ensembles_;
  std::vector<std::vector<FlipDeltaEngine>> engines_;
  std::vector<CounterRng> exchange_rngs_;
  std::int64_t total_sweeps_ = 0;
  bool burned_in_ = false;

  void run_sweeps(std::int64_t count);
};

/// Convenience: materializes `count` samples from a fresh ReplicaSampler.
/// Requires n_replicas >= 2 (a single "replica tuple" is not a tuple).
std::vector<ReplicaSample> sample_replicas(int n_replicas,
                                           const DisorderRealization& disorder,
                                           const ModelParameters& params,
                                           const MCSchedule& schedule,
                                           std::uint64_t master_seed,
                                           std::int64_t count);

/// Runs a per-disorder estimator on realizations 0..M-1 of master_seed and
/// returns the across-realization mean and standard error. Realizations are
/// evaluated in parallel but reduced in ascending index order, so results
/// are identical for any worker count. Per-realization failures are
/// rethrown with the failing index attached.
EstimateWithError disorder_average(
    const std::function<double(const DisorderRealization&)>& estimator,
    const ModelParameters& params, int n_realizations,
    std::uint64_t master_seed, const ComputeBudgets& budgets = {},
    int workers = 1);

/// Vector-valued variant: the estimator returns n_quantities values per
/// realization; each column is reduced independently.
std::vector<EstimateWithError> disorder_average_multi(
    const std::function<std::vector<double>(const DisorderRealization&)>&
        estimator,
    std::size_t n_quantities, const ModelParameters& params,
    int n_realizations, std::uint64_t master_seed,
    const ComputeBudgets& budgets = {}, int workers = 1);

}  // namespace pspin
