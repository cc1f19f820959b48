#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pspin/rng.hpp"

namespace pspin {

/// A state of N Ising spins, each exactly -1 or +1.
class SpinConfiguration {
 public:
  explicit SpinConfiguration(std::vector<std::int8_t> spins);

  static SpinConfiguration all_up(int n_sites);
  /// Bit i set -> spin i is +1. Requires n_sites <= 64.
  static SpinConfiguration from_mask(std::uint64_t mask, int n_sites);
  static SpinConfiguration random(int n_sites, CounterRng& rng);

  int size() const { return static_cast<int>(spins_.size()); }
  int spin(int site) const { return spins_[static_cast<std::size_t>(site)]; }
  void flip(int site);

  std::span<const std::int8_t> spins() const { return spins_; }
  std::uint64_t mask() const;

  /// Per-site mean (1/N) sum_i sigma_i.
  double magnetization() const;

  bool operator==(const SpinConfiguration&) const = default;

 private:
  std::vector<std::int8_t> spins_;
};

struct InteractionTerm {
  int degree = 0;     // p
  double beta = 0.0;  // coefficient beta_p
};

/// Caps on what the toolkit will attempt; all configurable per run.
struct ComputeBudgets {
  int max_degree = 4;
  std::uint64_t max_tensor_entries = std::uint64_t{1} << 28;
  int exact_max_sites = 20;       // single-replica enumeration: N <= 20
  int direct_max_bits = 26;       // n-replica tuple enumeration: n*N <= 26
  double factorized_max_tuples = 1e8;  // site-tuple sum in the factorized engine
};

/// System size, interaction coefficients (beta_p), and external field h.
struct ModelParameters {
  int n_sites = 0;
  std::vector<InteractionTerm> terms;  // distinct degrees, each p >= 1
  double field = 0.0;                  // h

  /// Throws ConfigError on structural problems, BudgetError when the
  /// largest coupling tensor would not fit the configured budget.
  void validate(const ComputeBudgets& budgets = {}) const;

  const InteractionTerm* find_term(int degree) const;
  std::vector<int> degrees() const;  // ascending

  /// Copy with the coefficient of `degree` replaced by x (the term is added
  /// if absent) -- the "beta_p replaced by x" sweep parameterization.
  ModelParameters with_coefficient(int degree, double x) const;
};

/// The i.i.d. standard Gaussian couplings g_{i1..ip}, one dense row-major
/// tensor of N^p entries per included degree, plus the (master_seed,
/// realization_index) coordinates that regenerate it bit-for-bit.
class DisorderRealization {
 public:
  DisorderRealization(int n_sites, std::vector<int> degrees,
                      std::vector<std::vector<double>> tensors,
                      std::uint64_t master_seed, std::uint64_t realization_index);

  /// Throws std::invalid_argument if the degree is absent.
  std::span<const double> tensor(int degree) const;
  bool has_degree(int degree) const;

  int n_sites() const { return n_sites_; }
  const std::vector<int>& degrees() const { return degrees_; }
  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t realization_index() const { return realization_index_; }

  std::uint64_t total_entries() const;

 private:
  int n_sites_;
  std::vector<int> degrees_;
  std::vector<std::vector<double>> tensors_;
  std::uint64_t master_seed_;
  std::uint64_t realization_index_;
};

/// Draws all coupling tensors for the model from the counter-based stream
/// keyed by (master_seed, realization_index, degree). Bit-for-bit
/// reproducible; independent across degrees and realization indices.
DisorderRealization draw_disorder(const ModelParameters& params,
                                  std::uint64_t master_seed,
                                  std::uint64_t realization_index,
                                  const ComputeBudgets& budgets = {});

/// H_p(sigma) = N^{-(p-1)/2} sum over all N^p ordered index tuples of
/// g_{i1..ip} sigma_{i1} ... sigma_{ip}.
double hamiltonian_p(const SpinConfiguration& config,
                     const DisorderRealization& disorder, int degree);

/// The Gibbs exponent sum_p beta_p H_p(sigma) + h sum_i sigma_i. The Gibbs
/// weight is exp of this value (positive sign).
double gibbs_energy(const SpinConfiguration& config,
                    const DisorderRealization& disorder,
                    const ModelParameters& params);

/// gibbs_energy(config with `site` flipped) - gibbs_energy(config), without
/// re-summing the full tensors: O(1) for p=1, O(N) for p=2,
/// O(p*N^{p-1}) for p >= 3.
double flip_delta(const SpinConfiguration& config, int site,
                  const DisorderRealization& disorder,
                  const ModelParameters& params);

/// Overlap R = (1/N) sum_i a_i b_i in [-1, 1].
double overlap(const SpinConfiguration& a, const SpinConfiguration& b);

/// Symmetric n x n overlap matrix of a replica tuple; unit diagonal.
class OverlapMatrix {
 public:
  static OverlapMatrix from_configs(std::span<const SpinConfiguration> configs);

  int n_replicas() const { return n_; }
  double at(int l, int m) const { return entries_[l * n_ + m]; }

 private:
  OverlapMatrix(int n, std::vector<double> entries)
      : n_(n), entries_(std::move(entries)) {}
  int n_ = 0;
  std::vector<double> entries_;
};

/// Incremental spin-flip energy deltas against a tracked configuration.
/// Degrees 1 and 2 are served from per-site local-field caches that are
/// updated on accepted flips; higher degrees recompute the affected partial
/// sums directly. Rebuild with reset() to clear accumulated drift.
class FlipDeltaEngine {
 public:
  FlipDeltaEngine(const DisorderRealization& disorder,
                  const ModelParameters& params);

  /// Rebuilds the caches for `config`. Must be called before the first
  /// delta/apply, and the tracked config may only change through apply_flip.
  void reset(const SpinConfiguration& config);

  /// Delta of H_p alone (no beta factor) for flipping `site`.
  double h_delta(const SpinConfiguration& config, int site, int degree) const;

  /// Delta of the full Gibbs energy for flipping `site`.
  double total_delta(const SpinConfiguration& config, int site) const;

  /// Flips config[site] and updates the caches.
  void apply_flip(SpinConfiguration& config, int site);

 private:
  const DisorderRealization* disorder_;
  const ModelParameters* params_;
  std::vector<double> pair_field_;  // degree 2: ell_k = sum_j (g_kj + g_jk) sigma_j
  bool has_pair_ = false;
};

}  // namespace pspin
