#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pspin/model.hpp"

namespace pspin {

/// Exact Gibbs data for one disorder realization, enumerated over all 2^N
/// configurations. Configurations are indexed by bit mask (bit i set means
/// sigma_i = +1). Built with a Gray-code walk so each step costs one
/// incremental flip delta.
class GibbsTable {
 public:
  GibbsTable(const DisorderRealization& disorder, const ModelParameters& params,
             const ComputeBudgets& budgets = {});

  int n_sites() const { return n_sites_; }
  std::size_t n_configs() const { return energies_.size(); }

  double energy(std::uint64_t mask) const { return energies_[mask]; }
  double probability(std::uint64_t mask) const { return probabilities_[mask]; }
  /// H_p of the configuration; degree must appear in the model terms.
  double hamiltonian_value(std::uint64_t mask, int degree) const;

  double log_partition() const { return log_partition_; }
  double psi() const { return log_partition_ / n_sites_; }
  double min_energy() const { return min_energy_; }
  double max_energy() const { return max_energy_; }

  /// sum of probabilities; equals 1 up to accumulation error (diagnostic).
  double probability_sum() const;

  double thermal_mean_h(int degree) const;
  double thermal_var_h(int degree) const;
  double thermal_mean_abs_h_centered(int degree, double center) const;
  /// <|H_p(sigma^1) - H_p(sigma^2)|> over two independent replicas; costs
  /// 4^N and is budget-guarded by direct_max_bits.
  double thermal_mean_abs_h_two_replica(int degree,
                                        const ComputeBudgets& budgets = {}) const;

  /// <sigma_{i1} ... sigma_{ik}> for the site set encoded as a bit mask
  /// (repeated indices must already be cancelled pairwise).
  double spin_correlation_mask(std::uint64_t site_mask) const;

 private:
  int n_sites_;
  std::vector<int> degrees_;            // ascending, from the model terms
  std::vector<std::vector<double>> h_values_;  // one column per degree
  std::vector<double> energies_;
  std::vector<double> probabilities_;
  double log_partition_ = 0.0;
  double min_energy_ = 0.0;
  double max_energy_ = 0.0;

  int degree_slot(int degree) const;
};

/// log Z_N and psi_N = log(Z_N)/N for one realization, with the coordinates
/// that regenerate it.
struct FreeEnergySample {
  double log_partition = 0.0;
  double psi = 0.0;
  ModelParameters params;
  std::uint64_t master_seed = 0;
  std::uint64_t realization_index = 0;
};

FreeEnergySample log_partition(const DisorderRealization& disorder,
                               const ModelParameters& params,
                               const ComputeBudgets& budgets = {});

/// Read-only view of an n-tuple of replica configurations handed to test
/// functions; overlaps are O(1) (popcount) in enumeration mode.
class ReplicaView {
 public:
  /// Enumeration mode: masks index into a pool of all 2^N configurations.
  ReplicaView(int n_sites, std::span<const std::uint32_t> masks,
              const std::vector<SpinConfiguration>* config_pool)
      : n_sites_(n_sites), masks_(masks), pool_(config_pool) {}

  /// Sample mode: explicit configurations with a precomputed overlap matrix.
  ReplicaView(std::span<const SpinConfiguration> configs,
              const OverlapMatrix* overlaps);

  int n_replicas() const;
  int n_sites() const { return n_sites_; }
  double overlap_between(int l, int m) const;
  const SpinConfiguration& config(int l) const;

 private:
  int n_sites_;
  std::span<const std::uint32_t> masks_;
  const std::vector<SpinConfiguration>* pool_ = nullptr;
  std::span<const SpinConfiguration> configs_;
  const OverlapMatrix* overlaps_ = nullptr;
};

using ReplicaFunction = std::function<double(const ReplicaView&)>;

/// <f(sigma^1..sigma^n)> under the exact product Gibbs measure, by direct
/// enumeration over all 2^{nN} replica tuples. Requires n*N within the
/// direct enumeration budget.
double thermal_expectation_direct(const ReplicaFunction& f, int n_replicas,
                                  const DisorderRealization& disorder,
                                  const ModelParameters& params,
                                  const ComputeBudgets& budgets = {});

/// <sigma_{i1} ... sigma_{ik}> under the exact single-replica Gibbs measure;
/// repeated site indices cancel in pairs before enumeration.
double spin_correlation(std::span<const int> sites,
                        const DisorderRealization& disorder,
                        const ModelParameters& params,
                        const ComputeBudgets& budgets = {});

/// A product of powers of overlap entries, prod R_{l,m}^{q_{l,m}} over pairs
/// 0 <= l < m < n. Values lie in [-1, 1], so monomials double as pre-bounded
/// test functions.
struct OverlapMonomial {
  struct Factor {
    int l = 0;
    int m = 1;
    int power = 1;
  };
  int n_replicas = 2;
  std::vector<Factor> factors;

  int total_degree() const;
  void validate() const;
  double evaluate(const ReplicaView& view) const;
  double evaluate(const OverlapMatrix& overlaps) const;
  /// Compact display name with 1-based replica labels, e.g. "R(1,2)^2".
  std::string name() const;
};

/// Thermal average of an overlap monomial for one disorder realization,
/// expanded into per-replica spin correlations: replica independence under
/// the product measure factorizes the average into single-replica
/// enumerations plus an N^degree site-tuple sum. Matches
/// thermal_expectation_direct to ~1e-10 and is not bound by the n*N cap.
double overlap_moment_factorized(const OverlapMonomial& monomial,
                                 const DisorderRealization& disorder,
                                 const ModelParameters& params,
                                 const ComputeBudgets& budgets = {});

/// Same, reusing an already-built table.
double overlap_moment_factorized(const OverlapMonomial& monomial,
                                 const GibbsTable& table,
                                 const ComputeBudgets& budgets = {});

}  // namespace pspin
