#include "pspin/exact.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "pspin/errors.hpp"

namespace pspin {

GibbsTable::GibbsTable(const DisorderRealization& disorder,
                       const ModelParameters& params,
                       const ComputeBudgets& budgets) {
  params.validate(budgets);
  n_sites_ = params.n_sites;
  if (n_sites_ != disorder.n_sites()) {
    throw std::invalid_argument("GibbsTable: disorder/params size mismatch");
  }
  if (n_sites_ > budgets.exact_max_sites) {
    throw BudgetError("exact enumeration needs N <= " +
                      std::to_string(budgets.exact_max_sites) + ", got N=" +
                      std::to_string(n_sites_));
  }
  degrees_ = params.degrees();
  for (int p : degrees_) {
    if (!disorder.has_degree(p)) {
      throw std::invalid_argument("GibbsTable: disorder lacks couplings for p=" +
                                  std::to_string(p));
    }
  }

  const std::size_t n_configs = std::size_t{1} << n_sites_;
  energies_.resize(n_configs);
  h_values_.assign(degrees_.size(), std::vector<double>(n_configs));

  // Gray-code walk: step k flips site ctz(k), visiting every configuration
  // once with O(flip_delta) work per step.
  SpinConfiguration config = SpinConfiguration::from_mask(0, n_sites_);
  FlipDeltaEngine engine(disorder, params);
  engine.reset(config);

  std::vector<double> h_current(degrees_.size());
  for (std::size_t d = 0; d < degrees_.size(); ++d) {
    h_current[d] = hamiltonian_p(config, disorder, degrees_[d]);
  }
  long long spin_sum = -n_sites_;

  // Beta lookup aligned with degrees_.
  std::vector<double> betas(degrees_.size());
  for (std::size_t d = 0; d < degrees_.size(); ++d) {
    betas[d] = params.find_term(degrees_[d])->beta;
  }

  std::uint64_t gray = 0;
  for (std::size_t k = 0;; ++k) {
    double energy = params.field * static_cast<double>(spin_sum);
    for (std::size_t d = 0; d < degrees_.size(); ++d) {
      h_values_[d][gray] = h_current[d];
      energy += betas[d] * h_current[d];
    }
    energies_[gray] = energy;

    if (k + 1 == n_configs) break;
    const int site = std::countr_zero(k + 1);
    for (std::size_t d = 0; d < degrees_.size(); ++d) {
      h_current[d] += engine.h_delta(config, site, degrees_[d]);
    }
    spin_sum -= 2 * config.spin(site);
    engine.apply_flip(config, site);
    gray ^= std::uint64_t{1} << site;
  }

  // Max-shifted exponential sum for the partition function.
  min_energy_ = *std::min_element(energies_.begin(), energies_.end());
  max_energy_ = *std::max_element(energies_.begin(), energies_.end());
  long double z = 0.0L;
  for (double e : energies_) z += std::exp(static_cast<long double>(e - max_energy_));
  log_partition_ = max_energy_ + static_cast<double>(std::log(z));

  probabilities_.resize(n_configs);
  for (std::size_t m = 0; m < n_configs; ++m) {
    probabilities_[m] = static_cast<double>(
        std::exp(static_cast<long double>(energies_[m] - max_energy_)) / z);
  }
}

int GibbsTable::degree_slot(int degree) const {
  for (std::size_t d = 0; d < degrees_.size(); ++d) {
    if (degrees_[d] == degree) return static_cast<int>(d);
  }
  throw std::invalid_argument("GibbsTable: degree p=" + std::to_string(degree) +
                              " not tabulated");
}

double GibbsTable::hamiltonian_value(std::uint64_t mask, int degree) const {
  return h_values_[degree_slot(degree)][mask];
}

double GibbsTable::probability_sum() const {
  long double s = 0.0L;
  for (double p : probabilities_) s += p;
  return static_cast<double>(s);
}

double GibbsTable::thermal_mean_h(int degree) const {
  const auto& h = h_values_[degree_slot(degree)];
  long double s = 0.0L;
  for (std::size_t m = 0; m < h.size(); ++m) s += probabilities_[m] * h[m];
  return static_cast<double>(s);
}

double GibbsTable::thermal_var_h(int degree) const {
  const auto& h = h_values_[degree_slot(degree)];
  const double mean = thermal_mean_h(degree);
  long double s = 0.0L;
  for (std::size_t m = 0; m < h.size(); ++m) {
    const long double d = h[m] - mean;
    s += probabilities_[m] * d * d;
  }
  return static_cast<double>(s);
}

double GibbsTable::thermal_mean_abs_h_centered(int degree, double center) const {
  const auto& h = h_values_[degree_slot(degree)];
  long double s = 0.0L;
  for (std::size_t m = 0; m < h.size(); ++m) {
    s += probabilities_[m] * std::abs(h[m] - center);
  }
  return static_cast<double>(s);
}

double GibbsTable::thermal_mean_abs_h_two_replica(
    int degree, const ComputeBudgets& budgets) const {
  if (2 * n_sites_ > budgets.direct_max_bits) {
    throw BudgetError("two-replica enumeration needs 2N <= " +
                      std::to_string(budgets.direct_max_bits));
  }
  const auto& h = h_values_[degree_slot(degree)];
  long double s = 0.0L;
  for (std::size_t a = 0; a < h.size(); ++a) {
    long double inner = 0.0L;
    for (std::size_t b = 0; b < h.size(); ++b) {
      inner += probabilities_[b] * std::abs(h[a] - h[b]);
    }
    s += probabilities_[a] * inner;
  }
  return static_cast<double>(s);
}

double GibbsTable::spin_correlation_mask(std::uint64_t site_mask) const {
  if (site_mask == 0) return 1.0;
  long double s = 0.0L;
  for (std::size_t m = 0; m < probabilities_.size(); ++m) {
    const int negatives = std::popcount(site_mask & ~m);
    s += (negatives & 1) ? -static_cast<long double>(probabilities_[m])
                         : static_cast<long double>(probabilities_[m]);
  }
  return static_cast<double>(s);
}

FreeEnergySample log_partition(const DisorderRealization& disorder,
                               const ModelParameters& params,
                               const ComputeBudgets& budgets) {
  GibbsTable table(disorder, params, budgets);
  FreeEnergySample out;
  out.log_partition = table.log_partition();
  out.psi = table.psi();
  out.params = params;
  out.master_seed = disorder.master_seed();
  out.realization_index = disorder.realization_index();
  return out;
}

ReplicaView::ReplicaView(std::span<const SpinConfiguration> configs,
                         const OverlapMatrix* overlaps)
    : n_sites_(configs.empty() ? 0 : configs[0].size()),
      configs_(configs),
      overlaps_(overlaps) {}

int ReplicaView::n_replicas() const {
  return pool_ ? static_cast<int>(masks_.size())
               : static_cast<int>(configs_.size());
}

double ReplicaView::overlap_between(int l, int m) const {
  if (pool_) {
    const std::uint32_t diff = masks_[l] ^ masks_[m];
    return (n_sites_ - 2 * std::popcount(diff)) /
           static_cast<double>(n_sites_);
  }
  if (overlaps_) return overlaps_->at(l, m);
  return overlap(configs_[l], configs_[m]);
}

const SpinConfiguration& ReplicaView::config(int l) const {
  if (pool_) return (*pool_)[masks_[l]];
  return configs_[l];
}

double thermal_expectation_direct(const ReplicaFunction& f, int n_replicas,
                                  const DisorderRealization& disorder,
                                  const ModelParameters& params,
                                  const ComputeBudgets& budgets) {
  if (n_replicas < 1) {
    throw std::invalid_argument("thermal_expectation_direct: n must be >= 1");
  }
  if (n_replicas * params.n_sites > budgets.direct_max_bits) {
    throw BudgetError(
        "direct enumeration needs n*N <= " +
        std::to_string(budgets.direct_max_bits) + ", got " +
        std::to_string(n_replicas * params.n_sites));
  }
  GibbsTable table(disorder, params, budgets);
  const std::size_t n_configs = table.n_configs();

  std::vector<SpinConfiguration> pool;
  pool.reserve(n_configs);
  for (std::size_t m = 0; m < n_configs; ++m) {
    pool.push_back(SpinConfiguration::from_mask(m, params.n_sites));
  }

  std::vector<std::uint32_t> masks(n_replicas, 0);
  const ReplicaView view(params.n_sites, masks, &pool);
  long double total = 0.0L;

  // Odometer over the n-tuple of configuration masks.
  std::vector<double> weight(n_replicas + 1);
  weight[0] = 1.0;
  int level = 0;
  for (;;) {
    if (level == n_replicas) {
      total += static_cast<long double>(weight[n_replicas]) * f(view);
      --level;
      ++masks[level];
    } else if (masks[level] == n_configs) {
      masks[level] = 0;
      if (level == 0) break;
      --level;
      ++masks[level];
    } else {
      weight[level + 1] = weight[level] * table.probability(masks[level]);
      ++level;
    }
  }
  return static_cast<double>(total);
}

double spin_correlation(std::span<const int> sites,
                        const DisorderRealization& disorder,
                        const ModelParameters& params,
                        const ComputeBudgets& budgets) {
  std::uint64_t mask = 0;
  for (int site : sites) {
    if (site < 0 || site >= params.n_sites) {
      throw std::out_of_range("spin_correlation: site index out of range");
    }
    mask ^= std::uint64_t{1} << site;  // repeated indices cancel mod 2
  }
  if (mask == 0) return 1.0;
  GibbsTable table(disorder, params, budgets);
  return table.spin_correlation_mask(mask);
}

int OverlapMonomial::total_degree() const {
  int q = 0;
  for (const auto& f : factors) q += f.power;
  return q;
}

void OverlapMonomial::validate() const {
  if (n_replicas < 2) {
    throw std::invalid_argument("OverlapMonomial: need n >= 2 replicas");
  }
  for (const auto& f : factors) {
    if (f.l < 0 || f.m < 0 || f.l >= f.m || f.m >= n_replicas) {
      throw std::invalid_argument(
          "OverlapMonomial: factor pair must satisfy 0 <= l < m < n");
    }
    if (f.power < 0) {
      throw std::invalid_argument("OverlapMonomial: power must be >= 0");
    }
  }
}

double OverlapMonomial::evaluate(const ReplicaView& view) const {
  double value = 1.0;
  for (const auto& f : factors) {
    const double r = view.overlap_between(f.l, f.m);
    for (int k = 0; k < f.power; ++k) value *= r;
  }
  return value;
}

double OverlapMonomial::evaluate(const OverlapMatrix& overlaps) const {
  double value = 1.0;
  for (const auto& f : factors) {
    const double r = overlaps.at(f.l, f.m);
    for (int k = 0; k < f.power; ++k) value *= r;
  }
  return value;
}

std::string OverlapMonomial::name() const {
  if (factors.empty()) return "1";
  std::string out;
  for (const auto& f : factors) {
    if (f.power == 0) continue;
    if (!out.empty()) out += "*";
    out += "R(" + std::to_string(f.l + 1) + ";" + std::to_string(f.m + 1) + ")";
    if (f.power > 1) out += "^" + std::to_string(f.power);
  }
  return out.empty() ? "1" : out;
}

double overlap_moment_factorized(const OverlapMonomial& monomial,
                                 const GibbsTable& table,
                                 const ComputeBudgets& budgets) {
  monomial.validate();
  const int n = table.n_sites();
  const int q = monomial.total_degree();
  if (q == 0) return 1.0;

  double tuples = 1.0;
  for (int k = 0; k < q; ++k) tuples *= n;
  if (tuples > budgets.factorized_max_tuples) {
    throw BudgetError("factorized moment needs N^degree <= budget (" +
                      std::to_string(budgets.factorized_max_tuples) + ")");
  }

  // One slot per unit power; slot s touches replicas (l_s, m_s).
  std::vector<std::pair<int, int>> slots;
  for (const auto& f : monomial.factors) {
    for (int k = 0; k < f.power; ++k) slots.emplace_back(f.l, f.m);
  }

  std::vector<bool> touched(monomial.n_replicas, false);
  for (const auto& [l, m] : slots) touched[l] = touched[m] = true;
  std::vector<int> active;
  for (int r = 0; r < monomial.n_replicas; ++r) {
    if (touched[r]) active.push_back(r);
  }

  // Lazily memoized single-replica correlations by site mask.
  std::vector<double> memo(std::size_t{1} << n,
                           std::numeric_limits<double>::quiet_NaN());
  memo[0] = 1.0;
  auto corr = [&](std::uint32_t mask) {
    double& slot = memo[mask];
    if (std::isnan(slot)) slot = table.spin_correlation_mask(mask);
    return slot;
  };

  std::vector<std::uint32_t> replica_mask(monomial.n_replicas, 0);
  long double total = 0.0L;

  // Depth-first over site assignments for each slot; per-replica masks track
  // the mod-2 reduced site sets.
  auto recurse = [&](auto&& self, std::size_t slot_index) -> void {
    if (slot_index == slots.size()) {
      long double prod = 1.0L;
      for (int r : active) prod *= corr(replica_mask[r]);
      total += prod;
      return;
    }
    const auto [l, m] = slots[slot_index];
    for (int site = 0; site < n; ++site) {
      const std::uint32_t bit = std::uint32_t{1} << site;
      replica_mask[l] ^= bit;
      replica_mask[m] ^= bit;
      self(self, slot_index + 1);
      replica_mask[l] ^= bit;
      replica_mask[m] ^= bit;
    }
  };
  recurse(recurse, 0);

  double scale = 1.0;
  for (int k = 0; k < q; ++k) scale /= n;
  return static_cast<double>(total) * scale;
}

double overlap_moment_factorized(const OverlapMonomial& monomial,
                                 const DisorderRealization& disorder,
                                 const ModelParameters& params,
                                 const ComputeBudgets& budgets) {
  GibbsTable table(disorder, params, budgets);
  return overlap_moment_factorized(monomial, table, budgets);
}

}  // namespace pspin
