#include "pspin/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

#include "pspin/errors.hpp"

namespace pspin {

SpinConfiguration::SpinConfiguration(std::vector<std::int8_t> spins)
    : spins_(std::move(spins)) {
  if (spins_.empty()) {
    throw std::invalid_argument("SpinConfiguration: empty spin vector");
  }
  for (auto s : spins_) {
    if (s != 1 && s != -1) {
      throw std::invalid_argument(
          "SpinConfiguration: entries must be exactly -1 or +1");
    }
  }
}

SpinConfiguration SpinConfiguration::all_up(int n_sites) {
  return SpinConfiguration(std::vector<std::int8_t>(n_sites, 1));
}

SpinConfiguration SpinConfiguration::from_mask(std::uint64_t mask, int n_sites) {
  if (n_sites < 1 || n_sites > 64) {
    throw std::invalid_argument("SpinConfiguration::from_mask: need 1 <= N <= 64");
  }
  std::vector<std::int8_t> s(n_sites);
  for (int i = 0; i < n_sites; ++i) {
    s[i] = (mask >> i) & 1u ? 1 : -1;
  }
  return SpinConfiguration(std::move(s));
}

SpinConfiguration SpinConfiguration::random(int n_sites, CounterRng& rng) {
  std::vector<std::int8_t> s(n_sites);
  for (int i = 0; i < n_sites; ++i) {
    s[i] = (rng.next_u64() & 1u) ? 1 : -1;
  }
  return SpinConfiguration(std::move(s));
}

void SpinConfiguration::flip(int site) {
  if (site < 0 || site >= size()) {
    throw std::out_of_range("SpinConfiguration::flip: site out of range");
  }
  spins_[site] = static_cast<std::int8_t>(-spins_[site]);
}

std::uint64_t SpinConfiguration::mask() const {
  if (size() > 64) {
    throw std::out_of_range("SpinConfiguration::mask: N > 64");
  }
  std::uint64_t m = 0;
  for (int i = 0; i < size(); ++i) {
    if (spins_[i] > 0) m |= std::uint64_t{1} << i;
  }
  return m;
}

double SpinConfiguration::magnetization() const {
  long long sum = 0;
  for (auto s : spins_) sum += s;
  return static_cast<double>(sum) / size();
}

void ModelParameters::validate(const ComputeBudgets& budgets) const {
  if (n_sites < 1) {
    throw ConfigError("model.N must be >= 1");
  }
  if (!std::isfinite(field)) {
    throw ConfigError("model.h must be finite");
  }
  std::set<int> seen;
  std::uint64_t total_entries = 0;
  for (const auto& t : terms) {
    if (t.degree < 1) {
      throw ConfigError("model.terms: p must be >= 1");
    }
    if (t.degree > budgets.max_degree || t.degree > 30) {
      throw BudgetError("model.terms: p=" + std::to_string(t.degree) +
                        " exceeds max_degree=" + std::to_string(budgets.max_degree));
    }
    if (!seen.insert(t.degree).second) {
      throw ConfigError("model.terms: duplicate p=" + std::to_string(t.degree));
    }
    if (!std::isfinite(t.beta)) {
      throw ConfigError("model.terms: beta must be finite");
    }
    std::uint64_t entries = 1;
    for (int k = 0; k < t.degree; ++k) {
      if (entries > budgets.max_tensor_entries / static_cast<std::uint64_t>(n_sites)) {
        throw BudgetError("coupling tensor for p=" + std::to_string(t.degree) +
                          " exceeds max_tensor_entries budget");
      }
      entries *= static_cast<std::uint64_t>(n_sites);
    }
    total_entries += entries;
    if (total_entries > budgets.max_tensor_entries) {
      throw BudgetError("total coupling entries exceed max_tensor_entries budget");
    }
  }
}

const InteractionTerm* ModelParameters::find_term(int degree) const {
  for (const auto& t : terms) {
    if (t.degree == degree) return &t;
  }
  return nullptr;
}

std::vector<int> ModelParameters::degrees() const {
  std::vector<int> ds;
  ds.reserve(terms.size());
  for (const auto& t : terms) ds.push_back(t.degree);
  std::sort(ds.begin(), ds.end());
  return ds;
}

ModelParameters ModelParameters::with_coefficient(int degree, double x) const {
  ModelParameters out = *this;
  for (auto& t : out.terms) {
    if (t.degree == degree) {
      t.beta = x;
      return out;
    }
  }
  out.terms.push_back({degree, x});
  return out;
}

DisorderRealization::DisorderRealization(int n_sites, std::vector<int> degrees,
                                         std::vector<std::vector<double>> tensors,
                                         std::uint64_t master_seed,
                                         std::uint64_t realization_index)
    : n_sites_(n_sites),
      degrees_(std::move(degrees)),
      tensors_(std::move(tensors)),
      master_seed_(master_seed),
      realization_index_(realization_index) {
  if (degrees_.size() != tensors_.size()) {
    throw std::invalid_argument("DisorderRealization: degrees/tensors mismatch");
  }
  for (std::size_t d = 0; d < degrees_.size(); ++d) {
    std::uint64_t expect = 1;
    for (int k = 0; k < degrees_[d]; ++k) expect *= static_cast<std::uint64_t>(n_sites_);
    if (tensors_[d].size() != expect) {
      throw std::invalid_argument("DisorderRealization: tensor for p=" +
                                  std::to_string(degrees_[d]) +
                                  " must hold N^p entries");
    }
  }
}

std::span<const double> DisorderRealization::tensor(int degree) const {
  for (std::size_t d = 0; d < degrees_.size(); ++d) {
    if (degrees_[d] == degree) return tensors_[d];
  }
  throw std::invalid_argument("disorder has no couplings for p=" +
                              std::to_string(degree));
}

bool DisorderRealization::has_degree(int degree) const {
  return std::find(degrees_.begin(), degrees_.end(), degree) != degrees_.end();
}

std::uint64_t DisorderRealization::total_entries() const {
  std::uint64_t total = 0;
  for (const auto& t : tensors_) total += t.size();
  return total;
}

DisorderRealization draw_disorder(const ModelParameters& params,
                                  std::uint64_t master_seed,
                                  std::uint64_t realization_index,
                                  const ComputeBudgets& budgets) {
  params.validate(budgets);
  std::vector<int> degrees;
  std::vector<std::vector<double>> tensors;
  for (const auto& term : params.terms) {
    std::uint64_t entries = 1;
    for (int k = 0; k < term.degree; ++k) {
      entries *= static_cast<std::uint64_t>(params.n_sites);
    }
    const std::uint64_t key = derive_stream_key(
        {master_seed, kTagDisorder, realization_index,
         static_cast<std::uint64_t>(term.degree)});
    std::vector<double> tensor(entries);
    for (std::uint64_t i = 0; i < entries; ++i) {
      tensor[i] = gaussian_at(key, i);
    }
    degrees.push_back(term.degree);
    tensors.push_back(std::move(tensor));
  }
  return DisorderRealization(params.n_sites, std::move(degrees),
                             std::move(tensors), master_seed, realization_index);
}

namespace {

double degree_scale(int n_sites, int degree) {
  return std::pow(static_cast<double>(n_sites), -0.5 * (degree - 1));
}

// Sum over all index tuples with the positions in `fixed_mask` pinned to
// `site`, of g[tuple] times the product of spins over the free positions.
double pinned_sum(std::span<const double> tensor,
                  std::span<const std::int8_t> spins, int n, int degree,
                  int site, unsigned fixed_mask) {
  // Strides: position a (0 = leftmost index) has stride n^{degree-1-a}.
  std::uint64_t base = 0;
  std::vector<std::uint64_t> free_strides;
  std::uint64_t stride = 1;
  for (int a = degree - 1; a >= 0; --a) {
    if (fixed_mask & (1u << a)) {
      base += static_cast<std::uint64_t>(site) * stride;
    } else {
      free_strides.push_back(stride);
    }
    stride *= static_cast<std::uint64_t>(n);
  }
  // Odometer over the free positions, innermost (smallest stride) first.
  const int n_free = static_cast<int>(free_strides.size());
  if (n_free == 0) return tensor[base];
  std::vector<int> idx(n_free, 0);
  double total = 0.0;
  for (;;) {
    std::uint64_t flat = base;
    double sprod = 1.0;
    for (int a = 0; a < n_free; ++a) {
      flat += static_cast<std::uint64_t>(idx[a]) * free_strides[a];
      sprod *= spins[idx[a]];
    }
    total += sprod * tensor[flat];
    int a = 0;
    while (a < n_free && ++idx[a] == n) {
      idx[a] = 0;
      ++a;
    }
    if (a == n_free) break;
  }
  return total;
}

// Delta of H_p (unscaled by beta) when flipping `site`, by expanding the
// multilinear form over the subsets of positions pinned to `site`.
double hp_flip_delta(std::span<const double> tensor,
                     std::span<const std::int8_t> spins, int n, int degree,
                     int site) {
  const double flip_factor = -2.0 * spins[site];
  double factor_pow[32];  // degree is budget-capped far below this
  factor_pow[0] = 1.0;
  for (int k = 1; k <= degree; ++k) factor_pow[k] = factor_pow[k - 1] * flip_factor;
  double delta = 0.0;
  for (unsigned mask = 1; mask < (1u << degree); ++mask) {
    delta += factor_pow[std::popcount(mask)] *
             pinned_sum(tensor, spins, n, degree, site, mask);
  }
  return delta * degree_scale(n, degree);
}

}  // namespace

double hamiltonian_p(const SpinConfiguration& config,
                     const DisorderRealization& disorder, int degree) {
  const int n = config.size();
  if (n != disorder.n_sites()) {
    throw std::invalid_argument("hamiltonian_p: config/disorder size mismatch");
  }
  const auto tensor = disorder.tensor(degree);
  const auto spins = config.spins();
  if (degree == 1) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += tensor[i] * spins[i];
    return sum;  // N^0 scale
  }
  // Contract one axis at a time, last (contiguous) axis first.
  std::size_t len = tensor.size() / n;
  std::vector<double> buf(len);
  for (std::size_t j = 0; j < len; ++j) {
    double sum = 0.0;
    const double* row = tensor.data() + j * n;
    for (int i = 0; i < n; ++i) sum += row[i] * spins[i];
    buf[j] = sum;
  }
  while (len > 1) {
    len /= n;
    for (std::size_t j = 0; j < len; ++j) {
      double sum = 0.0;
      const double* row = buf.data() + j * n;
      for (int i = 0; i < n; ++i) sum += row[i] * spins[i];
      buf[j] = sum;
    }
  }
  return buf[0] * degree_scale(n, degree);
}

double gibbs_energy(const SpinConfiguration& config,
                    const DisorderRealization& disorder,
                    const ModelParameters& params) {
  double energy = 0.0;
  for (const auto& term : params.terms) {
    if (!disorder.has_degree(term.degree)) {
      throw std::invalid_argument("gibbs_energy: disorder lacks couplings for p=" +
                                  std::to_string(term.degree));
    }
    energy += term.beta * hamiltonian_p(config, disorder, term.degree);
  }
  long long spin_sum = 0;
  for (auto s : config.spins()) spin_sum += s;
  return energy + params.field * static_cast<double>(spin_sum);
}

double flip_delta(const SpinConfiguration& config, int site,
                  const DisorderRealization& disorder,
                  const ModelParameters& params) {
  const int n = config.size();
  if (site < 0 || site >= n) {
    throw std::out_of_range("flip_delta: site out of range");
  }
  const auto spins = config.spins();
  double delta = 0.0;
  for (const auto& term : params.terms) {
    const auto tensor = disorder.tensor(term.degree);
    if (term.degree == 1) {
      delta += term.beta * (-2.0 * spins[site] * tensor[site]);
    } else {
      delta += term.beta * hp_flip_delta(tensor, spins, n, term.degree, site);
    }
  }
  delta += params.field * (-2.0 * spins[site]);
  return delta;
}

double overlap(const SpinConfiguration& a, const SpinConfiguration& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("overlap: configuration lengths differ");
  }
  long long dot = 0;
  const auto sa = a.spins();
  const auto sb = b.spins();
  for (int i = 0; i < a.size(); ++i) dot += sa[i] * sb[i];
  return static_cast<double>(dot) / a.size();
}

OverlapMatrix OverlapMatrix::from_configs(
    std::span<const SpinConfiguration> configs) {
  const int n = static_cast<int>(configs.size());
  if (n < 1) {
    throw std::invalid_argument("OverlapMatrix: need at least one replica");
  }
  std::vector<double> entries(static_cast<std::size_t>(n) * n, 1.0);
  for (int l = 0; l < n; ++l) {
    for (int m = l + 1; m < n; ++m) {
      const double r = overlap(configs[l], configs[m]);
      entries[l * n + m] = r;
      entries[m * n + l] = r;
    }
  }
  return OverlapMatrix(n, std::move(entries));
}

FlipDeltaEngine::FlipDeltaEngine(const DisorderRealization& disorder,
                                 const ModelParameters& params)
    : disorder_(&disorder), params_(&params) {
  has_pair_ = params.find_term(2) != nullptr && disorder.has_degree(2);
}

void FlipDeltaEngine::reset(const SpinConfiguration& config) {
  if (!has_pair_) return;
  const int n = config.size();
  const auto g = disorder_->tensor(2);
  const auto spins = config.spins();
  pair_field_.assign(n, 0.0);
  for (int k = 0; k < n; ++k) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      sum += (g[static_cast<std::size_t>(k) * n + j] +
              g[static_cast<std::size_t>(j) * n + k]) *
             spins[j];
    }
    pair_field_[k] = sum;
  }
}

double FlipDeltaEngine::h_delta(const SpinConfiguration& config, int site,
                                int degree) const {
  const int n = config.size();
  const auto spins = config.spins();
  if (degree == 1) {
    return -2.0 * spins[site] * disorder_->tensor(1)[site];
  }
  if (degree == 2 && has_pair_) {
    const auto g = disorder_->tensor(2);
    const double diag = g[static_cast<std::size_t>(site) * n + site];
    return (-2.0 * spins[site] * pair_field_[site] + 4.0 * diag) /
           std::sqrt(static_cast<double>(n));
  }
  return hp_flip_delta(disorder_->tensor(degree), spins, n, degree, site);
}

double FlipDeltaEngine::total_delta(const SpinConfiguration& config,
                                    int site) const {
  double delta = 0.0;
  for (const auto& term : params_->terms) {
    delta += term.beta * h_delta(config, site, term.degree);
  }
  delta += params_->field * (-2.0 * config.spin(site));
  return delta;
}

void FlipDeltaEngine::apply_flip(SpinConfiguration& config, int site) {
  config.flip(site);
  if (!has_pair_) return;
  const int n = config.size();
  const auto g = disorder_->tensor(2);
  // sigma_site already holds the new value.
  const double change = 2.0 * config.spin(site);
  for (int k = 0; k < n; ++k) {
    pair_field_[k] += change * (g[static_cast<std::size_t>(k) * n + site] +
                                g[static_cast<std::size_t>(site) * n + k]);
  }
}

}  // namespace pspin
