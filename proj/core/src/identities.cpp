#include "pspin/identities.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "pspin/errors.hpp"
#include "pspin/parallel.hpp"

namespace pspin {

std::string to_string(EvaluationMode mode) {
  return mode == EvaluationMode::kExact ? "exact" : "mc";
}

namespace {

std::string format_short(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// 16-point Gauss-Legendre rule on [-1, 1].
constexpr std::array<std::array<double, 2>, 16> kGauss16 = {{
    {-0.9894009349916499, 0.027152459411754037},
    {-0.9445750230732326, 0.062253523938647706},
    {-0.8656312023878318, 0.09515851168249259},
    {-0.755404408355003, 0.12462897125553403},
    {-0.6178762444026438, 0.14959598881657676},
    {-0.45801677765722737, 0.16915651939500262},
    {-0.2816035507792589, 0.1826034150449236},
    {-0.09501250983763745, 0.18945061045506859},
    {0.09501250983763745, 0.18945061045506859},
    {0.2816035507792589, 0.1826034150449236},
    {0.45801677765722737, 0.16915651939500262},
    {0.6178762444026438, 0.14959598881657676},
    {0.755404408355003, 0.12462897125553403},
    {0.8656312023878318, 0.09515851168249259},
    {0.9445750230732326, 0.062253523938647706},
    {0.9894009349916499, 0.027152459411754037},
}};

double gauss_legendre(const std::function<double(double)>& f, double a,
                      double b, int panels) {
  double total = 0.0;
  const double width = (b - a) / panels;
  for (int panel = 0; panel < panels; ++panel) {
    const double lo = a + panel * width;
    const double mid = lo + 0.5 * width;
    const double half = 0.5 * width;
    for (const auto& [node, weight] : kGauss16) {
      total += weight * f(mid + half * node);
    }
  }
  return total * 0.5 * (b - a) / panels;
}

ModelParameters ensure_degree(const ModelParameters& params, int degree) {
  if (params.find_term(degree)) return params;
  return params.with_coefficient(degree, 0.0);
}

bool couplings_all_zero(const ModelParameters& params) {
  for (const auto& t : params.terms) {
    if (t.beta != 0.0) return false;
  }
  return true;
}

}  // namespace

BoundedReplicaFunction BoundedReplicaFunction::one(int n_replicas) {
  BoundedReplicaFunction f;
  f.kind = Kind::kOne;
  f.n_replicas = n_replicas;
  f.monomial.n_replicas = n_replicas;
  f.monomial.factors.clear();
  return f;
}

BoundedReplicaFunction BoundedReplicaFunction::from_monomial(OverlapMonomial m) {
  m.validate();
  BoundedReplicaFunction f;
  f.kind = Kind::kMonomial;
  f.n_replicas = m.n_replicas;
  f.monomial = std::move(m);
  return f;
}

BoundedReplicaFunction BoundedReplicaFunction::clipped_polynomial(
    int n_replicas, std::vector<PolyTerm> terms) {
  BoundedReplicaFunction f;
  f.kind = Kind::kClippedPolynomial;
  f.n_replicas = n_replicas;
  f.poly = std::move(terms);
  for (const auto& term : f.poly) {
    if (term.monomial.n_replicas > n_replicas) {
      throw std::invalid_argument("clipped polynomial term arity exceeds n");
    }
    term.monomial.validate();
  }
  return f;
}

double BoundedReplicaFunction::evaluate(const ReplicaView& view) const {
  switch (kind) {
    case Kind::kOne:
      return 1.0;
    case Kind::kMonomial:
      return monomial.evaluate(view);
    case Kind::kClippedPolynomial: {
      double sum = 0.0;
      for (const auto& term : poly) sum += term.coeff * term.monomial.evaluate(view);
      return std::clamp(sum, -1.0, 1.0);
    }
  }
  return 1.0;
}

double BoundedReplicaFunction::evaluate(const OverlapMatrix& overlaps) const {
  switch (kind) {
    case Kind::kOne:
      return 1.0;
    case Kind::kMonomial:
      return monomial.evaluate(overlaps);
    case Kind::kClippedPolynomial: {
      double sum = 0.0;
      for (const auto& term : poly) {
        sum += term.coeff * term.monomial.evaluate(overlaps);
      }
      return std::clamp(sum, -1.0, 1.0);
    }
  }
  return 1.0;
}

std::string BoundedReplicaFunction::name() const {
  switch (kind) {
    case Kind::kOne:
      return "1";
    case Kind::kMonomial:
      return monomial.name();
    case Kind::kClippedPolynomial: {
      std::string out = "clip(";
      for (std::size_t i = 0; i < poly.size(); ++i) {
        if (i) out += "+";
        out += format_short(poly[i].coeff) + "*" + poly[i].monomial.name();
      }
      return out + ")";
    }
  }
  return "?";
}

void BoundedReplicaFunction::validate() const {
  if (n_replicas < 1) {
    throw ConfigError("test function needs n >= 1 replicas");
  }
  if (kind == Kind::kMonomial) {
    monomial.validate();
    if (monomial.n_replicas != n_replicas) {
      throw ConfigError("test function arity mismatch with its monomial");
    }
  }
}

// ---------------------------------------------------------------------------
// Ghirlanda-Guerra residual
// ---------------------------------------------------------------------------

namespace {

// Per-realization thermal averages of the four component groups, in the
// fixed order [ <f R_{1,n+1}^p>, <f>, <R_{1,2}^p>, <f R_{1,2}^p> .. <f R_{1,n}^p> ].
std::vector<double> gg_components_exact(const GGQuery& q,
                                        const DisorderRealization& disorder,
                                        const ModelParameters& params,
                                        const ComputeBudgets& budgets) {
  const int n = q.n;
  std::vector<double> out;
  out.reserve(3 + (n - 1));
  if (q.f.factorizable()) {
    GibbsTable table(disorder, params, budgets);
    // f as monomial over n+1 replicas (kOne has no factors).
    auto with_extra = [&](int other) {
      OverlapMonomial m = q.f.monomial;
      m.n_replicas = n + 1;
      m.factors.push_back({0, other, q.p});
      return m;
    };
    out.push_back(overlap_moment_factorized(with_extra(n), table, budgets));
    OverlapMonomial f_only = q.f.monomial;
    f_only.n_replicas = n;
    out.push_back(q.f.kind == BoundedReplicaFunction::Kind::kOne
                      ? 1.0
                      : overlap_moment_factorized(f_only, table, budgets));
    OverlapMonomial r12;
    r12.n_replicas = 2;
    r12.factors = {{0, 1, q.p}};
    out.push_back(overlap_moment_factorized(r12, table, budgets));
    for (int l = 1; l < n; ++l) {
      out.push_back(overlap_moment_factorized(with_extra(l), table, budgets));
    }
    return out;
  }

  // General bounded f: direct enumeration. The coupled term needs n+1
  // replicas within the tuple budget.
  auto f_times_power = [&](int other) {
    return [&, other](const ReplicaView& view) {
      double r = view.overlap_between(0, other);
      double power = 1.0;
      for (int k = 0; k < q.p; ++k) power *= r;
      return q.f.evaluate(view) * power;
    };
  };
  out.push_back(thermal_expectation_direct(f_times_power(n), n + 1, disorder,
                                           params, budgets));
  out.push_back(thermal_expectation_direct(
      [&](const ReplicaView& view) { return q.f.evaluate(view); }, n, disorder,
      params, budgets));
  out.push_back(thermal_expectation_direct(
      [&](const ReplicaView& view) {
        double r = view.overlap_between(0, 1);
        double power = 1.0;
        for (int k = 0; k < q.p; ++k) power *= r;
        return power;
      },
      2, disorder, params, budgets));
  for (int l = 1; l < n; ++l) {
    out.push_back(thermal_expectation_direct(f_times_power(l), n, disorder,
                                             params, budgets));
  }
  return out;
}

std::vector<double> gg_components_mc(const GGQuery& q,
                                     const DisorderRealization& disorder,
                                     const ModelParameters& params,
                                     const MCSchedule& schedule,
                                     std::uint64_t master_seed) {
  const int n = q.n;
  ReplicaSampler sampler(n + 1, disorder, params, schedule, master_seed);
  const std::int64_t n_samples = schedule.n_samples(params.n_sites);

  std::vector<long double> sums(3 + (n - 1), 0.0L);
  for (std::int64_t s = 0; s < n_samples; ++s) {
    const ReplicaSample sample = sampler.next();
    const double f_value = q.f.evaluate(sample.overlaps);
    auto power_r = [&](int other) {
      const double r = sample.overlaps.at(0, other);
      double power = 1.0;
      for (int k = 0; k < q.p; ++k) power *= r;
      return power;
    };
    sums[0] += f_value * power_r(n);
    sums[1] += f_value;
    sums[2] += power_r(1);
    for (int l = 1; l < n; ++l) sums[3 + (l - 1)] += f_value * power_r(l);
  }
  std::vector<double> out(sums.size());
  for (std::size_t i = 0; i < sums.size(); ++i) {
    out[i] = static_cast<double>(sums[i] / n_samples);
  }
  return out;
}

}  // namespace

GGResidualReport gg_residual(const GGQuery& query, const ModelParameters& params,
                             const EvalSettings& settings) {
  params.validate(settings.budgets);
  query.f.validate();
  if (query.p < 1) throw ConfigError("gg query needs p >= 1");
  if (query.n < 2) throw ConfigError("gg query needs n >= 2");
  if (query.f.n_replicas != query.n) {
    throw ConfigError("gg query: f arity (" +
                      std::to_string(query.f.n_replicas) +
                      ") does not match n (" + std::to_string(query.n) + ")");
  }
  if (settings.mode == EvaluationMode::kExact && !query.f.factorizable() &&
      (query.n + 1) * params.n_sites > settings.budgets.direct_max_bits) {
    throw BudgetError(
        "gg exact mode with a non-factorizable f needs (n+1)*N <= " +
        std::to_string(settings.budgets.direct_max_bits));
  }

  const std::size_t n_components = 3 + (query.n - 1);
  const MCSchedule schedule = settings.schedule.resolved(params.n_sites);
  auto estimator = [&](const DisorderRealization& disorder) {
    return settings.mode == EvaluationMode::kExact
               ? gg_components_exact(query, disorder, params, settings.budgets)
               : gg_components_mc(query, disorder, params, schedule,
                                  settings.master_seed);
  };
  const std::vector<EstimateWithError> comps = disorder_average_multi(
      estimator, n_components, params, settings.n_disorder,
      settings.master_seed, settings.budgets, settings.workers);

  GGResidualReport report;
  report.query = query;
  report.coupled_term = comps[0];
  report.f_term = comps[1];
  report.overlap_term = comps[2];
  report.conditioned_terms.assign(comps.begin() + 3, comps.end());

  const double inv_n = 1.0 / query.n;
  double combo = comps[0].mean - inv_n * comps[1].mean * comps[2].mean;
  double var = comps[0].std_error * comps[0].std_error;
  var += inv_n * inv_n *
         (comps[2].mean * comps[1].std_error * comps[2].mean * comps[1].std_error +
          comps[1].mean * comps[2].std_error * comps[1].mean * comps[2].std_error);
  for (const auto& c : report.conditioned_terms) {
    combo -= inv_n * c.mean;
    var += inv_n * inv_n * c.std_error * c.std_error;
  }
  report.residual.mean = std::abs(combo);
  report.residual.std_error = std::sqrt(var);
  report.residual.n_samples = settings.n_disorder;
  return report;
}

// ---------------------------------------------------------------------------
// Hamiltonian concentration statistic and its decomposition
// ---------------------------------------------------------------------------

ConcentrationReport concentration_statistic(int degree,
                                            const ModelParameters& params,
                                            const EvalSettings& settings) {
  params.validate(settings.budgets);
  if (!params.find_term(degree)) {
    throw ConfigError("concentration: p=" + std::to_string(degree) +
                      " is not among the model terms");
  }
  const int n_sites = params.n_sites;
  const int m = settings.n_disorder;
  if (m < 2) throw ConfigError("concentration needs n_disorder >= 2");

  std::vector<double> mean_h(m);       // <H_p> per realization
  std::vector<double> thermal(m);      // (1/N) <|H_p - <H_p>|> per realization
  std::vector<std::vector<double>> mc_samples;  // MC mode keeps raw H_p draws

  if (settings.mode == EvaluationMode::kExact) {
    parallel_for(m, settings.workers, [&](std::int64_t i) {
      const auto disorder =
          draw_disorder(params, settings.master_seed, i, settings.budgets);
      GibbsTable table(disorder, params, settings.budgets);
      mean_h[i] = table.thermal_mean_h(degree);
      thermal[i] =
          table.thermal_mean_abs_h_centered(degree, mean_h[i]) / n_sites;
    });
  } else {
    const MCSchedule schedule = settings.schedule.resolved(n_sites);
    mc_samples.resize(m);
    parallel_for(m, settings.workers, [&](std::int64_t i) {
      const auto disorder =
          draw_disorder(params, settings.master_seed, i, settings.budgets);
      ReplicaSampler sampler(1, disorder, params, schedule,
                             settings.master_seed);
      const std::int64_t n_samples = schedule.n_samples(n_sites);
      std::vector<double>& h = mc_samples[i];
      h.reserve(n_samples);
      for (std::int64_t s = 0; s < n_samples; ++s) {
        const ReplicaSample sample = sampler.next();
        h.push_back(hamiltonian_p(sample.configs[0], disorder, degree));
      }
      long double sum = 0.0L;
      for (double v : h) sum += v;
      mean_h[i] = static_cast<double>(sum / h.size());
      long double abs_sum = 0.0L;
      for (double v : h) abs_sum += std::abs(v - mean_h[i]);
      thermal[i] = static_cast<double>(abs_sum / h.size()) / n_sites;
    });
  }

  // Pooled plug-in estimate of E<H_p>, ascending-index reduction.
  long double pooled = 0.0L;
  for (double v : mean_h) pooled += v;
  const double center = static_cast<double>(pooled / m);

  std::vector<double> total(m);
  std::vector<double> disorder_part(m);
  if (settings.mode == EvaluationMode::kExact) {
    parallel_for(m, settings.workers, [&](std::int64_t i) {
      const auto disorder =
          draw_disorder(params, settings.master_seed, i, settings.budgets);
      GibbsTable table(disorder, params, settings.budgets);
      total[i] = table.thermal_mean_abs_h_centered(degree, center) / n_sites;
    });
  } else {
    for (int i = 0; i < m; ++i) {
      long double abs_sum = 0.0L;
      for (double v : mc_samples[i]) abs_sum += std::abs(v - center);
      total[i] = static_cast<double>(abs_sum / mc_samples[i].size()) / n_sites;
    }
  }
  for (int i = 0; i < m; ++i) {
    disorder_part[i] = std::abs(mean_h[i] - center) / n_sites;
  }

  ConcentrationReport report;
  report.degree = degree;
  report.n_sites = n_sites;
  report.total = mean_and_error(total);
  report.thermal = mean_and_error(thermal);
  report.disorder = mean_and_error(disorder_part);
  report.pooled_mean_h_per_site = center / n_sites;
  report.limit_proven = (degree == 1) || (degree % 2 == 0);
  if (degree == 1 && params.field == 0.0 && couplings_all_zero(params)) {
    report.closed_form_total =
        std::sqrt(2.0 / (std::numbers::pi * n_sites));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Free-energy curve and derivative identities
// ---------------------------------------------------------------------------

FreeEnergyCurve free_energy_curve(int degree, std::span<const double> grid,
                                  const ModelParameters& params,
                                  const EvalSettings& settings) {
  if (grid.size() < 3) {
    throw ConfigError("free_energy_curve: grid needs at least 3 points");
  }
  for (std::size_t j = 1; j < grid.size(); ++j) {
    if (!(grid[j] > grid[j - 1])) {
      throw ConfigError("free_energy_curve: grid must be strictly increasing");
    }
  }
  const ModelParameters base = ensure_degree(params, degree);
  base.validate(settings.budgets);
  const std::size_t n_grid = grid.size();
  const int n_sites = base.n_sites;

  // Per realization: psi(x), F'(x), F''(x) for each grid x, flattened.
  auto estimator = [&](const DisorderRealization& disorder) {
    std::vector<double> row(3 * n_grid);
    if (settings.mode == EvaluationMode::kExact) {
      for (std::size_t j = 0; j < n_grid; ++j) {
        const ModelParameters swept = base.with_coefficient(degree, grid[j]);
        GibbsTable table(disorder, swept, settings.budgets);
        row[3 * j + 0] = table.psi();
        row[3 * j + 1] = table.thermal_mean_h(degree) / n_sites;
        row[3 * j + 2] = table.thermal_var_h(degree) / n_sites;
      }
    } else {
      const MCSchedule schedule = settings.schedule.resolved(n_sites);
      for (std::size_t j = 0; j < n_grid; ++j) {
        const ModelParameters swept = base.with_coefficient(degree, grid[j]);
        ReplicaSampler sampler(1, disorder, swept, schedule,
                               settings.master_seed, /*stream_salt=*/j + 1);
        const std::int64_t n_samples = schedule.n_samples(n_sites);
        std::vector<double> h;
        h.reserve(n_samples);
        for (std::int64_t s = 0; s < n_samples; ++s) {
          const ReplicaSample sample = sampler.next();
          h.push_back(hamiltonian_p(sample.configs[0], disorder, degree));
        }
        const EstimateWithError stats = mean_and_error(h);
        long double var_sum = 0.0L;
        for (double v : h) {
          const long double d = v - stats.mean;
          var_sum += d * d;
        }
        const double var =
            h.size() > 1 ? static_cast<double>(var_sum / (h.size() - 1)) : 0.0;
        row[3 * j + 1] = stats.mean / n_sites;
        row[3 * j + 2] = var / n_sites;
      }
      // Free energy differences by thermodynamic integration of F'
      // (trapezoid over the curve grid), anchored at grid[0].
      row[0] = 0.0;
      for (std::size_t j = 1; j < n_grid; ++j) {
        row[3 * j] = row[3 * (j - 1)] +
                     0.5 * (row[3 * j + 1] + row[3 * (j - 1) + 1]) *
                         (grid[j] - grid[j - 1]);
      }
    }
    return row;
  };

  const auto columns = disorder_average_multi(
      estimator, 3 * n_grid, base, settings.n_disorder, settings.master_seed,
      settings.budgets, settings.workers);

  FreeEnergyCurve curve;
  curve.degree = degree;
  curve.mode = settings.mode;
  curve.grid.assign(grid.begin(), grid.end());
  for (std::size_t j = 0; j < n_grid; ++j) {
    curve.free_energy.push_back(columns[3 * j + 0]);
    curve.first_derivative.push_back(columns[3 * j + 1]);
    curve.second_derivative.push_back(columns[3 * j + 2]);
  }
  return curve;
}

DerivativeCheck derivative_identity_check(const FreeEnergyCurve& curve) {
  if (curve.grid.size() < 3) {
    throw ConfigError("derivative check: grid too coarse (need >= 3 points)");
  }
  DerivativeCheck check;
  check.min_second_derivative = curve.second_derivative[0].mean;
  for (const auto& v : curve.second_derivative) {
    check.min_second_derivative = std::min(check.min_second_derivative, v.mean);
  }
  for (std::size_t j = 1; j + 1 < curve.grid.size(); ++j) {
    const double span = curve.grid[j + 1] - curve.grid[j - 1];
    const double fd_first =
        (curve.free_energy[j + 1].mean - curve.free_energy[j - 1].mean) / span;
    const double fd_second =
        (curve.first_derivative[j + 1].mean - curve.first_derivative[j - 1].mean) /
        span;
    check.max_dev_first = std::max(
        check.max_dev_first, std::abs(fd_first - curve.first_derivative[j].mean));
    check.max_dev_second =
        std::max(check.max_dev_second,
                 std::abs(fd_second - curve.second_derivative[j].mean));
  }
  return check;
}

// ---------------------------------------------------------------------------
// Proof inequalities: the Delta_N bound and the convexity secant bound
// ---------------------------------------------------------------------------

namespace {

// Per-realization thermal helpers at a swept coefficient value, exact mode.
struct ExactSweep {
  const DisorderRealization* disorder;
  const ModelParameters* base;
  int degree;
  const ComputeBudgets* budgets;

  GibbsTable table_at(double x) const {
    return GibbsTable(*disorder, base->with_coefficient(degree, x), *budgets);
  }
  double var_per_site(double x) const {
    GibbsTable t = table_at(x);
    return t.thermal_var_h(degree) / base->n_sites;
  }
  double mean_per_site(double x) const {
    GibbsTable t = table_at(x);
    return t.thermal_mean_h(degree) / base->n_sites;
  }
};

// Monte Carlo sample of H_p at a swept coefficient; salt keeps the chains of
// distinct evaluation points on disjoint streams.
std::vector<double> mc_h_at(const DisorderRealization& disorder,
                            const ModelParameters& swept, int degree,
                            const MCSchedule& schedule, std::uint64_t seed,
                            std::uint64_t salt, int n_replicas = 1) {
  ReplicaSampler sampler(n_replicas, disorder, swept, schedule, seed, salt);
  const std::int64_t n_samples = schedule.n_samples(swept.n_sites);
  std::vector<double> h;
  h.reserve(n_samples * n_replicas);
  for (std::int64_t s = 0; s < n_samples; ++s) {
    const ReplicaSample sample = sampler.next();
    for (int r = 0; r < n_replicas; ++r) {
      h.push_back(hamiltonian_p(sample.configs[r], disorder, degree));
    }
  }
  return h;
}

double sample_mean(std::span<const double> v) {
  long double s = 0.0L;
  for (double x : v) s += x;
  return static_cast<double>(s / v.size());
}

double sample_var(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mean = sample_mean(v);
  long double s = 0.0L;
  for (double x : v) {
    const long double d = x - mean;
    s += d * d;
  }
  return static_cast<double>(s / (v.size() - 1));
}

}  // namespace

DeltaBoundReport delta_bound_check(int degree, double beta_p,
                                   double beta_p_prime,
                                   const ModelParameters& params,
                                   const EvalSettings& settings) {
  if (!(beta_p_prime > beta_p)) {
    throw ConfigError("delta bound: need beta_p' > beta_p");
  }
  const ModelParameters base = ensure_degree(params, degree);
  base.validate(settings.budgets);
  const int n_sites = base.n_sites;
  const double interval = beta_p_prime - beta_p;
  const int panels = std::max(1, settings.quadrature_panels);
  const bool two_replica_ok =
      settings.mode == EvaluationMode::kMonteCarlo ||
      2 * n_sites <= settings.budgets.direct_max_bits;

  // Per-realization row: [lhs, two_replica?, F'(b), F'(b'), quad, quad_2x].
  const std::size_t n_cols = two_replica_ok ? 6 : 5;
  const MCSchedule schedule =
      settings.mode == EvaluationMode::kMonteCarlo
          ? settings.schedule.resolved(n_sites)
          : MCSchedule{};
  auto estimator = [&](const DisorderRealization& disorder) {
    std::vector<double> row;
    row.reserve(n_cols);
    if (settings.mode == EvaluationMode::kExact) {
      const ExactSweep sweep{&disorder, &base, degree, &settings.budgets};
      GibbsTable at_beta = sweep.table_at(beta_p);
      const double mean_h = at_beta.thermal_mean_h(degree);
      row.push_back(at_beta.thermal_mean_abs_h_centered(degree, mean_h) /
                    n_sites);
      if (two_replica_ok) {
        row.push_back(
            at_beta.thermal_mean_abs_h_two_replica(degree, settings.budgets) /
            n_sites);
      }
      row.push_back(sweep.mean_per_site(beta_p));
      row.push_back(sweep.mean_per_site(beta_p_prime));
      auto integrand = [&](double x) { return sweep.var_per_site(x); };
      row.push_back(gauss_legendre(integrand, beta_p, beta_p_prime, panels));
      row.push_back(gauss_legendre(integrand, beta_p, beta_p_prime, 2 * panels));
    } else {
      const auto h_pair =
          mc_h_at(disorder, base.with_coefficient(degree, beta_p), degree,
                  schedule, settings.master_seed, /*salt=*/1, /*n_replicas=*/2);
      // h_pair interleaves the two replicas per sample.
      std::vector<double> h1, diff_abs;
      for (std::size_t i = 0; i + 1 < h_pair.size(); i += 2) {
        h1.push_back(h_pair[i]);
        diff_abs.push_back(std::abs(h_pair[i] - h_pair[i + 1]));
      }
      const double mean_h = sample_mean(h1);
      long double abs_sum = 0.0L;
      for (double v : h1) abs_sum += std::abs(v - mean_h);
      row.push_back(static_cast<double>(abs_sum / h1.size()) / n_sites);
      row.push_back(sample_mean(diff_abs) / n_sites);
      auto mean_at = [&](double x, std::uint64_t salt) {
        const auto h = mc_h_at(disorder, base.with_coefficient(degree, x),
                               degree, schedule, settings.master_seed, salt);
        return sample_mean(h) / n_sites;
      };
      auto var_at = [&](double x, std::uint64_t salt) {
        const auto h = mc_h_at(disorder, base.with_coefficient(degree, x),
                               degree, schedule, settings.master_seed, salt);
        return sample_var(h) / n_sites;
      };
      row.push_back(mean_at(beta_p, 2));
      row.push_back(mean_at(beta_p_prime, 3));
      std::uint64_t salt = 16;
      auto integrand = [&](double x) { return var_at(x, salt++); };
      row.push_back(gauss_legendre(integrand, beta_p, beta_p_prime, panels));
      row.push_back(gauss_legendre(integrand, beta_p, beta_p_prime, 2 * panels));
    }
    return row;
  };

  const auto cols = disorder_average_multi(
      estimator, n_cols, base, settings.n_disorder, settings.master_seed,
      settings.budgets, settings.workers);

  DeltaBoundReport report;
  report.degree = degree;
  report.beta = beta_p;
  report.beta_prime = beta_p_prime;
  std::size_t c = 0;
  report.lhs = cols[c++];
  if (two_replica_ok) report.lhs_two_replica = cols[c++];
  const EstimateWithError fp_lo = cols[c++];
  const EstimateWithError fp_hi = cols[c++];
  report.delta_quadrature = cols[c++];
  const EstimateWithError quad_doubled = cols[c++];
  report.delta_endpoint.mean = fp_hi.mean - fp_lo.mean;
  report.delta_endpoint.std_error = combined_std_error(fp_hi, fp_lo);
  report.delta_endpoint.n_samples = settings.n_disorder;
  report.delta_forms_diff =
      std::abs(report.delta_quadrature.mean - report.delta_endpoint.mean);
  report.quadrature_doubling_diff =
      std::abs(report.delta_quadrature.mean - quad_doubled.mean);
  const double delta_n = report.delta_quadrature.mean;
  report.rhs = 2.0 * std::sqrt(std::max(delta_n, 0.0) / (n_sites * interval)) +
               8.0 * delta_n;
  report.slack = report.rhs - report.lhs.mean;
  return report;
}

SecantBoundReport convexity_secant_bound(int degree, double beta_p,
                                         double beta_p_prime, double gamma,
                                         const ModelParameters& params,
                                         const EvalSettings& settings) {
  if (!(gamma > 0.0)) throw ConfigError("secant bound: need gamma > 0");
  if (!(beta_p_prime > beta_p)) {
    throw ConfigError("secant bound: need beta_p' > beta_p");
  }
  const ModelParameters base = ensure_degree(params, degree);
  base.validate(settings.budgets);
  const int panels = std::max(1, settings.quadrature_panels);
  const MCSchedule schedule =
      settings.mode == EvaluationMode::kMonteCarlo
          ? settings.schedule.resolved(base.n_sites)
          : MCSchedule{};

  // Per-realization row: [Delta, secant_rhs].
  auto estimator = [&](const DisorderRealization& disorder) {
    std::vector<double> row(2);
    if (settings.mode == EvaluationMode::kExact) {
      const ExactSweep sweep{&disorder, &base, degree, &settings.budgets};
      row[0] = sweep.mean_per_site(beta_p_prime) - sweep.mean_per_site(beta_p);
      const double psi_hi_plus =
          sweep.table_at(beta_p_prime + gamma).psi();
      const double psi_hi = sweep.table_at(beta_p_prime).psi();
      const double psi_lo = sweep.table_at(beta_p).psi();
      const double psi_lo_minus = sweep.table_at(beta_p - gamma).psi();
      row[1] = (psi_hi_plus - psi_hi) / gamma - (psi_lo - psi_lo_minus) / gamma;
    } else {
      auto mean_at = [&](double x, std::uint64_t salt) {
        const auto h = mc_h_at(disorder, base.with_coefficient(degree, x),
                               degree, schedule, settings.master_seed, salt);
        return sample_mean(h) / base.n_sites;
      };
      row[0] = mean_at(beta_p_prime, 2) - mean_at(beta_p, 1);
      // Free-energy differences via thermodynamic integration of F'.
      std::uint64_t salt = 64;
      auto fprime = [&](double x) { return mean_at(x, salt++); };
      const double upper =
          gauss_legendre(fprime, beta_p_prime, beta_p_prime + gamma, panels);
      const double lower =
          gauss_legendre(fprime, beta_p - gamma, beta_p, panels);
      row[1] = upper / gamma - lower / gamma;
    }
    return row;
  };

  const auto cols = disorder_average_multi(
      estimator, 2, base, settings.n_disorder, settings.master_seed,
      settings.budgets, settings.workers);

  SecantBoundReport report;
  report.degree = degree;
  report.beta = beta_p;
  report.beta_prime = beta_p_prime;
  report.gamma = gamma;
  report.delta_endpoint = cols[0];
  report.secant_bound = cols[1];
  report.slack = report.secant_bound.mean - report.delta_endpoint.mean;
  return report;
}

std::vector<ConcentrationReport> concentration_scan(
    int degree, std::span<const int> n_sites_list, const ModelParameters& params,
    const EvalSettings& settings) {
  if (n_sites_list.empty()) {
    throw ConfigError("concentration scan: empty N list");
  }
  for (std::size_t i = 1; i < n_sites_list.size(); ++i) {
    if (n_sites_list[i] <= n_sites_list[i - 1]) {
      throw ConfigError("concentration scan: N list must be ascending");
    }
  }
  std::vector<ConcentrationReport> out;
  out.reserve(n_sites_list.size());
  for (int n : n_sites_list) {
    ModelParameters scaled = params;
    scaled.n_sites = n;
    out.push_back(concentration_statistic(degree, scaled, settings));
  }
  return out;
}

}  // namespace pspin
