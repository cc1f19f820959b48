#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pspin/estimate.hpp"
#include "pspin/exact.hpp"
#include "pspin/model.hpp"
#include "pspin/sampler.hpp"

namespace pspin {

enum class EvaluationMode { kExact, kMonteCarlo };

std::string to_string(EvaluationMode mode);

/// Shared knobs for the identity/inequality evaluations.
struct EvalSettings {
  EvaluationMode mode = EvaluationMode::kExact;
  int n_disorder = 8;
  std::uint64_t master_seed = 0;
  MCSchedule schedule;         // Monte Carlo mode only
  ComputeBudgets budgets;
  int workers = 1;
  int quadrature_panels = 1;   // composite 16-point Gauss-Legendre panels
};

/// Bounded test function of n replicas, |f| <= 1 by construction: the
/// constant 1, an overlap monomial, or a polynomial of overlap entries
/// clipped to [-1, 1]. All built-ins depend on the configurations only
/// through the overlap matrix.
struct BoundedReplicaFunction {
  enum class Kind { kOne, kMonomial, kClippedPolynomial };

  struct PolyTerm {
    double coeff = 0.0;
    OverlapMonomial monomial;
  };

  Kind kind = Kind::kOne;
  int n_replicas = 2;
  OverlapMonomial monomial;     // kMonomial
  std::vector<PolyTerm> poly;   // kClippedPolynomial

  static BoundedReplicaFunction one(int n_replicas);
  static BoundedReplicaFunction from_monomial(OverlapMonomial m);
  static BoundedReplicaFunction clipped_polynomial(int n_replicas,
                                                   std::vector<PolyTerm> terms);

  double evaluate(const ReplicaView& view) const;
  double evaluate(const OverlapMatrix& overlaps) const;
  /// True when the exact path may use the factorized moment engine.
  bool factorizable() const { return kind != Kind::kClippedPolynomial; }
  std::string name() const;
  void validate() const;
};

/// One Ghirlanda-Guerra query: test whether
///   E<f R_{1,n+1}^p> = (1/n) E<f> E<R_{1,2}^p> + (1/n) sum_{l=2}^n E<f R_{1,l}^p>
/// holds, via the absolute residual of the two sides. p is the overlap
/// power; it is independent of the Hamiltonian degrees.
struct GGQuery {
  int p = 1;
  int n = 2;  // conditioning replicas; the identity involves replica n+1
  BoundedReplicaFunction f;
};

struct GGResidualReport {
  GGQuery query;
  EstimateWithError residual;       // |lhs - rhs|, first-order propagated error
  EstimateWithError coupled_term;   // E<f R_{1,n+1}^p>
  EstimateWithError f_term;         // E<f>
  EstimateWithError overlap_term;   // E<R_{1,2}^p>
  std::vector<EstimateWithError> conditioned_terms;  // E<f R_{1,l}^p>, l=2..n
};

GGResidualReport gg_residual(const GGQuery& query, const ModelParameters& params,
                             const EvalSettings& settings);

/// The Hamiltonian concentration statistic at finite N, with its
/// decomposition:
///   total    = (1/N) E<|H_p - E<H_p>|>
///   thermal  = (1/N) E<|H_p - <H_p>|>
///   disorder = (1/N) E|<H_p> - E<H_p>|
/// E<H_p> is the pooled plug-in mean over the run's realizations; its
/// O(1/sqrt(M)) bias is inherent to the plug-in and recorded here.
struct ConcentrationReport {
  int degree = 0;
  int n_sites = 0;
  EstimateWithError total;
  EstimateWithError thermal;
  EstimateWithError disorder;
  double pooled_mean_h_per_site = 0.0;
  bool limit_proven = false;  // the vanishing limit holds for p == 1 and even p
  std::optional<double> closed_form_total;  // sqrt(2/(pi N)) when beta = 0, h = 0, p = 1
};

ConcentrationReport concentration_statistic(int degree,
                                            const ModelParameters& params,
                                            const EvalSettings& settings);

/// F_N, F_N', F_N'' over a grid of values x replacing beta_p, with all other
/// parameters frozen. In Monte Carlo mode the free-energy column holds
/// F(x) - F(grid[0]) obtained by thermodynamic integration of F'.
struct FreeEnergyCurve {
  int degree = 0;
  EvaluationMode mode = EvaluationMode::kExact;
  std::vector<double> grid;
  std::vector<EstimateWithError> free_energy;
  std::vector<EstimateWithError> first_derivative;   // (1/N) E<H_p>_x
  std::vector<EstimateWithError> second_derivative;  // (1/N) E<(H_p - <H_p>_x)^2>_x
};

FreeEnergyCurve free_energy_curve(int degree, std::span<const double> grid,
                                  const ModelParameters& params,
                                  const EvalSettings& settings);

/// Central finite differences of the F column against F', and of the F'
/// column against F''; maximum absolute deviations over interior points.
struct DerivativeCheck {
  double max_dev_first = 0.0;
  double max_dev_second = 0.0;
  double min_second_derivative = 0.0;
};

DerivativeCheck derivative_identity_check(const FreeEnergyCurve& curve);

/// The bound (1/N) E<|H_p - <H_p>|> <= 2 sqrt(Delta_N / (N delta)) + 8 Delta_N
/// at beta_p, with Delta_N computed two ways: (a) the defining integral
/// (1/N) int E<(H_p - <H_p>_x)^2>_x dx over [beta_p, beta_p'], by composite
/// Gauss-Legendre quadrature, and (b) F'(beta_p') - F'(beta_p).
struct DeltaBoundReport {
  int degree = 0;
  double beta = 0.0;
  double beta_prime = 0.0;
  EstimateWithError lhs;               // (1/N) E<|H_p - <H_p>|> at beta
  std::optional<EstimateWithError> lhs_two_replica;  // (1/N) E<|H^1 - H^2|>
  EstimateWithError delta_quadrature;  // form (a)
  EstimateWithError delta_endpoint;    // form (b)
  double delta_forms_diff = 0.0;       // |a - b| of the means
  double quadrature_doubling_diff = 0.0;  // convergence check: panels vs 2x panels
  double rhs = 0.0;   // 2 sqrt(Delta/(N delta)) + 8 Delta, Delta = quadrature mean
  double slack = 0.0; // rhs - lhs mean
};

DeltaBoundReport delta_bound_check(int degree, double beta_p,
                                   double beta_p_prime,
                                   const ModelParameters& params,
                                   const EvalSettings& settings);

/// Convexity secant bound:
///   Delta_N <= [F(b'+g) - F(b')]/g - [F(b) - F(b-g)]/g.
struct SecantBoundReport {
  int degree = 0;
  double beta = 0.0;
  double beta_prime = 0.0;
  double gamma = 0.0;
  EstimateWithError delta_endpoint;  // F'(beta') - F'(beta)
  EstimateWithError secant_bound;    // right side
  double slack = 0.0;                // bound - delta
};

SecantBoundReport convexity_secant_bound(int degree, double beta_p,
                                         double beta_p_prime, double gamma,
                                         const ModelParameters& params,
                                         const EvalSettings& settings);

/// concentration_statistic per system size; the finite-N decay table that
/// stands in (as an explicitly labeled surrogate) for the vanishing limit.
std::vector<ConcentrationReport> concentration_scan(
    int degree, std::span<const int> n_sites_list, const ModelParameters& params,
    const EvalSettings& settings);

}  // namespace pspin
