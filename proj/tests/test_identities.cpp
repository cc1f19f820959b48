#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "pspin/errors.hpp"
#include "pspin/identities.hpp"

using namespace pspin;

namespace {

ModelParameters make_params(int n, std::vector<InteractionTerm> terms,
                            double h = 0.0) {
  ModelParameters p;
  p.n_sites = n;
  p.terms = std::move(terms);
  p.field = h;
  return p;
}

OverlapMonomial monomial(int n_replicas,
                         std::vector<OverlapMonomial::Factor> factors) {
  OverlapMonomial m;
  m.n_replicas = n_replicas;
  m.factors = std::move(factors);
  return m;
}

EvalSettings exact_settings(int n_disorder, std::uint64_t seed) {
  EvalSettings s;
  s.mode = EvaluationMode::kExact;
  s.n_disorder = n_disorder;
  s.master_seed = seed;
  return s;
}

}  // namespace

TEST_SUITE_BEGIN("identities");

TEST_CASE("bounded test functions") {
  const auto one = BoundedReplicaFunction::one(2);
  CHECK(one.name() == "1");
  const auto f = BoundedReplicaFunction::from_monomial(monomial(2, {{0, 1, 2}}));
  CHECK(f.name() == "R(1;2)^2");
  const auto clipped = BoundedReplicaFunction::clipped_polynomial(
      2, {{3.0, monomial(2, {{0, 1, 1}})}});
  CHECK(clipped.name() == "clip(3*R(1;2))");

  // clamp keeps |f| <= 1 even with large coefficients
  std::vector<SpinConfiguration> configs{SpinConfiguration::all_up(4),
                                         SpinConfiguration::all_up(4)};
  const auto matrix = OverlapMatrix::from_configs(configs);
  CHECK(f.evaluate(matrix) == 1.0);
  CHECK(clipped.evaluate(matrix) == 1.0);  // 3*1 clipped to 1
}

TEST_CASE("gg query validation") {
  const auto params = make_params(4, {});
  EvalSettings settings = exact_settings(2, 0);
  GGQuery q;
  q.p = 2;
  q.n = 3;
  q.f = BoundedReplicaFunction::one(2);  // arity 2 != n 3
  CHECK_THROWS_AS(gg_residual(q, params, settings), ConfigError);
  q.f = BoundedReplicaFunction::one(3);
  q.p = 0;
  CHECK_THROWS_AS(gg_residual(q, params, settings), ConfigError);
  q.p = 1;
  q.n = 1;
  q.f = BoundedReplicaFunction::one(1);
  CHECK_THROWS_AS(gg_residual(q, params, settings), ConfigError);
}

TEST_CASE("gg residual vanishes identically for f = 1") {
  // Replica symmetry of the product measure forces exact cancellation.
  const auto params = make_params(6, {{1, 0.6}, {2, 0.9}}, 0.2);
  const auto settings = exact_settings(3, 11);
  for (int n : {2, 3}) {
    for (int p : {1, 2, 3}) {
      GGQuery q;
      q.p = p;
      q.n = n;
      q.f = BoundedReplicaFunction::one(n);
      const auto report = gg_residual(q, params, settings);
      CHECK(report.residual.mean <= 1e-12);
    }
  }
}

TEST_CASE("gg residual closed form for independent uniform spins") {
  // At beta = 0, h = 0 with f = R_12^2, p = 2, n = 2:
  //   E<R12^2 R13^2> = 1/N^2, E<R12^2> = 1/N, E<R12^4> = (3N-2)/N^3,
  // so the residual is |1/N^2 - 1/(2N) * 1/N - (3N-2)/(2N^3)| = (N-1)/N^3.
  for (int n_sites : {4, 6, 8}) {
    const auto params = make_params(n_sites, {});
    GGQuery q;
    q.p = 2;
    q.n = 2;
    q.f = BoundedReplicaFunction::from_monomial(monomial(2, {{0, 1, 2}}));
    const auto report = gg_residual(q, params, exact_settings(2, 5));
    const double expected =
        (n_sites - 1.0) / (static_cast<double>(n_sites) * n_sites * n_sites);
    CHECK(std::abs(report.residual.mean - expected) < 1e-10);
    if (n_sites == 4) {
      CHECK(report.residual.mean == doctest::Approx(3.0 / 64).epsilon(1e-9));
    }
  }
}

TEST_CASE("gg residual in Monte Carlo mode matches the closed form") {
  const int n_sites = 4;
  const auto params = make_params(n_sites, {});
  GGQuery q;
  q.p = 2;
  q.n = 2;
  q.f = BoundedReplicaFunction::from_monomial(monomial(2, {{0, 1, 2}}));
  EvalSettings settings;
  settings.mode = EvaluationMode::kMonteCarlo;
  settings.n_disorder = 4;
  settings.master_seed = 17;
  settings.schedule.burn_in = 200;
  settings.schedule.thinning = 4;
  settings.schedule.sweeps = 4 * 800;
  const auto report = gg_residual(q, params, settings);
  const double expected = 3.0 / 64;
  CHECK(std::abs(report.residual.mean - expected) <
        3.0 * report.residual.std_error + 1e-12);
}

TEST_CASE("gg residual: exact and mc agree at moderate coupling") {
  const auto params = make_params(6, {{2, 1.0}}, 0.3);
  GGQuery q;
  q.p = 2;
  q.n = 2;
  q.f = BoundedReplicaFunction::from_monomial(monomial(2, {{0, 1, 2}}));
  const auto exact = gg_residual(q, params, exact_settings(8, 23));
  EvalSettings mc;
  mc.mode = EvaluationMode::kMonteCarlo;
  mc.n_disorder = 8;
  mc.master_seed = 23;
  mc.schedule.burn_in = 500;
  mc.schedule.thinning = 6;
  mc.schedule.sweeps = 6 * 700;
  const auto sampled = gg_residual(q, params, mc);
  // compare the coupled term (the residuals are |.|-folded, compare terms)
  CHECK(std::abs(exact.coupled_term.mean - sampled.coupled_term.mean) <
        3.0 * combined_std_error(exact.coupled_term, sampled.coupled_term) +
            1e-9);
  CHECK(std::abs(exact.residual.mean - sampled.residual.mean) <
        3.0 * (exact.residual.std_error + sampled.residual.std_error) + 1e-9);
}

TEST_CASE("concentration closed form at beta = 0, p = 1") {
  // Given sigma, H_1 ~ N(0, N); E|H_1| = sqrt(2N/pi), so total = sqrt(2/(pi N)).
  const int n_sites = 8;
  const auto params = make_params(n_sites, {{1, 0.0}});
  EvalSettings settings = exact_settings(400, 31);
  const auto report = concentration_statistic(1, params, settings);
  REQUIRE(report.closed_form_total.has_value());
  const double analytic = std::sqrt(2.0 / (std::numbers::pi * n_sites));
  CHECK(*report.closed_form_total == doctest::Approx(analytic));
  CHECK(std::abs(report.total.mean - analytic) < 3.0 * report.total.std_error);
  // At beta = 0 the thermal mean <H_1> vanishes per realization, so the
  // thermal part carries the full value and the disorder part is zero.
  CHECK(std::abs(report.thermal.mean - report.total.mean) < 1e-9);
  CHECK(report.disorder.mean < 1e-9);
  CHECK(report.limit_proven);
}

TEST_CASE("concentration triangle inequality and flags") {
  const auto params = make_params(6, {{2, 1.0}, {3, 0.4}}, 0.3);
  const auto settings = exact_settings(24, 37);
  const auto report = concentration_statistic(2, params, settings);
  const double combined =
      std::sqrt(report.total.std_error * report.total.std_error +
                report.thermal.std_error * report.thermal.std_error +
                report.disorder.std_error * report.disorder.std_error);
  CHECK(report.total.mean <=
        report.thermal.mean + report.disorder.mean + 3.0 * combined + 1e-12);
  CHECK(report.total.mean >= 0.0);
  CHECK(report.limit_proven);

  const auto odd = concentration_statistic(3, params, settings);
  CHECK_FALSE(odd.limit_proven);
  CHECK_FALSE(odd.closed_form_total.has_value());

  CHECK_THROWS_AS(concentration_statistic(4, params, settings), ConfigError);
}

TEST_CASE("concentration in Monte Carlo mode tracks the closed form") {
  const int n_sites = 8;
  const auto params = make_params(n_sites, {{1, 0.0}});
  EvalSettings settings;
  settings.mode = EvaluationMode::kMonteCarlo;
  settings.n_disorder = 32;
  settings.master_seed = 41;
  settings.schedule.burn_in = 200;
  settings.schedule.thinning = 8;
  settings.schedule.sweeps = 8 * 250;
  const auto report = concentration_statistic(1, params, settings);
  const double analytic = std::sqrt(2.0 / (std::numbers::pi * n_sites));
  CHECK(std::abs(report.total.mean - analytic) <
        4.0 * report.total.std_error + 0.01);
}

TEST_CASE("free-energy curve symmetry and closed forms at p = 1, h = 0") {
  const auto params = make_params(10, {{1, 0.0}});
  const std::vector<double> grid{-0.4, 0.0, 0.4};
  const auto settings = exact_settings(64, 43);
  const auto curve = free_energy_curve(1, grid, params, settings);

  // psi(x) = psi(-x) per realization (sigma -> -sigma bijection).
  CHECK(std::abs(curve.free_energy[0].mean - curve.free_energy[2].mean) < 1e-12);
  // F'(0) = 0 by sign symmetry of the uniform measure.
  CHECK(std::abs(curve.first_derivative[1].mean) < 1e-9);
  // F''(0) = E[sum g_i^2]/N = 1.
  CHECK(std::abs(curve.second_derivative[1].mean - 1.0) <
        5.0 * curve.second_derivative[1].std_error);
  for (const auto& v : curve.second_derivative) CHECK(v.mean >= 0.0);
}

TEST_CASE("derivative identities hold on a fine exact grid") {
  const auto params = make_params(8, {{2, 0.7}}, 0.2);
  std::vector<double> grid;
  for (int k = -3; k <= 3; ++k) grid.push_back(0.7 + 1e-3 * k);
  const auto curve = free_energy_curve(2, grid, params, exact_settings(32, 47));
  const auto check = derivative_identity_check(curve);
  CHECK(check.max_dev_first <= 1e-5);
  CHECK(check.max_dev_second <= 1e-5);
  CHECK(check.min_second_derivative >= 0.0);
}

TEST_CASE("derivative check on a synthetic flat curve is exactly zero") {
  FreeEnergyCurve flat;
  flat.degree = 1;
  flat.grid = {0.0, 0.1, 0.2, 0.3};
  for (std::size_t j = 0; j < 4; ++j) {
    flat.free_energy.push_back({std::log(2.0), 0.0, 1});
    flat.first_derivative.push_back({0.0, 0.0, 1});
    flat.second_derivative.push_back({0.0, 0.0, 1});
  }
  const auto check = derivative_identity_check(flat);
  CHECK(check.max_dev_first == 0.0);
  CHECK(check.max_dev_second == 0.0);

  FreeEnergyCurve tiny;
  tiny.grid = {0.0, 1.0};
  CHECK_THROWS_AS(derivative_identity_check(tiny), ConfigError);
}

TEST_CASE("curve grid validation") {
  const auto params = make_params(6, {{2, 0.5}});
  const std::vector<double> bad{0.0, 0.2, 0.1};
  CHECK_THROWS_AS(free_energy_curve(2, bad, params, exact_settings(2, 0)),
                  ConfigError);
  const std::vector<double> two{0.0, 0.2};
  CHECK_THROWS_AS(free_energy_curve(2, two, params, exact_settings(2, 0)),
                  ConfigError);
}

TEST_CASE("Delta_N bound holds with matching quadrature and endpoint forms") {
  const auto params = make_params(6, {{2, 0.5}}, 0.3);
  auto settings = exact_settings(24, 53);
  const auto report = delta_bound_check(2, 0.5, 1.0, params, settings);
  CHECK(report.slack >= -1e-8);
  CHECK(report.delta_forms_diff < 1e-6);
  CHECK(report.quadrature_doubling_diff < 1e-6);
  REQUIRE(report.lhs_two_replica.has_value());
  // |H - <H>| <= <|H^1 - H^2|> pointwise after averaging.
  CHECK(report.lhs.mean <= report.lhs_two_replica->mean + 1e-10);
  CHECK(report.rhs >= report.lhs_two_replica->mean - 1e-8);

  CHECK_THROWS_AS(delta_bound_check(2, 1.0, 0.5, params, settings), ConfigError);
}

TEST_CASE("Delta_N bound stays finite on a degenerate interval") {
  const auto params = make_params(5, {{2, 0.5}}, 0.1);
  const auto report =
      delta_bound_check(2, 0.5, 0.5 + 1e-6, params, exact_settings(8, 59));
  CHECK(std::isfinite(report.rhs));
  CHECK(report.slack >= -1e-8);
  CHECK(report.delta_quadrature.mean >= 0.0);
  CHECK(report.delta_quadrature.mean < 1e-4);
}

TEST_CASE("convexity secant bound") {
  const auto params = make_params(6, {{2, 0.5}}, 0.3);
  auto settings = exact_settings(24, 61);
  const auto narrow = convexity_secant_bound(2, 0.5, 1.0, 0.25, params, settings);
  CHECK(narrow.slack >= -1e-8);
  // Wider gamma loosens the bound: secant slopes of a convex function are
  // monotone in the window width.
  const auto wide = convexity_secant_bound(2, 0.5, 1.0, 5.0, params, settings);
  CHECK(wide.slack >= narrow.slack - 1e-10);
  CHECK(wide.secant_bound.mean >= narrow.secant_bound.mean - 1e-10);

  CHECK_THROWS_AS(convexity_secant_bound(2, 0.5, 1.0, 0.0, params, settings),
                  ConfigError);
  CHECK_THROWS_AS(convexity_secant_bound(2, 1.0, 0.5, 0.1, params, settings),
                  ConfigError);
}

TEST_CASE("concentration scan decays at desk scale") {
  const auto params = make_params(4, {{2, 1.0}}, 0.3);
  auto settings = exact_settings(48, 67);
  const std::vector<int> sizes{4, 8};
  const auto reports = concentration_scan(2, sizes, params, settings);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].n_sites == 4);
  CHECK(reports[1].n_sites == 8);
  CHECK(reports[1].total.mean < reports[0].total.mean);

  const std::vector<int> single{6};
  const auto one = concentration_scan(2, single, params, settings);
  ModelParameters at6 = params;
  at6.n_sites = 6;
  const auto direct = concentration_statistic(2, at6, settings);
  CHECK(one[0].total.mean == direct.total.mean);

  const std::vector<int> unsorted{8, 4};
  CHECK_THROWS_AS(concentration_scan(2, unsorted, params, settings),
                  ConfigError);
}

TEST_CASE("clipped-polynomial queries run through direct enumeration") {
  const auto params = make_params(6, {{2, 0.8}}, 0.2);
  GGQuery q;
  q.p = 1;
  q.n = 2;
  q.f = BoundedReplicaFunction::clipped_polynomial(
      2, {{0.5, monomial(2, {{0, 1, 1}})}, {0.25, monomial(2, {{0, 1, 2}})}});
  const auto report = gg_residual(q, params, exact_settings(4, 73));
  CHECK(std::isfinite(report.residual.mean));
  CHECK(report.residual.mean < 0.5);
  // |f| <= 1 keeps every component within [-1, 1].
  CHECK(std::abs(report.f_term.mean) <= 1.0);

  // Non-factorizable f is bound by the (n+1)*N tuple cap.
  const auto big = make_params(10, {{2, 0.8}}, 0.2);
  CHECK_THROWS_AS(gg_residual(q, big, exact_settings(4, 73)), BudgetError);
}

TEST_CASE("free-energy curve in Monte Carlo mode tracks exact derivatives") {
  const auto params = make_params(5, {{1, 0.2}});
  const std::vector<double> grid{0.0, 0.25, 0.5};
  const auto exact = free_energy_curve(1, grid, params, exact_settings(16, 79));

  EvalSettings mc;
  mc.mode = EvaluationMode::kMonteCarlo;
  mc.n_disorder = 16;
  mc.master_seed = 79;
  mc.schedule.burn_in = 300;
  mc.schedule.thinning = 5;
  mc.schedule.sweeps = 5 * 600;
  const auto sampled = free_energy_curve(1, grid, params, mc);

  // mc free-energy column is anchored at the first grid point
  CHECK(sampled.free_energy[0].mean == 0.0);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    CHECK(std::abs(sampled.first_derivative[j].mean -
                   exact.first_derivative[j].mean) <
          4.0 * combined_std_error(sampled.first_derivative[j],
                                   exact.first_derivative[j]) +
              0.01);
    CHECK(sampled.second_derivative[j].mean >= 0.0);
  }
  // integrated F differences track the exact ones loosely (trapezoid bias)
  const double exact_diff = exact.free_energy[2].mean - exact.free_energy[0].mean;
  CHECK(std::abs(sampled.free_energy[2].mean - exact_diff) < 0.05);
}

TEST_CASE("secant bound in Monte Carlo mode stays coherent") {
  const auto params = make_params(4, {{1, 0.3}});
  EvalSettings settings;
  settings.mode = EvaluationMode::kMonteCarlo;
  settings.n_disorder = 6;
  settings.master_seed = 83;
  settings.schedule.burn_in = 200;
  settings.schedule.thinning = 4;
  settings.schedule.sweeps = 4 * 400;
  const auto report = convexity_secant_bound(1, 0.2, 0.7, 0.25, params, settings);
  CHECK(std::isfinite(report.secant_bound.mean));
  CHECK(report.slack >
        -3.0 * combined_std_error(report.secant_bound, report.delta_endpoint) -
            0.02);
}

TEST_CASE("delta bound in Monte Carlo mode stays coherent") {
  const auto params = make_params(4, {{1, 0.3}});
  EvalSettings settings;
  settings.mode = EvaluationMode::kMonteCarlo;
  settings.n_disorder = 6;
  settings.master_seed = 71;
  settings.schedule.burn_in = 200;
  settings.schedule.thinning = 4;
  settings.schedule.sweeps = 4 * 400;
  const auto report = delta_bound_check(1, 0.2, 0.7, params, settings);
  CHECK(std::isfinite(report.rhs));
  // The bound is loose (8 Delta dominates); even with MC noise the slack
  // should stay clearly positive.
  CHECK(report.slack > -0.05);
  REQUIRE(report.lhs_two_replica.has_value());
  CHECK(report.lhs.mean <=
        report.lhs_two_replica->mean +
            3.0 * combined_std_error(report.lhs, *report.lhs_two_replica));
}

TEST_SUITE_END();
