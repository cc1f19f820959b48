#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "pspin/errors.hpp"
#include "pspin/model.hpp"
#include "pspin/rng.hpp"

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

// Disorder with explicit tensors, for closed-form fixtures.
DisorderRealization fixture_disorder(int n, std::vector<int> degrees,
                                     std::vector<std::vector<double>> tensors) {
  return DisorderRealization(n, std::move(degrees), std::move(tensors), 0, 0);
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("spin configurations are strictly +-1") {
  CHECK_THROWS_AS(SpinConfiguration({1, 0, -1}), std::invalid_argument);
  CHECK_THROWS_AS(SpinConfiguration({}), std::invalid_argument);
  const auto c = SpinConfiguration::from_mask(0b101, 3);
  CHECK(c.spin(0) == 1);
  CHECK(c.spin(1) == -1);
  CHECK(c.spin(2) == 1);
  CHECK(c.mask() == 0b101);
  CHECK(c.magnetization() == doctest::Approx(1.0 / 3));
}

TEST_CASE("parameter validation rejects bad structure") {
  CHECK_THROWS_AS(make_params(0, {}).validate(), ConfigError);
  CHECK_THROWS_AS(make_params(4, {{0, 1.0}}).validate(), ConfigError);
  CHECK_THROWS_AS(make_params(4, {{2, 1.0}, {2, 0.5}}).validate(), ConfigError);
  CHECK_THROWS_AS(make_params(4, {{5, 1.0}}).validate(), BudgetError);  // p_max=4
  // 600^3 = 2.16e8 entries < 2^28, but 700^3 = 3.4e8 exceeds it.
  CHECK_NOTHROW(make_params(600, {{3, 1.0}}).validate());
  CHECK_THROWS_AS(make_params(700, {{3, 1.0}}).validate(), BudgetError);
  CHECK_NOTHROW(make_params(1, {}).validate());  // pure field model is legal
}

TEST_CASE("disorder drawing is deterministic and correctly sized") {
  const auto params = make_params(3, {{1, 0.5}, {2, 0.5}});
  const auto a = draw_disorder(params, 7, 0);
  const auto b = draw_disorder(params, 7, 0);
  CHECK(a.tensor(1).size() == 3);
  CHECK(a.tensor(2).size() == 9);
  CHECK(a.total_entries() == 12);
  for (int p : {1, 2}) {
    for (std::size_t i = 0; i < a.tensor(p).size(); ++i) {
      CHECK(a.tensor(p)[i] == b.tensor(p)[i]);
    }
  }
  const auto c = draw_disorder(params, 7, 1);
  CHECK(a.tensor(2)[0] != c.tensor(2)[0]);
  const auto d = draw_disorder(params, 8, 0);
  CHECK(a.tensor(2)[0] != d.tensor(2)[0]);
  CHECK_FALSE(a.has_degree(3));
  CHECK_THROWS_AS(a.tensor(3), std::invalid_argument);
}

TEST_CASE("pooled coupling entries follow a standard normal law") {
  // 100^3 = 1e6 entries pooled over the p=3 tensor.
  const auto params = make_params(100, {{3, 1.0}});
  const auto disorder = draw_disorder(params, 123, 0);
  const auto t = disorder.tensor(3);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double g : t) {
    sum += g;
    sum_sq += g * g;
  }
  const double n = static_cast<double>(t.size());
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
  CHECK(std::abs(var - 1.0) < 0.01);
}

TEST_CASE("hamiltonian_p closed forms") {
  SUBCASE("single site, single term") {
    const auto disorder = fixture_disorder(1, {1}, {{0.5}});
    CHECK(hamiltonian_p(SpinConfiguration::all_up(1), disorder, 1) ==
          doctest::Approx(0.5));
  }
  SUBCASE("N=2 p=2 all-ones couplings sums the 4 ordered tuples") {
    const auto disorder = fixture_disorder(2, {2}, {{1, 1, 1, 1}});
    CHECK(hamiltonian_p(SpinConfiguration::all_up(2), disorder, 2) ==
          doctest::Approx(4.0 / std::sqrt(2.0)).epsilon(1e-12));
  }
  SUBCASE("antisymmetric couplings cancel for any configuration") {
    const auto disorder = fixture_disorder(2, {2}, {{0, 1, -1, 0}});
    for (std::uint64_t mask = 0; mask < 4; ++mask) {
      CHECK(hamiltonian_p(SpinConfiguration::from_mask(mask, 2), disorder, 2) ==
            doctest::Approx(0.0));
    }
  }
}

TEST_CASE("hamiltonian_p is exactly linear in the couplings") {
  const auto params = make_params(5, {{3, 1.0}});
  const auto disorder = draw_disorder(params, 3, 0);
  std::vector<double> doubled(disorder.tensor(3).begin(), disorder.tensor(3).end());
  for (double& g : doubled) g *= 2.0;
  const auto disorder2 = fixture_disorder(5, {3}, {std::move(doubled)});
  CounterRng rng(derive_stream_key({1, kTagScratch}));
  for (int trial = 0; trial < 10; ++trial) {
    const auto config = SpinConfiguration::random(5, rng);
    CHECK(hamiltonian_p(config, disorder2, 3) ==
          2.0 * hamiltonian_p(config, disorder, 3));
  }
}

TEST_CASE("gibbs_energy combines terms and field") {
  SUBCASE("field only") {
    const auto params = make_params(4, {}, 0.5);
    const auto disorder = draw_disorder(params, 0, 0);
    CHECK(gibbs_energy(SpinConfiguration::all_up(4), disorder, params) ==
          doctest::Approx(2.0));
  }
  SUBCASE("free model is identically zero") {
    const auto params = make_params(4, {}, 0.0);
    const auto disorder = draw_disorder(params, 0, 0);
    for (std::uint64_t mask = 0; mask < 16; ++mask) {
      CHECK(gibbs_energy(SpinConfiguration::from_mask(mask, 4), disorder,
                         params) == 0.0);
    }
  }
  SUBCASE("N=1 direct substitution") {
    const auto params = make_params(1, {{1, 2.0}}, -1.0);
    const auto disorder = fixture_disorder(1, {1}, {{0.3}});
    CHECK(gibbs_energy(SpinConfiguration::all_up(1), disorder, params) ==
          doctest::Approx(-0.4));
  }
}

TEST_CASE("flip_delta matches the full recompute") {
  SUBCASE("field term flips by -2h sigma") {
    const auto params = make_params(6, {}, 0.5);
    const auto disorder = draw_disorder(params, 0, 0);
    const auto config = SpinConfiguration::all_up(6);
    CHECK(flip_delta(config, 2, disorder, params) == doctest::Approx(-1.0));
  }
  SUBCASE("flip twice sums to zero") {
    const auto params = make_params(6, {{1, 0.7}, {2, 0.4}}, 0.2);
    const auto disorder = draw_disorder(params, 5, 0);
    CounterRng rng(derive_stream_key({2, kTagScratch}));
    auto config = SpinConfiguration::random(6, rng);
    for (int site = 0; site < 6; ++site) {
      const double d1 = flip_delta(config, site, disorder, params);
      config.flip(site);
      const double d2 = flip_delta(config, site, disorder, params);
      config.flip(site);
      CHECK(d1 + d2 == doctest::Approx(0.0).epsilon(1e-12));
    }
  }
  SUBCASE("random instances against the recompute oracle") {
    CounterRng rng(derive_stream_key({3, kTagScratch}));
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 2 + static_cast<int>(rng.next_below(9));  // N <= 10
      const auto params =
          make_params(n, {{1, 0.8}, {2, -0.6}, {3, 0.5}}, -0.3);
      const auto disorder =
          draw_disorder(params, 17, static_cast<std::uint64_t>(trial));
      auto config = SpinConfiguration::random(n, rng);
      const int site = static_cast<int>(rng.next_below(n));
      const double fast = flip_delta(config, site, disorder, params);
      const double before = gibbs_energy(config, disorder, params);
      config.flip(site);
      const double after = gibbs_energy(config, disorder, params);
      CHECK(std::abs(fast - (after - before)) < 1e-9);
    }
  }
  SUBCASE("site out of range") {
    const auto params = make_params(4, {}, 0.1);
    const auto disorder = draw_disorder(params, 0, 0);
    const auto config = SpinConfiguration::all_up(4);
    CHECK_THROWS_AS(flip_delta(config, 4, disorder, params), std::out_of_range);
    CHECK_THROWS_AS(flip_delta(config, -1, disorder, params), std::out_of_range);
  }
}

TEST_CASE("FlipDeltaEngine tracks flips incrementally") {
  const auto params = make_params(8, {{1, 0.5}, {2, 0.9}, {3, -0.4}}, 0.15);
  const auto disorder = draw_disorder(params, 21, 0);
  CounterRng rng(derive_stream_key({4, kTagScratch}));
  auto config = SpinConfiguration::random(8, rng);
  FlipDeltaEngine engine(disorder, params);
  engine.reset(config);
  for (int step = 0; step < 200; ++step) {
    const int site = static_cast<int>(rng.next_below(8));
    const double fast = engine.total_delta(config, site);
    const double slow = flip_delta(config, site, disorder, params);
    CHECK(std::abs(fast - slow) < 1e-9);
    if (rng.next_u01() < 0.7) {
      engine.apply_flip(config, site);
    }
  }
}

TEST_CASE("overlap basics") {
  const auto a = SpinConfiguration::from_mask(0b0011, 4);  // + + - -
  const auto b = SpinConfiguration::from_mask(0b0101, 4);  // + - + -
  CHECK(overlap(a, a) == 1.0);
  std::vector<std::int8_t> neg;
  for (auto s : a.spins()) neg.push_back(static_cast<std::int8_t>(-s));
  CHECK(overlap(a, SpinConfiguration(neg)) == -1.0);
  CHECK(overlap(a, b) == 0.0);
  CHECK_THROWS_AS(overlap(a, SpinConfiguration::all_up(5)),
                  std::invalid_argument);
}

TEST_CASE("overlap matrices are symmetric with unit diagonal on the lattice") {
  CounterRng rng(derive_stream_key({8, kTagScratch}));
  const int n_sites = 7;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<SpinConfiguration> configs;
    for (int l = 0; l < 4; ++l) {
      configs.push_back(SpinConfiguration::random(n_sites, rng));
    }
    const auto matrix = OverlapMatrix::from_configs(configs);
    for (int l = 0; l < 4; ++l) {
      CHECK(matrix.at(l, l) == 1.0);
      for (int m = 0; m < 4; ++m) {
        CHECK(matrix.at(l, m) == matrix.at(m, l));
        // R*N must be an integer congruent to N mod 2.
        const double scaled = matrix.at(l, m) * n_sites;
        CHECK(scaled == doctest::Approx(std::round(scaled)));
        const long long k =
            std::llround((scaled + n_sites) / 2.0);
        CHECK(matrix.at(l, m) ==
              doctest::Approx(-1.0 + 2.0 * k / n_sites));
      }
    }
  }
}

TEST_CASE("disorder covariance identity: E[H_p(a) H_p(b)] = N R^p") {
  // For fixed configurations the product over a fresh draw has mean
  // N^{1-p} (sum_i a_i b_i)^p; checked against the sample mean.
  const int n = 16;
  const int n_draws = 3000;
  const auto params = make_params(n, {{1, 1.0}, {2, 1.0}});
  CounterRng rng(derive_stream_key({12, kTagScratch}));
  const auto a = SpinConfiguration::random(n, rng);
  const auto b = SpinConfiguration::random(n, rng);
  const double r = overlap(a, b);
  for (int p : {1, 2}) {
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int draw = 0; draw < n_draws; ++draw) {
      const auto disorder =
          draw_disorder(params, 999, static_cast<std::uint64_t>(draw));
      const double ha = hamiltonian_p(a, disorder, p);
      const double hb = hamiltonian_p(b, disorder, p);
      sum += ha * hb;
      sum_sq += ha * hb * ha * hb;
    }
    const double mean = sum / n_draws;
    const double se =
        std::sqrt((sum_sq / n_draws - mean * mean) / n_draws);
    const double expected = n * std::pow(r, p);
    CHECK(std::abs(mean - expected) < 5.0 * se);

    // Special case a = a: second moment of H_p is N.
    double sum_self = 0.0;
    double sum_self_sq = 0.0;
    for (int draw = 0; draw < n_draws; ++draw) {
      const auto disorder =
          draw_disorder(params, 555, static_cast<std::uint64_t>(draw));
      const double ha = hamiltonian_p(a, disorder, p);
      sum_self += ha * ha;
      sum_self_sq += ha * ha * ha * ha;
    }
    const double mean_self = sum_self / n_draws;
    const double se_self = std::sqrt(
        (sum_self_sq / n_draws - mean_self * mean_self) / n_draws);
    CHECK(std::abs(mean_self - n) < 5.0 * se_self);
  }
}

TEST_SUITE_END();
