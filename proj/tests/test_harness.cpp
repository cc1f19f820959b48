#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "pspin/errors.hpp"
#include "pspin/harness.hpp"

using namespace pspin;

namespace {

const char* kMinimalExactEval = R"({
  "experiment": "exact-eval",
  "mode": "exact",
  "model": {"N": 4, "h": 0.0, "terms": []},
  "master_seed": 1,
  "n_disorder": 2
})";

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE_BEGIN("harness");

TEST_CASE("config parsing is fail-closed") {
  CHECK_NOTHROW(RunConfig::from_json_text(kMinimalExactEval));

  SUBCASE("unknown top-level key") {
    try {
      RunConfig::from_json_text(R"({
        "experiment": "exact-eval", "mode": "exact",
        "model": {"N": 4, "h": 0.0, "terms": []},
        "master_seed": 1, "n_disorder": 2, "typo_key": 3
      })");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("typo_key") != std::string::npos);
    }
  }
  SUBCASE("unknown nested key") {
    try {
      RunConfig::from_json_text(R"({
        "experiment": "exact-eval", "mode": "exact",
        "model": {"N": 4, "h": 0.0, "terms": [], "extra": 1},
        "master_seed": 1, "n_disorder": 2
      })");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("extra") != std::string::npos);
    }
  }
  SUBCASE("missing required key") {
    try {
      RunConfig::from_json_text(R"({
        "experiment": "exact-eval", "mode": "exact",
        "model": {"N": 4, "h": 0.0, "terms": []},
        "n_disorder": 2
      })");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("master_seed") != std::string::npos);
    }
  }
  SUBCASE("wrong type") {
    CHECK_THROWS_AS(RunConfig::from_json_text(R"({
      "experiment": "exact-eval", "mode": "exact",
      "model": {"N": "four", "h": 0.0, "terms": []},
      "master_seed": 1, "n_disorder": 2
    })"),
                    ConfigError);
  }
  SUBCASE("not JSON at all") {
    CHECK_THROWS_AS(RunConfig::from_json_text("not json"), ConfigError);
  }
  SUBCASE("mode/experiment mismatch") {
    CHECK_THROWS_AS(RunConfig::from_json_text(R"({
      "experiment": "exact-eval", "mode": "mc",
      "model": {"N": 4, "h": 0.0, "terms": []},
      "master_seed": 1, "n_disorder": 2
    })"),
                    ConfigError);
  }
}

TEST_CASE("floating-point report format is 17 significant digits") {
  CHECK(format_g17(1.0 / 3.0) == "0.33333333333333331");
  CHECK(format_g17(2.0) == "2");
  CHECK(format_g17(0.0) == "0");
}

TEST_CASE("minimal exact-eval run reports psi = log 2") {
  const auto cfg = RunConfig::from_json_text(kMinimalExactEval);
  const auto rows = run_experiment(cfg);
  REQUIRE(rows.size() >= 2);
  bool found = false;
  for (const auto& row : rows) {
    if (row.quantity == "psi") {
      found = true;
      CHECK(std::abs(row.estimate.mean - std::log(2.0)) < 1e-12);
      CHECK(row.estimate.std_error == 0.0);
      CHECK(row.n_sites == 4);
      CHECK_FALSE(row.p.has_value());
      CHECK(row.mode == "exact");
    }
  }
  CHECK(found);
}

TEST_CASE("CSV report has a fixed header and one line per row") {
  const auto cfg = RunConfig::from_json_text(kMinimalExactEval);
  auto rows = run_experiment(cfg);
  rows.resize(1);
  const std::string text = render_report(rows, OutputFormat::kCsv);
  int lines = 0;
  for (char c : text) lines += (c == '\n');
  CHECK(lines == 2);
  CHECK(text.rfind("experiment,N,p,n,h,mode,quantity,mean,std_error,"
                   "n_samples,seed\n",
                   0) == 0);
}

TEST_CASE("reports round-trip byte-identically through parse and re-render") {
  const auto cfg = RunConfig::from_json_text(R"({
    "experiment": "gg-scan", "mode": "exact",
    "model": {"N": 4, "h": 0.25, "terms": [{"p": 2, "beta": 0.4}]},
    "master_seed": 9, "n_disorder": 3,
    "gg": {"queries": [
      {"p": 2, "n": 2, "f": {"kind": "monomial",
                             "factors": [{"l": 1, "m": 2, "power": 2}]}}
    ]}
  })");
  const auto rows = run_experiment(cfg);
  for (OutputFormat format : {OutputFormat::kCsv, OutputFormat::kJsonl}) {
    const std::string text = render_report(rows, format);
    const auto parsed = parse_report(text, format);
    CHECK(render_report(parsed, format) == text);
  }
}

TEST_CASE("gg-scan reproduces the uniform-spin closed form end to end") {
  const auto cfg = RunConfig::from_json_text(R"({
    "experiment": "gg-scan", "mode": "exact",
    "model": {"N": 4, "h": 0.0, "terms": []},
    "master_seed": 3, "n_disorder": 2,
    "gg": {"queries": [
      {"p": 2, "n": 2, "f": {"kind": "monomial",
                             "factors": [{"l": 1, "m": 2, "power": 2}]}}
    ]}
  })");
  const auto rows = run_experiment(cfg);
  bool found = false;
  for (const auto& row : rows) {
    if (row.quantity.rfind("gg_residual", 0) == 0) {
      found = true;
      CHECK(std::abs(row.estimate.mean - 3.0 / 64) < 1e-10);
      CHECK(row.p == 2);
      CHECK(row.n == 2);
    }
  }
  CHECK(found);
}

TEST_CASE("reruns and worker counts do not change a report byte") {
  auto cfg = RunConfig::from_json_text(R"({
    "experiment": "mc-run", "mode": "mc",
    "model": {"N": 6, "h": 0.2, "terms": [{"p": 2, "beta": 0.8}]},
    "master_seed": 12, "n_disorder": 8,
    "mc": {"burn_in": 100, "thinning": 3, "sweeps": 300, "n_replicas": 2},
    "mc_run": {"overlap_moment_powers": [1, 2]}
  })");
  cfg.workers = 1;
  const std::string once = render_report(run_experiment(cfg), OutputFormat::kCsv);
  const std::string twice = render_report(run_experiment(cfg), OutputFormat::kCsv);
  CHECK(once == twice);
  cfg.workers = 8;
  const std::string parallel =
      render_report(run_experiment(cfg), OutputFormat::kCsv);
  CHECK(once == parallel);
}

TEST_CASE("emit_report writes the rendered bytes") {
  const auto cfg = RunConfig::from_json_text(kMinimalExactEval);
  const auto rows = run_experiment(cfg);
  const auto dir = std::filesystem::temp_directory_path() / "pspin_test_out";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "report.jsonl").string();
  emit_report(rows, OutputFormat::kJsonl, path);
  CHECK(read_file(path) == render_report(rows, OutputFormat::kJsonl));
  std::filesystem::remove_all(dir);
}

TEST_CASE("concentration-scan emits the scan, closed form, and surrogate rows") {
  const auto cfg = RunConfig::from_json_text(R"({
    "experiment": "concentration-scan", "mode": "exact",
    "model": {"N": 4, "h": 0.0, "terms": [{"p": 1, "beta": 0.0}]},
    "master_seed": 21, "n_disorder": 32,
    "concentration": {"p": 1, "N_list": [4, 6]}
  })");
  const auto rows = run_experiment(cfg);
  int totals = 0;
  bool closed_form = false;
  bool surrogate = false;
  for (const auto& row : rows) {
    if (row.quantity == "concentration_total") ++totals;
    if (row.quantity == "concentration_total_closed_form") closed_form = true;
    if (row.quantity == "surrogate_total_decrease_first_to_last") {
      surrogate = true;
      CHECK(row.estimate.mean > 0.0);  // decays from N=4 to N=6
    }
    CHECK(row.quantity != "note_odd_p_no_limit_claim");  // p=1 is covered
  }
  CHECK(totals == 2);
  CHECK(closed_form);
  CHECK(surrogate);

  const auto odd = RunConfig::from_json_text(R"({
    "experiment": "concentration-scan", "mode": "exact",
    "model": {"N": 4, "h": 0.1, "terms": [{"p": 3, "beta": 0.5}]},
    "master_seed": 22, "n_disorder": 8,
    "concentration": {"p": 3}
  })");
  bool note = false;
  for (const auto& row : run_experiment(odd)) {
    if (row.quantity == "note_odd_p_no_limit_claim") note = true;
  }
  CHECK(note);
}

TEST_CASE("fe-curve experiment emits curve and check rows") {
  const auto cfg = RunConfig::from_json_text(R"({
    "experiment": "fe-curve", "mode": "exact",
    "model": {"N": 6, "h": 0.2, "terms": [{"p": 2, "beta": 0.5}]},
    "master_seed": 31, "n_disorder": 16,
    "fe": {"p": 2, "grid": {"min": 0.45, "max": 0.55, "count": 5}}
  })");
  const auto rows = run_experiment(cfg);
  int f_rows = 0;
  bool fd_check = false;
  for (const auto& row : rows) {
    if (row.quantity == "F") {
      ++f_rows;
      bool found_beta = false;
      for (const auto& [degree, beta] : row.betas) {
        if (degree == 2) {
          found_beta = true;
          CHECK(beta >= 0.45);
          CHECK(beta <= 0.55);
        }
      }
      CHECK(found_beta);  // the swept coefficient is echoed per row
    }
    if (row.quantity == "fd_max_dev_F_prime") {
      fd_check = true;
      CHECK(row.estimate.mean < 1e-3);
    }
    if (row.quantity == "F_second") CHECK(row.estimate.mean >= 0.0);
  }
  CHECK(f_rows == 5);
  CHECK(fd_check);
}

TEST_CASE("proof-checks experiment emits inequality rows with positive slack") {
  const auto cfg = RunConfig::from_json_text(R"({
    "experiment": "proof-checks", "mode": "exact",
    "model": {"N": 6, "h": 0.3, "terms": [{"p": 2, "beta": 0.5}]},
    "master_seed": 41, "n_disorder": 12,
    "proof": {"p": 2, "beta_values": [0.3], "delta_values": [0.4],
              "gamma_values": [0.25]}
  })");
  const auto rows = run_experiment(cfg);
  bool delta_bound_slack = false;
  bool secant_slack = false;
  bool doubling = false;
  for (const auto& row : rows) {
    if (row.quantity.rfind("delta_bound_slack", 0) == 0) {
      delta_bound_slack = true;
      CHECK(row.estimate.mean >= -1e-8);
    }
    if (row.quantity.rfind("secant_slack", 0) == 0) {
      secant_slack = true;
      CHECK(row.estimate.mean >= -1e-8);
    }
    if (row.quantity.rfind("delta_bound_quadrature_doubling_diff", 0) == 0) {
      doubling = true;
      CHECK(row.estimate.mean < 1e-6);
    }
  }
  CHECK(delta_bound_slack);
  CHECK(secant_slack);
  CHECK(doubling);
}

TEST_CASE("experiment-specific validation") {
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({
    "experiment": "gg-scan", "mode": "exact",
    "model": {"N": 4, "h": 0.0, "terms": []},
    "master_seed": 1, "n_disorder": 2
  })"),
                  ConfigError);  // gg block missing
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({
    "experiment": "fe-curve", "mode": "exact",
    "model": {"N": 4, "h": 0.0, "terms": [{"p": 2, "beta": 0.5}]},
    "master_seed": 1, "n_disorder": 2,
    "fe": {"p": 2, "grid": {"min": 0.0, "max": 1.0, "count": 2}}
  })"),
                  ConfigError);  // too few grid points
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({
    "experiment": "proof-checks", "mode": "exact",
    "model": {"N": 4, "h": 0.0, "terms": [{"p": 2, "beta": 0.5}]},
    "master_seed": 1, "n_disorder": 2,
    "proof": {"p": 2, "beta_values": [0.2], "delta_values": [-0.1],
              "gamma_values": [0.1]}
  })"),
                  ConfigError);  // negative delta
}

TEST_SUITE_END();
