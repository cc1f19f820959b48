#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pspin/identities.hpp"
#include "pspin/model.hpp"
#include "pspin/sampler.hpp"

namespace pspin {

enum class ExperimentKind {
  kExactEval,
  kMcRun,
  kGGScan,
  kConcentrationScan,
  kFECurve,
  kProofChecks,
};

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_from_string(const std::string& name);

enum class OutputFormat { kCsv, kJsonl };

/// Fully validated run description, parsed from a single strict JSON
/// document: unknown or missing keys abort before any computation.
struct RunConfig {
  std::string description;
  ExperimentKind experiment = ExperimentKind::kExactEval;
  EvaluationMode mode = EvaluationMode::kExact;
  ModelParameters model;
  std::uint64_t master_seed = 0;
  int n_disorder = 2;
  int workers = 1;
  MCSchedule schedule;
  int n_replicas = 2;
  ComputeBudgets budgets;
  int quadrature_panels = 1;
  std::string output_path;
  OutputFormat format = OutputFormat::kCsv;

  // experiment-specific blocks
  std::vector<int> eval_overlap_powers;              // exact-eval / mc-run
  std::vector<GGQuery> gg_queries;                   // gg-scan
  int scan_degree = 0;                               // concentration-scan
  std::vector<int> scan_sizes;                       //   (defaults to {model.N})
  int fe_degree = 0;                                 // fe-curve
  std::vector<double> fe_grid;
  bool fe_check_derivatives = true;
  int proof_degree = 0;                              // proof-checks
  std::vector<double> proof_betas;
  std::vector<double> proof_deltas;                  // beta' = beta + delta
  std::vector<double> proof_gammas;

  static RunConfig from_json_text(const std::string& text);
  static RunConfig from_json_file(const std::string& path);

  EvalSettings eval_settings() const;
  void validate() const;
};

/// One output row. The echoed parameters (model, mode, seed) plus the run
/// config reproduce the value bit-for-bit.
struct ReportRow {
  std::string experiment;
  int n_sites = 0;
  std::optional<int> p;
  std::optional<int> n;
  std::vector<std::pair<int, double>> betas;  // (degree, coefficient), ascending
  double h = 0.0;
  std::string mode;
  std::string quantity;
  EstimateWithError estimate;
  std::uint64_t seed = 0;
};

/// Runs the configured experiment and returns rows in deterministic order.
std::vector<ReportRow> run_experiment(const RunConfig& config);

/// %.17g rendering used for every floating-point value in reports.
std::string format_g17(double value);

std::string render_report(std::span<const ReportRow> rows, OutputFormat format);

/// Renders and writes atomically-ish: the file appears only on success.
void emit_report(std::span<const ReportRow> rows, OutputFormat format,
                 const std::string& path);

/// Parses a report back into rows (both formats); used for round-trip
/// checks. Only the fixed columns are recovered.
std::vector<ReportRow> parse_report(const std::string& text, OutputFormat format);

}  // namespace pspin
