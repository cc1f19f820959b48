#include "pspin/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "pspin/errors.hpp"
#include "pspin/exact.hpp"

namespace pspin {

using nlohmann::json;

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kExactEval: return "exact-eval";
    case ExperimentKind::kMcRun: return "mc-run";
    case ExperimentKind::kGGScan: return "gg-scan";
    case ExperimentKind::kConcentrationScan: return "concentration-scan";
    case ExperimentKind::kFECurve: return "fe-curve";
    case ExperimentKind::kProofChecks: return "proof-checks";
  }
  return "?";
}

ExperimentKind experiment_from_string(const std::string& name) {
  if (name == "exact-eval") return ExperimentKind::kExactEval;
  if (name == "mc-run") return ExperimentKind::kMcRun;
  if (name == "gg-scan") return ExperimentKind::kGGScan;
  if (name == "concentration-scan") return ExperimentKind::kConcentrationScan;
  if (name == "fe-curve") return ExperimentKind::kFECurve;
  if (name == "proof-checks") return ExperimentKind::kProofChecks;
  throw ConfigError("unknown experiment '" + name + "'");
}

namespace {

// ---------------------------------------------------------------------------
// Strict JSON access: every key must be known and consumed.
// ---------------------------------------------------------------------------

class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw ConfigError(path_ + " must be a JSON object");
    }
  }

  const json* optional(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& require(const std::string& key) {
    const json* v = optional(key);
    if (!v) throw ConfigError("missing required key " + join(key));
    return *v;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError("unknown key " + join(it.key()));
      }
    }
  }

  std::string join(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

int as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path + " must be an integer");
  return v.get<int>();
}

std::uint64_t as_u64(const json& v, const std::string& path) {
  if (!v.is_number_unsigned() && !v.is_number_integer()) {
    throw ConfigError(path + " must be a non-negative integer");
  }
  if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
    throw ConfigError(path + " must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path + " must be a number");
  return v.get<double>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path + " must be a string");
  return v.get<std::string>();
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path + " must be a boolean");
  return v.get<bool>();
}

const json& as_array(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path + " must be an array");
  return v;
}

OverlapMonomial parse_monomial(const json& factors, int n_replicas,
                               const std::string& path) {
  OverlapMonomial m;
  m.n_replicas = n_replicas;
  for (std::size_t i = 0; i < as_array(factors, path).size(); ++i) {
    const std::string fp = path + "[" + std::to_string(i) + "]";
    StrictObject fo(factors[i], fp);
    // Config uses 1-based replica labels, matching the R_{l,l'} convention.
    OverlapMonomial::Factor f;
    f.l = as_int(fo.require("l"), fp + ".l") - 1;
    f.m = as_int(fo.require("m"), fp + ".m") - 1;
    f.power = as_int(fo.require("power"), fp + ".power");
    fo.finish();
    m.factors.push_back(f);
  }
  try {
    m.validate();
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return m;
}

BoundedReplicaFunction parse_f(const json& j, int n, const std::string& path) {
  StrictObject fo(j, path);
  const std::string kind = as_string(fo.require("kind"), path + ".kind");
  if (kind == "one") {
    fo.finish();
    return BoundedReplicaFunction::one(n);
  }
  if (kind == "monomial") {
    const json& factors = fo.require("factors");
    fo.finish();
    return BoundedReplicaFunction::from_monomial(
        parse_monomial(factors, n, path + ".factors"));
  }
  if (kind == "clipped_poly") {
    const json& terms = as_array(fo.require("terms"), path + ".terms");
    fo.finish();
    std::vector<BoundedReplicaFunction::PolyTerm> poly;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      const std::string tp = path + ".terms[" + std::to_string(i) + "]";
      StrictObject to(terms[i], tp);
      BoundedReplicaFunction::PolyTerm term;
      term.coeff = as_double(to.require("coeff"), tp + ".coeff");
      term.monomial = parse_monomial(to.require("factors"), n, tp + ".factors");
      to.finish();
      poly.push_back(std::move(term));
    }
    return BoundedReplicaFunction::clipped_polynomial(n, std::move(poly));
  }
  throw ConfigError(path + ".kind must be one|monomial|clipped_poly");
}

std::vector<int> parse_int_list(const json& j, const std::string& path) {
  std::vector<int> out;
  for (std::size_t i = 0; i < as_array(j, path).size(); ++i) {
    out.push_back(as_int(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

std::vector<double> parse_double_list(const json& j, const std::string& path) {
  std::vector<double> out;
  for (std::size_t i = 0; i < as_array(j, path).size(); ++i) {
    out.push_back(as_double(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }

  RunConfig cfg;
  StrictObject top(root, "");

  if (const json* d = top.optional("description")) {
    cfg.description = as_string(*d, "description");
  }
  cfg.experiment =
      experiment_from_string(as_string(top.require("experiment"), "experiment"));
  const std::string mode = as_string(top.require("mode"), "mode");
  if (mode == "exact") {
    cfg.mode = EvaluationMode::kExact;
  } else if (mode == "mc") {
    cfg.mode = EvaluationMode::kMonteCarlo;
  } else {
    throw ConfigError("mode must be exact|mc");
  }

  {
    StrictObject model(top.require("model"), "model");
    cfg.model.n_sites = as_int(model.require("N"), "model.N");
    cfg.model.field = as_double(model.require("h"), "model.h");
    const json& terms = as_array(model.require("terms"), "model.terms");
    for (std::size_t i = 0; i < terms.size(); ++i) {
      const std::string tp = "model.terms[" + std::to_string(i) + "]";
      StrictObject to(terms[i], tp);
      InteractionTerm term;
      term.degree = as_int(to.require("p"), tp + ".p");
      term.beta = as_double(to.require("beta"), tp + ".beta");
      to.finish();
      cfg.model.terms.push_back(term);
    }
    model.finish();
  }

  cfg.master_seed = as_u64(top.require("master_seed"), "master_seed");
  cfg.n_disorder = as_int(top.require("n_disorder"), "n_disorder");
  if (const json* w = top.optional("workers")) {
    cfg.workers = as_int(*w, "workers");
  }

  if (const json* mc = top.optional("mc")) {
    StrictObject m(*mc, "mc");
    if (const json* v = m.optional("burn_in"))
      cfg.schedule.burn_in = as_int(*v, "mc.burn_in");
    if (const json* v = m.optional("thinning"))
      cfg.schedule.thinning = as_int(*v, "mc.thinning");
    if (const json* v = m.optional("sweeps"))
      cfg.schedule.sweeps = as_int(*v, "mc.sweeps");
    if (const json* v = m.optional("resync_interval"))
      cfg.schedule.resync_interval = as_int(*v, "mc.resync_interval");
    if (const json* v = m.optional("n_replicas"))
      cfg.n_replicas = as_int(*v, "mc.n_replicas");
    if (const json* ladder = m.optional("ladder")) {
      StrictObject lo(*ladder, "mc.ladder");
      if (const json* v = lo.optional("count"))
        cfg.schedule.ladder.count = as_int(*v, "mc.ladder.count");
      if (const json* v = lo.optional("min_scale"))
        cfg.schedule.ladder.min_scale = as_double(*v, "mc.ladder.min_scale");
      lo.finish();
    }
    m.finish();
  }

  if (const json* budgets = top.optional("budgets")) {
    StrictObject b(*budgets, "budgets");
    if (const json* v = b.optional("max_degree"))
      cfg.budgets.max_degree = as_int(*v, "budgets.max_degree");
    if (const json* v = b.optional("max_tensor_entries"))
      cfg.budgets.max_tensor_entries = as_u64(*v, "budgets.max_tensor_entries");
    if (const json* v = b.optional("exact_max_n"))
      cfg.budgets.exact_max_sites = as_int(*v, "budgets.exact_max_n");
    if (const json* v = b.optional("direct_max_bits"))
      cfg.budgets.direct_max_bits = as_int(*v, "budgets.direct_max_bits");
    if (const json* v = b.optional("factorized_max_tuples"))
      cfg.budgets.factorized_max_tuples =
          as_double(*v, "budgets.factorized_max_tuples");
    b.finish();
  }

  if (const json* q = top.optional("quadrature_panels")) {
    cfg.quadrature_panels = as_int(*q, "quadrature_panels");
  }

  if (const json* output = top.optional("output")) {
    StrictObject o(*output, "output");
    if (const json* v = o.optional("path"))
      cfg.output_path = as_string(*v, "output.path");
    if (const json* v = o.optional("format")) {
      const std::string f = as_string(*v, "output.format");
      if (f == "csv") {
        cfg.format = OutputFormat::kCsv;
      } else if (f == "jsonl") {
        cfg.format = OutputFormat::kJsonl;
      } else {
        throw ConfigError("output.format must be csv|jsonl");
      }
    }
    o.finish();
  }

  if (const json* block = top.optional("exact_eval")) {
    StrictObject e(*block, "exact_eval");
    if (const json* v = e.optional("overlap_moment_powers"))
      cfg.eval_overlap_powers = parse_int_list(*v, "exact_eval.overlap_moment_powers");
    e.finish();
  }
  if (const json* block = top.optional("mc_run")) {
    StrictObject e(*block, "mc_run");
    if (const json* v = e.optional("overlap_moment_powers"))
      cfg.eval_overlap_powers = parse_int_list(*v, "mc_run.overlap_moment_powers");
    e.finish();
  }
  if (const json* block = top.optional("gg")) {
    StrictObject g(*block, "gg");
    const json& queries = as_array(g.require("queries"), "gg.queries");
    g.finish();
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const std::string qp = "gg.queries[" + std::to_string(i) + "]";
      StrictObject qo(queries[i], qp);
      GGQuery query;
      query.p = as_int(qo.require("p"), qp + ".p");
      query.n = as_int(qo.require("n"), qp + ".n");
      query.f = parse_f(qo.require("f"), query.n, qp + ".f");
      qo.finish();
      cfg.gg_queries.push_back(std::move(query));
    }
  }
  if (const json* block = top.optional("concentration")) {
    StrictObject c(*block, "concentration");
    cfg.scan_degree = as_int(c.require("p"), "concentration.p");
    if (const json* v = c.optional("N_list"))
      cfg.scan_sizes = parse_int_list(*v, "concentration.N_list");
    c.finish();
  }
  if (const json* block = top.optional("fe")) {
    StrictObject f(*block, "fe");
    cfg.fe_degree = as_int(f.require("p"), "fe.p");
    const json* points = f.optional("points");
    const json* grid = f.optional("grid");
    if ((points == nullptr) == (grid == nullptr)) {
      throw ConfigError("fe: exactly one of fe.points / fe.grid is required");
    }
    if (points) {
      cfg.fe_grid = parse_double_list(*points, "fe.points");
    } else {
      StrictObject go(*grid, "fe.grid");
      const double lo = as_double(go.require("min"), "fe.grid.min");
      const double hi = as_double(go.require("max"), "fe.grid.max");
      const int count = as_int(go.require("count"), "fe.grid.count");
      go.finish();
      if (count < 3) throw ConfigError("fe.grid.count must be >= 3");
      if (!(hi > lo)) throw ConfigError("fe.grid.max must exceed fe.grid.min");
      for (int i = 0; i < count; ++i) {
        cfg.fe_grid.push_back(lo + (hi - lo) * i / (count - 1));
      }
    }
    if (const json* v = f.optional("check_derivatives"))
      cfg.fe_check_derivatives = as_bool(*v, "fe.check_derivatives");
    f.finish();
  }
  if (const json* block = top.optional("proof")) {
    StrictObject p(*block, "proof");
    cfg.proof_degree = as_int(p.require("p"), "proof.p");
    cfg.proof_betas = parse_double_list(p.require("beta_values"), "proof.beta_values");
    cfg.proof_deltas =
        parse_double_list(p.require("delta_values"), "proof.delta_values");
    cfg.proof_gammas =
        parse_double_list(p.require("gamma_values"), "proof.gamma_values");
    p.finish();
  }

  top.finish();
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_json_text(buffer.str());
}

EvalSettings RunConfig::eval_settings() const {
  EvalSettings s;
  s.mode = mode;
  s.n_disorder = n_disorder;
  s.master_seed = master_seed;
  s.schedule = schedule;
  s.budgets = budgets;
  s.workers = workers;
  s.quadrature_panels = quadrature_panels;
  return s;
}

void RunConfig::validate() const {
  model.validate(budgets);
  if (n_disorder < 2) throw ConfigError("n_disorder must be >= 2");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (quadrature_panels < 1) throw ConfigError("quadrature_panels must be >= 1");
  schedule.validate();
  if (n_replicas < 1) throw ConfigError("mc.n_replicas must be >= 1");
  switch (experiment) {
    case ExperimentKind::kExactEval:
      if (mode != EvaluationMode::kExact) {
        throw ConfigError("exact-eval requires mode=exact");
      }
      break;
    case ExperimentKind::kMcRun:
      if (mode != EvaluationMode::kMonteCarlo) {
        throw ConfigError("mc-run requires mode=mc");
      }
      if (!eval_overlap_powers.empty() && n_replicas < 2) {
        throw ConfigError("mc-run overlap moments need mc.n_replicas >= 2");
      }
      break;
    case ExperimentKind::kGGScan:
      if (gg_queries.empty()) throw ConfigError("gg.queries must be nonempty");
      break;
    case ExperimentKind::kConcentrationScan:
      if (scan_degree < 1) throw ConfigError("concentration.p must be >= 1");
      break;
    case ExperimentKind::kFECurve:
      if (fe_degree < 1) throw ConfigError("fe.p must be >= 1");
      if (fe_grid.size() < 3) throw ConfigError("fe grid needs >= 3 points");
      break;
    case ExperimentKind::kProofChecks:
      if (proof_degree < 1) throw ConfigError("proof.p must be >= 1");
      if (proof_betas.empty()) throw ConfigError("proof.beta_values is empty");
      if (proof_deltas.empty()) throw ConfigError("proof.delta_values is empty");
      if (proof_gammas.empty()) throw ConfigError("proof.gamma_values is empty");
      for (double d : proof_deltas) {
        if (!(d > 0)) throw ConfigError("proof.delta_values must be positive");
      }
      for (double g : proof_gammas) {
        if (!(g > 0)) throw ConfigError("proof.gamma_values must be positive");
      }
      break;
  }
  for (int p : eval_overlap_powers) {
    if (p < 1) throw ConfigError("overlap_moment_powers must be >= 1");
  }
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

namespace {

std::string format_short(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::vector<std::pair<int, double>> echo_betas(const ModelParameters& model) {
  std::vector<std::pair<int, double>> out;
  for (const auto& t : model.terms) out.emplace_back(t.degree, t.beta);
  std::sort(out.begin(), out.end());
  return out;
}

struct RowFactory {
  const RunConfig* cfg;
  ModelParameters echo_model;

  ReportRow make(const std::string& quantity, const EstimateWithError& est,
                 std::optional<int> p = std::nullopt,
                 std::optional<int> n = std::nullopt) const {
    ReportRow row;
    row.experiment = to_string(cfg->experiment);
    row.n_sites = echo_model.n_sites;
    row.p = p;
    row.n = n;
    row.betas = echo_betas(echo_model);
    row.h = echo_model.field;
    row.mode = to_string(cfg->mode);
    row.quantity = quantity;
    row.estimate = est;
    row.seed = cfg->master_seed;
    return row;
  }
};

EstimateWithError scalar(double v, std::int64_t n_samples) {
  return EstimateWithError{v, 0.0, n_samples};
}

std::vector<ReportRow> run_exact_eval(const RunConfig& cfg) {
  const std::size_t n_cols = 2 + cfg.eval_overlap_powers.size();
  auto estimator = [&](const DisorderRealization& disorder) {
    GibbsTable table(disorder, cfg.model, cfg.budgets);
    std::vector<double> row{table.psi(), table.log_partition()};
    for (int power : cfg.eval_overlap_powers) {
      OverlapMonomial m;
      m.n_replicas = 2;
      m.factors = {{0, 1, power}};
      row.push_back(overlap_moment_factorized(m, table, cfg.budgets));
    }
    return row;
  };
  const auto cols = disorder_average_multi(
      estimator, n_cols, cfg.model, cfg.n_disorder, cfg.master_seed,
      cfg.budgets, cfg.workers);

  RowFactory rows{&cfg, cfg.model};
  std::vector<ReportRow> out;
  out.push_back(rows.make("psi", cols[0]));
  out.push_back(rows.make("log_partition", cols[1]));
  for (std::size_t i = 0; i < cfg.eval_overlap_powers.size(); ++i) {
    out.push_back(rows.make(
        "overlap_moment[p=" + std::to_string(cfg.eval_overlap_powers[i]) + "]",
        cols[2 + i], cfg.eval_overlap_powers[i], 2));
  }
  return out;
}

std::vector<ReportRow> run_mc_run(const RunConfig& cfg) {
  const std::size_t n_cols = 3 + cfg.eval_overlap_powers.size();
  const MCSchedule schedule = cfg.schedule.resolved(cfg.model.n_sites);
  auto estimator = [&](const DisorderRealization& disorder) {
    ReplicaSampler sampler(cfg.n_replicas, disorder, cfg.model, schedule,
                           cfg.master_seed);
    const std::int64_t n_samples = schedule.n_samples(cfg.model.n_sites);
    long double e_sum = 0.0L;
    long double m_sum = 0.0L;
    std::vector<long double> moment_sums(cfg.eval_overlap_powers.size(), 0.0L);
    for (std::int64_t s = 0; s < n_samples; ++s) {
      const ReplicaSample sample = sampler.next();
      e_sum += sample.energies[0] / cfg.model.n_sites;
      m_sum += sample.configs[0].magnetization();
      for (std::size_t k = 0; k < cfg.eval_overlap_powers.size(); ++k) {
        double r = sample.overlaps.at(0, 1);
        double value = 1.0;
        for (int q = 0; q < cfg.eval_overlap_powers[k]; ++q) value *= r;
        moment_sums[k] += value;
      }
    }
    std::vector<double> row{static_cast<double>(e_sum / n_samples),
                            static_cast<double>(m_sum / n_samples)};
    for (auto& ms : moment_sums) {
      row.push_back(static_cast<double>(ms / n_samples));
    }
    row.push_back(sampler.swap_acceptance_rate());
    return row;
  };
  const auto cols = disorder_average_multi(
      estimator, n_cols, cfg.model, cfg.n_disorder, cfg.master_seed,
      cfg.budgets, cfg.workers);

  RowFactory rows{&cfg, cfg.model};
  std::vector<ReportRow> out;
  out.push_back(rows.make("energy_per_site", cols[0]));
  out.push_back(rows.make("magnetization", cols[1]));
  for (std::size_t i = 0; i < cfg.eval_overlap_powers.size(); ++i) {
    out.push_back(rows.make(
        "overlap_moment[p=" + std::to_string(cfg.eval_overlap_powers[i]) + "]",
        cols[2 + i], cfg.eval_overlap_powers[i], cfg.n_replicas));
  }
  out.push_back(rows.make("pt_swap_acceptance", cols[n_cols - 1]));
  return out;
}

std::vector<ReportRow> run_gg_scan(const RunConfig& cfg) {
  RowFactory rows{&cfg, cfg.model};
  std::vector<ReportRow> out;
  const EvalSettings settings = cfg.eval_settings();
  for (const auto& query : cfg.gg_queries) {
    const GGResidualReport report = gg_residual(query, cfg.model, settings);
    const std::string sfx = "[f=" + query.f.name() + "]";
    out.push_back(
        rows.make("gg_residual" + sfx, report.residual, query.p, query.n));
    out.push_back(
        rows.make("gg_term_coupled" + sfx, report.coupled_term, query.p, query.n));
    out.push_back(rows.make("gg_term_f" + sfx, report.f_term, query.p, query.n));
    out.push_back(
        rows.make("gg_term_overlap" + sfx, report.overlap_term, query.p, query.n));
    for (std::size_t l = 0; l < report.conditioned_terms.size(); ++l) {
      out.push_back(rows.make(
          "gg_term_conditioned_l" + std::to_string(l + 2) + sfx,
          report.conditioned_terms[l], query.p, query.n));
    }
  }
  return out;
}

std::vector<ReportRow> run_concentration_scan(const RunConfig& cfg) {
  std::vector<int> sizes = cfg.scan_sizes;
  if (sizes.empty()) sizes = {cfg.model.n_sites};
  const EvalSettings settings = cfg.eval_settings();
  const auto reports =
      concentration_scan(cfg.scan_degree, sizes, cfg.model, settings);

  std::vector<ReportRow> out;
  bool noted_odd_p = false;
  for (const auto& report : reports) {
    ModelParameters echo = cfg.model;
    echo.n_sites = report.n_sites;
    RowFactory rows{&cfg, echo};
    if (!report.limit_proven && !noted_odd_p) {
      out.push_back(rows.make("note_odd_p_no_limit_claim",
                              scalar(report.degree, 1), report.degree));
      noted_odd_p = true;
    }
    out.push_back(
        rows.make("concentration_total", report.total, report.degree));
    out.push_back(
        rows.make("concentration_thermal", report.thermal, report.degree));
    out.push_back(
        rows.make("concentration_disorder", report.disorder, report.degree));
    out.push_back(rows.make("pooled_mean_h_per_site",
                            scalar(report.pooled_mean_h_per_site, cfg.n_disorder),
                            report.degree));
    if (report.closed_form_total) {
      out.push_back(rows.make("concentration_total_closed_form",
                              scalar(*report.closed_form_total, 1),
                              report.degree));
    }
  }
  if (reports.size() >= 2) {
    ModelParameters echo = cfg.model;
    echo.n_sites = reports.back().n_sites;
    RowFactory rows{&cfg, echo};
    EstimateWithError decrease;
    decrease.mean = reports.front().total.mean - reports.back().total.mean;
    decrease.std_error =
        combined_std_error(reports.front().total, reports.back().total);
    decrease.n_samples = cfg.n_disorder;
    out.push_back(rows.make("surrogate_total_decrease_first_to_last", decrease,
                            cfg.scan_degree));
  }
  return out;
}

std::vector<ReportRow> run_fe_curve(const RunConfig& cfg) {
  const EvalSettings settings = cfg.eval_settings();
  const FreeEnergyCurve curve =
      free_energy_curve(cfg.fe_degree, cfg.fe_grid, cfg.model, settings);

  const bool exact = cfg.mode == EvaluationMode::kExact;
  const std::string f_name = exact ? "F" : "F_rel";
  std::vector<ReportRow> out;
  for (std::size_t j = 0; j < curve.grid.size(); ++j) {
    ModelParameters echo = cfg.model.with_coefficient(cfg.fe_degree, curve.grid[j]);
    RowFactory rows{&cfg, echo};
    out.push_back(rows.make(f_name, curve.free_energy[j], cfg.fe_degree));
    out.push_back(rows.make("F_prime", curve.first_derivative[j], cfg.fe_degree));
    out.push_back(rows.make("F_second", curve.second_derivative[j], cfg.fe_degree));
  }
  if (exact && cfg.fe_check_derivatives) {
    const DerivativeCheck check = derivative_identity_check(curve);
    RowFactory rows{&cfg, cfg.model};
    out.push_back(rows.make("fd_max_dev_F_prime",
                            scalar(check.max_dev_first, cfg.n_disorder),
                            cfg.fe_degree));
    out.push_back(rows.make("fd_max_dev_F_second",
                            scalar(check.max_dev_second, cfg.n_disorder),
                            cfg.fe_degree));
    out.push_back(rows.make("F_second_min",
                            scalar(check.min_second_derivative, cfg.n_disorder),
                            cfg.fe_degree));
  }
  return out;
}

std::vector<ReportRow> run_proof_checks(const RunConfig& cfg) {
  const EvalSettings settings = cfg.eval_settings();
  std::vector<ReportRow> out;
  for (double beta : cfg.proof_betas) {
    for (double delta : cfg.proof_deltas) {
      const double beta_prime = beta + delta;
      const DeltaBoundReport report = delta_bound_check(
          cfg.proof_degree, beta, beta_prime, cfg.model, settings);
      ModelParameters echo = cfg.model.with_coefficient(cfg.proof_degree, beta);
      RowFactory rows{&cfg, echo};
      const std::string sfx = "[beta=" + format_short(beta) +
                              ";beta_prime=" + format_short(beta_prime) + "]";
      out.push_back(rows.make("delta_bound_lhs" + sfx, report.lhs, cfg.proof_degree));
      if (report.lhs_two_replica) {
        out.push_back(rows.make("delta_bound_lhs_two_replica" + sfx,
                                *report.lhs_two_replica, cfg.proof_degree));
      }
      out.push_back(rows.make("delta_bound_quadrature" + sfx,
                              report.delta_quadrature, cfg.proof_degree));
      out.push_back(rows.make("delta_bound_endpoint" + sfx,
                              report.delta_endpoint, cfg.proof_degree));
      out.push_back(rows.make("delta_bound_forms_diff" + sfx,
                              scalar(report.delta_forms_diff, cfg.n_disorder),
                              cfg.proof_degree));
      out.push_back(rows.make(
          "delta_bound_quadrature_doubling_diff" + sfx,
          scalar(report.quadrature_doubling_diff, cfg.n_disorder),
          cfg.proof_degree));
      out.push_back(rows.make("delta_bound_rhs" + sfx, scalar(report.rhs, cfg.n_disorder),
                              cfg.proof_degree));
      out.push_back(rows.make("delta_bound_slack" + sfx,
                              scalar(report.slack, cfg.n_disorder),
                              cfg.proof_degree));
      for (double gamma : cfg.proof_gammas) {
        const SecantBoundReport secant = convexity_secant_bound(
            cfg.proof_degree, beta, beta_prime, gamma, cfg.model, settings);
        const std::string gsfx = "[beta=" + format_short(beta) +
                                 ";beta_prime=" + format_short(beta_prime) +
                                 ";gamma=" + format_short(gamma) + "]";
        out.push_back(rows.make("secant_delta" + gsfx, secant.delta_endpoint,
                                cfg.proof_degree));
        out.push_back(rows.make("secant_bound" + gsfx, secant.secant_bound,
                                cfg.proof_degree));
        out.push_back(rows.make("secant_slack" + gsfx,
                                scalar(secant.slack, cfg.n_disorder),
                                cfg.proof_degree));
      }
    }
  }
  return out;
}

}  // namespace

std::vector<ReportRow> run_experiment(const RunConfig& config) {
  config.validate();
  switch (config.experiment) {
    case ExperimentKind::kExactEval: return run_exact_eval(config);
    case ExperimentKind::kMcRun: return run_mc_run(config);
    case ExperimentKind::kGGScan: return run_gg_scan(config);
    case ExperimentKind::kConcentrationScan: return run_concentration_scan(config);
    case ExperimentKind::kFECurve: return run_fe_curve(config);
    case ExperimentKind::kProofChecks: return run_proof_checks(config);
  }
  throw std::logic_error("unreachable experiment kind");
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

std::string format_g17(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

namespace {

std::vector<int> beta_degrees(std::span<const ReportRow> rows) {
  if (rows.empty()) throw std::runtime_error("report has no rows");
  std::vector<int> degrees;
  for (const auto& [degree, beta] : rows[0].betas) degrees.push_back(degree);
  for (const auto& row : rows) {
    std::vector<int> check;
    for (const auto& [degree, beta] : row.betas) check.push_back(degree);
    if (check != degrees) {
      throw std::runtime_error("report rows disagree on beta columns");
    }
  }
  return degrees;
}

void check_field_text(const std::string& s) {
  if (s.find_first_of(",\n\"") != std::string::npos) {
    throw std::runtime_error("report field contains a CSV delimiter: " + s);
  }
}

std::string render_csv(std::span<const ReportRow> rows) {
  const std::vector<int> degrees = beta_degrees(rows);
  std::string out = "experiment,N,p,n";
  for (int d : degrees) out += ",beta_" + std::to_string(d);
  out += ",h,mode,quantity,mean,std_error,n_samples,seed\n";
  for (const auto& row : rows) {
    check_field_text(row.experiment);
    check_field_text(row.quantity);
    out += row.experiment;
    out += "," + std::to_string(row.n_sites);
    out += ",";
    if (row.p) out += std::to_string(*row.p);
    out += ",";
    if (row.n) out += std::to_string(*row.n);
    for (const auto& [degree, beta] : row.betas) out += "," + format_g17(beta);
    out += "," + format_g17(row.h);
    out += "," + row.mode;
    out += "," + row.quantity;
    out += "," + format_g17(row.estimate.mean);
    out += "," + format_g17(row.estimate.std_error);
    out += "," + std::to_string(row.estimate.n_samples);
    out += "," + std::to_string(row.seed);
    out += "\n";
  }
  return out;
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      default: out += c;
    }
  }
  return out;
}

std::string render_jsonl(std::span<const ReportRow> rows) {
  beta_degrees(rows);  // consistency check
  std::string out;
  for (const auto& row : rows) {
    out += "{\"experiment\":\"" + json_escape(row.experiment) + "\"";
    out += ",\"N\":" + std::to_string(row.n_sites);
    out += ",\"p\":" + (row.p ? std::to_string(*row.p) : "null");
    out += ",\"n\":" + (row.n ? std::to_string(*row.n) : "null");
    for (const auto& [degree, beta] : row.betas) {
      out += ",\"beta_" + std::to_string(degree) + "\":" + format_g17(beta);
    }
    out += ",\"h\":" + format_g17(row.h);
    out += ",\"mode\":\"" + json_escape(row.mode) + "\"";
    out += ",\"quantity\":\"" + json_escape(row.quantity) + "\"";
    out += ",\"mean\":" + format_g17(row.estimate.mean);
    out += ",\"std_error\":" + format_g17(row.estimate.std_error);
    out += ",\"n_samples\":" + std::to_string(row.estimate.n_samples);
    out += ",\"seed\":" + std::to_string(row.seed);
    out += "}\n";
  }
  return out;
}

}  // namespace

std::string render_report(std::span<const ReportRow> rows, OutputFormat format) {
  return format == OutputFormat::kCsv ? render_csv(rows) : render_jsonl(rows);
}

void emit_report(std::span<const ReportRow> rows, OutputFormat format,
                 const std::string& path) {
  const std::string text = render_report(rows, format);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
    out << text;
    if (!out.good()) throw std::runtime_error("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot move report into place: " + path + ": " +
                             ec.message());
  }
}

namespace {

ReportRow row_from_json(const json& j) {
  ReportRow row;
  row.experiment = j.at("experiment").get<std::string>();
  row.n_sites = j.at("N").get<int>();
  if (!j.at("p").is_null()) row.p = j.at("p").get<int>();
  if (!j.at("n").is_null()) row.n = j.at("n").get<int>();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key().rfind("beta_", 0) == 0) {
      row.betas.emplace_back(std::stoi(it.key().substr(5)),
                             it.value().get<double>());
    }
  }
  std::sort(row.betas.begin(), row.betas.end());
  row.h = j.at("h").get<double>();
  row.mode = j.at("mode").get<std::string>();
  row.quantity = j.at("quantity").get<std::string>();
  row.estimate.mean = j.at("mean").get<double>();
  row.estimate.std_error = j.at("std_error").get<double>();
  row.estimate.n_samples = j.at("n_samples").get<std::int64_t>();
  row.seed = j.at("seed").get<std::uint64_t>();
  return row;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::vector<ReportRow> parse_report(const std::string& text, OutputFormat format) {
  std::vector<ReportRow> rows;
  std::istringstream in(text);
  std::string line;
  if (format == OutputFormat::kJsonl) {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      rows.push_back(row_from_json(json::parse(line)));
    }
    return rows;
  }
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV report");
  const std::vector<std::string> header = split(line, ',');
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> fields = split(line, ',');
    if (fields.size() != header.size()) {
      throw std::runtime_error("CSV row width mismatch");
    }
    ReportRow row;
    for (std::size_t c = 0; c < header.size(); ++c) {
      const std::string& key = header[c];
      const std::string& value = fields[c];
      if (key == "experiment") {
        row.experiment = value;
      } else if (key == "N") {
        row.n_sites = std::stoi(value);
      } else if (key == "p") {
        if (!value.empty()) row.p = std::stoi(value);
      } else if (key == "n") {
        if (!value.empty()) row.n = std::stoi(value);
      } else if (key.rfind("beta_", 0) == 0) {
        row.betas.emplace_back(std::stoi(key.substr(5)), std::stod(value));
      } else if (key == "h") {
        row.h = std::stod(value);
      } else if (key == "mode") {
        row.mode = value;
      } else if (key == "quantity") {
        row.quantity = value;
      } else if (key == "mean") {
        row.estimate.mean = std::stod(value);
      } else if (key == "std_error") {
        row.estimate.std_error = std::stod(value);
      } else if (key == "n_samples") {
        row.estimate.n_samples = std::stoll(value);
      } else if (key == "seed") {
        row.seed = std::stoull(value);
      } else {
        throw std::runtime_error("unknown CSV column: " + key);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace pspin
