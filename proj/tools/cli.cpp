#include "cli.hpp"

#include "cellguard/csv.hpp"
#include "cellguard/diagnostics.hpp"
#include "cellguard/errors.hpp"
#include "cellguard/estimators.hpp"
#include "cellguard/filter.hpp"
#include "cellguard/json_io.hpp"
#include "cellguard/parallel.hpp"
#include "cellguard/simulation.hpp"
#include "cellguard/version.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace cellguard::cli {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputOptions {
  std::string input;
  std::string na = "NA";
  std::string header = "auto";
};

void add_input_options(CLI::App& cmd, InputOptions& in) {
  cmd.add_option("--input", in.input, "CSV file with one row per observation")->required();
  cmd.add_option("--na", in.na, "token marking a missing cell")->capture_default_str();
  cmd.add_option("--header", in.header, "auto, yes or no")
      ->check(CLI::IsMember({"auto", "yes", "no"}))
      ->capture_default_str();
}

CsvTable read_input(const InputOptions& in) {
  CsvOptions opts;
  opts.na_token = in.na;
  opts.header = in.header == "yes" ? HeaderMode::kPresent
                : in.header == "no" ? HeaderMode::kAbsent
                                    : HeaderMode::kAuto;
  return load_csv(in.input, opts);
}

Json input_json(const InputOptions& in) {
  return Json{{"input", in.input}, {"na", in.na}, {"header", in.header}};
}

void emit(const Json& doc, const std::string& path, std::ostream& out) {
  const std::string text = doc.dump(2) + "\n";
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw Error("failed writing '" + path + "'");
}

Json header_json(std::uint64_t seed) {
  Json j;
  j["version"] = kVersion;
  j["seed"] = seed;
  return j;
}

double parse_double(std::string_view s, const char* what) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw UsageError(std::string("invalid number '") + std::string(s) + "' in " + what);
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

// LO:HI:STEP (inclusive arithmetic grid) or a comma-separated list.
std::vector<double> parse_k_grid(const std::string& spec) {
  std::vector<double> k;
  if (spec.find(':') != std::string::npos) {
    const auto parts = split(spec, ':');
    if (parts.size() != 3) throw UsageError("--k-grid expects LO:HI:STEP");
    const double lo = parse_double(parts[0], "--k-grid");
    const double hi = parse_double(parts[1], "--k-grid");
    const double step = parse_double(parts[2], "--k-grid");
    if (!(step > 0.0) || hi < lo) throw UsageError("--k-grid needs STEP > 0 and HI >= LO");
    const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9)) + 1;
    if (count > 100000) throw UsageError("--k-grid has too many points");
    for (long i = 0; i < count; ++i) k.push_back(lo + static_cast<double>(i) * step);
  } else {
    for (const auto& part : split(spec, ',')) k.push_back(parse_double(part, "--k-grid"));
  }
  if (k.empty()) throw UsageError("--k-grid is empty");
  return k;
}

void add_gse_options(CLI::App& cmd, GseConfig& gse) {
  cmd.add_option("--max-iter", gse.max_iter, "GSE iteration limit")->check(CLI::PositiveNumber)->capture_default_str();
  cmd.add_option("--tol", gse.tol, "relative scale change that ends GSE")->check(CLI::PositiveNumber)->capture_default_str();
  cmd.add_option("--subsamples", gse.emve_subsamples, "EMVE subsamples")->check(CLI::PositiveNumber)->capture_default_str();
  cmd.add_option("--subsample-size", gse.emve_subsample_size, "EMVE subsample size, 0 for 2(p+1)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd.add_option("--concentration-steps", gse.concentration_steps, "EMVE concentration steps")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd.add_option("--refined", gse.emve_refined, "EMVE candidates that receive concentration steps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

Json gse_json(const GseConfig& gse) {
  return Json{{"max_iter", gse.max_iter},
              {"tol", gse.tol},
              {"emve_subsamples", gse.emve_subsamples},
              {"emve_subsample_size", gse.emve_subsample_size},
              {"concentration_steps", gse.concentration_steps},
              {"emve_refined", gse.emve_refined}};
}

double complete_fraction(const DataMatrix& x) {
  Index complete = 0;
  for (Index i = 0; i < x.rows(); ++i) complete += x.observed_in_row(i) == x.cols() ? 1 : 0;
  return static_cast<double>(complete) / static_cast<double>(x.rows());
}

struct FitRequest {
  std::string method = "tsgs";
  bool no_filter = false;
  double alpha = 0.95;
  std::uint64_t seed = 0;
  int threads = 0;
  GseConfig gse;
};

struct FitOutcome {
  Estimate estimate;
  std::optional<FilterResult> filter;
  double q_n = 1.0;
  std::optional<double> residual;
};

FitOutcome fit(const DataMatrix& x, const FitRequest& req) {
  GseConfig gse = req.gse;
  gse.seed = req.seed;
  gse.threads = resolve_threads(req.threads);
  FilterConfig fcfg{req.alpha};
  const Method method = parse_method(req.method);
  FitOutcome out;
  if (method == Method::kTsgs && !req.no_filter) {
    TsgsResult res = tsgs(x, fcfg, gse);
    out.residual = constraint_residual(res.filtered, res.estimate);
    out.q_n = res.filter.q_n;
    out.estimate = std::move(res.estimate);
    out.filter = std::move(res.filter);
    return out;
  }
  // emve and gse are the raw-data estimators; the filter only precedes mle.
  std::optional<DataMatrix> filtered;
  if (!req.no_filter && method == Method::kMle) {
    auto [data, fr] = apply_filter(x, fcfg);
    filtered.emplace(std::move(data));
    out.q_n = fr.q_n;
    out.filter = std::move(fr);
  } else {
    out.q_n = complete_fraction(x);
  }
  const DataMatrix& data = filtered ? *filtered : x;
  switch (method) {
    case Method::kMle:
      out.estimate = em_mle(data);
      break;
    case Method::kEmve:
      out.estimate = emve_init(data, gse);
      break;
    case Method::kGse:
    case Method::kTsgs:
      out.estimate = gse_fit(data, emve_init(data, gse), gse);
      out.estimate.method = Method::kGse;
      out.residual = constraint_residual(data, out.estimate);
      break;
  }
  return out;
}

void add_fit_options(CLI::App& cmd, FitRequest& req, const char* method_flag) {
  cmd.add_option(method_flag, req.method, "tsgs, gse, emve or mle")
      ->check(CLI::IsMember({"tsgs", "gse", "emve", "mle"}))
      ->capture_default_str();
  cmd.add_flag("--no-filter", req.no_filter, "skip the cellwise filter");
  cmd.add_option("--alpha", req.alpha, "filter quantile level")->check(CLI::Range(0.5, 1.0))->capture_default_str();
  cmd.add_option("--seed", req.seed, "random seed")->capture_default_str();
  cmd.add_option("--threads", req.threads, "worker threads (default: CELLGUARD_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);
  add_gse_options(cmd, req.gse);
}

Json fit_config_json(const FitRequest& req) {
  return Json{{"method", req.method},
              {"filter", !req.no_filter},
              {"alpha", req.alpha},
              {"seed", req.seed},
              {"gse", gse_json(req.gse)}};
}

int estimate_command(const InputOptions& in, const FitRequest& req, const std::string& output,
                     std::ostream& out, std::ostream& err) {
  const CsvTable table = read_input(in);
  const FitOutcome res = fit(table.data, req);

  Json doc = header_json(req.seed);
  Json cfg = input_json(in);
  cfg.update(fit_config_json(req));
  doc["config"] = std::move(cfg);
  const Json est_json = to_json(res.estimate);
  for (const auto& [key, value] : est_json.items()) doc[key] = value;
  doc["q_n"] = res.q_n;
  doc["constraint_residual"] = res.residual ? Json(*res.residual) : Json(nullptr);
  doc["columns"] = table.column_names;
  doc["filter"] = res.filter ? to_json(*res.filter) : Json(nullptr);
  emit(doc, output, out);
  if (!res.estimate.converged) {
    err << "warning: estimator did not converge within the iteration limit\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

struct SimulateOptions {
  int p = 10;
  int n = 100;
  std::string model = "icm";
  std::string eps = "0.1";
  std::string k_grid;
  int replicates = 100;
  double cn = 100.0;
  std::string estimators = "tsgs,mle";
  std::uint64_t seed = 1;
  int threads = 0;
  std::string output;
  std::string csv;
  bool time = false;
  double alpha = 0.95;
  GseConfig gse;
};

std::string csv_path_for(const std::string& json_path) {
  std::filesystem::path p(json_path);
  if (p.extension() == ".json") return p.replace_extension(".csv").string();
  return json_path + ".csv";
}

int simulate_command(const SimulateOptions& o, std::ostream& out, std::ostream& err) {
  SimConfig cfg;
  cfg.p = o.p;
  cfg.n = o.n;
  cfg.replicates = o.replicates;
  cfg.cn = o.cn;
  cfg.seed = o.seed;
  cfg.threads = resolve_threads(o.threads);
  cfg.time = o.time;
  cfg.filter.alpha = o.alpha;
  cfg.gse = o.gse;
  cfg.models.clear();
  try {
    for (const auto& m : split(o.model, ',')) {
      const Contamination c = parse_contamination(m);
      if (c != Contamination::kNone) cfg.models.push_back(c);
    }
    cfg.estimators.clear();
    for (const auto& e : split(o.estimators, ',')) cfg.estimators.push_back(parse_method(e));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  cfg.eps.clear();
  for (const auto& e : split(o.eps, ',')) {
    const double v = parse_double(e, "--eps");
    if (!(v >= 0.0 && v < 0.5)) throw UsageError("--eps values must lie in [0, 0.5)");
    cfg.eps.push_back(v);
  }
  cfg.k_grid = o.k_grid.empty() ? default_k_grid() : parse_k_grid(o.k_grid);
  if (cfg.p < 2 || cfg.n <= cfg.p) throw UsageError("need p >= 2 and n > p");
  if (cfg.cn < 1.0) throw UsageError("--cn must be at least 1");

  const SimReport report = run_simulation(cfg);
  Json doc = header_json(cfg.seed);
  doc["config"] = to_json(cfg);
  const Json body = to_json(report);
  for (const auto& [key, value] : body.items()) doc[key] = value;
  emit(doc, o.output, out);
  const std::string csv = !o.csv.empty() ? o.csv : o.output.empty() ? std::string() : csv_path_for(o.output);
  if (!csv.empty()) {
    std::ofstream f(csv, std::ios::binary);
    if (!f) throw Error("cannot open '" + csv + "' for writing");
    write_sim_csv(f, report);
  }
  for (const auto& w : report.warnings) err << "warning: " << w << "\n";
  return kExitOk;
}

int diagnose_command(const InputOptions& in, const std::string& estimate_path, const FitRequest& req,
                     bool fit_given, double conf, const std::string& output, const std::string& cells_csv,
                     std::ostream& out, std::ostream& err) {
  if (estimate_path.empty() == !fit_given) throw UsageError("give exactly one of --estimate and --fit");
  const CsvTable table = read_input(in);
  Estimate est;
  bool converged = true;
  if (!estimate_path.empty()) {
    std::ifstream f(estimate_path);
    if (!f) throw Error("cannot open '" + estimate_path + "'");
    Json j;
    try {
      j = Json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("estimate file: ") + e.what());
    }
    est = estimate_from_json(j);
  } else {
    est = fit(table.data, req).estimate;
    converged = est.converged;
  }
  if (est.mu.size() != table.data.cols()) {
    throw Error("estimate has dimension " + std::to_string(est.mu.size()) + " but the data have " +
                std::to_string(table.data.cols()) + " columns");
  }
  const DiagReport rep = diagnose(table.data, est, conf, resolve_threads(req.threads));

  Json doc = header_json(req.seed);
  Json cfg = input_json(in);
  cfg["conf"] = conf;
  if (!estimate_path.empty()) {
    cfg["estimate"] = estimate_path;
  } else {
    cfg["fit"] = fit_config_json(req);
  }
  doc["config"] = std::move(cfg);
  doc["estimate"] = to_json(est);
  const Json body = to_json(rep);
  for (const auto& [key, value] : body.items()) doc[key] = value;
  emit(doc, output, out);
  if (!cells_csv.empty()) {
    std::ofstream f(cells_csv, std::ios::binary);
    if (!f) throw Error("cannot open '" + cells_csv + "' for writing");
    write_diag_cells_csv(f, rep, table.data, est);
  }
  if (!converged) {
    err << "warning: estimator did not converge within the iteration limit\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cellwise and casewise robust location/scatter estimation"};
  app.name("cellguard");
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  InputOptions est_in;
  FitRequest est_req;
  std::string est_output;
  CLI::App* est_cmd = app.add_subcommand("estimate", "filter a CSV and fit location and scatter");
  add_input_options(*est_cmd, est_in);
  add_fit_options(*est_cmd, est_req, "--method");
  est_cmd->add_option("--output", est_output, "JSON output file (default: standard output)");

  SimulateOptions sim;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Monte Carlo study of the estimators");
  sim_cmd->add_option("--p", sim.p, "dimension")->capture_default_str();
  sim_cmd->add_option("--n", sim.n, "sample size")->capture_default_str();
  sim_cmd->add_option("--model", sim.model, "comma list of clean, icm, thcm")->capture_default_str();
  sim_cmd->add_option("--eps", sim.eps, "comma list of contamination fractions")->capture_default_str();
  sim_cmd->add_option("--k-grid", sim.k_grid, "LO:HI:STEP or comma list (default 1,5,10,...,100)");
  sim_cmd->add_option("--replicates", sim.replicates, "Monte Carlo replicates")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sim_cmd->add_option("--cn", sim.cn, "condition number of the true correlation")->capture_default_str();
  sim_cmd->add_option("--estimators", sim.estimators, "comma list of tsgs, gse, emve, mle")->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed, "random seed")->capture_default_str();
  sim_cmd->add_option("--threads", sim.threads, "worker threads (default: CELLGUARD_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);
  sim_cmd->add_option("--output", sim.output, "JSON output file; the CSV goes next to it");
  sim_cmd->add_option("--csv", sim.csv, "CSV output file");
  sim_cmd->add_flag("--time", sim.time, "report mean wall-clock seconds per fit");
  sim_cmd->add_option("--alpha", sim.alpha, "filter quantile level")->check(CLI::Range(0.5, 1.0))->capture_default_str();
  add_gse_options(*sim_cmd, sim.gse);

  InputOptions diag_in;
  FitRequest diag_req;
  std::string diag_estimate;
  std::string diag_output;
  std::string diag_cells;
  double conf = 0.99;
  CLI::App* diag_cmd = app.add_subcommand("diagnose", "flag outlying cells, pairs and cases");
  add_input_options(*diag_cmd, diag_in);
  diag_cmd->add_option("--estimate", diag_estimate, "estimate JSON from `cellguard estimate`");
  add_fit_options(*diag_cmd, diag_req, "--fit");
  diag_cmd->add_option("--conf", conf, "family-wise confidence level")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  diag_cmd->add_option("--output", diag_output, "JSON output file (default: standard output)");
  diag_cmd->add_option("--cells-csv", diag_cells, "CSV of flagged cells");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\nrun with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (*est_cmd) return estimate_command(est_in, est_req, est_output, out, err);
    if (*sim_cmd) return simulate_command(sim, out, err);
    const bool fit_given = diag_cmd->count("--fit") > 0;
    return diagnose_command(diag_in, diag_estimate, diag_req, fit_given, conf, diag_output, diag_cells, out,
                            err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace cellguard::cli
