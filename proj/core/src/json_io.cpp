#include "cellguard/json_io.hpp"
#include "cellguard/errors.hpp"

#include <charconv>
#include <cmath>
#include <string>

namespace cellguard {

namespace {

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json a = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(number(m(i, j)));
    a.push_back(std::move(row));
  }
  return a;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double read_number(const Json& j, const char* what) {
  if (!j.is_number()) throw ParseError(std::string("estimate JSON: '") + what + "' must hold numbers");
  return j.get<double>();
}

}  // namespace

Json to_json(const Estimate& est) {
  Json j;
  j["method"] = std::string(method_name(est.method));
  j["mu"] = vector_json(est.mu);
  j["sigma"] = matrix_json(est.sigma);
  j["scale"] = number(est.scale);
  j["iterations"] = est.iterations;
  j["converged"] = est.converged;
  return j;
}

Estimate estimate_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("estimate JSON: expected an object");
  const Json& src = j.contains("estimate") ? j.at("estimate") : j;
  if (!src.contains("mu") || !src.contains("sigma")) throw ParseError("estimate JSON: needs 'mu' and 'sigma'");
  const Json& mu = src.at("mu");
  const Json& sigma = src.at("sigma");
  if (!mu.is_array() || !sigma.is_array()) throw ParseError("estimate JSON: 'mu' and 'sigma' must be arrays");
  const auto p = static_cast<Index>(mu.size());
  if (p == 0 || static_cast<Index>(sigma.size()) != p) throw ParseError("estimate JSON: sigma must be p x p");
  Estimate est;
  est.mu.resize(p);
  est.sigma.resize(p, p);
  for (Index i = 0; i < p; ++i) {
    est.mu(i) = read_number(mu[static_cast<std::size_t>(i)], "mu");
    const Json& row = sigma[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != p) throw ParseError("estimate JSON: sigma must be p x p");
    for (Index k = 0; k < p; ++k) est.sigma(i, k) = read_number(row[static_cast<std::size_t>(k)], "sigma");
  }
  if (src.contains("method") && src.at("method").is_string()) {
    try {
      est.method = parse_method(src.at("method").get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what());
    }
  }
  if (src.contains("scale") && src.at("scale").is_number()) est.scale = src.at("scale").get<double>();
  if (src.contains("iterations") && src.at("iterations").is_number_integer()) {
    est.iterations = src.at("iterations").get<int>();
  }
  est.converged = src.value("converged", true);
  return est;
}

Json to_json(const FilterResult& fr) {
  Json j;
  j["d"] = fr.d;
  Json cut = Json::array();
  for (const double c : fr.cutoff) cut.push_back(number(c));
  j["cutoff"] = std::move(cut);
  Json flagged = Json::array();
  for (const auto& [r, c] : fr.flagged) flagged.push_back(Json::array({r, c}));
  j["flagged"] = std::move(flagged);
  j["flag_counts"] = fr.flag_counts;
  j["dropped_rows"] = fr.dropped_rows;
  j["q_n"] = fr.q_n;
  return j;
}

Json to_json(const TuningTable& table) {
  Json j;
  j["family"] = table.config().family == RhoFamily::kBisquare ? "bisquare" : "hard";
  j["b"] = table.b();
  Json c = Json::object();
  for (int k = 1; k <= table.max_dim(); ++k) c[std::to_string(k)] = table[k];
  j["c"] = std::move(c);
  return j;
}

TuningTable tuning_table_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("b") || !j.contains("c") || !j.at("c").is_object()) {
    throw ParseError("tuning JSON: expected {\"b\": ..., \"c\": {\"1\": ...}}");
  }
  RhoConfig cfg;
  cfg.b = j.at("b").get<double>();
  if (j.value("family", std::string("bisquare")) == "hard") cfg.family = RhoFamily::kHardRejection;
  const Json& c = j.at("c");
  std::vector<double> values(c.size());
  for (std::size_t k = 1; k <= values.size(); ++k) {
    const std::string key = std::to_string(k);
    if (!c.contains(key)) throw ParseError("tuning JSON: missing entry " + key);
    values[k - 1] = c.at(key).get<double>();
  }
  return TuningTable(cfg, std::move(values));
}

Json to_json(const SimConfig& cfg) {
  Json j;
  j["p"] = cfg.p;
  j["n"] = cfg.n;
  j["replicates"] = cfg.replicates;
  j["cn"] = cfg.cn;
  Json models = Json::array();
  for (const auto m : cfg.models) models.push_back(std::string(contamination_name(m)));
  j["models"] = std::move(models);
  j["eps"] = cfg.eps;
  j["k_grid"] = cfg.k_grid;
  Json ests = Json::array();
  for (const auto m : cfg.estimators) ests.push_back(std::string(method_name(m)));
  j["estimators"] = std::move(ests);
  j["seed"] = cfg.seed;
  j["alpha"] = cfg.filter.alpha;
  j["gse"] = {{"max_iter", cfg.gse.max_iter},
              {"tol", cfg.gse.tol},
              {"emve_subsamples", cfg.gse.emve_subsamples},
              {"emve_subsample_size", cfg.gse.emve_subsample_size},
              {"concentration_steps", cfg.gse.concentration_steps},
              {"emve_refined", cfg.gse.emve_refined}};
  j["time"] = cfg.time;
  return j;
}

Json to_json(const SimReport& report) {
  Json j;
  Json cells = Json::array();
  for (const auto& c : report.cells) {
    Json cj;
    cj["estimator"] = std::string(method_name(c.estimator));
    cj["model"] = std::string(contamination_name(c.model));
    cj["eps"] = c.eps;
    cj["k"] = c.k;
    cj["mean_lrt"] = number(c.mean_lrt);
    cj["replicates"] = c.successes;
    cj["failures"] = c.failures;
    cells.push_back(std::move(cj));
  }
  Json sums = Json::array();
  for (const auto& s : report.summaries) {
    Json sj;
    sj["estimator"] = std::string(method_name(s.estimator));
    sj["clean_mean_lrt"] = number(s.clean_mean_lrt);
    sj["efficiency"] = s.efficiency ? number(*s.efficiency) : Json(nullptr);
    sj["fits"] = s.fits;
    sj["failures"] = s.failures;
    sj["converged"] = s.converged;
    sj["max_constraint_residual"] = s.max_constraint_residual;
    if (s.seconds_per_fit) sj["seconds_per_fit"] = *s.seconds_per_fit;
    sums.push_back(std::move(sj));
  }
  j["summaries"] = std::move(sums);
  j["cells"] = std::move(cells);
  j["warnings"] = report.warnings;
  return j;
}

void write_sim_csv(std::ostream& out, const SimReport& report) {
  out << "estimator,model,eps,k,mean_lrt,replicates,failures\n";
  for (const auto& c : report.cells) {
    out << method_name(c.estimator) << ',' << contamination_name(c.model) << ',' << fmt(c.eps) << ','
        << fmt(c.k) << ',' << fmt(c.mean_lrt) << ',' << c.successes << ',' << c.failures << '\n';
  }
}

Json to_json(const DiagReport& report) {
  Json j;
  j["conf"] = report.conf;
  j["thresholds"] = {{"cell", report.thresholds.cell},
                     {"pair", report.thresholds.pair},
                     {"case", report.thresholds.case_}};
  j["cell_prop"] = report.cell_prop;
  j["pair_prop"] = report.pair_prop;
  j["case_prop"] = report.case_prop;
  Json cells = Json::array();
  for (const auto& [r, c] : report.cells) cells.push_back(Json::array({r, c}));
  j["cells"] = std::move(cells);
  Json pairs = Json::array();
  for (const auto& t : report.pairs) pairs.push_back(Json::array({t[0], t[1], t[2]}));
  j["pairs"] = std::move(pairs);
  j["cases"] = report.cases;
  return j;
}

void write_diag_cells_csv(std::ostream& out, const DiagReport& report, const DataMatrix& x,
                          const Estimate& est) {
  out << "row,col,value,distance\n";
  for (const auto& [r, c] : report.cells) {
    const double z = x(r, c) - est.mu(c);
    out << r << ',' << c << ',' << fmt(x(r, c)) << ',' << fmt(z * z / est.sigma(c, c)) << '\n';
  }
}

}  // namespace cellguard
