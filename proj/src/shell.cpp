#include "selqr/shell.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "selqr/errors.hpp"

namespace selqr {

using nlohmann::ordered_json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& value) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

ordered_json to_json(const Vector& v) {
  ordered_json a = ordered_json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

ordered_json to_json(const Matrix& m) {
  ordered_json a = ordered_json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(to_json(Vector(m.row(i).transpose())));
  return a;
}

double min_positive(const Vector& v) {
  double m = 0.0;
  for (Index i = 0; i < v.size(); ++i) {
    if (v(i) > 0.0 && (m == 0.0 || v(i) < m)) m = v(i);
  }
  return m;
}

std::string_view bandwidth_name(BandwidthMode m) { return m == BandwidthMode::CrossValidated ? "cv" : "rot"; }

ordered_json estimate_json(const EstimateResult& est, const ObservationSet& data, const ColumnMap& map) {
  ordered_json e;
  e["tau"] = est.tau;
  e["estimator"] = std::string(to_string(est.estimator));
  ordered_json names = ordered_json::array({"intercept"});
  for (const auto& x : map.x) names.push_back(x);
  for (const auto& w : map.w) names.push_back(w);
  e["coefficients"] = names;
  e["theta"] = to_json(est.solution.theta);
  e["se"] = to_json(est.covariance.se);
  e["ci"] = to_json(est.covariance.ci);
  e["sigma"] = to_json(est.covariance.sigma);

  ordered_json diag;
  diag["objective"] = est.solution.objective;
  diag["solver_iterations"] = est.solution.iterations;
  diag["weighted_rows"] = static_cast<std::int64_t>((est.omega.array() > 0.0).count());
  diag["sigma_min_eigenvalue"] = est.covariance.min_eigenvalue;
  ordered_json dens;
  dens["bandwidths"] = to_json(est.covariance.density.bandwidths);
  dens["dropped"] = est.covariance.density.dropped;
  dens["floored"] = static_cast<std::int64_t>(est.covariance.density.floored);
  diag["density"] = dens;
  if (est.first_stage) {
    const FirstStageFit& fs = *est.first_stage;
    ordered_json f;
    f["J"] = static_cast<std::int64_t>(fs.plan.J());
    f["K"] = static_cast<std::int64_t>(fs.plan.K());
    f["beta_u"] = to_json(fs.beta_u);
    f["beta_c"] = to_json(fs.beta_c);
    f["ridge"] = fs.ridge;
    f["moment_residual_norm"] = moment_residual(fs, data).lpNorm<Eigen::Infinity>();
    f["already_feasible"] = fs.projection.already_feasible;
    f["constraint_count"] = static_cast<std::int64_t>(fs.projection.constraint_count);
    f["active_constraints"] = static_cast<std::int64_t>(fs.projection.active_constraints);
    f["projection_iterations"] = fs.projection.iterations;
    f["kkt_ok"] = fs.projection.kkt.ok;
    f["kkt_stationarity"] = fs.projection.kkt.stationarity;
    f["min_weight_selected"] = min_positive(est.omega);
    diag["first_stage"] = f;
  }
  if (est.probit) {
    ordered_json p;
    p["gamma"] = to_json(est.probit->gamma);
    p["iterations"] = est.probit->iterations;
    p["gradient_norm"] = est.probit->gradient_norm;
    p["log_likelihood"] = est.probit->log_likelihood;
    diag["probit"] = p;
  }
  e["diagnostics"] = diag;
  return e;
}

}  // namespace

std::string_view version() { return SELQR_VERSION; }

ColumnMap ColumnMap::parse(std::string_view text) {
  ColumnMap map;
  std::set<std::string> seen;
  for (const std::string& part : split(text, ',')) {
    if (part.empty()) continue;
    const std::size_t eq = part.find('=');
    if (eq == std::string::npos) throw InputError("column map: expected key=value, got '" + part + "'");
    const std::string key(trim(std::string_view(part).substr(0, eq)));
    const std::string value(trim(std::string_view(part).substr(eq + 1)));
    if (!seen.insert(key).second) throw InputError("column map: duplicate key '" + key + "'");
    std::vector<std::string> names;
    if (!value.empty()) names = split(value, '+');
    if (key == "d") {
      map.d = value;
    } else if (key == "y") {
      map.y = value;
    } else if (key == "w") {
      map.w = names;
    } else if (key == "x") {
      map.x = names;
    } else {
      throw InputError("column map: unknown key '" + key + "' (expected d, y, w, x)");
    }
  }
  map.validate();
  return map;
}

std::string ColumnMap::str() const {
  const auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "+" : "") + v[k];
    return s;
  };
  return "d=" + d + ",y=" + y + ",w=" + join(w) + ",x=" + join(x);
}

void ColumnMap::validate() const {
  if (d.empty() || y.empty()) throw InputError("column map: d and y columns must be named");
  if (w.empty()) throw InputError("column map: at least one w column required");
  std::set<std::string> all{d};
  for (const auto* group : {&w, &x}) {
    for (const auto& name : *group) {
      if (name.empty()) throw InputError("column map: empty column name");
    }
  }
  std::vector<std::string> names{y};
  names.insert(names.end(), w.begin(), w.end());
  names.insert(names.end(), x.begin(), x.end());
  for (const auto& name : names) {
    if (!all.insert(name).second) throw InputError("column map: column '" + name + "' used twice");
  }
}

ObservationSet read_csv(std::istream& in, const ColumnMap& map) {
  map.validate();
  std::string line;
  if (!std::getline(in, line)) throw InputError("csv: missing header");
  const std::vector<std::string> header = split(line, ',');
  std::map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < header.size(); ++k) index.emplace(header[k], k);
  const auto locate = [&](const std::string& name) {
    const auto it = index.find(name);
    if (it == index.end()) throw InputError("csv: missing column '" + name + "'");
    return it->second;
  };
  const std::size_t d_col = locate(map.d);
  const std::size_t y_col = locate(map.y);
  std::vector<std::size_t> w_cols, x_cols;
  for (const auto& n : map.w) w_cols.push_back(locate(n));
  for (const auto& n : map.x) x_cols.push_back(locate(n));

  std::vector<double> d, y, w, x;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split(line, ',');
    if (fields.size() != header.size()) {
      throw InputError("csv: expected " + std::to_string(header.size()) + " fields at line " + std::to_string(line_no));
    }
    double dv = 0.0;
    if (!parse_double(fields[d_col], dv) || (dv != 0.0 && dv != 1.0)) {
      throw InputError("csv: non-binary selection indicator at line " + std::to_string(line_no));
    }
    double yv = kAbsent;
    if (fields[y_col].empty()) {
      if (dv == 1.0) throw InputError("observed row missing outcome at line " + std::to_string(line_no));
    } else if (!parse_double(fields[y_col], yv)) {
      throw InputError("csv: unparseable outcome at line " + std::to_string(line_no));
    }
    if (dv == 0.0) yv = kAbsent;
    const auto numeric = [&](std::size_t col, const std::string& name, std::vector<double>& sink) {
      double v = 0.0;
      if (!parse_double(fields[col], v)) {
        throw InputError("csv: missing or unparseable '" + name + "' at line " + std::to_string(line_no));
      }
      sink.push_back(v);
    };
    for (std::size_t k = 0; k < w_cols.size(); ++k) numeric(w_cols[k], map.w[k], w);
    for (std::size_t k = 0; k < x_cols.size(); ++k) numeric(x_cols[k], map.x[k], x);
    d.push_back(dv);
    y.push_back(yv);
  }

  const auto n = static_cast<Index>(d.size());
  if (n == 0) throw InputError("csv: no data rows");
  ObservationSet data;
  data.d = Eigen::Map<const Vector>(d.data(), n);
  data.y = Eigen::Map<const Vector>(y.data(), n);
  data.w = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      w.data(), n, static_cast<Index>(w_cols.size()));
  data.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      x.data(), n, static_cast<Index>(x_cols.size()));
  data.validate();
  return data;
}

ObservationSet ingest_csv(const std::filesystem::path& path, const ColumnMap& map) {
  std::ifstream in(path);
  if (!in) throw InputError("csv: cannot open '" + path.string() + "'");
  return read_csv(in, map);
}

void write_csv(std::ostream& out, const ObservationSet& data, const ColumnMap& map) {
  if (static_cast<Index>(map.w.size()) != data.w.cols() || static_cast<Index>(map.x.size()) != data.x.cols()) {
    throw InputError("csv: column map does not match the data");
  }
  out << map.d << ',' << map.y;
  for (const auto& n : map.w) out << ',' << n;
  for (const auto& n : map.x) out << ',' << n;
  out << '\n';
  for (Index i = 0; i < data.size(); ++i) {
    out << (data.selected(i) ? "1" : "0") << ',';
    if (data.selected(i)) out << format_double(data.y(i));
    for (Index k = 0; k < data.w.cols(); ++k) out << ',' << format_double(data.w(i, k));
    for (Index k = 0; k < data.x.cols(); ++k) out << ',' << format_double(data.x(i, k));
    out << '\n';
  }
}

void RunConfig::validate() const {
  if (taus.empty()) throw InputError("config: at least one tau required");
  for (double t : taus) {
    if (!(t > 0.0 && t < 1.0)) throw InputError("config: tau must lie in (0, 1)");
  }
  if (basis.y_interior_knots < 0 || basis.w_interior_knots < 0) throw InputError("config: knot counts must be >= 0");
  if (basis.y_degree < 1 || basis.w_degree < 1) throw InputError("config: spline degrees must be >= 1");
  if (!(trim_floor > 0.0 && trim_floor <= 1.0)) throw InputError("config: trim floor must lie in (0, 1]");
  if (!(level > 0.0 && level < 1.0)) throw InputError("config: level must lie in (0, 1)");
  if (estimators.empty()) throw InputError("config: no estimators requested");
  map.validate();
}

EstimationOptions RunConfig::estimation_options() const {
  EstimationOptions o;
  o.basis = basis;
  o.trim_floor = trim_floor;
  o.inference.level = level;
  o.inference.bandwidth = bandwidth;
  o.inference.threads = std::max(1u, std::thread::hardware_concurrency());
  return o;
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["tau"] = taus;
  j["y_degree"] = basis.y_degree;
  j["y_interior_knots"] = basis.y_interior_knots;
  j["w_degree"] = basis.w_degree;
  j["w_interior_knots"] = basis.w_interior_knots;
  j["bandwidth_mode"] = std::string(bandwidth_name(bandwidth));
  j["trim_floor"] = trim_floor;
  j["seed"] = seed;
  ordered_json est = ordered_json::array();
  for (Estimator e : estimators) est.push_back(std::string(to_string(e)));
  j["estimators"] = est;
  j["level"] = level;
  j["data"] = data_path;
  j["map"] = map.str();
  return j;
}

std::string config_hash(const ordered_json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ordered_json cmd_fit(const RunConfig& config, const ObservationSet& data) {
  config.validate();
  data.validate();
  ordered_json report;
  const ordered_json cfg = config.to_json();
  report["config_hash"] = config_hash(cfg);
  report["version"] = std::string(version());
  report["config"] = cfg;
  report["data"] = {{"n", static_cast<std::int64_t>(data.size())},
                    {"selected", static_cast<std::int64_t>(data.selected_count())}};
  ordered_json estimates = ordered_json::array();
  const EstimationOptions options = config.estimation_options();
  for (double tau : config.taus) {
    for (Estimator e : config.estimators) {
      estimates.push_back(estimate_json(estimate(e, data, tau, options), data, config.map));
    }
  }
  report["estimates"] = estimates;
  return report;
}

CdfTable cmd_cdf(const RunConfig& config, const ObservationSet& data) {
  config.validate();
  data.validate();
  const FirstStageFit fit = fit_first_stage(data, make_plan(data, config.basis));
  const CorrectedCDF corrected = corrected_cdf(fit, data);
  const CorrectedCDF empirical = empirical_cdf(data);

  std::vector<double> grid(corrected.support().data(), corrected.support().data() + corrected.support().size());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  CdfTable t{Vector(static_cast<Index>(grid.size())), Vector(static_cast<Index>(grid.size())),
             Vector(static_cast<Index>(grid.size()))};
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto row = static_cast<Index>(k);
    t.y(row) = grid[k];
    t.corrected(row) = corrected(grid[k]);
    t.empirical(row) = empirical(grid[k]);
  }
  return t;
}

void write_cdf_csv(std::ostream& out, const CdfTable& table) {
  out << "y,corrected,empirical\n";
  for (Index k = 0; k < table.y.size(); ++k) {
    out << format_double(table.y(k)) << ',' << format_double(table.corrected(k)) << ','
        << format_double(table.empirical(k)) << '\n';
  }
}

ordered_json metrics_to_json(const MetricsTable& table) {
  const SimulationSpec& s = table.spec;
  ordered_json spec;
  spec["setting"] = std::string(to_string(s.setting));
  spec["mechanism"] = std::string(to_string(s.mechanism));
  spec["n"] = static_cast<std::int64_t>(s.n);
  spec["reps"] = s.reps;
  spec["tau"] = s.tau;
  spec["seed"] = s.seed;
  ordered_json names = ordered_json::array();
  for (Estimator e : s.estimators) names.push_back(std::string(to_string(e)));
  spec["estimators"] = names;
  spec["y_degree"] = s.options.basis.y_degree;
  spec["y_interior_knots"] = s.options.basis.y_interior_knots;
  spec["w_degree"] = s.options.basis.w_degree;
  spec["w_interior_knots"] = s.options.basis.w_interior_knots;
  spec["bandwidth_mode"] = std::string(bandwidth_name(s.options.inference.bandwidth));
  spec["trim_floor"] = s.options.trim_floor;

  ordered_json j;
  j["config_hash"] = config_hash(spec);
  j["version"] = std::string(version());
  j["spec"] = spec;
  j["mean_missing_rate"] = table.mean_missing_rate;
  j["ok"] = table.ok();
  ordered_json ests = ordered_json::array();
  for (const auto& e : table.estimators) {
    ordered_json ej;
    ej["estimator"] = e.estimator;
    ej["used"] = e.used;
    ej["excluded"] = e.excluded;
    ej["kkt_failures"] = e.kkt_failures;
    ej["failed"] = e.failed;
    ordered_json coefs = ordered_json::array();
    for (const auto& c : e.coefficients) {
      coefs.push_back({{"coefficient", c.coefficient},
                       {"truth", c.truth},
                       {"mean_bias", c.mean_bias},
                       {"rmse", c.rmse},
                       {"ci_length", c.ci_length},
                       {"coverage", c.coverage}});
    }
    ej["coefficients"] = coefs;
    ests.push_back(ej);
  }
  j["estimators"] = ests;
  return j;
}

void write_metrics_csv(std::ostream& out, const MetricsTable& table) {
  out << "estimator,coefficient,metric,value\n";
  for (const auto& e : table.estimators) {
    for (const auto& c : e.coefficients) {
      const std::pair<const char*, double> rows[] = {
          {"mean_bias", c.mean_bias}, {"rmse", c.rmse}, {"ci_length", c.ci_length}, {"coverage", c.coverage}};
      for (const auto& [metric, value] : rows) {
        out << e.estimator << ',' << c.coefficient << ',' << metric << ',' << format_double(value) << '\n';
      }
    }
  }
}

std::string metrics_summary(const MetricsTable& table) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "Setting %s / %s, tau = %.2f, n = %lld, reps = %d, missing rate = %.3f\n",
                std::string(to_string(table.spec.setting)).c_str(), std::string(to_string(table.spec.mechanism)).c_str(),
                table.spec.tau, static_cast<long long>(table.spec.n), table.spec.reps, table.mean_missing_rate);
  os << buf;
  const std::pair<const char*, double CoefficientMetrics::*> panels[] = {{"Mean biases", &CoefficientMetrics::mean_bias},
                                                                         {"RMSE", &CoefficientMetrics::rmse},
                                                                         {"CI lengths", &CoefficientMetrics::ci_length},
                                                                         {"Coverage probabilities", &CoefficientMetrics::coverage}};
  for (const auto& [title, member] : panels) {
    os << "\n  " << title << "\n";
    std::snprintf(buf, sizeof(buf), "  %-20s", "");
    os << buf;
    if (!table.estimators.empty()) {
      for (const auto& c : table.estimators.front().coefficients) {
        std::snprintf(buf, sizeof(buf), "%10s", c.coefficient.c_str());
        os << buf;
      }
    }
    os << '\n';
    for (const auto& e : table.estimators) {
      std::snprintf(buf, sizeof(buf), "  %-20s", e.estimator.c_str());
      os << buf;
      for (const auto& c : e.coefficients) {
        std::snprintf(buf, sizeof(buf), "%10.3f", c.*member);
        os << buf;
      }
      os << '\n';
    }
  }
  for (const auto& e : table.estimators) {
    if (e.excluded || e.kkt_failures) {
      std::snprintf(buf, sizeof(buf), "\n  %s: %d replications excluded, %d KKT failures%s", e.estimator.c_str(),
                    e.excluded, e.kkt_failures, e.failed ? " (run failed)" : "");
      os << buf;
    }
  }
  os << '\n';
  return os.str();
}

}  // namespace selqr
