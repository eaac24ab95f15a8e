// selqr: selection-corrected quantile regression from the command line.
//
//   selqr fit      --data obs.csv --map d=D,y=Y,w=W,x=X --tau 0.25,0.5 [--out report.json]
//   selqr cdf      --data obs.csv --map ... [--out cdf.csv]
//   selqr simulate --setting C --mechanism M2 --reps 1000 --n 1000 [--out prefix]
//
// Exit codes: 0 success, 2 input error, 3 numerical failure.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "selqr/errors.hpp"
#include "selqr/shell.hpp"

namespace {

constexpr int kInputError = 2;
constexpr int kNumericalError = 3;

std::vector<std::string> split_list(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& item : raw) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (!part.empty()) out.push_back(part);
    }
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw selqr::InputError("cannot write '" + path + "'");
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selection-corrected quantile regression"};
  app.set_version_flag("--version", std::string(selqr::version()));
  app.require_subcommand(1);

  std::string data_path, map_text = "d=d,y=y,w=w,x=x", out_path, bandwidth_mode = "rot";
  std::vector<std::string> tau_raw{"0.5"}, estimators_raw;
  selqr::BasisSettings basis;
  double trim_floor = 0.01;
  std::uint64_t seed = 20240601;
  std::string setting = "C", mechanism = "M2";
  int reps = 1000;
  long long n = 1000;
  unsigned threads = 0;

  const auto add_model_flags = [&](CLI::App* cmd) {
    cmd->add_option("--tau", tau_raw, "Quantile levels (comma separated or repeated)");
    cmd->add_option("--y-degree", basis.y_degree, "Outcome spline degree");
    cmd->add_option("--y-interior-knots", basis.y_interior_knots, "Outcome spline interior knots");
    cmd->add_option("--w-degree", basis.w_degree, "Instrument spline degree");
    cmd->add_option("--w-interior-knots", basis.w_interior_knots, "Instrument spline interior knots");
    cmd->add_option("--bandwidth-mode", bandwidth_mode, "Density bandwidths: rot or cv")
        ->check(CLI::IsMember({"rot", "cv"}));
    cmd->add_option("--trim-floor", trim_floor, "Probability floor for the MAR comparator");
    cmd->add_option("--estimators", estimators_raw, "uncorrected, mar, semiparametric_iv");
    cmd->add_option("--seed", seed, "Random seed");
    cmd->add_option("--out", out_path, "Output path (stdout if omitted; prefix for simulate)");
  };

  CLI::App* fit = app.add_subcommand("fit", "Fit estimators to a CSV dataset and emit a JSON report");
  fit->add_option("--data", data_path, "CSV file with a header row")->required();
  fit->add_option("--map", map_text, "Column map d=..,y=..,w=a+b,x=c+d");
  add_model_flags(fit);

  CLI::App* cdf = app.add_subcommand("cdf", "Selection-corrected and empirical CDF of the outcome");
  cdf->add_option("--data", data_path, "CSV file with a header row")->required();
  cdf->add_option("--map", map_text, "Column map d=..,y=..,w=a+b,x=c+d");
  add_model_flags(cdf);

  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo study on the built-in design");
  sim->add_option("--setting", setting, "Error distribution A-E")->check(CLI::IsMember({"A", "B", "C", "D", "E"}));
  sim->add_option("--mechanism", mechanism, "Selection mechanism M1-M3")->check(CLI::IsMember({"M1", "M2", "M3"}));
  sim->add_option("--reps", reps, "Replications");
  sim->add_option("--n", n, "Sample size per replication");
  sim->add_option("--threads", threads, "Worker threads (0: all cores)");
  add_model_flags(sim);

  CLI11_PARSE(app, argc, argv);

  try {
    selqr::RunConfig config;
    std::vector<double> taus;
    for (const auto& t : split_list(tau_raw)) {
      try {
        taus.push_back(std::stod(t));
      } catch (const std::exception&) {
        throw selqr::InputError("invalid --tau value '" + t + "'");
      }
    }
    config.taus = taus;
    config.basis = basis;
    config.bandwidth = bandwidth_mode == "cv" ? selqr::BandwidthMode::CrossValidated : selqr::BandwidthMode::RuleOfThumb;
    config.trim_floor = trim_floor;
    config.seed = seed;
    if (!estimators_raw.empty()) {
      config.estimators.clear();
      for (const auto& e : split_list(estimators_raw)) config.estimators.push_back(selqr::parse_estimator(e));
    }
    config.data_path = data_path;
    config.map = selqr::ColumnMap::parse(map_text);

    if (fit->parsed()) {
      const selqr::ObservationSet data = selqr::ingest_csv(data_path, config.map);
      write_text(out_path, selqr::cmd_fit(config, data).dump(2) + "\n");
    } else if (cdf->parsed()) {
      const selqr::ObservationSet data = selqr::ingest_csv(data_path, config.map);
      std::ostringstream os;
      selqr::write_cdf_csv(os, selqr::cmd_cdf(config, data));
      write_text(out_path, os.str());
    } else if (sim->parsed()) {
      selqr::SimulationSpec spec;
      spec.setting = selqr::parse_setting(setting);
      spec.mechanism = selqr::parse_mechanism(mechanism);
      spec.n = static_cast<selqr::Index>(n);
      spec.reps = reps;
      spec.tau = config.taus.front();
      spec.seed = seed;
      if (!estimators_raw.empty()) {
        spec.estimators = config.estimators;
      }
      spec.options = config.estimation_options();
      spec.threads = threads;
      config.validate();
      const selqr::MetricsTable table = selqr::run(spec);
      std::cout << selqr::metrics_summary(table);
      if (!out_path.empty()) {
        std::ostringstream csv;
        selqr::write_metrics_csv(csv, table);
        write_text(out_path + ".csv", csv.str());
        write_text(out_path + ".json", selqr::metrics_to_json(table).dump(2) + "\n");
      }
      if (!table.ok()) {
        std::cerr << "selqr: more than 2% of replications failed for at least one estimator\n";
        return kNumericalError;
      }
    }
  } catch (const selqr::InputError& e) {
    std::cerr << "selqr: input error: " << e.what() << '\n';
    return kInputError;
  } catch (const selqr::NumericalError& e) {
    std::cerr << "selqr: numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "selqr: " << e.what() << '\n';
    return kNumericalError;
  }
  return 0;
}
