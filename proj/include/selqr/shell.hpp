#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "selqr/data.hpp"
#include "selqr/distribution.hpp"
#include "selqr/pipeline.hpp"
#include "selqr/simlab.hpp"

namespace selqr {

/// Which CSV columns hold D, Y, the instruments W and the controls X.
/// Textual form: "d=D,y=Y,w=W1+W2,x=X1+X2" (x may be empty).
struct ColumnMap {
  std::string d = "d";
  std::string y = "y";
  std::vector<std::string> w{"w"};
  std::vector<std::string> x{"x"};

  static ColumnMap parse(std::string_view text);
  std::string str() const;
  /// Throws InputError unless names are non-empty, w is non-empty and sets are disjoint.
  void validate() const;
};

/// Reads a headed CSV. Empty y is allowed (and stored as absent) only where d = 0.
ObservationSet ingest_csv(const std::filesystem::path& path, const ColumnMap& map);
ObservationSet read_csv(std::istream& in, const ColumnMap& map);
/// Shortest round-trip decimal representation; absent y written as an empty field.
void write_csv(std::ostream& out, const ObservationSet& data, const ColumnMap& map);

struct RunConfig {
  std::vector<double> taus{0.5};
  BasisSettings basis;
  BandwidthMode bandwidth = BandwidthMode::RuleOfThumb;
  double trim_floor = 0.01;
  std::uint64_t seed = 20240601;
  std::vector<Estimator> estimators{Estimator::SemiparametricIv};
  double level = 0.95;
  std::string data_path;
  ColumnMap map;

  void validate() const;
  EstimationOptions estimation_options() const;
  nlohmann::ordered_json to_json() const;
};

/// FNV-1a 64 of the compact JSON text, as 16 hex digits.
std::string config_hash(const nlohmann::ordered_json& config);

/// Runs every requested estimator at every tau.
nlohmann::ordered_json cmd_fit(const RunConfig& config, const ObservationSet& data);

struct CdfTable {
  Vector y;  ///< distinct selected outcomes, ascending
  Vector corrected;
  Vector empirical;
};

CdfTable cmd_cdf(const RunConfig& config, const ObservationSet& data);
void write_cdf_csv(std::ostream& out, const CdfTable& table);

nlohmann::ordered_json metrics_to_json(const MetricsTable& table);
/// One row per estimator x coefficient x metric.
void write_metrics_csv(std::ostream& out, const MetricsTable& table);
/// Bias / RMSE / CI length / coverage panels.
std::string metrics_summary(const MetricsTable& table);

/// Library version string.
std::string_view version();

}  // namespace selqr
