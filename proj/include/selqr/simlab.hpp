#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "selqr/data.hpp"
#include "selqr/pipeline.hpp"

namespace selqr {

/// Error distributions: A N(0,1); B 0.4 N(0,1.5^2) + 0.6 N(0,1); C 0.7 t(3);
/// D U(-1.5, 1.5); E N(0, (0.5 (1 + |X|))^2).
enum class ErrorSetting { A, B, C, D, E };
/// Logistic selection: M1 on X only, M2 linear in (X, Y*), M3 in (sin^2 X, Y*).
enum class Mechanism { M1, M2, M3 };

ErrorSetting parse_setting(std::string_view s);
Mechanism parse_mechanism(std::string_view s);
std::string_view to_string(ErrorSetting s);
std::string_view to_string(Mechanism m);

struct SimulationSpec {
  ErrorSetting setting = ErrorSetting::C;
  Mechanism mechanism = Mechanism::M2;
  Index n = 1000;
  int reps = 1000;
  double tau = 0.5;
  std::uint64_t seed = 20240601;
  std::vector<Estimator> estimators{Estimator::Uncorrected, Estimator::Mar, Estimator::SemiparametricIv};
  EstimationOptions options;
  unsigned threads = 0;  ///< 0: hardware concurrency

  void validate() const;
};

struct GeneratedDataset {
  ObservationSet data;
  Vector latent_y;    ///< Y* before masking
  Vector p;           ///< selection probabilities p(Y*, X)
  Vector beta_true;   ///< in Z = (1, X, W) order: (1, 2, 1)
};

/// tau-quantile of the error distribution; for E the conditional quantile given x.
double error_quantile(ErrorSetting setting, double tau, double x = 0.0);

/// One replication. The random stream depends only on (spec.seed, replication).
GeneratedDataset generate(const SimulationSpec& spec, std::uint64_t replication);

/// Coefficient labels in Z order.
std::vector<std::string> coefficient_names(Index n_x, Index n_w);

struct ReplicationEstimate {
  bool ok = false;
  std::string error;
  Vector theta;
  Matrix ci;               ///< d x 2
  bool kkt_ok = true;      ///< first-stage KKT certificate, true when not applicable
};

struct ReplicationRecord {
  std::uint64_t index = 0;
  double missing_rate = 0.0;
  std::vector<ReplicationEstimate> estimates;  ///< aligned with the estimator list
};

struct CoefficientMetrics {
  std::string coefficient;
  double truth = 0.0;
  double mean_bias = 0.0;
  double rmse = 0.0;
  double ci_length = 0.0;
  double coverage = 0.0;
};

struct EstimatorMetrics {
  std::string estimator;
  int used = 0;
  int excluded = 0;
  int kkt_failures = 0;
  bool failed = false;  ///< more than 2% of replications excluded
  std::vector<CoefficientMetrics> coefficients;
};

struct MetricsTable {
  SimulationSpec spec;
  double mean_missing_rate = 0.0;
  std::vector<EstimatorMetrics> estimators;
  std::vector<ReplicationRecord> replications;

  bool ok() const;
  const EstimatorMetrics& at(std::string_view estimator) const;
};

/// A named estimator callable for the replication driver.
struct SimEstimator {
  std::string name;
  std::function<ReplicationEstimate(const GeneratedDataset&, const SimulationSpec&)> fit;
};

SimEstimator builtin_estimator(Estimator e);

/// Runs spec.reps replications in parallel and aggregates them in index order.
MetricsTable run(const SimulationSpec& spec);
MetricsTable run(const SimulationSpec& spec, const std::vector<SimEstimator>& estimators);

/// Aggregates stored replications (index order is irrelevant to the result up to
/// floating-point summation order, which is fixed by sorting on index).
std::vector<EstimatorMetrics> aggregate(const std::vector<ReplicationRecord>& records,
                                        const std::vector<std::string>& estimator_names, const Vector& truth,
                                        const std::vector<std::string>& coefficient_labels);

/// Pairwise (cascade) summation.
double pairwise_sum(std::span<const double> values);

}  // namespace selqr
