#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "oodbatch/data.hpp"
#include "oodbatch/linalg.hpp"

namespace oodbatch {

using Json = nlohmann::ordered_json;

/// Rank-based (Mann-Whitney) ROC-AUC with average ranks for ties.
/// Returns nullopt when either class is absent. Throws ConfigError on a
/// length mismatch or a label outside {0, 1}.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels);

struct AucReport {
  std::vector<std::string> tasks;
  std::vector<std::optional<double>> per_task;
  std::optional<double> mean_auc;  // over defined tasks only
  std::vector<std::size_t> n_pos;
  std::vector<std::size_t> n_neg;

  friend bool operator==(const AucReport&, const AucReport&) = default;
};

/// Per-task AUC over rows whose mask is 1.
AucReport masked_auc_report(const Matrix& scores, const Matrix& labels, const Matrix& mask, const TaskSet& tasks);

/// Mean and sample standard deviation (n - 1; 0 for a single value).
struct SeedAggregate {
  std::vector<double> values;
  double mean = 0.0;
  double std = 0.0;

  bool defined() const noexcept { return !values.empty(); }
};

SeedAggregate summarize(std::span<const double> values);

struct ReportAggregate {
  SeedAggregate mean_auc;
  std::vector<SeedAggregate> per_task;
};

/// Undefined entries are skipped, so a task undefined in every report has
/// an empty aggregate. Throws ConfigError for an empty input or reports
/// over different task sets.
ReportAggregate aggregate_seeds(std::span<const AucReport> per_seed);

/// {split, seed, per_task: {task: auc|null}, mean_auc, n_pos: {...}, n_neg: {...}}
Json report_to_json(const AucReport& report, const std::string& split, std::uint64_t seed);
AucReport report_from_json(const Json& j);

/// Two-decimal rendering used by the comparison table (rounded).
std::string format_2dp(double value);
std::string format_mean_std(const SeedAggregate& agg);

}  // namespace oodbatch
