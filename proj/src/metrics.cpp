#include "oodbatch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "oodbatch/errors.hpp"

namespace oodbatch {

std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ConfigError("roc_auc: scores and labels differ in length");
  std::size_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw ConfigError("roc_auc: labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Ranks are 1-based; a tie group spanning ranks [i+1, j] shares (i+1+j)/2.
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

AucReport masked_auc_report(const Matrix& scores, const Matrix& labels, const Matrix& mask, const TaskSet& tasks) {
  if (labels.rows() != scores.rows() || labels.cols() != scores.cols() || mask.rows() != scores.rows() ||
      mask.cols() != scores.cols() || static_cast<std::size_t>(scores.cols()) != tasks.size())
    throw ConfigError("masked_auc_report: shape mismatch");

  AucReport r;
  r.tasks = tasks.names();
  double sum = 0.0;
  std::size_t defined = 0;
  std::vector<double> s;
  std::vector<int> y;
  for (Eigen::Index t = 0; t < scores.cols(); ++t) {
    s.clear();
    y.clear();
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      if (mask(i, t) == 0.0) continue;
      s.push_back(scores(i, t));
      y.push_back(labels(i, t) > 0.5 ? 1 : 0);
    }
    const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    r.n_pos.push_back(pos);
    r.n_neg.push_back(y.size() - pos);
    r.per_task.push_back(roc_auc(s, y));
    if (r.per_task.back()) {
      sum += *r.per_task.back();
      ++defined;
    }
  }
  if (defined) r.mean_auc = sum / static_cast<double>(defined);
  return r;
}

SeedAggregate summarize(std::span<const double> values) {
  SeedAggregate a;
  a.values.assign(values.begin(), values.end());
  if (values.empty()) return a;
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

ReportAggregate aggregate_seeds(std::span<const AucReport> per_seed) {
  if (per_seed.empty()) throw ConfigError("aggregate_seeds: no reports");
  const auto& tasks = per_seed.front().tasks;
  std::vector<double> means;
  std::vector<std::vector<double>> per_task(tasks.size());
  for (const auto& r : per_seed) {
    if (r.tasks != tasks) throw ConfigError("aggregate_seeds: reports use different task sets");
    if (r.mean_auc) means.push_back(*r.mean_auc);
    for (std::size_t t = 0; t < tasks.size(); ++t)
      if (r.per_task[t]) per_task[t].push_back(*r.per_task[t]);
  }
  ReportAggregate agg;
  agg.mean_auc = summarize(means);
  for (const auto& v : per_task) agg.per_task.push_back(summarize(v));
  return agg;
}

Json report_to_json(const AucReport& r, const std::string& split, std::uint64_t seed) {
  Json per_task = Json::object();
  Json n_pos = Json::object();
  Json n_neg = Json::object();
  for (std::size_t t = 0; t < r.tasks.size(); ++t) {
    per_task[r.tasks[t]] = r.per_task[t] ? Json(*r.per_task[t]) : Json(nullptr);
    n_pos[r.tasks[t]] = r.n_pos[t];
    n_neg[r.tasks[t]] = r.n_neg[t];
  }
  return {{"split", split},
          {"seed", seed},
          {"per_task", per_task},
          {"mean_auc", r.mean_auc ? Json(*r.mean_auc) : Json(nullptr)},
          {"n_pos", n_pos},
          {"n_neg", n_neg}};
}

AucReport report_from_json(const Json& j) {
  AucReport r;
  for (const auto& [k, v] : j.at("per_task").items()) r.tasks.push_back(k);
  for (const auto& t : r.tasks) {
    const auto& v = j.at("per_task").at(t);
    r.per_task.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
    r.n_pos.push_back(j.at("n_pos").at(t).get<std::size_t>());
    r.n_neg.push_back(j.at("n_neg").at(t).get<std::size_t>());
  }
  const auto& m = j.at("mean_auc");
  if (!m.is_null()) r.mean_auc = m.get<double>();
  return r;
}

std::string format_2dp(double value) {
  if (!std::isfinite(value)) return "-";
  // Round half away from zero at the second decimal; the nudge keeps values
  // such as 0.125 (stored as 0.12499...) from rounding down.
  const double scaled = std::round(value * 100.0 + (value >= 0 ? 1e-9 : -1e-9));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", scaled / 100.0);
  return buf;
}

std::string format_mean_std(const SeedAggregate& agg) {
  if (!agg.defined()) return "-";
  return format_2dp(agg.mean) + " ± " + format_2dp(agg.std);
}

}  // namespace oodbatch
