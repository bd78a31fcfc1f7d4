#include <atomic>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "oodbatch/errors.hpp"
#include "oodbatch/experiment.hpp"

namespace oodbatch {

namespace {

std::string model_title(SamplerMode mode) {
  return mode == SamplerMode::balanced ? "Balanced Batching" : "Random Batching";
}

struct Job {
  std::size_t block, split, seed;
};

}  // namespace

SuiteResult run_suite(std::span<const ExperimentPlan> splits, std::span<const Environment> data,
                      const TrainConfig& cfg, std::span<const std::uint64_t> seeds,
                      std::span<const SamplerMode> modes, std::size_t jobs, const RunCallback& on_run) {
  if (splits.empty()) throw ConfigError("run_suite: no plans");
  if (seeds.empty()) throw ConfigError("run_suite: no seeds");
  if (modes.empty()) throw ConfigError("run_suite: no sampler modes");
  cfg.validate();
  for (const auto& s : splits) {
    s.validate();
    for (const auto& name : {s.train_envs[0], s.train_envs[1], s.valid_env, s.test_env})
      (void)find_environment(data, name);
  }

  SuiteResult suite;
  suite.tasks = find_environment(data, splits.front().train_envs[0]).manifest.tasks.names();
  suite.splits.assign(splits.begin(), splits.end());
  suite.seeds.assign(seeds.begin(), seeds.end());
  suite.config = cfg.to_json();
  std::vector<Job> queue;
  for (std::size_t m = 0; m < modes.size(); ++m) {
    suite.blocks.push_back({modes[m], std::vector<std::vector<RunSummary>>(
                                          splits.size(), std::vector<RunSummary>(seeds.size()))});
    for (std::size_t s = 0; s < splits.size(); ++s)
      for (std::size_t k = 0; k < seeds.size(); ++k) queue.push_back({m, s, k});
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex mu;
  std::string first_error;

  auto worker = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= queue.size()) return;
      const Job job = queue[i];
      ExperimentPlan plan = splits[job.split];
      plan.seed = seeds[job.seed];
      plan.mode = modes[job.block];
      try {
        const RunResult r = train_one(plan, data, cfg);
        RunSummary summary{true, r.best_valid_auc, r.best_epoch, r.test_report};
        std::lock_guard lock(mu);
        suite.blocks[job.block].runs[job.split][job.seed] = summary;
        if (on_run) on_run(plan, summary);
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        if (!failed.exchange(true))
          first_error = "run " + plan.label() + " seed " + std::to_string(plan.seed) + " mode " +
                        std::string(to_string(plan.mode)) + " failed: " + e.what();
      }
    }
  };

  jobs = std::clamp<std::size_t>(jobs, 1, queue.size());
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < jobs; ++w) pool.emplace_back(worker);
  }
  if (failed) throw SuiteFailure(first_error, std::move(suite));
  return suite;
}

std::vector<TableBlock> build_table(const SuiteResult& suite) {
  std::vector<TableBlock> blocks;
  for (const auto& block : suite.blocks) {
    TableBlock tb{block.mode, {}};
    const std::size_t n_rows = 2 + suite.tasks.size();
    for (std::size_t r = 0; r < n_rows; ++r) {
      TableRow row;
      row.name = r == 0 ? "Best Valid AUC" : r == 1 ? "Avg Test AUC" : suite.tasks[r - 2];
      std::vector<double> split_means;
      for (const auto& per_seed : block.runs) {
        std::vector<double> values;
        for (const auto& run : per_seed) {
          if (!run.completed) continue;
          if (r == 0) {
            values.push_back(run.best_valid_auc);
          } else if (r == 1) {
            if (run.test_report.mean_auc) values.push_back(*run.test_report.mean_auc);
          } else if (const auto& v = run.test_report.per_task.at(r - 2)) {
            values.push_back(*v);
          }
        }
        row.per_split.push_back(summarize(values));
        if (row.per_split.back().defined()) split_means.push_back(row.per_split.back().mean);
      }
      row.over_splits = summarize(split_means);
      tb.rows.push_back(std::move(row));
    }
    blocks.push_back(std::move(tb));
  }
  return blocks;
}

std::string render_table(const SuiteResult& suite) {
  const auto blocks = build_table(suite);
  std::size_t name_w = 14;
  for (const auto& t : suite.tasks) name_w = std::max(name_w, t.size());
  std::vector<std::size_t> col_w;
  for (const auto& s : suite.splits) col_w.push_back(std::max<std::size_t>(s.label().size(), 4));

  std::ostringstream out;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (b) out << '\n';
    out << model_title(blocks[b].mode) << " (cells: mean over " << suite.seeds.size()
        << " seed(s); MEAN: mean ± std over splits)\n";
    out << std::left << std::setw(static_cast<int>(name_w)) << "TRAIN/VALID/TEST";
    for (std::size_t s = 0; s < suite.splits.size(); ++s)
      out << "  " << std::right << std::setw(static_cast<int>(col_w[s])) << suite.splits[s].label();
    out << "  MEAN\n";
    for (const auto& row : blocks[b].rows) {
      out << std::left << std::setw(static_cast<int>(name_w)) << row.name;
      for (std::size_t s = 0; s < row.per_split.size(); ++s) {
        const auto& cell = row.per_split[s];
        out << "  " << std::right << std::setw(static_cast<int>(col_w[s]))
            << (cell.defined() ? format_2dp(cell.mean) : std::string("-"));
      }
      out << "  " << format_mean_std(row.over_splits) << '\n';
    }
  }
  return out.str();
}

namespace {

Json aggregate_json(const SeedAggregate& a) {
  if (!a.defined()) return nullptr;
  return {{"mean", a.mean}, {"std", a.std}, {"values", a.values}};
}

}  // namespace

Json suite_to_json(const SuiteResult& suite) {
  Json j;
  j["tasks"] = suite.tasks;
  j["seeds"] = suite.seeds;
  j["splits"] = Json::array();
  for (const auto& s : suite.splits)
    j["splits"].push_back({{"label", s.label()},
                           {"train", {s.train_envs[0], s.train_envs[1]}},
                           {"valid", s.valid_env},
                           {"test", s.test_env}});
  j["config"] = suite.config;
  j["models"] = Json::array();
  const auto tables = build_table(suite);
  for (std::size_t b = 0; b < suite.blocks.size(); ++b) {
    const auto& block = suite.blocks[b];
    Json m;
    m["mode"] = std::string(to_string(block.mode));
    m["runs"] = Json::array();
    for (std::size_t s = 0; s < block.runs.size(); ++s) {
      for (std::size_t k = 0; k < block.runs[s].size(); ++k) {
        const auto& run = block.runs[s][k];
        if (!run.completed) continue;
        m["runs"].push_back({{"split", suite.splits[s].label()},
                             {"seed", suite.seeds[k]},
                             {"best_valid_auc", run.best_valid_auc},
                             {"best_epoch", run.best_epoch},
                             {"test_report", report_to_json(run.test_report, suite.splits[s].label(), suite.seeds[k])}});
      }
    }
    Json rows = Json::array();
    for (const auto& row : tables[b].rows) {
      Json cells = Json::array();
      for (const auto& c : row.per_split) cells.push_back(aggregate_json(c));
      rows.push_back({{"name", row.name}, {"per_split", cells}, {"mean", aggregate_json(row.over_splits)}});
    }
    m["table"] = {{"cell_axis", "seeds"}, {"mean_axis", "splits"}, {"rows", rows}};
    j["models"].push_back(m);
  }
  return j;
}

SuiteResult suite_from_json(const Json& j) {
  SuiteResult suite;
  suite.tasks = j.at("tasks").get<std::vector<std::string>>();
  suite.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  for (const auto& s : j.at("splits")) {
    ExperimentPlan p;
    p.train_envs = {s.at("train").at(0).get<std::string>(), s.at("train").at(1).get<std::string>()};
    p.valid_env = s.at("valid").get<std::string>();
    p.test_env = s.at("test").get<std::string>();
    suite.splits.push_back(p);
  }
  if (j.contains("config")) suite.config = j.at("config");
  for (const auto& m : j.at("models")) {
    ModeBlock block{parse_sampler_mode(m.at("mode").get<std::string>()),
                    std::vector<std::vector<RunSummary>>(suite.splits.size(),
                                                         std::vector<RunSummary>(suite.seeds.size()))};
    for (const auto& run : m.at("runs")) {
      const auto label = run.at("split").get<std::string>();
      const auto seed = run.at("seed").get<std::uint64_t>();
      std::size_t s = 0, k = 0;
      while (s < suite.splits.size() && suite.splits[s].label() != label) ++s;
      while (k < suite.seeds.size() && suite.seeds[k] != seed) ++k;
      if (s == suite.splits.size() || k == suite.seeds.size())
        throw FormatError("suite JSON run references unknown split/seed " + label + "/" + std::to_string(seed));
      block.runs[s][k] = {true, run.at("best_valid_auc").get<double>(), run.at("best_epoch").get<std::size_t>(),
                          report_from_json(run.at("test_report"))};
    }
    suite.blocks.push_back(std::move(block));
  }
  return suite;
}

}  // namespace oodbatch
