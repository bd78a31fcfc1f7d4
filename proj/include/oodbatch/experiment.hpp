#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "oodbatch/augment.hpp"
#include "oodbatch/data.hpp"
#include "oodbatch/metrics.hpp"
#include "oodbatch/nn.hpp"
#include "oodbatch/sampler.hpp"

namespace oodbatch {

/// One leave-a-dataset-out assignment.
struct ExperimentPlan {
  std::array<std::string, 2> train_envs;
  std::string valid_env;
  std::string test_env;
  std::uint64_t seed = 0;
  SamplerMode mode = SamplerMode::balanced;

  /// "TRAIN1_TRAIN2/VALID/TEST", e.g. "NIH_CHEX/MIMIC/PC".
  std::string label() const;
  void validate() const;

  friend bool operator==(const ExperimentPlan&, const ExperimentPlan&) = default;
};

enum class PlanPreset { paper6, all12 };
PlanPreset parse_plan_preset(std::string_view text);

/// `names` are read as (NIH, CHEX, MIMIC, PC) in that order for the paper6
/// preset, whose six columns are
///   (0,1)/2/3  (0,3)/2/1  (1,2)/3/0  (0,2)/1/3  (1,3)/0/2  (2,3)/1/0.
/// all12 enumerates every unordered train pair (lexicographic) and both
/// valid/test assignments of the remaining two names.
std::vector<ExperimentPlan> enumerate_plans(std::span<const std::string> names, PlanPreset preset);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  OptimConfig optim;
  AugmentConfig aug;
  ModelKind model = ModelKind::mlp1;
  std::size_t hidden_dim = 64;
  std::optional<std::size_t> early_stop_patience;
  /// Sequential-prefix sizes of the training environments: empty = use all,
  /// one entry = same for both, two entries = per train env in plan order.
  std::vector<std::size_t> train_n;
  std::optional<std::size_t> valid_n;
  std::optional<std::size_t> test_n;

  void validate() const;
  Json to_json() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> valid_mean_auc;
  bool checkpointed = false;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

/// {epoch, train_loss, valid_mean_auc, checkpointed}
Json epoch_record_to_json(const EpochRecord& rec);

struct RunResult {
  ExperimentPlan plan;
  double best_valid_auc = 0.0;
  std::size_t best_epoch = 0;
  AucReport best_valid_report;
  AucReport test_report;
  std::vector<EpochRecord> history;
  ModelState best_state;
  /// Batches (or per-environment sub-batches) whose labels were all missing.
  std::size_t all_masked_batches = 0;
};

/// Non-finite loss, empty epoch, or no usable validation signal.
class TrainingError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Training environments after sequential subsetting, in plan order.
std::vector<Environment> training_environments(const ExperimentPlan& plan, std::span<const Environment> data,
                                               const TrainConfig& cfg);
const Environment& find_environment(std::span<const Environment> data, const std::string& name);

/// Loss weights used by each training environment's loss term. Balanced mode
/// uses one weight vector per environment computed from its own subset;
/// random mode uses the merged pool's counts for every environment.
std::vector<LossWeights> training_loss_weights(std::span<const Environment> train_envs, SamplerMode mode);

/// Config snapshot written next to run artifacts: the train config, the plan
/// and the mode-dependent sampler/loss fields.
Json run_config_json(const ExperimentPlan& plan, const TrainConfig& cfg);

/// Masked AUC report of `state` on every record of `env` (resize only).
AucReport evaluate(const ModelState& state, const Environment& env, std::size_t target_size);

RunResult train_one(const ExperimentPlan& plan, std::span<const Environment> data, const TrainConfig& cfg,
                    const EpochCallback& on_epoch = {});

// ---- suites -----------------------------------------------------------------

struct RunSummary {
  bool completed = false;
  double best_valid_auc = 0.0;
  std::size_t best_epoch = 0;
  AucReport test_report;
};

struct ModeBlock {
  SamplerMode mode = SamplerMode::balanced;
  /// runs[split][seed]
  std::vector<std::vector<RunSummary>> runs;
};

struct SuiteResult {
  std::vector<std::string> tasks;
  std::vector<ExperimentPlan> splits;
  std::vector<std::uint64_t> seeds;
  std::vector<ModeBlock> blocks;
  Json config;
};

/// Thrown when a run fails; `partial` holds every run that finished.
class SuiteFailure : public std::runtime_error {
public:
  SuiteFailure(const std::string& what, SuiteResult partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const SuiteResult& partial() const noexcept { return partial_; }

private:
  SuiteResult partial_;
};

using RunCallback = std::function<void(const ExperimentPlan&, const RunSummary&)>;

/// Trains every (split, seed, mode). Seeds and modes from the split plans are
/// ignored. Up to `jobs` runs execute concurrently; the result layout does
/// not depend on `jobs`.
SuiteResult run_suite(std::span<const ExperimentPlan> splits, std::span<const Environment> data,
                      const TrainConfig& cfg, std::span<const std::uint64_t> seeds,
                      std::span<const SamplerMode> modes, std::size_t jobs = 1, const RunCallback& on_run = {});

/// One table row: per-split values (each aggregated over seeds) and the
/// aggregate over splits.
struct TableRow {
  std::string name;
  std::vector<SeedAggregate> per_split;  // axis: seeds
  SeedAggregate over_splits;             // axis: splits, of per_split means
};

struct TableBlock {
  SamplerMode mode;
  std::vector<TableRow> rows;  // Best Valid AUC, Avg Test AUC, one per task
};

std::vector<TableBlock> build_table(const SuiteResult& suite);
std::string render_table(const SuiteResult& suite);

Json suite_to_json(const SuiteResult& suite);
SuiteResult suite_from_json(const Json& j);

}  // namespace oodbatch
