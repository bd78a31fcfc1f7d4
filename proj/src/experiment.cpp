#include "oodbatch/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "oodbatch/errors.hpp"
#include "oodbatch/rng.hpp"

namespace oodbatch {

namespace {

constexpr std::uint64_t kTagInit = 0x494E4954;  // "INIT"

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

std::string ExperimentPlan::label() const {
  return train_envs[0] + "_" + train_envs[1] + "/" + valid_env + "/" + test_env;
}

void ExperimentPlan::validate() const {
  const std::set<std::string> names{train_envs[0], train_envs[1], valid_env, test_env};
  if (names.size() != 4) throw ConfigError("plan " + label() + ": the four environment names must be distinct");
}

PlanPreset parse_plan_preset(std::string_view text) {
  if (text == "paper6") return PlanPreset::paper6;
  if (text == "all12") return PlanPreset::all12;
  throw ConfigError("unknown preset '" + std::string(text) + "' (expected paper6|all12)");
}

std::vector<ExperimentPlan> enumerate_plans(std::span<const std::string> names, PlanPreset preset) {
  if (names.size() != 4) throw ConfigError("enumerate_plans needs exactly 4 dataset names");
  if (std::set<std::string>(names.begin(), names.end()).size() != 4)
    throw ConfigError("enumerate_plans: duplicate dataset names");

  auto make = [&](std::size_t a, std::size_t b, std::size_t v, std::size_t t) {
    ExperimentPlan p;
    p.train_envs = {names[a], names[b]};
    p.valid_env = names[v];
    p.test_env = names[t];
    return p;
  };

  std::vector<ExperimentPlan> plans;
  if (preset == PlanPreset::paper6) {
    constexpr std::array<std::array<std::size_t, 4>, 6> kColumns{{
        {0, 1, 2, 3},  // NIH_CHEX / MIMIC / PC
        {0, 3, 2, 1},  // NIH_PC / MIMIC / CHEX
        {1, 2, 3, 0},  // CHEX_MIMIC / PC / NIH
        {0, 2, 1, 3},  // NIH_MIMIC / CHEX / PC
        {1, 3, 0, 2},  // CHEX_PC / NIH / MIMIC
        {2, 3, 1, 0},  // MIMIC_PC / CHEX / NIH
    }};
    for (const auto& c : kColumns) plans.push_back(make(c[0], c[1], c[2], c[3]));
    return plans;
  }
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = a + 1; b < 4; ++b) {
      std::vector<std::size_t> rest;
      for (std::size_t k = 0; k < 4; ++k)
        if (k != a && k != b) rest.push_back(k);
      plans.push_back(make(a, b, rest[0], rest[1]));
      plans.push_back(make(a, b, rest[1], rest[0]));
    }
  }
  return plans;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (train_n.size() > 2) throw ConfigError("train_n takes at most two entries");
  for (auto n : train_n)
    if (n == 0) throw ConfigError("train_n entries must be positive");
  if (early_stop_patience && *early_stop_patience == 0) throw ConfigError("early-stop patience must be >= 1");
  optim.validate();
  aug.validate();
  if (model == ModelKind::mlp1 && hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
}

Json TrainConfig::to_json() const {
  Json j;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["optim"] = {{"learning_rate", optim.learning_rate}, {"weight_decay", optim.weight_decay},
                {"beta1", optim.beta1},                 {"beta2", optim.beta2},
                {"epsilon", optim.epsilon},             {"amsgrad", optim.amsgrad}};
  j["augment"] = {{"enabled", aug.enabled},
                  {"target_size", aug.target_size},
                  {"max_rotation", aug.max_rotation},
                  {"max_translate", aug.max_translate},
                  {"scale_range", {aug.scale_low, aug.scale_high}}};
  j["model"] = {{"kind", std::string(to_string(model))}, {"hidden_dim", hidden_dim}};
  j["early_stop_patience"] = early_stop_patience ? Json(*early_stop_patience) : Json(nullptr);
  j["train_n"] = train_n;
  j["valid_n"] = valid_n ? Json(*valid_n) : Json(nullptr);
  j["test_n"] = test_n ? Json(*test_n) : Json(nullptr);
  return j;
}

Json epoch_record_to_json(const EpochRecord& rec) {
  return {{"epoch", rec.epoch},
          {"train_loss", rec.train_loss},
          {"valid_mean_auc", optional_json(rec.valid_mean_auc)},
          {"checkpointed", rec.checkpointed}};
}

const Environment& find_environment(std::span<const Environment> data, const std::string& name) {
  for (const auto& env : data)
    if (env.name() == name) return env;
  throw ConfigError("unknown environment '" + name + "'");
}

std::vector<Environment> training_environments(const ExperimentPlan& plan, std::span<const Environment> data,
                                               const TrainConfig& cfg) {
  std::vector<Environment> envs;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& env = find_environment(data, plan.train_envs[i]);
    if (cfg.train_n.empty())
      envs.push_back(env);
    else
      envs.push_back(subset_sequential(env, cfg.train_n[std::min(i, cfg.train_n.size() - 1)]));
  }
  return envs;
}

std::vector<LossWeights> training_loss_weights(std::span<const Environment> train_envs, SamplerMode mode) {
  std::vector<LossWeights> weights;
  if (mode == SamplerMode::balanced) {
    for (const auto& env : train_envs) weights.push_back(pos_weights_from_counts(class_counts(env.manifest)));
    return weights;
  }
  std::vector<ClassCount> merged;
  for (const auto& env : train_envs) {
    const auto c = class_counts(env.manifest);
    merged.resize(c.size());
    for (std::size_t t = 0; t < c.size(); ++t) {
      merged[t].n_positive += c[t].n_positive;
      merged[t].n_negative += c[t].n_negative;
      merged[t].n_missing += c[t].n_missing;
    }
  }
  weights.assign(train_envs.size(), pos_weights_from_counts(merged));
  return weights;
}

Json run_config_json(const ExperimentPlan& plan, const TrainConfig& cfg) {
  Json j;
  j["split"] = plan.label();
  j["train"] = {plan.train_envs[0], plan.train_envs[1]};
  j["valid"] = plan.valid_env;
  j["test"] = plan.test_env;
  j["seed"] = plan.seed;
  j["train_config"] = cfg.to_json();
  const bool balanced = plan.mode == SamplerMode::balanced;
  j["sampler_mode"] = std::string(to_string(plan.mode));
  j["loss_aggregation"] = balanced ? "sum_of_per_env_means" : "merged_batch_mean";
  j["pos_weight_source"] = balanced ? "per_env" : "merged_pool";
  return j;
}

AucReport evaluate(const ModelState& state, const Environment& env, std::size_t target_size) {
  const Batch batch = full_environment_batch(env, 0, target_size);
  return masked_auc_report(forward(state, batch.features), batch.labels, batch.mask, env.manifest.tasks);
}

namespace {

LossGrad batch_loss(const ModelState& state, const Batch& batch, std::span<const LossWeights> weights,
                    SamplerMode mode, std::size_t n_envs, std::size_t& all_masked) {
  auto term = [&](const Matrix& x, const Matrix& y, const Matrix& m, const LossWeights& w) {
    const auto loss = wbce_loss(forward(state, x), y, m, w);
    if (loss.all_masked()) ++all_masked;
    return LossGrad{loss.loss, backward(state, x, loss.grad)};
  };
  if (mode == SamplerMode::random_merged) return term(batch.features, batch.labels, batch.mask, weights.front());

  // Balanced plans group rows by environment in equal blocks.
  const auto per_env = static_cast<Eigen::Index>(batch.size() / n_envs);
  std::vector<LossGrad> terms;
  terms.reserve(n_envs);
  for (std::size_t e = 0; e < n_envs; ++e) {
    const Eigen::Index start = static_cast<Eigen::Index>(e) * per_env;
    if (batch.env_tags[static_cast<std::size_t>(start)] != e)
      throw TrainingError("balanced batch rows are not grouped by environment");
    terms.push_back(term(batch.features.middleRows(start, per_env), batch.labels.middleRows(start, per_env),
                         batch.mask.middleRows(start, per_env), weights[e]));
  }
  return env_sum_loss(terms);
}

}  // namespace

RunResult train_one(const ExperimentPlan& plan, std::span<const Environment> data, const TrainConfig& cfg,
                    const EpochCallback& on_epoch) {
  plan.validate();
  cfg.validate();
  const std::vector<Environment> train = training_environments(plan, data, cfg);
  const Environment& valid_src = find_environment(data, plan.valid_env);
  const Environment& test_src = find_environment(data, plan.test_env);
  const Environment valid = cfg.valid_n ? subset_sequential(valid_src, *cfg.valid_n) : valid_src;
  const Environment test = cfg.test_n ? subset_sequential(test_src, *cfg.test_n) : test_src;

  const TaskSet& tasks = train.front().manifest.tasks;
  for (const Environment* env : {&train[1], &valid, &test})
    if (env->manifest.tasks != tasks) throw ConfigError("environment " + env->name() + " uses a different task set");

  SamplerConfig sampler{plan.mode, cfg.batch_size, plan.seed, true};
  sampler.validate(train.size());

  ModelSpec spec{cfg.model, cfg.aug.target_size * cfg.aug.target_size, cfg.hidden_dim, tasks.size()};
  ModelState state = init_model(spec, derive_seed(plan.seed, {kTagInit}));
  const auto weights = training_loss_weights(train, plan.mode);
  const Batch valid_batch = full_environment_batch(valid, 0, cfg.aug.target_size);

  RunResult result;
  result.plan = plan;
  double best = -std::numeric_limits<double>::infinity();
  bool have_checkpoint = false;
  std::size_t since_improvement = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = plan_epoch(train, sampler, epoch);
    if (batches.empty())
      throw TrainingError("empty sampler epoch " + std::to_string(epoch) + " (training pool too small for batch size " +
                          std::to_string(cfg.batch_size) + ")");
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Batch batch = assemble_batch(batches[b], train, cfg.aug);
      const LossGrad lg = batch_loss(state, batch, weights, plan.mode, train.size(), result.all_masked_batches);
      if (!std::isfinite(lg.loss) || !lg.grads.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch " << b << ": loss=" << lg.loss;
        throw TrainingError(msg.str());
      }
      adam_step(state, lg.grads, cfg.optim);
      loss_sum += lg.loss;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches.size());
    const AucReport report =
        masked_auc_report(forward(state, valid_batch.features), valid_batch.labels, valid_batch.mask, tasks);
    rec.valid_mean_auc = report.mean_auc;
    if (report.mean_auc && *report.mean_auc > best) {
      best = *report.mean_auc;
      rec.checkpointed = true;
      have_checkpoint = true;
      result.best_epoch = epoch;
      result.best_valid_auc = best;
      result.best_valid_report = report;
      result.best_state = state;
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (cfg.early_stop_patience && since_improvement >= *cfg.early_stop_patience) break;
  }

  if (!have_checkpoint)
    throw TrainingError("validation AUC undefined on every epoch for " + plan.label() +
                        " (validation set lacks positives or negatives)");
  result.test_report = evaluate(result.best_state, test, cfg.aug.target_size);
  return result;
}

}  // namespace oodbatch
