#include "oodbatch/sampler.hpp"

#include <algorithm>
#include <exception>
#include <limits>
#include <thread>

#include "oodbatch/errors.hpp"
#include "oodbatch/rng.hpp"

namespace oodbatch {

namespace {

// Stream tags keep the seed spaces of unrelated draws apart.
constexpr std::uint64_t kTagRandomPerm = 0x52414E44;    // "RAND"
constexpr std::uint64_t kTagBalancedPerm = 0x42414C41;  // "BALA"
constexpr std::uint64_t kTagAugment = 0x41554720;       // "AUG "

}  // namespace

std::string_view to_string(SamplerMode mode) {
  return mode == SamplerMode::balanced ? "balanced" : "random";
}

SamplerMode parse_sampler_mode(std::string_view text) {
  if (text == "balanced") return SamplerMode::balanced;
  if (text == "random" || text == "random_merged") return SamplerMode::random_merged;
  throw ConfigError("unknown sampler mode '" + std::string(text) + "' (expected balanced|random)");
}

void SamplerConfig::validate(std::size_t n_envs) const {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (n_envs < 1) throw ConfigError("sampler needs at least one environment");
  if (mode == SamplerMode::balanced && batch_size % n_envs != 0)
    throw ConfigError("batch size not divisible by environment count (" + std::to_string(batch_size) + " % " +
                      std::to_string(n_envs) + ")");
}

std::vector<BatchPlan> plan_epoch_random(std::span<const Environment> envs, const SamplerConfig& cfg,
                                         std::uint64_t epoch) {
  cfg.validate(envs.size());
  std::vector<RowRef> pool;
  for (std::size_t e = 0; e < envs.size(); ++e)
    for (std::size_t r = 0; r < envs[e].size(); ++r)
      pool.push_back({static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(r), 0});

  const auto perm = seeded_permutation(pool.size(), derive_seed(cfg.seed, {kTagRandomPerm, epoch}));
  const std::size_t full = pool.size() / cfg.batch_size;
  const std::size_t n_batches = full + ((!cfg.drop_last && pool.size() % cfg.batch_size) ? 1 : 0);

  std::vector<BatchPlan> plan(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    const std::size_t begin = b * cfg.batch_size;
    const std::size_t end = std::min(begin + cfg.batch_size, pool.size());
    plan[b].reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      RowRef row = pool[perm[i]];
      row.aug_seed = derive_seed(cfg.seed, {kTagAugment, epoch, b, i - begin});
      plan[b].push_back(row);
    }
  }
  return plan;
}

std::vector<BatchPlan> plan_epoch_balanced(std::span<const Environment> envs, const SamplerConfig& cfg,
                                           std::uint64_t epoch) {
  cfg.validate(envs.size());
  const std::size_t per_env = cfg.batch_size / envs.size();
  std::size_t min_size = std::numeric_limits<std::size_t>::max();
  for (const auto& env : envs) min_size = std::min(min_size, env.size());
  if (min_size == 0) throw ConfigError("balanced sampling requires non-empty environments");

  const std::size_t n_batches = cfg.drop_last ? min_size / per_env : (min_size + per_env - 1) / per_env;
  std::vector<BatchPlan> plan(n_batches);
  for (auto& b : plan) b.reserve(cfg.batch_size);

  const std::uint64_t stream_start = epoch * n_batches * per_env;
  for (std::size_t e = 0; e < envs.size(); ++e) {
    const std::size_t n = envs[e].size();
    const std::uint64_t key = name_key(envs[e].name());
    std::uint64_t cycle = std::numeric_limits<std::uint64_t>::max();
    std::vector<std::uint32_t> perm;
    for (std::size_t b = 0; b < n_batches; ++b) {
      for (std::size_t slot = 0; slot < per_env; ++slot) {
        const std::uint64_t pos = stream_start + b * per_env + slot;
        if (pos / n != cycle) {
          cycle = pos / n;
          perm = seeded_permutation(n, derive_seed(cfg.seed, {kTagBalancedPerm, key, cycle}));
        }
        plan[b].push_back({static_cast<std::uint32_t>(e), perm[pos % n],
                           derive_seed(cfg.seed, {kTagAugment, epoch, b, key, slot})});
      }
    }
  }
  return plan;
}

std::vector<BatchPlan> plan_epoch(std::span<const Environment> envs, const SamplerConfig& cfg,
                                  std::uint64_t epoch) {
  return cfg.mode == SamplerMode::balanced ? plan_epoch_balanced(envs, cfg, epoch)
                                           : plan_epoch_random(envs, cfg, epoch);
}

Batch assemble_batch(std::span<const RowRef> rows, std::span<const Environment> envs, const AugmentConfig& aug) {
  if (rows.empty()) throw ConfigError("assemble_batch: no rows");
  const std::size_t dim = aug.target_size * aug.target_size;
  const std::size_t n_tasks = envs[rows.front().env].manifest.tasks.size();

  Batch batch;
  batch.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  batch.labels = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n_tasks));
  batch.mask = Matrix::Zero(batch.labels.rows(), batch.labels.cols());
  batch.env_tags.reserve(rows.size());
  batch.rows.assign(rows.begin(), rows.end());

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& env = envs[rows[i].env];
    const auto& rec = env.manifest.records.at(rows[i].record);
    Rng rng(rows[i].aug_seed);
    const auto row = static_cast<Eigen::Index>(i);
    augment_into(env.pack.image(rec.image_ref), env.pack.height, env.pack.width, aug, rng,
                 std::span<double>(batch.features.row(row).data(), dim));
    for (std::size_t t = 0; t < n_tasks; ++t) {
      const auto col = static_cast<Eigen::Index>(t);
      if (rec.labels[t] != Label::missing) {
        batch.mask(row, col) = 1.0;
        batch.labels(row, col) = rec.labels[t] == Label::positive ? 1.0 : 0.0;
      }
    }
    batch.env_tags.push_back(rows[i].env);
  }
  return batch;
}

std::vector<Batch> assemble_epoch(const std::vector<BatchPlan>& plan, std::span<const Environment> envs,
                                  const AugmentConfig& aug, std::size_t workers) {
  std::vector<Batch> out(plan.size());
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(plan.size(), 1));
  if (workers == 1) {
    for (std::size_t b = 0; b < plan.size(); ++b) out[b] = assemble_batch(plan[b], envs, aug);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t b = w; b < plan.size(); b += workers) out[b] = assemble_batch(plan[b], envs, aug);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::vector<Batch> epoch_batches_random(std::span<const Environment> envs, const SamplerConfig& cfg,
                                        std::uint64_t epoch, const AugmentConfig& aug, std::size_t workers) {
  if (cfg.mode != SamplerMode::random_merged) throw ConfigError("epoch_batches_random requires random mode");
  return assemble_epoch(plan_epoch_random(envs, cfg, epoch), envs, aug, workers);
}

std::vector<Batch> epoch_batches_balanced(std::span<const Environment> envs, const SamplerConfig& cfg,
                                          std::uint64_t epoch, const AugmentConfig& aug, std::size_t workers) {
  if (cfg.mode != SamplerMode::balanced) throw ConfigError("epoch_batches_balanced requires balanced mode");
  return assemble_epoch(plan_epoch_balanced(envs, cfg, epoch), envs, aug, workers);
}

Batch full_environment_batch(const Environment& env, std::uint32_t env_tag, std::size_t target_size) {
  if (env.size() == 0) throw ConfigError("environment " + env.name() + " is empty");
  std::vector<RowRef> rows(env.size());
  for (std::size_t r = 0; r < env.size(); ++r) rows[r] = {0, static_cast<std::uint32_t>(r), 0};
  AugmentConfig resize_only;
  resize_only.target_size = target_size;
  resize_only.enabled = false;
  Batch batch = assemble_batch(rows, std::span<const Environment>(&env, 1), resize_only);
  std::fill(batch.env_tags.begin(), batch.env_tags.end(), env_tag);
  for (auto& r : batch.rows) r.env = env_tag;
  return batch;
}

}  // namespace oodbatch
