#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "oodbatch/augment.hpp"
#include "oodbatch/data.hpp"
#include "oodbatch/linalg.hpp"

namespace oodbatch {

enum class SamplerMode { random_merged, balanced };

std::string_view to_string(SamplerMode mode);
/// Accepts "random", "random_merged" and "balanced"; throws ConfigError otherwise.
SamplerMode parse_sampler_mode(std::string_view text);

struct SamplerConfig {
  SamplerMode mode = SamplerMode::balanced;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  bool drop_last = true;

  /// Throws ConfigError, e.g. when a balanced batch cannot be split evenly
  /// over `n_envs` environments.
  void validate(std::size_t n_envs) const;
};

/// One selected row: which environment, which record, and the seed of the
/// row's private augmentation stream.
struct RowRef {
  std::uint32_t env = 0;
  std::uint32_t record = 0;
  std::uint64_t aug_seed = 0;

  friend bool operator==(const RowRef&, const RowRef&) = default;
};

using BatchPlan = std::vector<RowRef>;

struct Batch {
  Matrix features;  // rows x target_size^2, normalized pixels
  Matrix labels;    // rows x tasks, 0/1 (0 where missing)
  Matrix mask;      // rows x tasks, 1 = label present
  std::vector<std::uint32_t> env_tags;
  std::vector<RowRef> rows;

  std::size_t size() const noexcept { return env_tags.size(); }
};

/// Row plans for one epoch. Both are pure functions of (environment names
/// and sizes, cfg.seed, epoch).
///
/// Random: one permutation of the concatenated pool per epoch, sliced into
/// consecutive batches; the trailing remainder is dropped under drop_last.
///
/// Balanced: each batch holds batch_size / E rows from every environment,
/// grouped by environment in input order. Every environment draws from its
/// own endless stream of permutations (one per pass through it), so small
/// environments recycle. An epoch holds floor(min_size / (batch_size / E))
/// batches; stream positions carry over between epochs. Seeds depend on the
/// environment's name, not its position.
std::vector<BatchPlan> plan_epoch_random(std::span<const Environment> envs, const SamplerConfig& cfg,
                                         std::uint64_t epoch);
std::vector<BatchPlan> plan_epoch_balanced(std::span<const Environment> envs, const SamplerConfig& cfg,
                                           std::uint64_t epoch);
std::vector<BatchPlan> plan_epoch(std::span<const Environment> envs, const SamplerConfig& cfg,
                                  std::uint64_t epoch);

/// Materializes a plan: per-row augmentation from RowRef::aug_seed, labels
/// and mask copied from the manifests.
Batch assemble_batch(std::span<const RowRef> rows, std::span<const Environment> envs, const AugmentConfig& aug);

/// Assembles every batch of a plan. Batches are distributed over `workers`
/// threads; output order equals plan order and contents do not depend on
/// the worker count.
std::vector<Batch> assemble_epoch(const std::vector<BatchPlan>& plan, std::span<const Environment> envs,
                                  const AugmentConfig& aug, std::size_t workers = 1);

std::vector<Batch> epoch_batches_random(std::span<const Environment> envs, const SamplerConfig& cfg,
                                        std::uint64_t epoch, const AugmentConfig& aug, std::size_t workers = 1);
std::vector<Batch> epoch_batches_balanced(std::span<const Environment> envs, const SamplerConfig& cfg,
                                          std::uint64_t epoch, const AugmentConfig& aug,
                                          std::size_t workers = 1);

/// Every record of one environment, resize only, in manifest order.
Batch full_environment_batch(const Environment& env, std::uint32_t env_tag, std::size_t target_size);

}  // namespace oodbatch
