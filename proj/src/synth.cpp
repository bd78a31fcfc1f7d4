#include <algorithm>
#include <cmath>
#include <cstdio>

#include "oodbatch/data.hpp"
#include "oodbatch/errors.hpp"
#include "oodbatch/rng.hpp"

namespace oodbatch {

namespace {

constexpr std::array<double, 4> kDefaultPrevalence{0.30, 0.40, 0.25, 0.35};
constexpr double kBackground = 0.25;
constexpr double kRegionCentre = 0.5;
constexpr double kRegionGain = 0.2;

}  // namespace

void SynthConfig::validate() const {
  if (n_envs < 2) throw ConfigError("synthetic generator needs at least 2 environments");
  if (n_per_env < 1) throw ConfigError("n_per_env must be >= 1");
  if (image_size < 8 || image_size > 4096) throw ConfigError("image_size must be in [8, 4096]");
  if (spurious_strength.size() != n_envs) throw ConfigError("spurious length must equal envs");
  if (!(core_strength >= 0.0 && core_strength <= 1.0)) throw ConfigError("core_strength must be in [0, 1]");
  for (double s : spurious_strength)
    if (!(s >= -1.0 && s <= 1.0)) throw ConfigError("spurious_strength entries must be in [-1, 1]");
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw ConfigError("missing_rate must be in [0, 1)");
  if (tasks.size() > 4) throw ConfigError("synthetic generator supports at most 4 tasks");
  if (!prevalence.empty() && prevalence.size() != tasks.size())
    throw ConfigError("prevalence length must equal task count");
  for (double p : prevalence)
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("prevalence entries must be in (0, 1)");
}

PixelBox core_region(std::size_t image_size, std::size_t task) {
  const std::size_t q = image_size / 4;
  return {q + (task / 2) * q, q + (task % 2) * q, q, q};
}

PixelBox corner_region(std::size_t image_size, std::size_t task) {
  const std::size_t q = image_size / 4;
  return {(task / 2) ? image_size - q : 0, (task % 2) ? image_size - q : 0, q, q};
}

double region_mean(const ImagePack& pack, std::size_t i, const PixelBox& box) {
  const auto img = pack.image(i);
  double sum = 0.0;
  for (std::size_t r = box.row0; r < box.row0 + box.rows; ++r)
    for (std::size_t c = box.col0; c < box.col0 + box.cols; ++c) sum += img[r * pack.width + c];
  return sum / static_cast<double>(box.rows * box.cols);
}

std::vector<Environment> generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t S = cfg.image_size;
  const std::size_t K = cfg.tasks.size();

  std::vector<double> prevalence = cfg.prevalence;
  if (prevalence.empty())
    for (std::size_t t = 0; t < K; ++t) prevalence.push_back(kDefaultPrevalence[t]);

  // Each pixel belongs to at most one region; -1 marks background.
  std::vector<int> core_owner(S * S, -1), corner_owner(S * S, -1);
  for (std::size_t t = 0; t < K; ++t) {
    for (auto [owner, box] : {std::pair{&core_owner, core_region(S, t)}, std::pair{&corner_owner, corner_region(S, t)}})
      for (std::size_t r = box.row0; r < box.row0 + box.rows; ++r)
        for (std::size_t c = box.col0; c < box.col0 + box.cols; ++c) (*owner)[r * S + c] = static_cast<int>(t);
  }

  std::vector<Environment> envs;
  envs.reserve(cfg.n_envs);
  for (std::size_t e = 0; e < cfg.n_envs; ++e) {
    Rng rng(derive_seed(cfg.seed, {e}));
    const double r_core = cfg.core_strength;
    const double r_spur = cfg.spurious_strength[e];
    const double c_core = std::sqrt(1.0 - r_core * r_core);
    const double c_spur = std::sqrt(1.0 - r_spur * r_spur);

    Environment env;
    env.manifest.name = "e" + std::to_string(e);
    env.manifest.region = "synthetic";
    env.manifest.tasks = cfg.tasks;
    env.pack.height = static_cast<std::uint16_t>(S);
    env.pack.width = static_cast<std::uint16_t>(S);
    env.pack.count = static_cast<std::uint32_t>(cfg.n_per_env);
    env.pack.pixels.resize(cfg.n_per_env * S * S);

    std::vector<int> truth(K);
    std::vector<double> core_level(K), corner_level(K);
    for (std::size_t i = 0; i < cfg.n_per_env; ++i) {
      ImageRecord rec;
      char id[32];
      std::snprintf(id, sizeof id, "%s-%06zu", env.manifest.name.c_str(), i);
      rec.id = id;
      rec.image_ref = static_cast<std::uint32_t>(i);
      rec.labels.resize(K);

      for (std::size_t t = 0; t < K; ++t) truth[t] = rng.bernoulli(prevalence[t]) ? 1 : 0;
      for (std::size_t t = 0; t < K; ++t)
        rec.labels[t] = rng.bernoulli(cfg.missing_rate) ? Label::missing
                                                        : (truth[t] ? Label::positive : Label::negative);
      for (std::size_t t = 0; t < K; ++t) {
        const double s = truth[t] ? 1.0 : -1.0;
        core_level[t] = kRegionCentre + kRegionGain * (r_core * s + c_core * rng.normal());
      }
      for (std::size_t t = 0; t < K; ++t) {
        const double s = truth[t] ? 1.0 : -1.0;
        corner_level[t] = kRegionCentre + kRegionGain * (r_spur * s + c_spur * rng.normal());
      }

      auto* px = env.pack.pixels.data() + i * S * S;
      for (std::size_t p = 0; p < S * S; ++p) {
        double v = kBackground;
        if (core_owner[p] >= 0) v = core_level[static_cast<std::size_t>(core_owner[p])];
        else if (corner_owner[p] >= 0) v = corner_level[static_cast<std::size_t>(corner_owner[p])];
        if (cfg.noise_std > 0.0) v += cfg.noise_std * rng.normal();
        px[p] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
      env.manifest.records.push_back(std::move(rec));
    }
    envs.push_back(std::move(env));
  }
  return envs;
}

}  // namespace oodbatch
