#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "oodbatch/rng.hpp"

namespace oodbatch {

struct AugmentConfig {
  std::size_t target_size = 112;
  double max_rotation = 45.0;   // degrees
  double max_translate = 0.15;  // fraction of the output side
  double scale_low = 0.85;
  double scale_high = 1.15;
  bool enabled = true;

  void validate() const;
};

struct AffineParams {
  double rotation = 0.0;  // degrees, counter-clockwise as displayed
  double translate_x = 0.0;
  double translate_y = 0.0;
  double scale = 1.0;

  friend bool operator==(const AffineParams&, const AffineParams&) = default;
};

/// Normalized value of an out-of-footprint sample (black).
inline constexpr double kFillValue = -1.0;

/// Maps an 8-bit intensity to [-1, 1].
constexpr double normalize_pixel(double v) noexcept { return v / 127.5 - 1.0; }

/// Draws rotation, translate_x, translate_y, scale in that order; exactly
/// four uniforms are consumed per call.
AffineParams sample_affine(const AugmentConfig& cfg, Rng& rng);

/// Resamples `image` (height x width, row-major) onto an out_size x out_size
/// grid in one bilinear pass. The output-space transform is: scale, then
/// rotate, both about the grid centre, then translate by fraction * out_size.
/// Samples falling outside the source footprint take kFillValue. Output is
/// normalized and clamped to [-1, 1].
std::vector<double> apply_affine(std::span<const std::uint8_t> image, std::size_t height, std::size_t width,
                                 const AffineParams& params, std::size_t out_size);

/// Writes into a caller-owned buffer of out_size * out_size values.
void apply_affine_into(std::span<const std::uint8_t> image, std::size_t height, std::size_t width,
                       const AffineParams& params, std::size_t out_size, std::span<double> out);

/// Training/eval entry point: random affine when cfg.enabled, plain resize
/// otherwise (the rng is untouched in that case).
void augment_into(std::span<const std::uint8_t> image, std::size_t height, std::size_t width,
                  const AugmentConfig& cfg, Rng& rng, std::span<double> out);

}  // namespace oodbatch
