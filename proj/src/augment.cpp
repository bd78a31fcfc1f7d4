#include "oodbatch/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oodbatch/errors.hpp"

namespace oodbatch {

void AugmentConfig::validate() const {
  if (target_size < 1) throw ConfigError("target_size must be >= 1");
  if (!(max_rotation >= 0.0 && max_rotation <= 180.0)) throw ConfigError("max_rotation must be in [0, 180]");
  if (!(max_translate >= 0.0 && max_translate < 1.0)) throw ConfigError("max_translate must be in [0, 1)");
  if (!(scale_low > 0.0 && scale_low <= scale_high)) throw ConfigError("scale range must satisfy 0 < low <= high");
}

AffineParams sample_affine(const AugmentConfig& cfg, Rng& rng) {
  AffineParams p;
  p.rotation = rng.uniform(-cfg.max_rotation, cfg.max_rotation);
  p.translate_x = rng.uniform(-cfg.max_translate, cfg.max_translate);
  p.translate_y = rng.uniform(-cfg.max_translate, cfg.max_translate);
  p.scale = rng.uniform(cfg.scale_low, cfg.scale_high);
  // -x + 0 can yield -0.0 for a zero range; canonicalize.
  if (p.rotation == 0.0) p.rotation = 0.0;
  if (p.translate_x == 0.0) p.translate_x = 0.0;
  if (p.translate_y == 0.0) p.translate_y = 0.0;
  return p;
}

void apply_affine_into(std::span<const std::uint8_t> image, std::size_t height, std::size_t width,
                       const AffineParams& params, std::size_t out_size, std::span<double> out) {
  if (height == 0 || width == 0 || image.size() != height * width)
    throw ConfigError("apply_affine: image must be non-empty and match height x width");
  if (out.size() != out_size * out_size) throw ConfigError("apply_affine: output buffer size mismatch");

  const double n = static_cast<double>(out_size);
  const double centre = n / 2.0;
  const double theta = params.rotation * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const double shift_x = params.translate_x * n;
  const double shift_y = params.translate_y * n;
  const double to_src_x = static_cast<double>(width) / n;
  const double to_src_y = static_cast<double>(height) / n;
  const double max_x = static_cast<double>(width - 1);
  const double max_y = static_cast<double>(height - 1);

  for (std::size_t oy = 0; oy < out_size; ++oy) {
    for (std::size_t ox = 0; ox < out_size; ++ox) {
      // Output pixel centre relative to the grid centre, translation undone.
      const double px = static_cast<double>(ox) + 0.5 - centre - shift_x;
      const double py = static_cast<double>(oy) + 0.5 - centre - shift_y;
      // Inverse rotation (y axis points down), then inverse scale.
      const double qx = (cs * px - sn * py) / params.scale + centre;
      const double qy = (sn * px + cs * py) / params.scale + centre;
      const double sx = qx * to_src_x;
      const double sy = qy * to_src_y;

      double value = kFillValue;
      if (sx >= 0.0 && sx <= static_cast<double>(width) && sy >= 0.0 && sy <= static_cast<double>(height)) {
        const double ix = std::clamp(sx - 0.5, 0.0, max_x);
        const double iy = std::clamp(sy - 0.5, 0.0, max_y);
        const auto x0 = static_cast<std::size_t>(ix);
        const auto y0 = static_cast<std::size_t>(iy);
        const std::size_t x1 = std::min(x0 + 1, width - 1);
        const std::size_t y1 = std::min(y0 + 1, height - 1);
        const double fx = ix - static_cast<double>(x0);
        const double fy = iy - static_cast<double>(y0);
        const double a = image[y0 * width + x0];
        const double b = image[y0 * width + x1];
        const double c = image[y1 * width + x0];
        const double d = image[y1 * width + x1];
        const double v = (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d);
        value = std::clamp(normalize_pixel(v), -1.0, 1.0);
      }
      out[oy * out_size + ox] = value;
    }
  }
}

std::vector<double> apply_affine(std::span<const std::uint8_t> image, std::size_t height, std::size_t width,
                                 const AffineParams& params, std::size_t out_size) {
  std::vector<double> out(out_size * out_size);
  apply_affine_into(image, height, width, params, out_size, out);
  return out;
}

void augment_into(std::span<const std::uint8_t> image, std::size_t height, std::size_t width,
                  const AugmentConfig& cfg, Rng& rng, std::span<double> out) {
  const AffineParams params = cfg.enabled ? sample_affine(cfg, rng) : AffineParams{};
  apply_affine_into(image, height, width, params, cfg.target_size, out);
}

}  // namespace oodbatch
