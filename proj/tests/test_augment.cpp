#include <gtest/gtest.h>

#include <cmath>

#include "oodbatch/augment.hpp"
#include "oodbatch/errors.hpp"
#include "support/oracles.hpp"

using namespace oodbatch;

namespace {

std::vector<std::uint8_t> random_image(std::size_t h, std::size_t w, Rng& rng) {
  std::vector<std::uint8_t> img(h * w);
  for (auto& p : img) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

}  // namespace

TEST(SampleAffine, DegenerateRangesGiveIdentity) {
  AugmentConfig cfg;
  cfg.max_rotation = 0;
  cfg.max_translate = 0;
  cfg.scale_low = cfg.scale_high = 1.0;
  Rng rng(1);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sample_affine(cfg, rng), (AffineParams{0, 0, 0, 1}));
}

TEST(SampleAffine, MonteCarloStaysInRange) {
  const AugmentConfig cfg;
  Rng rng(2);
  double rot_sum = 0, rot_min = 1e9, rot_max = -1e9, s_min = 1e9, s_max = -1e9, t_max = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto p = sample_affine(cfg, rng);
    rot_sum += p.rotation;
    rot_min = std::min(rot_min, p.rotation);
    rot_max = std::max(rot_max, p.rotation);
    s_min = std::min(s_min, p.scale);
    s_max = std::max(s_max, p.scale);
    t_max = std::max({t_max, std::abs(p.translate_x), std::abs(p.translate_y)});
  }
  EXPECT_GE(rot_min, -45.0);
  EXPECT_LE(rot_max, 45.0);
  EXPECT_LT(rot_min, -44.0);  // the full range is actually used
  EXPECT_GT(rot_max, 44.0);
  EXPECT_GE(s_min, 0.85);
  EXPECT_LE(s_max, 1.15);
  EXPECT_LE(t_max, 0.15);
  EXPECT_NEAR(rot_sum / n, 0.0, 1.0);
}

TEST(SampleAffine, DeterministicAndFixedDrawCount) {
  const AugmentConfig cfg;
  Rng a(3), b(3), c(3);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sample_affine(cfg, a), sample_affine(cfg, b));
  for (int i = 0; i < 50 * 4; ++i) c.uniform();
  EXPECT_EQ(a.uniform(), c.uniform());
}

TEST(ApplyAffine, IdentityOnSameSizeIsExactNormalization) {
  Rng rng(4);
  const auto img = random_image(9, 9, rng);
  const auto out = apply_affine(img, 9, 9, {}, 9);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(out[i], img[i] / 127.5 - 1.0);
}

TEST(ApplyAffine, ConstantImageRotated45) {
  const std::vector<std::uint8_t> img(16 * 16, 200);
  const auto out = apply_affine(img, 16, 16, {45.0, 0, 0, 1}, 16);
  const double inside = normalize_pixel(200);
  for (std::size_t y = 5; y < 11; ++y)
    for (std::size_t x = 5; x < 11; ++x) EXPECT_NEAR(out[y * 16 + x], inside, 1e-12);
  for (std::size_t idx : {std::size_t{0}, std::size_t{15}, std::size_t{240}, std::size_t{255}})
    EXPECT_EQ(out[idx], kFillValue);
}

TEST(ApplyAffine, RampAtScaleTwoMatchesDirectBilinear) {
  std::vector<std::uint8_t> img(16);
  std::vector<double> as_double(16);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      img[y * 4 + x] = static_cast<std::uint8_t>(20 * x + 50 * y);
      as_double[y * 4 + x] = img[y * 4 + x];
    }
  for (std::size_t out_size : {4u, 8u}) {
    const auto out = apply_affine(img, 4, 4, {0, 0, 0, 2.0}, out_size);
    const double n = static_cast<double>(out_size), k = 4.0 / n;
    for (std::size_t oy = 0; oy < out_size; ++oy)
      for (std::size_t ox = 0; ox < out_size; ++ox) {
        // Output pixel centre, zoomed 2x about the grid centre, in source pixel-index units.
        const double cx = ((ox + 0.5 - n / 2) / 2.0 + n / 2) * k - 0.5;
        const double cy = ((oy + 0.5 - n / 2) / 2.0 + n / 2) * k - 0.5;
        const double want = oracle::bilinear_at(as_double, 4, 4, cx, cy) / 127.5 - 1.0;
        EXPECT_NEAR(out[oy * out_size + ox], want, 1e-6) << out_size << " (" << ox << "," << oy << ")";
      }
  }
}

TEST(ApplyAffine, IdentityEqualsPlainResize) {
  Rng rng(5);
  const auto img = random_image(16, 16, rng);
  std::vector<double> as_double(img.begin(), img.end());
  const auto out = apply_affine(img, 16, 16, {}, 6);
  for (std::size_t oy = 0; oy < 6; ++oy)
    for (std::size_t ox = 0; ox < 6; ++ox) {
      const double sx = (ox + 0.5) * 16.0 / 6.0 - 0.5, sy = (oy + 0.5) * 16.0 / 6.0 - 0.5;
      EXPECT_NEAR(out[oy * 6 + ox], oracle::bilinear_at(as_double, 16, 16, sx, sy) / 127.5 - 1.0, 1e-12);
    }
}

TEST(ApplyAffine, TranslationShiftsContent) {
  std::vector<std::uint8_t> img(8 * 8, 0);
  img[3 * 8 + 3] = 255;
  const auto base = apply_affine(img, 8, 8, {}, 8);
  const auto moved = apply_affine(img, 8, 8, {0, 0.25, 0, 1}, 8);
  EXPECT_EQ(moved[3 * 8 + 5], base[3 * 8 + 3]);
  EXPECT_EQ(moved[3 * 8 + 0], kFillValue);  // uncovered strip on the left
}

TEST(ApplyAffine, OutputBoundedAndDeterministic) {
  Rng rng(6);
  const AugmentConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    const auto img = random_image(16, 16, rng);
    const auto p = sample_affine(cfg, rng);
    const auto a = apply_affine(img, 16, 16, p, 12);
    EXPECT_EQ(a, apply_affine(img, 16, 16, p, 12));
    for (double v : a) {
      ASSERT_GE(v, -1.0);
      ASSERT_LE(v, 1.0);
    }
  }
  EXPECT_THROW(apply_affine({}, 0, 0, {}, 4), ConfigError);
}

TEST(AugmentInto, DisabledIsResizeOnlyAndLeavesRngAlone) {
  Rng img_rng(7);
  const auto img = random_image(16, 16, img_rng);
  AugmentConfig cfg;
  cfg.enabled = false;
  cfg.target_size = 8;
  Rng rng(8), untouched(8);
  std::vector<double> out(64);
  augment_into(img, 16, 16, cfg, rng, out);
  EXPECT_EQ(out, apply_affine(img, 16, 16, {}, 8));
  EXPECT_EQ(rng.uniform(), untouched.uniform());
}

TEST(AugmentConfig, Validation) {
  AugmentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.max_rotation = 181;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.max_translate = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.scale_low = 1.2;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
