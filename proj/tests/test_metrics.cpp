#include <gtest/gtest.h>

#include <cmath>

#include "oodbatch/errors.hpp"
#include "oodbatch/metrics.hpp"
#include "oodbatch/rng.hpp"
#include "support/oracles.hpp"

using namespace oodbatch;

namespace {

std::optional<double> auc(const std::vector<double>& s, const std::vector<int>& y) { return roc_auc(s, y); }

}  // namespace

TEST(RocAuc, WorkedExamples) {
  EXPECT_DOUBLE_EQ(*auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}), 0.75);
  EXPECT_DOUBLE_EQ(*auc({0.1, 0.2, 0.9, 0.95}, {0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(*auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(*auc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}), 0.0);
}

TEST(RocAuc, UndefinedAndInvalidInputs) {
  EXPECT_FALSE(auc({0.1, 0.2}, {1, 1}));
  EXPECT_FALSE(auc({0.1, 0.2}, {0, 0}));
  EXPECT_FALSE(auc({}, {}));
  EXPECT_THROW(auc({0.1, 0.2}, {0}), ConfigError);
  EXPECT_THROW(auc({0.1, 0.2}, {0, 2}), ConfigError);
}

TEST(RocAuc, MatchesPairwiseOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse grid so ties are common.
      s[i] = trial % 2 ? static_cast<double>(rng.below(5)) : rng.normal();
      y[i] = rng.bernoulli(0.4) ? 1 : 0;
    }
    const auto want = oracle::pairwise_auc(s, y);
    const auto got = auc(s, y);
    ASSERT_EQ(want.has_value(), got.has_value());
    if (want) ASSERT_NEAR(*got, *want, 1e-12);
  }
}

TEST(RocAuc, InvariantUnderMonotoneTransformAndPermutation) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 10 + rng.below(40);
    std::vector<double> s(n), t(n), neg(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.uniform(-3, 3);
      t[i] = std::exp(2.0 * s[i]) + 1.0;
      neg[i] = -s[i];
      y[i] = static_cast<int>(i % 3 == 0);
    }
    const double base = *auc(s, y);
    EXPECT_NEAR(*auc(t, y), base, 1e-12);
    EXPECT_NEAR(*auc(neg, y), 1.0 - base, 1e-12);

    const auto perm = seeded_permutation(n, 1000 + static_cast<std::uint64_t>(trial));
    std::vector<double> ps(n);
    std::vector<int> py(n);
    for (std::size_t i = 0; i < n; ++i) {
      ps[i] = s[perm[i]];
      py[i] = y[perm[i]];
    }
    EXPECT_NEAR(*auc(ps, py), base, 1e-12);
  }
}

TEST(MaskedReport, OnlyMaskedRowsCountAndMeanSkipsUndefined) {
  Matrix scores(4, 2), labels(4, 2), mask(4, 2);
  scores << 0.9, 0.1, 0.1, 0.2, 0.8, 0.3, 0.2, 0.4;
  labels << 1, 0, 0, 0, 1, 0, 0, 0;
  mask << 1, 1, 1, 1, 1, 1, 0, 1;
  const auto r = masked_auc_report(scores, labels, mask, TaskSet({"a", "b"}));
  ASSERT_TRUE(r.per_task[0]);
  EXPECT_DOUBLE_EQ(*r.per_task[0], 1.0);
  EXPECT_FALSE(r.per_task[1]);  // no positives
  ASSERT_TRUE(r.mean_auc);
  EXPECT_DOUBLE_EQ(*r.mean_auc, 1.0);
  EXPECT_EQ(r.n_pos, (std::vector<std::size_t>{2, 0}));
  EXPECT_EQ(r.n_neg, (std::vector<std::size_t>{1, 4}));

  // Flipping the score of a masked row must not move anything.
  scores(3, 0) = 100.0;
  EXPECT_EQ(masked_auc_report(scores, labels, mask, TaskSet({"a", "b"})), r);
}

TEST(Aggregate, SeedExamples) {
  const std::vector<double> six{0.91, 0.92, 0.82, 0.91, 0.92, 0.82};
  const auto a = summarize(six);
  EXPECT_NEAR(a.mean, 0.883333333333, 1e-9);
  // Sample std by hand: squared deviations sum to 0.012133..., over n - 1 = 5.
  EXPECT_NEAR(a.std, std::sqrt(0.0121333333333 / 5.0), 1e-9);
  EXPECT_NEAR(a.std, 0.04926, 1e-5);
  EXPECT_EQ(format_mean_std(a), "0.88 ± 0.05");

  const std::vector<double> two{0.8, 0.9};
  const auto b = summarize(two);
  EXPECT_NEAR(b.mean, 0.85, 1e-12);
  EXPECT_NEAR(b.std, 0.0707106781, 1e-9);

  const std::vector<double> one{0.7};
  EXPECT_EQ(summarize(one).std, 0.0);
  EXPECT_FALSE(summarize(std::span<const double>{}).defined());
}

TEST(Aggregate, ReportsSkipUndefinedTasks) {
  AucReport r1{{"a", "b"}, {0.8, std::nullopt}, 0.8, {1, 0}, {1, 2}};
  AucReport r2{{"a", "b"}, {0.6, 0.7}, 0.65, {1, 1}, {1, 1}};
  const std::vector<AucReport> reports{r1, r2};
  const auto agg = aggregate_seeds(reports);
  EXPECT_NEAR(agg.per_task[0].mean, 0.7, 1e-12);
  EXPECT_EQ(agg.per_task[1].values, (std::vector<double>{0.7}));
  EXPECT_NEAR(agg.mean_auc.mean, 0.725, 1e-12);

  AucReport other{{"x"}, {0.5}, 0.5, {1}, {1}};
  const std::vector<AucReport> mixed{r1, other};
  EXPECT_THROW(aggregate_seeds(mixed), ConfigError);
  EXPECT_THROW(aggregate_seeds(std::span<const AucReport>{}), ConfigError);
}

TEST(Format, TwoDecimalsRounded) {
  EXPECT_EQ(format_2dp(0.8833), "0.88");
  EXPECT_EQ(format_2dp(0.885), "0.89");
  EXPECT_EQ(format_2dp(0.049), "0.05");
  EXPECT_EQ(format_2dp(1.0), "1.00");
  EXPECT_EQ(format_2dp(0.0), "0.00");
}

TEST(ReportJson, FieldNamesAndRoundTrip) {
  AucReport r{{"Cardiomegaly", "Effusion"}, {0.75, std::nullopt}, 0.75, {3, 0}, {5, 8}};
  const Json j = report_to_json(r, "NIH_CHEX/MIMIC/PC", 42);
  EXPECT_EQ(j.dump(),
            R"({"split":"NIH_CHEX/MIMIC/PC","seed":42,"per_task":{"Cardiomegaly":0.75,"Effusion":null},)"
            R"("mean_auc":0.75,"n_pos":{"Cardiomegaly":3,"Effusion":0},"n_neg":{"Cardiomegaly":5,"Effusion":8}})");
  EXPECT_EQ(report_from_json(j), r);
}
