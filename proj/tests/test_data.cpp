#include <gtest/gtest.h>

#include <sstream>

#include "oodbatch/data.hpp"
#include "oodbatch/errors.hpp"
#include "oodbatch/metrics.hpp"
#include "oodbatch/nn.hpp"
#include "oodbatch/rng.hpp"
#include "oodbatch/sampler.hpp"
#include "support/oracles.hpp"

using namespace oodbatch;

namespace {

const char* kThreeRows =
    "id,image_ref,Cardiomegaly,Effusion,Edema,Consolidation\n"
    "a,0,1,0,,1\n"
    "b,1,0,0,0,0\n"
    "c,2,,,1,\n";

ImagePack tiny_pack(std::uint32_t count) {
  ImagePack p;
  p.height = 2;
  p.width = 3;
  p.count = count;
  for (std::size_t i = 0; i < count * 6; ++i) p.pixels.push_back(static_cast<std::uint8_t>(i * 7));
  return p;
}

std::filesystem::path write_pair(const std::string& test, const std::string& csv, const ImagePack& pack) {
  const auto dir = oracle::scratch_dir(test);
  std::ofstream(dir / "env.csv", std::ios::binary) << csv;
  std::ofstream pf(dir / "env.xrpk", std::ios::binary);
  write_pack(pf, pack);
  return dir;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Manifest, LoadsThreeRowsWithPack) {
  const auto dir = write_pair("three_rows", kThreeRows, tiny_pack(3));
  const auto [m, pack] = load_manifest(dir / "env.csv", dir / "env.xrpk");
  EXPECT_EQ(m.name, "env");
  ASSERT_EQ(m.records.size(), 3u);
  EXPECT_EQ(pack.count, 3u);
  EXPECT_EQ(m.tasks, TaskSet());
  EXPECT_EQ(m.records[0].labels,
            (LabelVector{Label::positive, Label::negative, Label::missing, Label::positive}));
  EXPECT_EQ(m.records[2].labels, (LabelVector{Label::missing, Label::missing, Label::positive, Label::missing}));
}

TEST(Manifest, ImageRefOutOfRangeReportsLine) {
  const std::string csv = "id,image_ref,T\na,0,1\nb,5,0\nc,1,1\n";
  const auto dir = write_pair("bad_ref", csv, tiny_pack(3));
  try {
    load_manifest(dir / "env.csv", dir / "env.xrpk");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("image_ref out of range"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Manifest, ParseErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& csv) {
    std::istringstream in(csv);
    try {
      read_manifest(in, "x");
    } catch (const FormatError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(line_of("name,image_ref,T\n"), 1u);
  EXPECT_EQ(line_of("id,image_ref\n"), 1u);
  EXPECT_EQ(line_of("id,image_ref,T,T\n"), 1u);
  EXPECT_EQ(line_of("id,image_ref,T\na,0,1\nb,1\n"), 3u);
  EXPECT_EQ(line_of("id,image_ref,T\na,0,2\n"), 2u);
  EXPECT_EQ(line_of("id,image_ref,T\na,0,1\na,1,0\n"), 3u);
  EXPECT_EQ(line_of("id,image_ref,T\na,-1,1\n"), 2u);
  EXPECT_EQ(line_of(""), 1u);
  EXPECT_NE(error_of([] {
              std::istringstream in("id,image_ref,T\na,0,yes\n");
              read_manifest(in, "x");
            }).find("outside {0,1,\"\"}"),
            std::string::npos);
}

TEST(Manifest, CanonicalRoundTripIsByteIdentical) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::ostringstream csv;
    const std::size_t k = 1 + rng.below(5);
    csv << "id,image_ref";
    for (std::size_t t = 0; t < k; ++t) csv << ",task" << t;
    csv << '\n';
    const std::size_t rows = rng.below(20);
    for (std::size_t r = 0; r < rows; ++r) {
      csv << "r" << r << ',' << rng.below(1000);
      for (std::size_t t = 0; t < k; ++t) {
        const auto v = rng.below(3);
        csv << ',' << (v == 0 ? "0" : v == 1 ? "1" : "");
      }
      csv << '\n';
    }
    std::istringstream in(csv.str());
    std::ostringstream out;
    write_manifest(out, read_manifest(in, "m"));
    ASSERT_EQ(out.str(), csv.str());
  }
}

TEST(Pack, RoundTripAndHeaderLayout) {
  const ImagePack p = tiny_pack(4);
  std::ostringstream out;
  write_pack(out, p);
  const std::string bytes = out.str();
  ASSERT_EQ(bytes.size(), 14u + 24u);
  EXPECT_EQ(bytes.substr(0, 4), "XRPK");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);  // version, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[5]), 0u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 2u);  // height
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 3u);  // width
  EXPECT_EQ(static_cast<unsigned char>(bytes[10]), 4u);  // count
  std::istringstream in(bytes);
  EXPECT_EQ(read_pack(in), p);
}

TEST(Pack, RejectsCorruptInput) {
  std::ostringstream out;
  write_pack(out, tiny_pack(2));
  const std::string good = out.str();
  auto read = [](std::string bytes) {
    std::istringstream in(bytes);
    read_pack(in);
  };
  EXPECT_THROW(read("XRPQ" + good.substr(4)), FormatError);
  EXPECT_THROW(read(good.substr(0, good.size() - 1)), FormatError);
  EXPECT_THROW(read(good + "x"), FormatError);
  std::string v2 = good;
  v2[4] = 2;
  EXPECT_THROW(read(v2), FormatError);
}

TEST(Subset, IdentityPrefixAndErrors) {
  DatasetManifest m;
  m.name = "m";
  m.tasks = TaskSet({"t"});
  for (std::uint32_t i = 0; i < 10; ++i) m.records.push_back({"r" + std::to_string(i), i, {Label::positive}});
  EXPECT_EQ(subset_sequential(m, 10), m);
  const auto s = subset_sequential(m, 3);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.records[0].id, "r0");
  EXPECT_EQ(s.records[2].id, "r2");
  EXPECT_EQ(subset_sequential(s, 3), s);
  EXPECT_THROW(subset_sequential(m, 11), ConfigError);
  EXPECT_THROW(subset_sequential(m, 0), ConfigError);
}

TEST(Subset, NestedPrefixesCompose) {
  DatasetManifest m;
  m.tasks = TaskSet({"t"});
  for (std::uint32_t i = 0; i < 40; ++i) m.records.push_back({"r" + std::to_string(i), i, {Label::negative}});
  for (std::size_t a = 1; a <= 40; a += 3)
    for (std::size_t b = 1; b <= a; b += 2) ASSERT_EQ(subset_sequential(subset_sequential(m, a), b), subset_sequential(m, b));
}

TEST(Subset, PaperScaleTrainingSubset) {
  DatasetManifest m;
  m.name = "NIH";
  m.tasks = TaskSet();
  for (std::uint32_t i = 0; i < 67310; ++i)
    m.records.push_back({std::to_string(i), i, LabelVector(4, Label::negative)});
  const auto s = subset_sequential(m, 27520);
  EXPECT_EQ(s.size(), 27520u);
  EXPECT_EQ(s.records.back().id, "27519");
}

TEST(ClassCounts, SmallAndEmpty) {
  DatasetManifest m;
  m.tasks = TaskSet({"t"});
  for (Label l : {Label::positive, Label::negative, Label::negative, Label::missing})
    m.records.push_back({"r" + std::to_string(m.records.size()), 0, {l}});
  EXPECT_EQ(class_counts(m), (std::vector<ClassCount>{{1, 2, 1}}));

  DatasetManifest empty;
  EXPECT_EQ(class_counts(empty), (std::vector<ClassCount>(4, ClassCount{0, 0, 0})));
}

TEST(ClassCounts, MatchRecountOfWrittenCsv) {
  SynthConfig cfg;
  cfg.n_envs = 2;
  cfg.n_per_env = 1000;
  cfg.spurious_strength = {0.5, -0.5};
  cfg.seed = 3;
  const auto env = generate_synthetic(cfg).front();
  std::ostringstream csv;
  write_manifest(csv, env.manifest);

  // Second pass: count raw tokens in the CSV text.
  std::vector<ClassCount> recount(4);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
    f.resize(6);
    for (std::size_t t = 0; t < 4; ++t) {
      if (f[2 + t] == "1") ++recount[t].n_positive;
      else if (f[2 + t] == "0") ++recount[t].n_negative;
      else ++recount[t].n_missing;
    }
  }
  EXPECT_EQ(class_counts(env.manifest), recount);
  for (const auto& c : recount) EXPECT_EQ(c.n_positive + c.n_negative + c.n_missing, 1000u);
}

TEST(Synthetic, DeterministicAndPure) {
  SynthConfig cfg;
  cfg.n_per_env = 64;
  cfg.seed = 99;
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t e = 0; e < a.size(); ++e) {
    std::ostringstream ma, mb, pa, pb;
    write_manifest(ma, a[e].manifest);
    write_manifest(mb, b[e].manifest);
    write_pack(pa, a[e].pack);
    write_pack(pb, b[e].pack);
    EXPECT_EQ(ma.str(), mb.str());
    EXPECT_EQ(pa.str(), pb.str());
  }
  cfg.seed = 100;
  EXPECT_NE(generate_synthetic(cfg)[0].pack, a[0].pack);
}

TEST(Synthetic, ValidatesConfig) {
  SynthConfig cfg;
  cfg.n_envs = 3;
  cfg.spurious_strength = {0.9, -0.9};
  EXPECT_EQ(error_of([&] { generate_synthetic(cfg); }), "spurious length must equal envs");
  cfg.n_envs = 1;
  cfg.spurious_strength = {0.1};
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.missing_rate = 1.0;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
}

TEST(Synthetic, RegionCorrelationsFollowConfiguredSigns) {
  SynthConfig cfg;
  cfg.n_per_env = 600;
  cfg.noise_std = 0.1;
  cfg.core_strength = 0.6;
  cfg.spurious_strength = {0.8, -0.8, 0.3, -0.3};
  cfg.missing_rate = 0.0;
  cfg.seed = 5;
  for (const auto& env : generate_synthetic(cfg)) {
    const double sign = cfg.spurious_strength[std::stoul(env.name().substr(1))] > 0 ? 1.0 : -1.0;
    for (std::size_t t = 0; t < 4; ++t) {
      std::vector<double> corner, core, y;
      for (std::size_t i = 0; i < env.size(); ++i) {
        corner.push_back(region_mean(env.pack, i, corner_region(16, t)));
        core.push_back(region_mean(env.pack, i, core_region(16, t)));
        y.push_back(env.manifest.records[i].labels[t] == Label::positive ? 1.0 : 0.0);
      }
      EXPECT_GT(sign * oracle::correlation(corner, y), 0.0) << env.name() << " task " << t;
      EXPECT_GT(oracle::correlation(core, y), 0.0) << env.name() << " task " << t;
    }
  }
}

TEST(Synthetic, NoSignalConfigurationCarriesNoLabelInformation) {
  SynthConfig cfg;
  cfg.n_envs = 2;
  cfg.n_per_env = 4000;
  cfg.core_strength = 0.0;
  cfg.spurious_strength = {0.0, 0.0};
  cfg.noise_std = 0.0;
  cfg.missing_rate = 0.0;
  const auto env = generate_synthetic(cfg).front();
  for (std::size_t t = 0; t < 4; ++t) {
    std::vector<double> score;
    std::vector<int> y;
    for (std::size_t i = 0; i < env.size(); ++i) {
      score.push_back(region_mean(env.pack, i, core_region(16, t)) + region_mean(env.pack, i, corner_region(16, t)));
      y.push_back(env.manifest.records[i].labels[t] == Label::positive ? 1 : 0);
    }
    EXPECT_NEAR(*roc_auc(score, y), 0.5, 0.04);
  }
}

TEST(Synthetic, ReversedSpuriousFeatureFlipsTransferAuc) {
  SynthConfig cfg;
  cfg.n_envs = 2;
  cfg.n_per_env = 800;
  cfg.spurious_strength = {0.9, -0.9};
  cfg.seed = 21;
  const auto train_env = generate_synthetic(cfg)[0];
  cfg.core_strength = 0.0;  // env 1's spurious-only variant
  const auto probe_env = generate_synthetic(cfg)[1];

  ModelState state = init_model({ModelKind::logistic, 256, 0, 4}, 1);
  const Batch train = full_environment_batch(train_env, 0, 16);
  OptimConfig opt;
  opt.learning_rate = 0.01;
  const LossWeights w = pos_weights_from_counts(class_counts(train_env.manifest));
  for (int step = 0; step < 300; ++step) {
    const auto loss = wbce_loss(forward(state, train.features), train.labels, train.mask, w);
    adam_step(state, backward(state, train.features, loss.grad), opt);
  }
  const Batch probe = full_environment_batch(probe_env, 0, 16);
  const auto report = masked_auc_report(forward(state, probe.features), probe.labels, probe.mask, TaskSet());
  ASSERT_TRUE(report.mean_auc);
  EXPECT_LT(*report.mean_auc, 0.5);
}

TEST(Environment, SaveLoadRoundTrip) {
  SynthConfig cfg;
  cfg.n_per_env = 10;
  const auto envs = generate_synthetic(cfg);
  const auto dir = oracle::scratch_dir("env_roundtrip");
  save_environment(dir, envs[1]);
  const auto back = load_environment(dir, "e1");
  EXPECT_EQ(back.manifest.records, envs[1].manifest.records);
  EXPECT_EQ(back.pack, envs[1].pack);
}
