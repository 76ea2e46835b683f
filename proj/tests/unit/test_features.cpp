#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "fedransom/errors.hpp"
#include "fedransom/features.hpp"
#include "test_support.hpp"
#include "window_oracle.hpp"

using namespace fedransom;
using fedransom::fixtures::make_run;
using fedransom::fixtures::random_run;
using fedransom::fixtures::windows_oracle;

namespace {

WriteEvent write_at(double seconds, std::uint64_t lba, std::uint64_t bytes, double entropy) {
  const auto us = static_cast<std::int64_t>(seconds * 1e6);
  return {static_cast<std::uint64_t>(us / 1'000'000), static_cast<std::uint32_t>(us % 1'000'000), lba, bytes, entropy};
}

ReadEvent read_at(double seconds, std::uint64_t lba, std::uint64_t bytes) {
  const auto us = static_cast<std::int64_t>(seconds * 1e6);
  return {static_cast<std::uint64_t>(us / 1'000'000), static_cast<std::uint32_t>(us % 1'000'000), lba, bytes};
}


}  // namespace

TEST(Windows, EntropyMeanOfMembers) {
  const auto run = make_run({}, {write_at(0.0, 1, 512, 0.2), write_at(1.0, 1, 512, 0.4), write_at(2.0, 1, 512, 0.6)});
  const auto w = extract_windows(run);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_NEAR(w[0][Feature::avg_entropy_write], 0.4, 1e-15);
}

TEST(Windows, ConstantLbaHasZeroVariance) {
  const auto run = make_run({}, {write_at(0.0, 10, 512, 0.1), write_at(1.0, 10, 512, 0.1), write_at(2.0, 10, 512, 0.1)});
  EXPECT_EQ(extract_windows(run)[0][Feature::var_lba_write], 0.0);
}

TEST(Windows, ThroughputIsBytesOverWindowLength) {
  const auto run = make_run({}, {write_at(0.0, 1, 1024, 0.1), write_at(5.0, 2, 2048, 0.1)});
  EXPECT_DOUBLE_EQ(extract_windows(run)[0][Feature::avg_write_throughput], 102.4);
}

TEST(Windows, ReadLbaVarianceIsPopulationVariance) {
  const auto run = make_run({read_at(0.0, 0, 512), read_at(1.0, 10, 512)}, {});
  EXPECT_EQ(extract_windows(run)[0][Feature::var_lba_read], 25.0);
}

TEST(Windows, HundredTwentySecondRunHasFourWindows) {
  std::vector<WriteEvent> writes;
  for (int s = 0; s < 120; ++s) writes.push_back(write_at(s + 0.5, 1, 512, 0.5));
  const auto w = extract_windows(make_run({}, writes));
  ASSERT_EQ(w.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(w[k].window_index, k);
}

TEST(Windows, EmptySideEmitsZeros) {
  // Writes only in window 0, reads only in window 2; window 1 is empty.
  const auto run = make_run({read_at(65.0, 7, 4096)}, {write_at(0.0, 3, 512, 0.9), write_at(1.0, 9, 512, 0.7)});
  const auto w = extract_windows(run);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0][Feature::var_lba_read], 0.0);
  EXPECT_EQ(w[0][Feature::avg_read_throughput], 0.0);
  for (std::size_t f = 0; f < kNumFeatures; ++f) EXPECT_EQ(w[1].x[f], 0.0);
  EXPECT_EQ(w[2][Feature::avg_entropy_write], 0.0);
  EXPECT_EQ(w[2][Feature::var_lba_write], 0.0);
  EXPECT_EQ(w[2][Feature::avg_write_throughput], 0.0);
  EXPECT_GT(w[2][Feature::avg_read_throughput], 0.0);
}

TEST(Windows, SkipPolicyDropsFullyEmptyWindows) {
  const auto run = make_run({read_at(65.0, 7, 4096)}, {write_at(0.0, 3, 512, 0.9)});
  WindowConfig cfg;
  cfg.empty_windows = EmptyWindowPolicy::skip;
  const auto w = extract_windows(run, cfg);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].window_index, 0u);
  EXPECT_EQ(w[1].window_index, 2u);
}

TEST(Windows, SlidingWindowsOverlap) {
  const auto run = make_run({}, {write_at(0.0, 1, 512, 0.2), write_at(20.0, 1, 512, 0.6), write_at(40.0, 1, 512, 1.0)});
  WindowConfig cfg;
  cfg.window_seconds = 30;
  cfg.hop_seconds = 15;
  const auto w = extract_windows(run, cfg);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_NEAR(w[0][Feature::avg_entropy_write], 0.4, 1e-15);
  EXPECT_NEAR(w[1][Feature::avg_entropy_write], 0.8, 1e-15);
  EXPECT_NEAR(w[2][Feature::avg_entropy_write], 1.0, 1e-15);
}

TEST(Windows, InvalidConfigRejected) {
  const auto run = make_run({}, {write_at(0.0, 1, 512, 0.2)});
  WindowConfig cfg;
  cfg.hop_seconds = 60;
  EXPECT_THROW(extract_windows(run, cfg), ConfigError);
  cfg.window_seconds = 0;
  EXPECT_THROW(extract_windows(run, cfg), ConfigError);
}

TEST(Windows, MatchesBruteForceOracle) {
  std::mt19937_64 rng(77);
  const WindowConfig configs[] = {
      {30, 30, EmptyWindowPolicy::emit_zeros}, {30, 30, EmptyWindowPolicy::skip}, {30, 10, EmptyWindowPolicy::emit_zeros},
      {7.5, 2.5, EmptyWindowPolicy::skip}};
  for (int i = 0; i < 60; ++i) {
    const auto run = random_run(rng);
    for (const auto& cfg : configs) {
      const auto got = extract_windows(run, cfg);
      const auto want = windows_oracle(run, cfg);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t k = 0; k < got.size(); ++k) {
        EXPECT_EQ(got[k].window_index, want[k].window_index);
        for (std::size_t f = 0; f < kNumFeatures; ++f) EXPECT_EQ(got[k].x[f], want[k].x[f]) << "feature " << f;
      }
    }
  }
}

TEST(WindowProperties, TimeTranslationInvariant) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 30; ++i) {
    const auto run = random_run(rng);
    auto shifted = run;
    const std::uint64_t shift_sec = rng() % 100'000;
    for (auto& r : shifted.reads) r.ts_sec += shift_sec;
    for (auto& w : shifted.writes) w.ts_sec += shift_sec;
    const auto a = extract_windows(run);
    const auto b = extract_windows(shifted);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].x, b[k].x);
  }
}

TEST(WindowProperties, DoublingWindowNeverAddsWindows) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 30; ++i) {
    const auto run = random_run(rng);
    for (double len : {5.0, 30.0, 45.0}) {
      const auto a = extract_windows(run, {len, len, EmptyWindowPolicy::emit_zeros});
      const auto b = extract_windows(run, {2 * len, 2 * len, EmptyWindowPolicy::emit_zeros});
      EXPECT_LE(b.size(), a.size());
    }
  }
}

TEST(WindowProperties, EntropyMeanWithinMemberRange) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 30; ++i) {
    const auto run = random_run(rng);
    const auto w = extract_windows(run);
    const auto t0 = std::min(run.reads.empty() ? INT64_MAX : run.reads.front().micros(),
                             run.writes.empty() ? INT64_MAX : run.writes.front().micros());
    for (const auto& fv : w) {
      const auto lo = t0 + static_cast<std::int64_t>(fv.window_index) * 30'000'000;
      double mn = 2, mx = -1;
      for (const auto& e : run.writes) {
        if (e.micros() >= lo && e.micros() < lo + 30'000'000) {
          mn = std::min(mn, e.entropy);
          mx = std::max(mx, e.entropy);
        }
      }
      if (mx < 0) continue;
      EXPECT_GE(fv[Feature::avg_entropy_write], mn - 1e-15);
      EXPECT_LE(fv[Feature::avg_entropy_write], mx + 1e-15);
    }
  }
}

TEST(FeatureCsv, RoundTripIsExact) {
  std::mt19937_64 rng(12);
  std::vector<FeatureVector> samples;
  for (int i = 0; i < 200; ++i) {
    FeatureArray x;
    for (auto& v : x) v = std::uniform_real_distribution<double>(-1e12, 1e12)(rng);
    samples.push_back(fixtures::sample(x, i % 3 ? Label::benign : Label::ransomware, "win7-120gb-ssd", i));
  }
  std::stringstream ss;
  write_features_csv(ss, samples);
  const auto back = read_features_csv(ss);
  ASSERT_EQ(back.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(back[i].x, samples[i].x);
    EXPECT_EQ(back[i].label, samples[i].label);
    EXPECT_EQ(back[i].window_index, samples[i].window_index);
    EXPECT_EQ(back[i].server, samples[i].server);
  }
}

TEST(FeatureCsv, BadHeaderRejected) {
  std::stringstream ss("a,b,c\n");
  EXPECT_THROW(read_features_csv(ss), ParseError);
}
