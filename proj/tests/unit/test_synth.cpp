#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "fedransom/errors.hpp"
#include "fedransom/features.hpp"
#include "fedransom/synth.hpp"
#include "test_support.hpp"

using namespace fedransom;
namespace fs = std::filesystem;

namespace {

ServerProfile plain_server(const std::string& name = "srv") { return ServerProfile{NodeId(name), {}, {}}; }

ProfileSpec short_profile(Label label, double entropy_mean) {
  ProfileSpec p;
  p.label = label;
  p.entropy_mean = entropy_mean;
  p.duration_seconds = 300;
  return p;
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), root).string()] = ss.str();
  }
  return files;
}

CorpusConfig short_corpus(double seconds) {
  auto cfg = CorpusConfig::defaults();
  cfg.benign.duration_seconds = seconds;
  cfg.ransomware.duration_seconds = seconds;
  return cfg;
}

}  // namespace

TEST(GenerateRun, ZeroReadRateGivesNoReads) {
  auto p = short_profile(Label::benign, 0.4);
  p.read_rate = 0;
  const auto run = generate_run(p, plain_server(), 1);
  EXPECT_TRUE(run.reads.empty());
  EXPECT_FALSE(run.writes.empty());
}

TEST(GenerateRun, DeterministicForSeed) {
  const auto p = short_profile(Label::ransomware, 0.9);
  const auto a = generate_run(p, plain_server(), 5);
  const auto b = generate_run(p, plain_server(), 5);
  std::ostringstream wa, wb, ra, rb;
  write_write_csv(wa, a.writes);
  write_write_csv(wb, b.writes);
  write_read_csv(ra, a.reads);
  write_read_csv(rb, b.reads);
  EXPECT_EQ(wa.str(), wb.str());
  EXPECT_EQ(ra.str(), rb.str());
  const auto c = generate_run(p, plain_server(), 6);
  std::ostringstream wc;
  write_write_csv(wc, c.writes);
  EXPECT_NE(wa.str(), wc.str());
}

TEST(GenerateRun, EventsSortedWithinDurationAndSectorSized) {
  const auto p = short_profile(Label::benign, 0.4);
  const auto run = generate_run(p, plain_server(), 8);
  EXPECT_NO_THROW(run.validate());
  const auto t0 = std::min(run.reads.front().micros(), run.writes.front().micros());
  for (const auto& w : run.writes) {
    EXPECT_LT(w.micros() - t0, static_cast<std::int64_t>(p.duration_seconds * 1e6));
    EXPECT_EQ(w.bytes % 512, 0u);
    EXPECT_GE(w.bytes, 512u);
    EXPECT_LT(w.lba, p.lba_range);
  }
}

TEST(GenerateRun, EntropiesStayInUnitInterval) {
  auto p = short_profile(Label::ransomware, 0.95);
  p.entropy_stddev = 0.5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (const auto& w : generate_run(p, plain_server(), seed).writes) {
      ASSERT_GE(w.entropy, 0.0);
      ASSERT_LE(w.entropy, 1.0);
    }
  }
}

TEST(GenerateRun, SequentialPatternIsNonDecreasing) {
  auto p = short_profile(Label::benign, 0.4);
  p.lba_pattern = LbaPattern::sequential;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto run = generate_run(p, plain_server(), seed);
    for (std::size_t i = 1; i < run.writes.size(); ++i) ASSERT_GE(run.writes[i].lba, run.writes[i - 1].lba);
    for (std::size_t i = 1; i < run.reads.size(); ++i) ASSERT_GE(run.reads[i].lba, run.reads[i - 1].lba);
  }
}

TEST(GenerateRun, EntropyProfilesSeparate) {
  const auto benign = short_profile(Label::benign, 0.4);
  const auto ransom = short_profile(Label::ransomware, 0.9);
  auto mean_window_entropy = [](const ProfileSpec& p) {
    double sum = 0;
    std::size_t n = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      for (const auto& fv : extract_windows(generate_run(p, ServerProfile{NodeId("s"), {}, {}}, seed))) {
        sum += fv[Feature::avg_entropy_write];
        ++n;
      }
    }
    return sum / static_cast<double>(n);
  };
  EXPECT_GT(mean_window_entropy(ransom) - mean_window_entropy(benign), 0.3);
}

TEST(GenerateRun, InvalidProfileRejected) {
  auto p = short_profile(Label::benign, 1.2);
  EXPECT_THROW(generate_run(p, plain_server(), 1), ConfigError);
  p.entropy_mean = 0.5;
  p.duration_seconds = 0;
  EXPECT_THROW(generate_run(p, plain_server(), 1), ConfigError);
  p.duration_seconds = 10;
  p.write_rate = -1;
  EXPECT_THROW(generate_run(p, plain_server(), 1), ConfigError);
}

TEST(ServerProfiles, HeterogeneityShowsInThroughput) {
  // Welch two-sample t statistic on per-window write throughput, alpha = 0.01.
  const auto cfg = short_corpus(600);
  std::map<std::string, std::vector<double>> per_server;
  for (const auto& run : generate_corpus_runs(cfg)) {
    for (const auto& fv : extract_windows(run)) per_server[run.server.str()].push_back(fv[Feature::avg_write_throughput]);
  }
  auto stats = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, s / static_cast<double>(v.size() - 1)};
  };
  const auto& hdd = per_server.at("win7-120gb-hdd");
  const auto& ssd = per_server.at("win7-120gb-ssd");
  const auto [m1, v1] = stats(hdd);
  const auto [m2, v2] = stats(ssd);
  const double t = (m2 - m1) / std::sqrt(v1 / static_cast<double>(hdd.size()) + v2 / static_cast<double>(ssd.size()));
  EXPECT_GT(std::abs(t), 2.576);
}

TEST(Corpus, DefaultLayoutCounts) {
  fixtures::TempDir dir;
  const auto summary = generate_corpus(short_corpus(60), dir.path() / "corpus");
  EXPECT_EQ(summary.runs, 480u);
  EXPECT_EQ(summary.csv_files, 960u);
  std::size_t csvs = 0, run_dirs = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir.path() / "corpus")) {
    if (e.path().extension() == ".csv" && e.path().filename() != kLabelsManifest) ++csvs;
    if (e.is_directory() && e.path().filename().string().starts_with("run-")) ++run_dirs;
  }
  EXPECT_EQ(csvs, 960u);
  EXPECT_EQ(run_dirs, 480u);
  const auto loaded = load_corpus(dir.path() / "corpus");
  EXPECT_EQ(loaded.runs.size(), 480u);
}

TEST(Corpus, RegenerationIsByteIdentical) {
  fixtures::TempDir dir;
  auto cfg = short_corpus(120);
  cfg.runs_per_software = 2;
  generate_corpus(cfg, dir.path() / "a");
  generate_corpus(cfg, dir.path() / "b");
  EXPECT_EQ(read_tree(dir.path() / "a"), read_tree(dir.path() / "b"));
}

TEST(Corpus, ExistingRunDirectoryRejected) {
  fixtures::TempDir dir;
  auto cfg = short_corpus(30);
  cfg.runs_per_software = 1;
  generate_corpus(cfg, dir.path());
  EXPECT_THROW(generate_corpus(cfg, dir.path()), DataError);
}

TEST(Corpus, SoftwareNameCollisionRejected) {
  auto cfg = short_corpus(30);
  cfg.software.push_back(cfg.software.front());
  EXPECT_THROW(cfg.validate(), DataError);
}

TEST(Corpus, DefaultsYieldAboutTwelveThousandTrainingWindowsPerNode) {
  const auto cfg = CorpusConfig::defaults();
  std::map<std::string, std::size_t> windows;
  for (const auto& run : generate_corpus_runs(cfg)) windows[run.server.str()] += extract_windows(run).size();
  ASSERT_EQ(windows.size(), 4u);
  for (const auto& [server, n] : windows) {
    const double train = 0.75 * static_cast<double>(n);
    EXPECT_GT(train, 11'000.0) << server;
    EXPECT_LT(train, 13'000.0) << server;
  }
}

TEST(CorpusConfigText, RoundTripsThroughKeyValues) {
  auto cfg = CorpusConfig::defaults();
  cfg.master_seed = 77;
  cfg.runs_per_software = 3;
  const auto text = cfg.to_kv().dump();
  const auto back = CorpusConfig::from_kv(KeyValueConfig::parse(text));
  EXPECT_EQ(back.to_kv().dump(), text);
  EXPECT_EQ(back.master_seed, 77u);
}

TEST(CorpusConfigText, OverridesApply) {
  const auto kv = KeyValueConfig::parse(
      "master_seed = 9\n"
      "servers = alpha, beta\n"
      "software = Good:0, Bad:1\n"
      "runs_per_software = 2\n"
      "ransomware.entropy_mean = 0.97\n"
      "server.beta.all.write_rate_multiplier = 3\n"
      "software.Good.lba_pattern = sequential\n");
  const auto cfg = CorpusConfig::from_kv(kv);
  ASSERT_EQ(cfg.servers.size(), 2u);
  EXPECT_EQ(cfg.servers[1].benign.write_rate_multiplier, 3.0);
  EXPECT_EQ(cfg.servers[1].ransomware.write_rate_multiplier, 3.0);
  EXPECT_EQ(cfg.ransomware.entropy_mean, 0.97);
  ASSERT_EQ(cfg.software.size(), 2u);
  EXPECT_EQ(cfg.profile_for(cfg.software[0]).lba_pattern, LbaPattern::sequential);
  EXPECT_EQ(cfg.labels().lookup("Bad"), Label::ransomware);
  EXPECT_THROW(CorpusConfig::from_kv(KeyValueConfig::parse("benign.colour = red\n")), ConfigError);
}
