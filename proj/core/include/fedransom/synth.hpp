#pragma once

// Synthetic RanSAP-like traces with tunable benign and ransomware behaviour.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedransom/ata_trace.hpp"
#include "fedransom/config.hpp"

namespace fedransom {

enum class LbaPattern { sequential, uniform_random, clustered };

std::string_view to_string(LbaPattern p);
LbaPattern lba_pattern_from_string(std::string_view s);

struct ProfileSpec {
  Label label = Label::benign;
  double entropy_mean = 0.4;
  double entropy_stddev = 0.1;
  double write_rate = 2.0;  // events per second
  double read_rate = 2.0;
  LbaPattern lba_pattern = LbaPattern::clustered;
  std::size_t n_clusters = 8;
  double cluster_spread = 2.0e5;  // blocks
  std::uint64_t lba_range = 250'000'000;  // blocks addressable by the pattern
  double bytes_mean = 8192.0;
  double bytes_stddev = 4096.0;
  double duration_seconds = 3990.0;

  void validate() const;
};

/// Multiplicative/additive adjustments one server applies to a profile.
struct ProfileOverrides {
  double write_rate_multiplier = 1.0;
  double read_rate_multiplier = 1.0;
  double bytes_multiplier = 1.0;
  double lba_range_multiplier = 1.0;
  double spread_multiplier = 1.0;
  double entropy_shift = 0.0;
};

struct ServerProfile {
  NodeId server;
  ProfileOverrides benign;
  ProfileOverrides ransomware;

  const ProfileOverrides& overrides_for(Label l) const {
    return l == Label::ransomware ? ransomware : benign;
  }
};

/// Profile with the server's overrides applied; the result is validated.
ProfileSpec apply_server(const ProfileSpec& base, const ServerProfile& server);

/// Exponential inter-arrival times over [0, duration) from a start instant
/// derived from the seed; truncated-normal write entropies in [0, 1]; LBAs per
/// pattern; sizes rounded to whole 512-byte sectors.
TraceRun generate_run(const ProfileSpec& profile, const ServerProfile& server, std::uint64_t seed,
                      std::string software = {}, std::string run_name = {});

/// Per-software behaviour on top of the label's base profile. Unset fields
/// fall back to the base profile.
struct SoftwareSpec {
  std::string name;
  Label label = Label::benign;
  std::optional<double> entropy_mean;
  std::optional<double> entropy_stddev;
  std::optional<double> write_rate;
  std::optional<double> read_rate;
  std::optional<double> bytes_mean;
  std::optional<LbaPattern> lba_pattern;
  std::optional<double> cluster_spread;
};

struct CorpusConfig {
  std::uint64_t master_seed = 1;
  std::vector<ServerProfile> servers;
  std::vector<SoftwareSpec> software;
  std::size_t runs_per_software = 10;
  ProfileSpec benign;
  ProfileSpec ransomware;
  /// Relative per-run jitter of rates and sizes (lognormal sigma).
  double run_jitter = 0.15;

  /// Four servers (two HDD, two SSD at 120/250 GB), the twelve RanSAP
  /// software names, ten runs each: ~16k windows per server.
  static CorpusConfig defaults();
  /// Starts from `defaults()` and applies the keys present in `kv`.
  static CorpusConfig from_kv(const KeyValueConfig& kv);
  static CorpusConfig load(const std::filesystem::path& file);
  KeyValueConfig to_kv() const;

  ProfileSpec profile_for(const SoftwareSpec& sw) const;
  LabelTable labels() const;
  void validate() const;
};

/// Seed for one run, derived from the master seed and its coordinates.
std::uint64_t run_seed(std::uint64_t master_seed, const NodeId& server, const std::string& software,
                       std::size_t run_index);

std::string run_dir_name(std::size_t run_index);

/// All runs in server, software, run order.
std::vector<TraceRun> generate_corpus_runs(const CorpusConfig& cfg);

struct CorpusSummary {
  std::size_t runs = 0;
  std::size_t csv_files = 0;
};

/// Writes `<out>/<server>/<software>/run-<k>/ata_{read,write}.csv`, the labels
/// manifest and `corpus.cfg`. Throws DataError if a run directory already
/// exists or two software entries share a name.
CorpusSummary generate_corpus(const CorpusConfig& cfg, const std::filesystem::path& out);

}  // namespace fedransom
