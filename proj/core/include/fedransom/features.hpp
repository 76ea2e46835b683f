#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "fedransom/ata_trace.hpp"

namespace fedransom {

inline constexpr std::size_t kNumFeatures = 5;

using FeatureArray = std::array<double, kNumFeatures>;

/// Column order of the five window features.
enum class Feature : std::size_t {
  avg_entropy_write = 0,
  var_lba_write = 1,
  avg_write_throughput = 2,
  var_lba_read = 3,
  avg_read_throughput = 4,
};

std::string_view feature_name(std::size_t index);

/// One labeled time window. `x` holds the features in `Feature` order.
struct FeatureVector {
  FeatureArray x{};
  Label label = Label::benign;
  std::uint64_t window_index = 0;
  NodeId server;

  double operator[](Feature f) const { return x[static_cast<std::size_t>(f)]; }
  double& operator[](Feature f) { return x[static_cast<std::size_t>(f)]; }

  bool operator==(const FeatureVector&) const = default;
};

enum class EmptyWindowPolicy {
  emit_zeros,  // a window with no events still yields an all-zero vector
  skip,        // windows with neither reads nor writes are dropped
};

struct WindowConfig {
  double window_seconds = 30.0;
  /// Stride between window starts; equal to the window length for tumbling
  /// windows. Must not exceed the window length.
  double hop_seconds = 30.0;
  EmptyWindowPolicy empty_windows = EmptyWindowPolicy::emit_zeros;

  void validate() const;
};

/// Splits a run into windows [t0 + k*hop, t0 + k*hop + window) where t0 is the
/// run's first event. Windows are emitted for k = 0 .. floor(D / hop) with D
/// the time from first to last event, so every event lands in a window.
/// Means and population variances are computed two-pass in event order;
/// throughputs divide summed bytes by the window length in seconds.
std::vector<FeatureVector> extract_windows(const TraceRun& run, const WindowConfig& cfg = {});

/// Extracts every run in order and concatenates the windows.
std::vector<FeatureVector> extract_all(std::span<const TraceRun> runs, const WindowConfig& cfg = {});

inline constexpr std::string_view kFeatureCsvHeader =
    "avg_entropy_write,var_lba_write,avg_write_throughput,var_lba_read,"
    "avg_read_throughput,label,window_index,server_id";

/// Writes the header and one row per vector. Reals use the shortest
/// representation that parses back to the same double.
void write_features_csv(std::ostream& out, std::span<const FeatureVector> samples);
void save_features_csv(const std::filesystem::path& file, std::span<const FeatureVector> samples);

/// Reads the format written by `write_features_csv`. Throws ParseError.
std::vector<FeatureVector> read_features_csv(std::istream& in);
std::vector<FeatureVector> load_features_csv(const std::filesystem::path& file);

}  // namespace fedransom
