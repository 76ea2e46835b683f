#include "fedransom/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>

#include "fedransom/config.hpp"
#include "fedransom/errors.hpp"
#include "text_util.hpp"

namespace fedransom {

std::string_view feature_name(std::size_t index) {
  static constexpr std::array<std::string_view, kNumFeatures> kNames = {
      "avg_entropy_write", "var_lba_write", "avg_write_throughput", "var_lba_read", "avg_read_throughput"};
  return kNames.at(index);
}

void WindowConfig::validate() const {
  if (!(window_seconds > 0.0) || !std::isfinite(window_seconds)) {
    throw ConfigError("window length must be positive");
  }
  if (!(hop_seconds > 0.0) || !std::isfinite(hop_seconds)) throw ConfigError("hop must be positive");
  if (hop_seconds > window_seconds) throw ConfigError("hop must not exceed the window length");
  if (std::llround(hop_seconds * 1e6) < 1) throw ConfigError("hop shorter than one microsecond");
}

namespace {

template <typename Event>
double lba_variance(std::span<const Event> events) {
  if (events.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& e : events) sum += static_cast<double>(e.lba);
  const double mean = sum / static_cast<double>(events.size());
  double sq = 0.0;
  for (const auto& e : events) {
    const double d = static_cast<double>(e.lba) - mean;
    sq += d * d;
  }
  return sq / static_cast<double>(events.size());
}

template <typename Event>
double throughput(std::span<const Event> events, double window_seconds) {
  std::uint64_t bytes = 0;
  for (const auto& e : events) bytes += e.bytes;
  return static_cast<double>(bytes) / window_seconds;
}

double mean_entropy(std::span<const WriteEvent> writes) {
  if (writes.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& w : writes) sum += w.entropy;
  return sum / static_cast<double>(writes.size());
}

// Half-open [lo, hi) cursor over a time-sorted event vector.
template <typename Event>
struct Cursor {
  const std::vector<Event>& events;
  std::size_t lo = 0;
  std::size_t hi = 0;

  std::span<const Event> advance(std::int64_t start, std::int64_t end) {
    while (lo < events.size() && events[lo].micros() < start) ++lo;
    if (hi < lo) hi = lo;
    while (hi < events.size() && events[hi].micros() < end) ++hi;
    return std::span<const Event>(events.data() + lo, hi - lo);
  }
};

}  // namespace

std::vector<FeatureVector> extract_windows(const TraceRun& run, const WindowConfig& cfg) {
  cfg.validate();
  run.validate();

  std::int64_t t0 = INT64_MAX;
  std::int64_t t_last = INT64_MIN;
  if (!run.reads.empty()) {
    t0 = std::min(t0, run.reads.front().micros());
    t_last = std::max(t_last, run.reads.back().micros());
  }
  if (!run.writes.empty()) {
    t0 = std::min(t0, run.writes.front().micros());
    t_last = std::max(t_last, run.writes.back().micros());
  }

  const std::int64_t window_us = std::llround(cfg.window_seconds * 1e6);
  const std::int64_t hop_us = std::llround(cfg.hop_seconds * 1e6);
  const std::int64_t n_windows = (t_last - t0) / hop_us + 1;

  std::vector<FeatureVector> out;
  out.reserve(static_cast<std::size_t>(n_windows));
  Cursor<ReadEvent> reads{run.reads};
  Cursor<WriteEvent> writes{run.writes};
  for (std::int64_t k = 0; k < n_windows; ++k) {
    const std::int64_t start = t0 + k * hop_us;
    const std::int64_t end = start + window_us;
    auto r = reads.advance(start, end);
    auto w = writes.advance(start, end);
    if (cfg.empty_windows == EmptyWindowPolicy::skip && r.empty() && w.empty()) continue;

    FeatureVector fv;
    fv[Feature::avg_entropy_write] = mean_entropy(w);
    fv[Feature::var_lba_write] = lba_variance(w);
    fv[Feature::avg_write_throughput] = throughput(w, cfg.window_seconds);
    fv[Feature::var_lba_read] = lba_variance(r);
    fv[Feature::avg_read_throughput] = throughput(r, cfg.window_seconds);
    fv.label = run.label;
    fv.window_index = static_cast<std::uint64_t>(k);
    fv.server = run.server;
    out.push_back(std::move(fv));
  }
  return out;
}

std::vector<FeatureVector> extract_all(std::span<const TraceRun> runs, const WindowConfig& cfg) {
  std::vector<FeatureVector> out;
  for (const auto& run : runs) {
    auto w = extract_windows(run, cfg);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

void write_features_csv(std::ostream& out, std::span<const FeatureVector> samples) {
  out << kFeatureCsvHeader << '\n';
  for (const auto& s : samples) {
    for (double v : s.x) out << detail::format_double(v) << ',';
    out << to_int(s.label) << ',' << s.window_index << ',' << s.server.str() << '\n';
  }
}

void save_features_csv(const std::filesystem::path& file, std::span<const FeatureVector> samples) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write " + file.string());
  write_features_csv(out, samples);
}

std::vector<FeatureVector> read_features_csv(std::istream& in) {
  std::vector<FeatureVector> out;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::strip(line);
    if (view.empty()) continue;
    if (!header_seen) {
      if (view != kFeatureCsvHeader) throw ParseError(line_no, "unexpected feature CSV header");
      header_seen = true;
      continue;
    }
    auto fields = split(view, ',');
    if (fields.size() != kNumFeatures + 3) {
      throw ParseError(line_no, "expected " + std::to_string(kNumFeatures + 3) + " fields");
    }
    FeatureVector fv;
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      auto v = detail::parse_field<double>(fields[i]);
      if (!v || !std::isfinite(*v)) throw ParseError(line_no, std::string(feature_name(i)) + " is not a real number");
      fv.x[i] = *v;
    }
    auto label = detail::parse_field<long long>(fields[kNumFeatures]);
    if (!label || (*label != 0 && *label != 1)) throw ParseError(line_no, "label must be 0 or 1");
    fv.label = label_from_int(*label);
    auto idx = detail::parse_field<std::uint64_t>(fields[kNumFeatures + 1]);
    if (!idx) throw ParseError(line_no, "window_index is not a non-negative integer");
    fv.window_index = *idx;
    fv.server = NodeId(fields[kNumFeatures + 2]);
    out.push_back(std::move(fv));
  }
  if (!header_seen) throw ParseError(0, "missing feature CSV header");
  return out;
}

std::vector<FeatureVector> load_features_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  try {
    return read_features_csv(in);
  } catch (const ParseError& e) {
    throw DataError(file.string() + ": " + e.what());
  }
}

}  // namespace fedransom
