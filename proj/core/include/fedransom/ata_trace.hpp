#pragma once

// Typed views of RanSAP-layout ATA access logs.
//
// A run directory holds `ata_read.csv` (ts_sec,ts_usec,lba,bytes) and
// `ata_write.csv` (ts_sec,ts_usec,lba,bytes,entropy), no header row.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedransom {

/// Identity of a participating server (federation node).
class NodeId {
 public:
  NodeId() = default;
  explicit NodeId(std::string name) : name_(std::move(name)) {}

  const std::string& str() const noexcept { return name_; }
  bool empty() const noexcept { return name_.empty(); }

  auto operator<=>(const NodeId&) const = default;

 private:
  std::string name_;
};

enum class Label : std::uint8_t { benign = 0, ransomware = 1 };

constexpr int to_int(Label l) noexcept { return static_cast<int>(l); }
Label label_from_int(long long v);

struct ReadEvent {
  std::uint64_t ts_sec = 0;
  std::uint32_t ts_usec = 0;
  std::uint64_t lba = 0;
  std::uint64_t bytes = 0;

  /// Combined timestamp in integer microseconds.
  std::int64_t micros() const noexcept {
    return static_cast<std::int64_t>(ts_sec) * 1'000'000 + ts_usec;
  }

  bool operator==(const ReadEvent&) const = default;
};

struct WriteEvent {
  std::uint64_t ts_sec = 0;
  std::uint32_t ts_usec = 0;
  std::uint64_t lba = 0;
  std::uint64_t bytes = 0;
  double entropy = 0.0;

  std::int64_t micros() const noexcept {
    return static_cast<std::int64_t>(ts_sec) * 1'000'000 + ts_usec;
  }

  bool operator==(const WriteEvent&) const = default;
};

/// One execution of one piece of software on one server.
struct TraceRun {
  NodeId server;
  std::string software;
  std::string run_name;
  Label label = Label::benign;
  std::vector<ReadEvent> reads;
  std::vector<WriteEvent> writes;

  /// Throws DataError when both streams are empty or events are unsorted.
  void validate() const;
};

enum class OrderPolicy {
  sort,    // reorder by timestamp after ingestion
  strict,  // reject a file whose timestamps go backwards
};

struct ParseOptions {
  bool lenient = false;  // skip malformed lines instead of throwing
  OrderPolicy order = OrderPolicy::sort;
};

struct ParseWarning {
  std::size_t line = 0;
  std::string message;
};

template <typename Event>
struct ParseResult {
  std::vector<Event> events;
  std::vector<ParseWarning> warnings;
  bool reordered = false;
};

ParseResult<ReadEvent> parse_read_csv(std::istream& in, const ParseOptions& opts = {});
ParseResult<ReadEvent> parse_read_csv(std::string_view text, const ParseOptions& opts = {});
ParseResult<WriteEvent> parse_write_csv(std::istream& in, const ParseOptions& opts = {});
ParseResult<WriteEvent> parse_write_csv(std::string_view text, const ParseOptions& opts = {});

void write_read_csv(std::ostream& out, std::span<const ReadEvent> events);
void write_write_csv(std::ostream& out, std::span<const WriteEvent> events);

inline constexpr std::size_t kDefaultSectorSize = 512;

/// Normalized Shannon entropy of a sector's byte-value distribution:
/// -sum_v p_v log2(p_v) / log2(n), where p_v is the frequency of byte value v
/// among the n bytes. Byte data caps the result at 8 / log2(n).
/// Throws std::domain_error when n < 2.
double sector_entropy(std::span<const std::uint8_t> sector);

/// Maps software names to labels for a corpus.
class LabelTable {
 public:
  /// Benign and ransomware software named in the RanSAP collection.
  static LabelTable ransap_defaults();
  /// Reads `software,label` lines (optional header `software,label`).
  static LabelTable load(const std::filesystem::path& file);

  void set(std::string software, Label label);
  /// Throws DataError for names not in the table.
  Label lookup(const std::string& software) const;
  bool contains(const std::string& software) const;
  const std::map<std::string, Label>& entries() const { return labels_; }

  void save(const std::filesystem::path& file) const;

 private:
  std::map<std::string, Label> labels_;
};

inline constexpr std::string_view kLabelsManifest = "labels.csv";

struct CorpusLoadOptions {
  ParseOptions parse;
  /// Restrict to these servers; empty means every server directory.
  std::vector<NodeId> servers;
};

struct LoadedCorpus {
  std::vector<TraceRun> runs;
  std::vector<std::string> warnings;
};

/// Loads `<root>/<server>/<software>/<run>/ata_{read,write}.csv`. Labels come
/// from `<root>/labels.csv` when present, otherwise from the RanSAP defaults.
/// Directories are visited in sorted order.
LoadedCorpus load_corpus(const std::filesystem::path& root,
                         const CorpusLoadOptions& opts = {});

/// Writes one run's two CSV files into `dir` (created if needed).
void save_run(const std::filesystem::path& dir, const TraceRun& run);

}  // namespace fedransom

template <>
struct std::hash<fedransom::NodeId> {
  std::size_t operator()(const fedransom::NodeId& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
