#include "fedransom/ata_trace.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "fedransom/config.hpp"
#include "fedransom/errors.hpp"
#include "text_util.hpp"

namespace fedransom {

namespace fs = std::filesystem;

Label label_from_int(long long v) {
  if (v == 0) return Label::benign;
  if (v == 1) return Label::ransomware;
  throw DataError("label must be 0 or 1, got " + std::to_string(v));
}

void TraceRun::validate() const {
  if (reads.empty() && writes.empty()) {
    throw DataError("run " + server.str() + "/" + software + "/" + run_name + " has no events");
  }
  auto by_time = [](const auto& a, const auto& b) { return a.micros() < b.micros(); };
  if (!std::is_sorted(reads.begin(), reads.end(), by_time) ||
      !std::is_sorted(writes.begin(), writes.end(), by_time)) {
    throw DataError("run " + server.str() + "/" + software + "/" + run_name + " has unsorted events");
  }
}

namespace {

constexpr std::size_t kMaxFields = 5;

struct Fields {
  std::array<std::string_view, kMaxFields> v;
  std::size_t n = 0;
};

// Returns false when there are more than kMaxFields fields.
bool split_fields(std::string_view line, Fields& out) {
  out.n = 0;
  std::size_t start = 0;
  while (true) {
    if (out.n == kMaxFields) return false;
    const auto pos = line.find(',', start);
    out.v[out.n++] = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    if (pos == std::string_view::npos) return true;
    start = pos + 1;
  }
}

// Parses the shared ts_sec, ts_usec, lba, bytes prefix. Returns an error
// message or an empty string.
template <typename Event>
std::string parse_common(const Fields& f, Event& e) {
  auto sec = detail::parse_field<std::uint64_t>(f.v[0]);
  auto usec = detail::parse_field<std::uint32_t>(f.v[1]);
  auto lba = detail::parse_field<std::uint64_t>(f.v[2]);
  auto bytes = detail::parse_field<std::uint64_t>(f.v[3]);
  if (!sec) return "ts_sec is not a non-negative integer";
  if (!usec) return "ts_usec is not a non-negative integer";
  if (*usec > 999'999) return "ts_usec out of range [0, 999999]";
  if (!lba) return "lba is not a non-negative integer";
  if (!bytes) return "bytes is not a non-negative integer";
  if (*bytes == 0) return "bytes must be positive";
  e.ts_sec = *sec;
  e.ts_usec = *usec;
  e.lba = *lba;
  e.bytes = *bytes;
  return {};
}

std::string parse_line(const Fields& f, ReadEvent& e) {
  if (f.n != 4) return "expected 4 fields, got " + std::to_string(f.n);
  return parse_common(f, e);
}

std::string parse_line(const Fields& f, WriteEvent& e) {
  if (f.n != 5) return "expected 5 fields, got " + std::to_string(f.n);
  if (auto err = parse_common(f, e); !err.empty()) return err;
  auto ent = detail::parse_field<double>(f.v[4]);
  if (!ent || !std::isfinite(*ent)) return "entropy is not a real number";
  if (*ent < 0.0 || *ent > 1.0) return "entropy " + std::string(detail::strip(f.v[4])) + " outside [0, 1]";
  e.entropy = *ent;
  return {};
}

template <typename Event>
ParseResult<Event> parse_events(std::istream& in, const ParseOptions& opts) {
  ParseResult<Event> result;
  std::string line;
  std::size_t line_no = 0;
  Fields fields;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::strip(line);
    if (view.empty()) continue;
    Event e;
    std::string err = split_fields(view, fields) ? parse_line(fields, e) : "too many fields";
    if (!err.empty()) {
      if (!opts.lenient) throw ParseError(line_no, err);
      result.warnings.push_back({line_no, err});
      continue;
    }
    if (!result.events.empty() && e.micros() < result.events.back().micros()) {
      if (opts.order == OrderPolicy::strict) throw ParseError(line_no, "timestamp goes backwards");
      result.reordered = true;
    }
    result.events.push_back(e);
  }
  if (result.reordered) {
    std::stable_sort(result.events.begin(), result.events.end(),
                     [](const Event& a, const Event& b) { return a.micros() < b.micros(); });
  }
  return result;
}

}  // namespace

ParseResult<ReadEvent> parse_read_csv(std::istream& in, const ParseOptions& opts) {
  return parse_events<ReadEvent>(in, opts);
}

ParseResult<ReadEvent> parse_read_csv(std::string_view text, const ParseOptions& opts) {
  std::istringstream in{std::string(text)};
  return parse_events<ReadEvent>(in, opts);
}

ParseResult<WriteEvent> parse_write_csv(std::istream& in, const ParseOptions& opts) {
  return parse_events<WriteEvent>(in, opts);
}

ParseResult<WriteEvent> parse_write_csv(std::string_view text, const ParseOptions& opts) {
  std::istringstream in{std::string(text)};
  return parse_events<WriteEvent>(in, opts);
}

void write_read_csv(std::ostream& out, std::span<const ReadEvent> events) {
  for (const auto& e : events) {
    out << e.ts_sec << ',' << e.ts_usec << ',' << e.lba << ',' << e.bytes << '\n';
  }
}

void write_write_csv(std::ostream& out, std::span<const WriteEvent> events) {
  for (const auto& e : events) {
    out << e.ts_sec << ',' << e.ts_usec << ',' << e.lba << ',' << e.bytes << ','
        << detail::format_double(e.entropy) << '\n';
  }
}

double sector_entropy(std::span<const std::uint8_t> sector) {
  const std::size_t n = sector.size();
  if (n < 2) throw std::domain_error("sector_entropy needs at least 2 bytes");
  std::array<std::size_t, 256> counts{};
  for (auto b : sector) ++counts[b];
  double sum = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) * inv_n;
    sum += p * std::log2(p);
  }
  if (sum == 0.0) return 0.0;
  return std::clamp(-sum / std::log2(static_cast<double>(n)), 0.0, 1.0);
}

LabelTable LabelTable::ransap_defaults() {
  LabelTable t;
  for (const char* s : {"AESCrypt", "Zip", "SDelete", "Excel", "Firefox"}) t.set(s, Label::benign);
  for (const char* s : {"TeslaCrypt", "Cerber", "WannaCry", "GandCrab", "Ryuk", "Sodinokibi", "Darkside"}) {
    t.set(s, Label::ransomware);
  }
  return t;
}

LabelTable LabelTable::load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open label manifest " + file.string());
  LabelTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string s = trim(line);
    if (s.empty() || s == "software,label") continue;
    auto parts = split(s, ',');
    if (parts.size() != 2 || parts[0].empty()) throw ParseError(line_no, "expected software,label");
    auto v = detail::parse_field<long long>(parts[1]);
    if (!v || (*v != 0 && *v != 1)) throw ParseError(line_no, "label must be 0 or 1");
    t.set(parts[0], label_from_int(*v));
  }
  return t;
}

void LabelTable::set(std::string software, Label label) { labels_[std::move(software)] = label; }

Label LabelTable::lookup(const std::string& software) const {
  auto it = labels_.find(software);
  if (it == labels_.end()) throw DataError("no label known for software '" + software + "'");
  return it->second;
}

bool LabelTable::contains(const std::string& software) const { return labels_.count(software) != 0; }

void LabelTable::save(const fs::path& file) const {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write " + file.string());
  out << "software,label\n";
  for (const auto& [name, label] : labels_) out << name << ',' << to_int(label) << '\n';
}

namespace {

std::vector<fs::path> sorted_subdirs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

template <typename Event, typename Parser>
std::vector<Event> load_events(const fs::path& file, const ParseOptions& opts, Parser parser,
                               std::vector<std::string>& warnings) {
  if (!fs::exists(file)) return {};
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  try {
    auto result = parser(in, opts);
    for (const auto& w : result.warnings) {
      warnings.push_back(file.string() + ":" + std::to_string(w.line) + ": " + w.message);
    }
    return std::move(result.events);
  } catch (const ParseError& e) {
    throw DataError(file.string() + ": " + e.what());
  }
}

}  // namespace

LoadedCorpus load_corpus(const fs::path& root, const CorpusLoadOptions& opts) {
  if (!fs::is_directory(root)) throw DataError("corpus directory not found: " + root.string());
  const fs::path manifest = root / kLabelsManifest;
  const LabelTable labels = fs::exists(manifest) ? LabelTable::load(manifest) : LabelTable::ransap_defaults();

  LoadedCorpus corpus;
  for (const auto& server_dir : sorted_subdirs(root)) {
    NodeId server(server_dir.filename().string());
    if (!opts.servers.empty() &&
        std::find(opts.servers.begin(), opts.servers.end(), server) == opts.servers.end()) {
      continue;
    }
    for (const auto& sw_dir : sorted_subdirs(server_dir)) {
      const std::string software = sw_dir.filename().string();
      const Label label = labels.lookup(software);
      for (const auto& run_dir : sorted_subdirs(sw_dir)) {
        TraceRun run;
        run.server = server;
        run.software = software;
        run.run_name = run_dir.filename().string();
        run.label = label;
        run.reads = load_events<ReadEvent>(
            run_dir / "ata_read.csv", opts.parse,
            [](std::istream& in, const ParseOptions& o) { return parse_read_csv(in, o); }, corpus.warnings);
        run.writes = load_events<WriteEvent>(
            run_dir / "ata_write.csv", opts.parse,
            [](std::istream& in, const ParseOptions& o) { return parse_write_csv(in, o); }, corpus.warnings);
        if (run.reads.empty() && run.writes.empty()) {
          corpus.warnings.push_back(run_dir.string() + ": no events, skipped");
          continue;
        }
        corpus.runs.push_back(std::move(run));
      }
    }
  }
  return corpus;
}

void save_run(const fs::path& dir, const TraceRun& run) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "ata_read.csv", std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / "ata_read.csv").string());
    write_read_csv(out, run.reads);
  }
  std::ofstream out(dir / "ata_write.csv", std::ios::binary);
  if (!out) throw DataError("cannot write " + (dir / "ata_write.csv").string());
  write_write_csv(out, run.writes);
}

}  // namespace fedransom
