#include "fedransom/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "fedransom/errors.hpp"
#include "fedransom/seeds.hpp"
#include "random_util.hpp"
#include "text_util.hpp"

namespace fedransom {

namespace fs = std::filesystem;

std::string_view to_string(LbaPattern p) {
  switch (p) {
    case LbaPattern::sequential:
      return "sequential";
    case LbaPattern::uniform_random:
      return "uniform-random";
    case LbaPattern::clustered:
      return "clustered";
  }
  return "?";
}

LbaPattern lba_pattern_from_string(std::string_view s) {
  if (s == "sequential") return LbaPattern::sequential;
  if (s == "uniform-random" || s == "uniform_random" || s == "uniform") return LbaPattern::uniform_random;
  if (s == "clustered") return LbaPattern::clustered;
  throw ConfigError("unknown lba pattern '" + std::string(s) + "'");
}

void ProfileSpec::validate() const {
  if (!(entropy_mean >= 0.0 && entropy_mean <= 1.0)) throw ConfigError("entropy mean must lie in [0, 1]");
  if (!(entropy_stddev >= 0.0)) throw ConfigError("entropy stddev must be >= 0");
  if (!(write_rate >= 0.0) || !(read_rate >= 0.0)) throw ConfigError("event rates must be >= 0");
  if (!(duration_seconds > 0.0)) throw ConfigError("duration must be positive");
  if (lba_range == 0) throw ConfigError("lba range must be positive");
  if (lba_pattern == LbaPattern::clustered && n_clusters == 0) throw ConfigError("clustered pattern needs clusters");
  if (!(cluster_spread >= 0.0)) throw ConfigError("cluster spread must be >= 0");
  if (!(bytes_mean >= 512.0) || !(bytes_stddev >= 0.0)) throw ConfigError("bytes mean must be >= 512");
}

ProfileSpec apply_server(const ProfileSpec& base, const ServerProfile& server) {
  base.validate();
  const auto& o = server.overrides_for(base.label);
  ProfileSpec p = base;
  p.write_rate *= o.write_rate_multiplier;
  p.read_rate *= o.read_rate_multiplier;
  p.bytes_mean *= o.bytes_multiplier;
  p.bytes_stddev *= o.bytes_multiplier;
  p.lba_range = static_cast<std::uint64_t>(std::llround(static_cast<double>(p.lba_range) * o.lba_range_multiplier));
  p.cluster_spread *= o.spread_multiplier;
  p.entropy_mean = std::clamp(p.entropy_mean + o.entropy_shift, 0.0, 1.0);
  p.validate();
  return p;
}

namespace {

std::vector<double> arrivals(detail::Rng& rng, double rate, double duration) {
  std::vector<double> t;
  if (rate <= 0.0) return t;
  double now = detail::exponential(rng, rate);
  while (now < duration) {
    t.push_back(now);
    now += detail::exponential(rng, rate);
  }
  return t;
}

std::uint64_t draw_bytes(detail::Rng& rng, const ProfileSpec& p) {
  const double raw = p.bytes_mean + p.bytes_stddev * detail::standard_normal(rng);
  const auto sectors = std::max<long long>(1, std::llround(raw / 512.0));
  return static_cast<std::uint64_t>(sectors) * 512;
}

double draw_entropy(detail::Rng& rng, const ProfileSpec& p) {
  if (p.entropy_stddev == 0.0) return p.entropy_mean;
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double e = p.entropy_mean + p.entropy_stddev * detail::standard_normal(rng);
    if (e >= 0.0 && e <= 1.0) return e;
  }
  return p.entropy_mean;
}

class LbaSource {
 public:
  LbaSource(const ProfileSpec& p, detail::Rng& rng) : p_(p) {
    if (p.lba_pattern == LbaPattern::clustered) {
      for (std::size_t i = 0; i < p.n_clusters; ++i) centers_.push_back(static_cast<double>(detail::uniform_index(rng, p.lba_range)));
    }
    cursor_ = detail::uniform_index(rng, std::max<std::uint64_t>(1, p.lba_range / 2));
  }

  std::uint64_t next(detail::Rng& rng, std::uint64_t bytes) {
    switch (p_.lba_pattern) {
      case LbaPattern::sequential: {
        const auto lba = cursor_;
        cursor_ += bytes / 512;
        return lba;
      }
      case LbaPattern::uniform_random:
        return detail::uniform_index(rng, p_.lba_range);
      case LbaPattern::clustered: {
        const double c = centers_[detail::uniform_index(rng, centers_.size())];
        const double v = c + p_.cluster_spread * detail::standard_normal(rng);
        return static_cast<std::uint64_t>(std::clamp(std::llround(v), 0LL, static_cast<long long>(p_.lba_range - 1)));
      }
    }
    return 0;
  }

 private:
  const ProfileSpec& p_;
  std::vector<double> centers_;
  std::uint64_t cursor_ = 0;
};

}  // namespace

TraceRun generate_run(const ProfileSpec& profile, const ServerProfile& server, std::uint64_t seed,
                      std::string software, std::string run_name) {
  const ProfileSpec p = apply_server(profile, server);
  detail::Rng rng(seed);
  const std::int64_t start_us =
      (1'600'000'000LL + static_cast<std::int64_t>(detail::uniform_index(rng, 50'000'000))) * 1'000'000 +
      static_cast<std::int64_t>(detail::uniform_index(rng, 1'000'000));

  TraceRun run;
  run.server = server.server;
  run.software = std::move(software);
  run.run_name = std::move(run_name);
  run.label = p.label;

  LbaSource read_lba(p, rng);
  LbaSource write_lba(p, rng);
  auto stamp = [&](auto& e, double t) {
    const std::int64_t us = start_us + std::llround(t * 1e6);
    e.ts_sec = static_cast<std::uint64_t>(us / 1'000'000);
    e.ts_usec = static_cast<std::uint32_t>(us % 1'000'000);
  };
  for (double t : arrivals(rng, p.read_rate, p.duration_seconds)) {
    ReadEvent e;
    stamp(e, t);
    e.bytes = draw_bytes(rng, p);
    e.lba = read_lba.next(rng, e.bytes);
    run.reads.push_back(e);
  }
  for (double t : arrivals(rng, p.write_rate, p.duration_seconds)) {
    WriteEvent e;
    stamp(e, t);
    e.bytes = draw_bytes(rng, p);
    e.lba = write_lba.next(rng, e.bytes);
    e.entropy = draw_entropy(rng, p);
    run.writes.push_back(e);
  }
  return run;
}

namespace {

ServerProfile server_with(const std::string& name, double rate, double lba, double ransom_rate, double ransom_entropy) {
  ServerProfile s;
  s.server = NodeId(name);
  s.benign.write_rate_multiplier = s.benign.read_rate_multiplier = rate;
  s.benign.lba_range_multiplier = lba;
  s.ransomware.write_rate_multiplier = s.ransomware.read_rate_multiplier = rate * ransom_rate;
  s.ransomware.lba_range_multiplier = lba;
  s.ransomware.entropy_shift = ransom_entropy;
  return s;
}

ServerProfile ssd(ServerProfile s) {
  s.benign.entropy_shift = 0.1;
  s.benign.read_rate_multiplier *= 1.6;
  return s;
}

std::vector<ServerProfile> default_servers() {
  return {
      server_with("win7-120gb-hdd", 1.0, 1.0, 0.7, -0.06),
      ssd(server_with("win7-120gb-ssd", 1.5, 1.0, 1.0, 0.0)),
      server_with("win7-250gb-hdd", 1.0, 2.08, 0.7, -0.06),
      ssd(server_with("win7-250gb-ssd", 1.5, 2.08, 1.0, 0.0)),
  };
}

SoftwareSpec sw(std::string name, Label label) {
  SoftwareSpec s;
  s.name = std::move(name);
  s.label = label;
  return s;
}

std::vector<SoftwareSpec> default_software() {
  std::vector<SoftwareSpec> out;
  auto add = [&](SoftwareSpec s) { out.push_back(std::move(s)); };

  auto aes = sw("AESCrypt", Label::benign);
  aes.entropy_mean = 0.86;
  aes.lba_pattern = LbaPattern::sequential;
  aes.write_rate = 2.5;
  add(aes);
  auto zip = sw("Zip", Label::benign);
  zip.entropy_mean = 0.82;
  zip.lba_pattern = LbaPattern::sequential;
  add(zip);
  auto sdel = sw("SDelete", Label::benign);
  sdel.entropy_mean = 0.3;
  sdel.write_rate = 4.0;
  sdel.lba_pattern = LbaPattern::sequential;
  add(sdel);
  auto excel = sw("Excel", Label::benign);
  excel.entropy_mean = 0.5;
  add(excel);
  auto ff = sw("Firefox", Label::benign);
  ff.entropy_mean = 0.55;
  ff.read_rate = 3.0;
  add(ff);

  auto tesla = sw("TeslaCrypt", Label::ransomware);
  add(tesla);
  auto cerber = sw("Cerber", Label::ransomware);
  cerber.lba_pattern = LbaPattern::clustered;
  add(cerber);
  auto wanna = sw("WannaCry", Label::ransomware);
  wanna.write_rate = 3.5;
  add(wanna);
  auto gand = sw("GandCrab", Label::ransomware);
  gand.entropy_mean = 0.8;
  add(gand);
  auto ryuk = sw("Ryuk", Label::ransomware);
  ryuk.write_rate = 1.8;
  ryuk.lba_pattern = LbaPattern::clustered;
  add(ryuk);
  auto sodin = sw("Sodinokibi", Label::ransomware);
  add(sodin);
  auto dark = sw("Darkside", Label::ransomware);
  dark.entropy_mean = 0.83;
  dark.lba_pattern = LbaPattern::clustered;
  add(dark);
  return out;
}

}  // namespace

CorpusConfig CorpusConfig::defaults() {
  CorpusConfig c;
  c.master_seed = 1;
  c.servers = default_servers();
  c.software = default_software();
  c.runs_per_software = 10;

  c.benign.label = Label::benign;
  c.benign.entropy_mean = 0.45;
  c.benign.entropy_stddev = 0.12;
  c.benign.write_rate = 1.5;
  c.benign.read_rate = 2.0;
  c.benign.lba_pattern = LbaPattern::clustered;
  c.benign.n_clusters = 6;
  c.benign.cluster_spread = 5.0e4;
  c.benign.lba_range = 120'000'000;
  c.benign.bytes_mean = 16384.0;
  c.benign.bytes_stddev = 8192.0;
  c.benign.duration_seconds = 3990.0;

  c.ransomware = c.benign;
  c.ransomware.label = Label::ransomware;
  c.ransomware.entropy_mean = 0.9;
  c.ransomware.entropy_stddev = 0.06;
  c.ransomware.write_rate = 3.0;
  c.ransomware.read_rate = 3.0;
  c.ransomware.lba_pattern = LbaPattern::uniform_random;
  c.ransomware.bytes_mean = 32768.0;
  c.ransomware.bytes_stddev = 16384.0;
  return c;
}

namespace {

void apply_profile_key(ProfileSpec& p, const std::string& field, const std::string& value, const KeyValueConfig& kv,
                       const std::string& key) {
  if (field == "entropy_mean") {
    p.entropy_mean = kv.get_double(key, 0);
  } else if (field == "entropy_stddev") {
    p.entropy_stddev = kv.get_double(key, 0);
  } else if (field == "write_rate") {
    p.write_rate = kv.get_double(key, 0);
  } else if (field == "read_rate") {
    p.read_rate = kv.get_double(key, 0);
  } else if (field == "lba_pattern") {
    p.lba_pattern = lba_pattern_from_string(value);
  } else if (field == "n_clusters") {
    p.n_clusters = kv.get_uint(key, 0);
  } else if (field == "cluster_spread") {
    p.cluster_spread = kv.get_double(key, 0);
  } else if (field == "lba_range") {
    p.lba_range = kv.get_uint(key, 0);
  } else if (field == "bytes_mean") {
    p.bytes_mean = kv.get_double(key, 0);
  } else if (field == "bytes_stddev") {
    p.bytes_stddev = kv.get_double(key, 0);
  } else if (field == "duration_seconds") {
    p.duration_seconds = kv.get_double(key, 0);
  } else {
    throw ConfigError("unknown profile key '" + key + "'");
  }
}

void apply_override_key(ProfileOverrides& o, const std::string& field, const KeyValueConfig& kv, const std::string& key) {
  if (field == "write_rate_multiplier") {
    o.write_rate_multiplier = kv.get_double(key, 1);
  } else if (field == "read_rate_multiplier") {
    o.read_rate_multiplier = kv.get_double(key, 1);
  } else if (field == "bytes_multiplier") {
    o.bytes_multiplier = kv.get_double(key, 1);
  } else if (field == "lba_range_multiplier") {
    o.lba_range_multiplier = kv.get_double(key, 1);
  } else if (field == "spread_multiplier") {
    o.spread_multiplier = kv.get_double(key, 1);
  } else if (field == "entropy_shift") {
    o.entropy_shift = kv.get_double(key, 0);
  } else {
    throw ConfigError("unknown server override key '" + key + "'");
  }
}

}  // namespace

CorpusConfig CorpusConfig::from_kv(const KeyValueConfig& kv) {
  CorpusConfig c = defaults();
  c.master_seed = kv.get_uint("master_seed", c.master_seed);
  c.runs_per_software = kv.get_uint("runs_per_software", c.runs_per_software);
  c.run_jitter = kv.get_double("run_jitter", c.run_jitter);
  if (kv.contains("duration_seconds")) {
    c.benign.duration_seconds = c.ransomware.duration_seconds = kv.get_double("duration_seconds", 0);
  }

  if (kv.contains("servers")) {
    const auto defaults_list = default_servers();
    c.servers.clear();
    for (const auto& name : kv.get_list("servers")) {
      if (name.empty()) throw ConfigError("empty server name");
      auto it = std::find_if(defaults_list.begin(), defaults_list.end(),
                             [&](const ServerProfile& s) { return s.server.str() == name; });
      ServerProfile s = it != defaults_list.end() ? *it : ServerProfile{NodeId(name), {}, {}};
      c.servers.push_back(s);
    }
  }
  if (kv.contains("software")) {
    const auto defaults_list = default_software();
    c.software.clear();
    for (const auto& item : kv.get_list("software")) {
      const auto parts = split(item, ':');
      if (parts.size() != 2 || parts[0].empty()) throw ConfigError("software entries are name:label, got '" + item + "'");
      const Label label = parts[1] == "1" ? Label::ransomware : parts[1] == "0" ? Label::benign
                                                                                : throw ConfigError("label must be 0 or 1");
      auto it = std::find_if(defaults_list.begin(), defaults_list.end(),
                             [&](const SoftwareSpec& s) { return s.name == parts[0] && s.label == label; });
      c.software.push_back(it != defaults_list.end() ? *it : sw(parts[0], label));
    }
  }

  for (const auto& [field, value] : kv.with_prefix("benign.")) apply_profile_key(c.benign, field, value, kv, "benign." + field);
  for (const auto& [field, value] : kv.with_prefix("ransomware.")) {
    apply_profile_key(c.ransomware, field, value, kv, "ransomware." + field);
  }
  for (const auto& [rest, value] : kv.with_prefix("server.")) {
    const std::string key = "server." + rest;
    const auto first = rest.find('.');
    const auto second = first == std::string::npos ? std::string::npos : rest.find('.', first + 1);
    if (second == std::string::npos) throw ConfigError("server keys are server.<name>.<benign|ransomware|all>.<field>");
    const std::string name = rest.substr(0, first);
    const std::string scope = rest.substr(first + 1, second - first - 1);
    const std::string field = rest.substr(second + 1);
    auto it = std::find_if(c.servers.begin(), c.servers.end(), [&](const ServerProfile& s) { return s.server.str() == name; });
    if (it == c.servers.end()) throw ConfigError("override for unlisted server '" + name + "'");
    if (scope == "benign" || scope == "all") apply_override_key(it->benign, field, kv, key);
    if (scope == "ransomware" || scope == "all") apply_override_key(it->ransomware, field, kv, key);
    if (scope != "benign" && scope != "ransomware" && scope != "all") throw ConfigError("bad scope in '" + key + "'");
  }
  for (const auto& [rest, value] : kv.with_prefix("software.")) {
    const std::string key = "software." + rest;
    const auto dot = rest.find('.');
    if (dot == std::string::npos) throw ConfigError("software keys are software.<name>.<field>");
    const std::string name = rest.substr(0, dot);
    const std::string field = rest.substr(dot + 1);
    auto it = std::find_if(c.software.begin(), c.software.end(), [&](const SoftwareSpec& s) { return s.name == name; });
    if (it == c.software.end()) throw ConfigError("override for unlisted software '" + name + "'");
    if (field == "entropy_mean") {
      it->entropy_mean = kv.get_double(key, 0);
    } else if (field == "entropy_stddev") {
      it->entropy_stddev = kv.get_double(key, 0);
    } else if (field == "write_rate") {
      it->write_rate = kv.get_double(key, 0);
    } else if (field == "read_rate") {
      it->read_rate = kv.get_double(key, 0);
    } else if (field == "bytes_mean") {
      it->bytes_mean = kv.get_double(key, 0);
    } else if (field == "lba_pattern") {
      it->lba_pattern = lba_pattern_from_string(value);
    } else if (field == "cluster_spread") {
      it->cluster_spread = kv.get_double(key, 0);
    } else {
      throw ConfigError("unknown software key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

CorpusConfig CorpusConfig::load(const fs::path& file) { return from_kv(KeyValueConfig::load(file)); }

KeyValueConfig CorpusConfig::to_kv() const {
  KeyValueConfig kv;
  const auto fmt = detail::format_double;
  kv.set("master_seed", std::to_string(master_seed));
  kv.set("runs_per_software", std::to_string(runs_per_software));
  kv.set("run_jitter", fmt(run_jitter));
  std::string servers_list;
  for (const auto& s : servers) servers_list += (servers_list.empty() ? "" : ", ") + s.server.str();
  kv.set("servers", servers_list);
  std::string sw_list;
  for (const auto& s : software) sw_list += (sw_list.empty() ? "" : ", ") + s.name + ":" + std::to_string(to_int(s.label));
  kv.set("software", sw_list);
  for (const auto& [prefix, p] : {std::pair<std::string, const ProfileSpec*>{"benign.", &benign}, {"ransomware.", &ransomware}}) {
    kv.set(prefix + "entropy_mean", fmt(p->entropy_mean));
    kv.set(prefix + "entropy_stddev", fmt(p->entropy_stddev));
    kv.set(prefix + "write_rate", fmt(p->write_rate));
    kv.set(prefix + "read_rate", fmt(p->read_rate));
    kv.set(prefix + "lba_pattern", std::string(to_string(p->lba_pattern)));
    kv.set(prefix + "n_clusters", std::to_string(p->n_clusters));
    kv.set(prefix + "cluster_spread", fmt(p->cluster_spread));
    kv.set(prefix + "lba_range", std::to_string(p->lba_range));
    kv.set(prefix + "bytes_mean", fmt(p->bytes_mean));
    kv.set(prefix + "bytes_stddev", fmt(p->bytes_stddev));
    kv.set(prefix + "duration_seconds", fmt(p->duration_seconds));
  }
  for (const auto& s : servers) {
    for (const auto& [scope, o] : {std::pair<std::string, const ProfileOverrides*>{"benign", &s.benign}, {"ransomware", &s.ransomware}}) {
      const std::string base = "server." + s.server.str() + "." + scope + ".";
      kv.set(base + "write_rate_multiplier", fmt(o->write_rate_multiplier));
      kv.set(base + "read_rate_multiplier", fmt(o->read_rate_multiplier));
      kv.set(base + "bytes_multiplier", fmt(o->bytes_multiplier));
      kv.set(base + "lba_range_multiplier", fmt(o->lba_range_multiplier));
      kv.set(base + "spread_multiplier", fmt(o->spread_multiplier));
      kv.set(base + "entropy_shift", fmt(o->entropy_shift));
    }
  }
  for (const auto& s : software) {
    const std::string base = "software." + s.name + ".";
    if (s.entropy_mean) kv.set(base + "entropy_mean", fmt(*s.entropy_mean));
    if (s.entropy_stddev) kv.set(base + "entropy_stddev", fmt(*s.entropy_stddev));
    if (s.write_rate) kv.set(base + "write_rate", fmt(*s.write_rate));
    if (s.read_rate) kv.set(base + "read_rate", fmt(*s.read_rate));
    if (s.bytes_mean) kv.set(base + "bytes_mean", fmt(*s.bytes_mean));
    if (s.lba_pattern) kv.set(base + "lba_pattern", std::string(to_string(*s.lba_pattern)));
    if (s.cluster_spread) kv.set(base + "cluster_spread", fmt(*s.cluster_spread));
  }
  return kv;
}

ProfileSpec CorpusConfig::profile_for(const SoftwareSpec& s) const {
  ProfileSpec p = s.label == Label::ransomware ? ransomware : benign;
  if (s.entropy_mean) p.entropy_mean = *s.entropy_mean;
  if (s.entropy_stddev) p.entropy_stddev = *s.entropy_stddev;
  if (s.write_rate) p.write_rate = *s.write_rate;
  if (s.read_rate) p.read_rate = *s.read_rate;
  if (s.bytes_mean) p.bytes_mean = *s.bytes_mean;
  if (s.lba_pattern) p.lba_pattern = *s.lba_pattern;
  if (s.cluster_spread) p.cluster_spread = *s.cluster_spread;
  return p;
}

LabelTable CorpusConfig::labels() const {
  LabelTable t;
  for (const auto& s : software) t.set(s.name, s.label);
  return t;
}

void CorpusConfig::validate() const {
  if (servers.empty()) throw ConfigError("corpus needs at least one server");
  if (software.empty()) throw ConfigError("corpus needs at least one software entry");
  if (runs_per_software == 0) throw ConfigError("runs_per_software must be positive");
  if (!(run_jitter >= 0.0)) throw ConfigError("run_jitter must be >= 0");
  std::set<std::string> names;
  for (const auto& s : software) {
    if (!names.insert(s.name).second) throw DataError("software name collision: '" + s.name + "'");
  }
  std::set<std::string> server_names;
  for (const auto& s : servers) {
    if (!server_names.insert(s.server.str()).second) throw DataError("server name collision: '" + s.server.str() + "'");
    for (const auto& sw_spec : software) apply_server(profile_for(sw_spec), s);
  }
}

std::uint64_t run_seed(std::uint64_t master_seed, const NodeId& server, const std::string& software,
                       std::size_t run_index) {
  return derive_seed(derive_seed(derive_seed(master_seed, server.str()), software), run_index);
}

std::string run_dir_name(std::size_t run_index) {
  std::string s = std::to_string(run_index);
  if (s.size() < 2) s.insert(0, 2 - s.size(), '0');
  return "run-" + s;
}

namespace {

// Per-run variation of rates and sizes around the software's profile.
ProfileSpec jittered(ProfileSpec p, double sigma, std::uint64_t seed) {
  if (sigma <= 0.0) return p;
  detail::Rng rng(derive_seed(seed, "jitter"));
  p.write_rate *= std::exp(sigma * detail::standard_normal(rng));
  p.read_rate *= std::exp(sigma * detail::standard_normal(rng));
  p.bytes_mean = std::max(512.0, p.bytes_mean * std::exp(sigma * detail::standard_normal(rng)));
  p.entropy_mean = std::clamp(p.entropy_mean + 0.25 * sigma * detail::standard_normal(rng), 0.0, 1.0);
  return p;
}

}  // namespace

std::vector<TraceRun> generate_corpus_runs(const CorpusConfig& cfg) {
  cfg.validate();
  std::vector<TraceRun> runs;
  for (const auto& server : cfg.servers) {
    for (const auto& s : cfg.software) {
      for (std::size_t k = 0; k < cfg.runs_per_software; ++k) {
        const auto seed = run_seed(cfg.master_seed, server.server, s.name, k);
        auto run = generate_run(jittered(cfg.profile_for(s), cfg.run_jitter, seed), server, seed, s.name, run_dir_name(k));
        if (run.reads.empty() && run.writes.empty()) continue;
        runs.push_back(std::move(run));
      }
    }
  }
  return runs;
}

CorpusSummary generate_corpus(const CorpusConfig& cfg, const fs::path& out) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw DataError("cannot create corpus directory " + out.string());

  CorpusSummary summary;
  for (const auto& server : cfg.servers) {
    for (const auto& s : cfg.software) {
      for (std::size_t k = 0; k < cfg.runs_per_software; ++k) {
        const fs::path dir = out / server.server.str() / s.name / run_dir_name(k);
        if (fs::exists(dir)) throw DataError("run directory already exists: " + dir.string());
        const auto seed = run_seed(cfg.master_seed, server.server, s.name, k);
        auto run = generate_run(jittered(cfg.profile_for(s), cfg.run_jitter, seed), server, seed, s.name, run_dir_name(k));
        save_run(dir, run);
        ++summary.runs;
        summary.csv_files += 2;
      }
    }
  }
  cfg.labels().save(out / kLabelsManifest);
  std::ofstream cfg_out(out / "corpus.cfg", std::ios::binary);
  if (!cfg_out) throw DataError("cannot write " + (out / "corpus.cfg").string());
  cfg_out << cfg.to_kv().dump();
  return summary;
}

}  // namespace fedransom
