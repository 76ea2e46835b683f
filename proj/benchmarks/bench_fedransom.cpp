#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "fedransom/ata_trace.hpp"
#include "fedransom/features.hpp"
#include "fedransom/fed_protocol.hpp"
#include "fedransom/forest.hpp"
#include "fedransom/synth.hpp"
#include "fedransom/transport.hpp"

using namespace fedransom;

namespace {

std::vector<FeatureVector> labelled_points(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<FeatureVector> out(n);
  for (auto& v : out) {
    for (auto& x : v.x) x = noise(rng);
    v.label = v.x[0] + 0.5 * v.x[1] - 0.7 * v.x[3] + 0.8 * noise(rng) > 0 ? Label::ransomware : Label::benign;
    v.server = NodeId("bench");
  }
  return out;
}

TraceRun synthetic_run(double seconds) {
  ProfileSpec p;
  p.label = Label::ransomware;
  p.entropy_mean = 0.9;
  p.duration_seconds = seconds;
  return generate_run(p, ServerProfile{NodeId("bench"), {}, {}}, 7);
}

void BM_SectorEntropy(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::vector<std::uint8_t> sector(512);
  for (auto& b : sector) b = static_cast<std::uint8_t>(rng());
  for (auto _ : state) benchmark::DoNotOptimize(sector_entropy(sector));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * 512);
}
BENCHMARK(BM_SectorEntropy);

void BM_ExtractWindows(benchmark::State& state) {
  const auto run = synthetic_run(static_cast<double>(state.range(0)));
  const auto events = static_cast<std::int64_t>(run.reads.size() + run.writes.size());
  for (auto _ : state) benchmark::DoNotOptimize(extract_windows(run));
  state.SetItemsProcessed(state.iterations() * events);
}
BENCHMARK(BM_ExtractWindows)->Arg(600)->Arg(3990)->Unit(benchmark::kMicrosecond);

void BM_TrainForest(benchmark::State& state) {
  const auto data = labelled_points(static_cast<std::size_t>(state.range(0)), 2);
  TrainConfig cfg;
  cfg.n_trees = 10;
  cfg.n_threads = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train_forest(data, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 10);
}
BENCHMARK(BM_TrainForest)->Arg(1'000)->Arg(12'000)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
  const auto data = labelled_points(12'000, 3);
  TrainConfig cfg;
  cfg.n_trees = 100;
  const auto forest = train_forest(data, cfg);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(predict(forest, data[i].x));
    i = (i + 1) % data.size();
  }
}
BENCHMARK(BM_Predict);

void BM_SerializeForest(benchmark::State& state) {
  TrainConfig cfg;
  cfg.n_trees = 100;
  const auto forest = train_forest(labelled_points(12'000, 4), cfg);
  std::size_t bytes = 0;
  for (auto _ : state) {
    const auto text = serialize_forest(forest);
    bytes = text.size();
    benchmark::DoNotOptimize(deserialize_forest(text));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * bytes));
}
BENCHMARK(BM_SerializeForest)->Unit(benchmark::kMillisecond);

void BM_FrameRoundTrip(benchmark::State& state) {
  const std::string payload(static_cast<std::size_t>(state.range(0)), 'x');
  for (auto _ : state) benchmark::DoNotOptimize(decode_frame(encode_frame(payload)));
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FrameRoundTrip)->Arg(1 << 10)->Arg(1 << 20);

void BM_SocketSendReceive(benchmark::State& state) {
  const std::vector<NodeId> ids = {NodeId("bench")};
  auto links = make_links(ChannelKind::socket, ids);
  const std::string payload(static_cast<std::size_t>(state.range(0)), 'x');
  for (auto _ : state) {
    links[0].node_side->send(payload);
    benchmark::DoNotOptimize(links[0].aggregator_side->receive(std::chrono::seconds(5)));
  }
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SocketSendReceive)->Arg(1 << 10)->Arg(1 << 20);

}  // namespace

BENCHMARK_MAIN();
