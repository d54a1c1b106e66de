#include <benchmark/benchmark.h>

#include <vector>

#include "dfl/corpus.hpp"
#include "dfl/crf.hpp"
#include "dfl/encoder.hpp"
#include "dfl/multitask.hpp"

using namespace dfl;

namespace {

EncoderConfig bench_encoder_config() {
  EncoderConfig cfg;
  cfg.num_layers = 2;
  cfg.num_heads = 4;
  cfg.d_model = 64;
  cfg.d_ff = 256;
  cfg.dropout_rate = 0.0;
  cfg.max_len = 128;
  cfg.vocab_size = 64;
  return cfg;
}

struct DecodeFixture {
  JointModel full;
  JointModel lean;
  EncodedBatch batch;
  int64_t tokens = 0;
};

const DecodeFixture& decode_fixture() {
  static const DecodeFixture fixture = [] {
    const auto corpus = synth_generate(default_synth_config(7, 200));
    EncoderConfig cfg = bench_encoder_config();
    DecodeFixture f;
    f.full = build_model(cfg, corpus, {Task::Ner, Task::Pos}, 1);
    f.lean = strip_aux(f.full);
    f.batch = encode_batch(corpus, f.full.tagsets, f.full.vocab, cfg.max_len);
    for (int len : f.batch.lengths) f.tokens += len;
    return f;
  }();
  return fixture;
}

}  // namespace

static void BM_encoder_forward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const EncoderConfig cfg = bench_encoder_config();
  Rng rng(1);
  const EncoderParams params = EncoderParams::init(cfg, rng);
  std::vector<int> ids(static_cast<size_t>(n));
  std::vector<uint8_t> mask(static_cast<size_t>(n), 1);
  for (int& id : ids) id = rng.uniform_int(cfg.vocab_size);

  EncoderCache cache;
  for (auto _ : state) {
    const Mat& h = encoder_forward(params, ids, mask, false, nullptr, cache);
    benchmark::DoNotOptimize(h.sum());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_encoder_forward)->Arg(16)->Arg(64);

static void BM_viterbi(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int num_labels = 2;
  Rng rng(2);
  Mat E(n, num_labels), T(num_labels, num_labels);
  Vec s(num_labels), e(num_labels);
  for (Eigen::Index i = 0; i < E.size(); ++i) E(i) = rng.uniform_range(-2.0, 2.0);
  for (Eigen::Index i = 0; i < T.size(); ++i) T(i) = rng.uniform_range(-2.0, 2.0);
  for (int i = 0; i < num_labels; ++i) {
    s(i) = rng.uniform_range(-2.0, 2.0);
    e(i) = rng.uniform_range(-2.0, 2.0);
  }

  for (auto _ : state) {
    const ViterbiResult res = viterbi(E, T, s, e);
    benchmark::DoNotOptimize(res.score);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_viterbi)->Arg(16)->Arg(128);

static void BM_decode_full(benchmark::State& state) {
  const DecodeFixture& f = decode_fixture();
  for (auto _ : state) {
    const auto paths = decode_task(f.full, f.batch, Task::Disfl);
    benchmark::DoNotOptimize(paths.size());
  }
  state.SetItemsProcessed(state.iterations() * f.tokens);
}
BENCHMARK(BM_decode_full);

static void BM_decode_stripped(benchmark::State& state) {
  const DecodeFixture& f = decode_fixture();
  for (auto _ : state) {
    const auto paths = decode_task(f.lean, f.batch, Task::Disfl);
    benchmark::DoNotOptimize(paths.size());
  }
  state.SetItemsProcessed(state.iterations() * f.tokens);
}
BENCHMARK(BM_decode_stripped);

BENCHMARK_MAIN();
