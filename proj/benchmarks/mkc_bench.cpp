#include <benchmark/benchmark.h>

#include <vector>

#include "mkc/codec.hpp"
#include "mkc/dataset.hpp"
#include "mkc/entropy.hpp"
#include "mkc/masking.hpp"
#include "mkc/ops.hpp"
#include "mkc/random.hpp"
#include "mkc/range_coder.hpp"

namespace mkc {
namespace {

Tensor noise(const Shape& s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(s);
  for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto ch = static_cast<std::size_t>(state.range(1));
  const Tensor x = noise({side, side, ch}, 1);
  const Tensor k = noise({3, 3, ch, ch}, 2);
  for (auto _ : state) {
    Graph g;
    benchmark::DoNotOptimize(conv2d(g.constant(x), g.constant(k), 2, 1).value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(side * side / 4 * ch));
}
BENCHMARK(BM_Conv2dForward)->Args({32, 16})->Args({64, 32})->Unit(benchmark::kMicrosecond);

void BM_Conv2dBackward(benchmark::State& state) {
  const Tensor x = noise({32, 32, 16}, 3);
  const Tensor k = noise({3, 3, 16, 16}, 4);
  for (auto _ : state) {
    Graph g;
    Var kv = g.leaf(k, true);
    g.backward(sum(conv2d(g.constant(x), kv, 2, 1)));
    benchmark::DoNotOptimize(g.grad(kv).data().data());
  }
}
BENCHMARK(BM_Conv2dBackward)->Unit(benchmark::kMicrosecond);

void BM_CubeMask(benchmark::State& state) {
  const Tensor f = noise({16, 16, 64}, 5);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cube_mask(f, {MaskStrategy::kCube, 0.5, seed++}).data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.size()));
}
BENCHMARK(BM_CubeMask)->Unit(benchmark::kMicrosecond);

// Symbols drawn from the table they are coded with, so the coder sees a
// realistic distribution.
struct CoderFixture {
  CoderFixture() {
    std::vector<double> pmf(kAlphabetSize);
    gaussian_pmf(0.3, 1.7, pmf);
    table = build_cdf(pmf, kSymbolMin);
    Rng rng(9);
    for (int i = 0; i < 4096; ++i) {
      symbols.push_back(quantize_value(0.3 + 1.7 * rng.normal()));
    }
  }
  CdfTable table;
  std::vector<std::int32_t> symbols;
};

void BM_RangeEncode(benchmark::State& state) {
  const CoderFixture fx;
  for (auto _ : state) {
    RangeEncoder enc;
    for (auto s : fx.symbols) enc.encode(s, fx.table);
    benchmark::DoNotOptimize(enc.finish().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(fx.symbols.size()));
}
BENCHMARK(BM_RangeEncode);

void BM_RangeDecode(benchmark::State& state) {
  const CoderFixture fx;
  RangeEncoder enc;
  for (auto s : fx.symbols) enc.encode(s, fx.table);
  const auto bytes = enc.finish();
  for (auto _ : state) {
    RangeDecoder dec(bytes);
    std::int64_t acc = 0;
    for (std::size_t i = 0; i < fx.symbols.size(); ++i) acc += dec.decode(fx.table);
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(fx.symbols.size()));
}
BENCHMARK(BM_RangeDecode);

void BM_EncodeImageToy(benchmark::State& state) {
  ModelConfig c;
  c.transform = transform_preset("toy");
  const ModelState m = ModelState::init(c);
  const Tensor x = synthetic_image(64, 64, 1);
  for (auto _ : state) benchmark::DoNotOptimize(encode_image(x, m).stream.main.data());
}
BENCHMARK(BM_EncodeImageToy)->Unit(benchmark::kMillisecond);

void BM_DecodeImageToy(benchmark::State& state) {
  ModelConfig c;
  c.transform = transform_preset("toy");
  const ModelState m = ModelState::init(c);
  const Bitstream bs = encode_image(synthetic_image(64, 64, 1), m).stream;
  for (auto _ : state) benchmark::DoNotOptimize(decode_image(bs, m).data().data());
}
BENCHMARK(BM_DecodeImageToy)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace mkc

BENCHMARK_MAIN();
