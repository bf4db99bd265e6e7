#include <benchmark/benchmark.h>

#include <filesystem>

#include "innerloop/hist/log.hpp"
#include "innerloop/nn/model.hpp"
#include "innerloop/probes/kmeans.hpp"
#include "innerloop/probes/linalg.hpp"
#include "innerloop/synthlang/vocab.hpp"

using namespace innerloop;

namespace {

template <class T>
nn::ModelState<T> default_model() {
  nn::ModelConfig c;
  c.precision = std::is_same_v<T, double> ? nn::Precision::kF64 : nn::Precision::kF32;
  return nn::init_params<T>(c, {.rng_seed = 1});
}

const auto kTokens = synthlang::encode("abcabdeffgahij");

template <class T>
void BM_Forward(benchmark::State& st) {
  const auto m = default_model<T>();
  for (auto _ : st) benchmark::DoNotOptimize(nn::forward_trace(m, kTokens, nn::Mode::kEval));
}
BENCHMARK(BM_Forward<float>);
BENCHMARK(BM_Forward<double>);

template <class T>
void BM_ForwardBackward(benchmark::State& st) {
  const auto m = default_model<T>();
  Rng rng(3);
  for (auto _ : st) benchmark::DoNotOptimize(nn::forward_backward(m, kTokens, &rng));
}
BENCHMARK(BM_ForwardBackward<float>);
BENCHMARK(BM_ForwardBackward<double>);

void BM_KMeans(benchmark::State& st) {
  Rng rng(4);
  nn::MatD pts(st.range(0), 64);
  for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = rng.normal();
  for (auto _ : st) benchmark::DoNotOptimize(probes::kmeans(pts, 10, 1));
}
BENCHMARK(BM_KMeans)->Arg(200)->Arg(1000);

void BM_SymEig(benchmark::State& st) {
  Rng rng(5);
  const auto n = st.range(0);
  nn::MatD a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  const nn::MatD m = a + a.transpose();
  for (auto _ : st) benchmark::DoNotOptimize(probes::sym_eig(m));
}
BENCHMARK(BM_SymEig)->Arg(16)->Arg(64);

void BM_HistoryAppend(benchmark::State& st) {
  nn::ModelConfig c;
  hist::LogHeader h;
  h.model = c;
  h.layout = hist::RecordLayout::for_model(c, {1, 2, 3, 4, 5, 6}, {3});
  const auto path = (std::filesystem::temp_directory_path() / "innerloop_bench.hlog").string();
  hist::HistoryRecord r;
  r.values.assign(h.layout.value_count(), 0.25);
  {
    hist::HistoryWriter w(path, h);
    for (auto _ : st) {
      w.append(r);
      ++r.step;
    }
  }
  st.SetBytesProcessed(static_cast<std::int64_t>(st.iterations() * r.values.size() * sizeof(double)));
  std::filesystem::remove(path);
}
BENCHMARK(BM_HistoryAppend);

}  // namespace

BENCHMARK_MAIN();
