// Serial reference kernels against their OpenMP counterparts.

#include <random>

#include <benchmark/benchmark.h>

#include "nsm/core/parallel.hpp"
#include "nsm/core/rng.hpp"
#include "nsm/loss/nsm_loss.hpp"
#include "nsm/metrics/metrics.hpp"
#include "nsm/simulators/simulators.hpp"
#include "nsm/surrogate/maf.hpp"
#include "nsm/weights/imq.hpp"

using namespace nsm;

namespace {

Mat randn(Index r, Index c, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  std::normal_distribution<double> n01;
  Mat m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
  return m;
}

void BM_mmd2_naive(benchmark::State& st) {
  const Mat A = randn(st.range(0), 4, 1), B = randn(st.range(0), 4, 2);
  for (auto _ : st) benchmark::DoNotOptimize(metrics::mmd2_naive(A, B, {1.0}));
}

// range(1) = worker count, 0 meaning all cores
void BM_mmd2_blocked(benchmark::State& st) {
  const Mat A = randn(st.range(0), 4, 1), B = randn(st.range(0), 4, 2);
  set_worker_count(static_cast<int>(st.range(1)));
  for (auto _ : st) benchmark::DoNotOptimize(metrics::mmd2(A, B, {1.0}));
  set_worker_count(0);
}

struct LossFixture {
  surrogate::Maf model;
  Mat data;
  weights::ImqWeight w;
  Vec theta;
  static LossFixture make(Index n) {
    Rng rng = make_rng(3, 0);
    surrogate::Maf m(3, 4, surrogate::MafConfig{}, rng);
    Mat d = randn(n, 3, 4);
    auto w = weights::ImqWeight::fit(d, 1.0, weights::ScatterMethod::median_mad, 0);
    return {std::move(m), d, w, Vec::Zero(4)};
  }
};

void BM_point_losses_serial(benchmark::State& st) {
  const auto f = LossFixture::make(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(loss::point_losses_serial(f.data, f.model, f.w, f.theta));
}

void BM_point_losses_parallel(benchmark::State& st) {
  const auto f = LossFixture::make(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(loss::point_losses(f.data, f.model, f.w, f.theta));
}

void BM_bank_serial(benchmark::State& st) {
  const sim::Sir sir;
  for (auto _ : st) benchmark::DoNotOptimize(sim::simulate_bank_serial(sir, st.range(0), 7));
}

void BM_bank_parallel(benchmark::State& st) {
  const sim::Sir sir;
  for (auto _ : st) benchmark::DoNotOptimize(sim::simulate_bank(sir, st.range(0), 7));
}

}  // namespace

BENCHMARK(BM_mmd2_naive)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_mmd2_blocked)->Args({500, 1})->Args({500, 0})->Args({2000, 1})->Args({2000, 0})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_point_losses_serial)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_point_losses_parallel)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_bank_serial)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_bank_parallel)->Arg(2000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
