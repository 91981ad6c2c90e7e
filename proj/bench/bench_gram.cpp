#include <benchmark/benchmark.h>

#include <omp.h>

#include "cpk/kernel_spec.hpp"
#include "cpk/kernels.hpp"
#include "cpk/reference.hpp"
#include "cpk/rng.hpp"

using namespace cpk;

namespace {

const char* kTamar = "sw(cos2(theta),S)*sw(U,W)*poly2(U) + swneg(cos2(theta),S)*swneg(U,W)*se(U)";
const char* kTucano = "se(ch1, ch2, ch3) + sw(rudd,R)*(sdof(t)+sdof(t))";

struct Problem {
  Inputs x;
  ParamVector params;
  KernelExpr kernel;
};

Problem make_problem(const char* spec, const std::vector<std::string>& columns, Eigen::Index n) {
  Problem p;
  Rng rng(42);
  p.x.columns = columns;
  p.x.values.resize(n, static_cast<Eigen::Index>(columns.size()));
  for (Eigen::Index i = 0; i < p.x.values.size(); ++i) p.x.values.data()[i] = 30.0 * rng.uniform();
  p.kernel = build_kernel(parse_kernel_spec(spec), p.params, &p.x);
  return p;
}

const std::vector<std::string> kTamarCols{"theta", "U"};
const std::vector<std::string> kTucanoCols{"t", "ch1", "ch2", "ch3", "rudd"};

void BM_tamar_parallel(benchmark::State& state) {
  const Problem p = make_problem(kTamar, kTamarCols, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(eval_kernel(p.kernel, p.params, p.x));
  state.counters["threads"] = omp_get_max_threads();
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

void BM_tamar_reference(benchmark::State& state) {
  const Problem p = make_problem(kTamar, kTamarCols, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(reference::gram(p.kernel, p.params, p.x, p.x));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

void BM_tucano_parallel(benchmark::State& state) {
  const Problem p = make_problem(kTucano, kTucanoCols, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(eval_kernel(p.kernel, p.params, p.x));
  state.counters["threads"] = omp_get_max_threads();
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

void BM_tucano_reference(benchmark::State& state) {
  const Problem p = make_problem(kTucano, kTucanoCols, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(reference::gram(p.kernel, p.params, p.x, p.x));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

void BM_tucano_gradients(benchmark::State& state) {
  const Problem p = make_problem(kTucano, kTucanoCols, state.range(0));
  for (auto _ : state) {
    double acc = 0.0;
    visit_kernel_gradients(p.kernel, p.params, p.x, [&](std::size_t, const Eigen::MatrixXd& dk) { acc += dk(0, 0); });
    benchmark::DoNotOptimize(acc);
  }
}

}  // namespace

BENCHMARK(BM_tamar_parallel)->RangeMultiplier(2)->Range(128, 1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_tamar_reference)->RangeMultiplier(2)->Range(128, 1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_tucano_parallel)->RangeMultiplier(2)->Range(128, 1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_tucano_reference)->RangeMultiplier(2)->Range(128, 1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_tucano_gradients)->RangeMultiplier(2)->Range(128, 512)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
