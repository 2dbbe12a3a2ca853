#include <benchmark/benchmark.h>

#include "dgn/baselines.hpp"
#include "dgn/movmf.hpp"
#include "dgn/network.hpp"
#include "dgn/rng.hpp"

namespace {

using namespace dgn;

Matrix random_unit_rows(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = rng.normal();
  return normalize_rows(m).values();
}

// Fixed t = 10 iterations; time should grow linearly in n and |C|.
void BM_SoftEm(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const auto k = static_cast<Eigen::Index>(state.range(1));
  const auto v = EmbeddingMatrix::from_unit_rows(random_unit_rows(n, 8, 1));
  const Matrix init = random_unit_rows(k, 8, 2);
  EMConfig cfg;
  cfg.tol = 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(soft_movmf_em(v, init, cfg));
  state.SetComplexityN(n * k);
}
BENCHMARK(BM_SoftEm)->ArgsProduct({{1 << 10, 1 << 12, 1 << 14, 1 << 16}, {6, 12}})->Complexity(benchmark::oN);

void BM_HardEm(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const auto v = EmbeddingMatrix::from_unit_rows(random_unit_rows(n, 8, 3));
  const Matrix init = random_unit_rows(6, 8, 4);
  EMConfig cfg;
  cfg.tol = 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(hard_movmf_em(v, init, cfg));
}
BENCHMARK(BM_HardEm)->Range(1 << 10, 1 << 16);

void BM_GmmEm(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Matrix f = random_unit_rows(n, 8, 5);
  const Matrix init = f.topRows(6);
  EMConfig cfg;
  cfg.tol = 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(gmm_em(f, init, cfg));
}
BENCHMARK(BM_GmmEm)->Range(1 << 10, 1 << 16);

void BM_ForwardBackward(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const ModelParams params = init_params(7, {32, 32}, 16, 6, 1);
  Rng rng(6);
  Matrix x(n, 7);
  for (Eigen::Index j = 0; j < x.size(); ++j) x.data()[j] = rng.normal();
  const Matrix grad_logits = Matrix::Constant(n, 6, 1e-3);
  for (auto _ : state) {
    const ForwardCache cache = forward(params, x);
    benchmark::DoNotOptimize(backward(params, cache, Matrix(), grad_logits));
  }
}
BENCHMARK(BM_ForwardBackward)->Range(1 << 8, 1 << 14);

}  // namespace

BENCHMARK_MAIN();
