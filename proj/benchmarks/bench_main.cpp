#include <benchmark/benchmark.h>

#include <random>

#include "varconet/contrastive.hpp"
#include "varconet/encoder.hpp"
#include "varconet/evalsuite.hpp"
#include "varconet/synth.hpp"
#include "varconet/tpe.hpp"
#include "varconet/train.hpp"
#include "varconet/variability.hpp"

using namespace varconet;

namespace {

Matrix noise(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

HyperParams hp_for(int layers, int ff) {
  HyperParams hp;
  hp.n_layers = layers;
  hp.ff_dim = ff;
  return hp;
}

void BM_EncoderForward(benchmark::State& state) {
  Rng rng(1);
  const Encoder enc(16, hp_for(1, 2048), rng);
  const Matrix x = noise(16, state.range(0), 2);
  for (auto _ : state) benchmark::DoNotOptimize(enc.fc_vector(x, 320));
}
BENCHMARK(BM_EncoderForward)->Arg(80)->Arg(200)->Arg(320);

void BM_BatchGradient(benchmark::State& state) {
  Rng rng(3);
  const Encoder enc(16, hp_for(static_cast<int>(state.range(0)), 2048), rng);
  std::vector<Matrix> views;
  for (int i = 0; i < 16; ++i) views.push_back(noise(16, 80 + 15 * i, 4 + i));
  ParamStore grads = enc.params();
  for (auto _ : state) benchmark::DoNotOptimize(contrastive_batch_gradient(enc, views, 320, 0.054, grads));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(views.size()));
}
BENCHMARK(BM_BatchGradient)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_NtXent(benchmark::State& state) {
  Rng rng(5);
  std::vector<Vector> z;
  for (int i = 0; i < 2 * state.range(0); ++i) z.push_back(noise(120, 1, 6 + i));
  for (auto _ : state) benchmark::DoNotOptimize(ntxent_loss(z, 0.054));
}
BENCHMARK(BM_NtXent)->Arg(32)->Arg(64);

void BM_PccFc(benchmark::State& state) {
  const Matrix x = noise(state.range(0), 320, 7);
  for (auto _ : state) benchmark::DoNotOptimize(pcc_fc(x));
}
BENCHMARK(BM_PccFc)->Arg(16)->Arg(166)->Arg(384);

void BM_IdentificationRate(benchmark::State& state) {
  const Matrix a = noise(state.range(0), 120, 8), b = noise(state.range(0), 120, 9);
  for (auto _ : state) benchmark::DoNotOptimize(identification_rate(a, b));
}
BENCHMARK(BM_IdentificationRate)->Arg(30)->Arg(393);

void BM_VariationField(benchmark::State& state) {
  const std::vector<Matrix> sessions{noise(100, state.range(0), 10), noise(100, state.range(0), 11)};
  for (auto _ : state) benchmark::DoNotOptimize(variation_field(sessions));
}
BENCHMARK(BM_VariationField)->Arg(120)->Arg(13695);

void BM_TpeSuggest(benchmark::State& state) {
  const SearchSpace space = SearchSpace::encoder_default(16);
  Rng rng(12);
  std::vector<TrialRecord> history;
  for (int i = 0; i < state.range(0); ++i) {
    Assignment a = sample_uniform(space, rng);
    observe(history, space, a, std::log(a[space.index_of("tau")]));
  }
  for (auto _ : state) benchmark::DoNotOptimize(suggest(history, space, rng));
}
BENCHMARK(BM_TpeSuggest)->Arg(20)->Arg(125);

void BM_GenerateCohort(benchmark::State& state) {
  SynthConfig cfg;
  cfg.n_subjects = 20;
  cfg.regions = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(generate_cohort(cfg));
}
BENCHMARK(BM_GenerateCohort)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
