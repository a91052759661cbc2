#include <benchmark/benchmark.h>

#include "melrvq/dsp.hpp"
#include "melrvq/rng.hpp"
#include "melrvq/rvq.hpp"
#include "melrvq/rvq_train.hpp"
#include "melrvq/ssl.hpp"
#include "melrvq/synth.hpp"

using namespace melrvq;

namespace {

Eigen::MatrixXd random_frames_d(uint64_t seed, long rows, long cols) {
    Rng rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (long i = 0; i < rows; ++i) {
        for (long j = 0; j < cols; ++j) m(i, j) = rng.gaussian();
    }
    return m;
}

}  // namespace

static void BM_MelSpectrogram(benchmark::State& state) {
    const AudioClip clip = synth_note_clip(1, {.seconds = static_cast<double>(state.range(0))});
    const DspConfig cfg;
    for (auto _ : state) {
        benchmark::DoNotOptimize(mel_spectrogram(clip, cfg));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(clip.samples.size()));
}
BENCHMARK(BM_MelSpectrogram)->Arg(10)->Arg(30)->Unit(benchmark::kMillisecond);

static void BM_RvqEncode(benchmark::State& state) {
    const int K = static_cast<int>(state.range(0));
    const MelRvq rvq = freeze_random({.num_stages = 8, .codebook_size = K, .code_dim = 16,
                                      .input_dim = 128}, 2);
    const Eigen::MatrixXd frames = random_frames_d(3, 750, 128);
    for (auto _ : state) {
        benchmark::DoNotOptimize(encode_frames(rvq, frames));
    }
    state.SetItemsProcessed(state.iterations() * 750);
}
BENCHMARK(BM_RvqEncode)->Arg(64)->Arg(1024)->Unit(benchmark::kMillisecond);

static void BM_RvqTrainStep(benchmark::State& state) {
    const Eigen::MatrixXd frames = random_frames_d(4, 4096, 128);
    TrainConfig cfg;
    cfg.seed = 5;
    MelRvq rvq = init_rvq(frames, cfg, {.num_stages = 4, .codebook_size = 64, .code_dim = 16,
                                        .input_dim = 128});
    RvqTrainer trainer(std::move(rvq), cfg);
    const Eigen::MatrixXd batch =
        standardize(frames.topRows(256), trainer.model().input_stats);
    for (auto _ : state) {
        benchmark::DoNotOptimize(trainer.step(batch));
    }
    state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_RvqTrainStep)->Unit(benchmark::kMillisecond);

static void BM_SslForward(benchmark::State& state) {
    SslModelConfig cfg;
    cfg.input_dim = 128;
    cfg.width = 192;
    cfg.layers = 4;
    cfg.attn_heads = 4;
    cfg.num_target_heads = 8;
    cfg.codebook_size = 1024;
    cfg.seed = 6;
    const SslToyModel model(cfg);
    Rng rng(7);
    Eigen::MatrixXf frames(state.range(0), 128);
    for (long t = 0; t < frames.rows(); ++t) {
        for (long m = 0; m < 128; ++m) frames(t, m) = static_cast<float>(rng.gaussian());
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.forward(frames));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SslForward)->Arg(96)->Arg(750)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
