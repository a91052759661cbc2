#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "melrvq/errors.hpp"
#include "melrvq/io.hpp"
#include "melrvq/rng.hpp"
#include "melrvq/rvq.hpp"
#include "melrvq/rvq_train.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace melrvq;
using melrvq::testutil::TempDir;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, long rows, long cols, double scale = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (long i = 0; i < rows; ++i) {
        for (long j = 0; j < cols; ++j) m(i, j) = scale * rng.gaussian();
    }
    return m;
}

MelRvq random_rvq(uint64_t seed, int N, int K, int d, int M) {
    Rng rng(seed);
    MelRvq rvq;
    for (int n = 0; n < N; ++n) {
        StageParams s;
        s.projection = random_matrix(rng, d, M, 1.0 / std::sqrt(M));
        s.decoder = random_matrix(rng, M, d, 1.0 / std::sqrt(d));
        s.codebook = random_matrix(rng, K, d);
        rvq.stages.push_back(std::move(s));
    }
    rvq.input_stats = FeatureStats::identity(M);
    rvq.validate();
    return rvq;
}

void check_close(double analytic, double fd) {
    const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-8});
    CHECK(std::abs(analytic - fd) / denom <= 1e-4);
}

}  // namespace

TEST_CASE("stop-gradient structure zeroes the right parameter blocks") {
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        const MelRvq rvq = random_rvq(500 + static_cast<uint64_t>(trial), 3, 8, 5, 7);
        const Eigen::MatrixXd batch = random_matrix(rng, 6, 7);

        const auto g_code = rvq_gradients(rvq, batch, LossTerm::code);
        const auto g_comm = rvq_gradients(rvq, batch, LossTerm::comm);
        const auto g_recon = rvq_gradients(rvq, batch, LossTerm::recon);
        for (size_t n = 0; n < g_code.size(); ++n) {
            CHECK(g_code[n].projection.cwiseAbs().maxCoeff() == 0.0);
            CHECK(g_code[n].decoder.cwiseAbs().maxCoeff() == 0.0);
            CHECK(g_comm[n].codebook.cwiseAbs().maxCoeff() == 0.0);
            CHECK(g_comm[n].decoder.cwiseAbs().maxCoeff() == 0.0);
            CHECK(g_recon[n].projection.cwiseAbs().maxCoeff() == 0.0);
            // The terms that should move do move.
            CHECK(g_code[n].codebook.cwiseAbs().maxCoeff() > 0.0);
            CHECK(g_comm[n].projection.cwiseAbs().maxCoeff() > 0.0);
            CHECK(g_recon[n].decoder.cwiseAbs().maxCoeff() > 0.0);
        }
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    Rng rng(32);
    MelRvq rvq = random_rvq(600, 3, 8, 5, 7);
    const Eigen::MatrixXd batch = random_matrix(rng, 6, 7);
    const auto frozen = melrvq::testutil::freeze_forward(rvq, batch);

    for (LossTerm term : {LossTerm::code, LossTerm::comm, LossTerm::recon, LossTerm::total}) {
        const auto grads = rvq_gradients(rvq, batch, term);
        for (size_t n = 0; n < rvq.stages.size(); ++n) {
            StageParams& s = rvq.stages[n];
            for (int probe = 0; probe < 6; ++probe) {
                const long pi = static_cast<long>(rng.uniform_index(static_cast<uint64_t>(s.projection.size())));
                check_close(grads[n].projection(pi),
                            melrvq::testutil::fd_gradient(rvq, frozen, term, s.projection.data()[pi]));
                const long di = static_cast<long>(rng.uniform_index(static_cast<uint64_t>(s.decoder.size())));
                check_close(grads[n].decoder(di),
                            melrvq::testutil::fd_gradient(rvq, frozen, term, s.decoder.data()[di]));
                const long ci = static_cast<long>(rng.uniform_index(static_cast<uint64_t>(s.codebook.size())));
                check_close(grads[n].codebook(ci),
                            melrvq::testutil::fd_gradient(rvq, frozen, term, s.codebook.data()[ci]));
            }
        }
    }
}

TEST_CASE("same seed twice gives an identical quantizer") {
    Rng rng(33);
    const Eigen::MatrixXd frames = random_matrix(rng, 200, 10);
    TrainConfig cfg;
    cfg.seed = 77;
    cfg.init = RvqInit::kmeans_sample;
    const RvqDims dims{.num_stages = 2, .codebook_size = 16, .code_dim = 4, .input_dim = 10};
    const MelRvq a = init_rvq(frames, cfg, dims);
    const MelRvq b = init_rvq(frames, cfg, dims);
    for (int n = 0; n < 2; ++n) {
        CHECK(a.stages[static_cast<size_t>(n)].projection ==
              b.stages[static_cast<size_t>(n)].projection);
        CHECK(a.stages[static_cast<size_t>(n)].codebook ==
              b.stages[static_cast<size_t>(n)].codebook);
    }
}

TEST_CASE("sampling init with K equal to the frame count uses every row") {
    Rng rng(34);
    const Eigen::MatrixXd frames = random_matrix(rng, 16, 6);
    TrainConfig cfg;
    cfg.seed = 5;
    cfg.init = RvqInit::kmeans_sample;
    const RvqDims dims{.num_stages = 1, .codebook_size = 16, .code_dim = 3, .input_dim = 6};
    const MelRvq rvq = init_rvq(frames, cfg, dims);
    const Eigen::MatrixXd standardized = standardize(frames, rvq.input_stats);

    // Every codebook row equals the projection of some data row, and all
    // sixteen data rows are used exactly once.
    std::vector<bool> used(16, false);
    for (int k = 0; k < 16; ++k) {
        bool matched = false;
        for (long t = 0; t < 16; ++t) {
            const Eigen::VectorXd projected =
                rvq.stages[0].projection * standardized.row(t).transpose();
            if ((projected.transpose() - rvq.stages[0].codebook.row(k)).cwiseAbs().maxCoeff() <
                1e-12) {
                CHECK(!used[static_cast<size_t>(t)]);
                used[static_cast<size_t>(t)] = true;
                matched = true;
                break;
            }
        }
        CHECK(matched);
    }
}

TEST_CASE("sampling init requires enough frames") {
    Rng rng(35);
    const Eigen::MatrixXd frames = random_matrix(rng, 10, 6);
    TrainConfig cfg;
    cfg.init = RvqInit::kmeans_sample;
    const RvqDims dims{.num_stages = 1, .codebook_size = 16, .code_dim = 3, .input_dim = 6};
    CHECK_THROWS_AS(init_rvq(frames, cfg, dims), DomainError);
}

TEST_CASE("different seeds tokenize a fixture differently") {
    Rng rng(36);
    const Eigen::MatrixXd frames = random_matrix(rng, 400, 10);
    TrainConfig cfg;
    const RvqDims dims{.num_stages = 2, .codebook_size = 32, .code_dim = 4, .input_dim = 10};
    cfg.seed = 1;
    const MelRvq a = init_rvq(frames, cfg, dims);
    cfg.seed = 2;
    const MelRvq b = init_rvq(frames, cfg, dims);
    const TokenSequence ta = encode_frames(a, frames);
    const TokenSequence tb = encode_frames(b, frames);
    CHECK((ta.tokens.array() != tb.tokens.array()).any());
}

TEST_CASE("a zero-loss batch leaves sgd parameters unchanged") {
    // One stage whose code reconstructs the input exactly: z = x, Q_0 = x
    // direction, decoder * Q_0 = x.
    const int M = 4;
    MelRvq rvq;
    StageParams s;
    s.projection = Eigen::MatrixXd::Identity(M, M);
    s.decoder = Eigen::MatrixXd::Identity(M, M);
    s.codebook = Eigen::MatrixXd::Zero(1, M);
    s.codebook(0, 2) = 1.5;
    rvq.stages.push_back(s);
    rvq.input_stats = FeatureStats::identity(M);

    Eigen::MatrixXd batch(1, M);
    batch << 0.0, 0.0, 1.5, 0.0;  // z == Q_0, recon == x
    const RvqLosses check = losses(rvq, batch);
    REQUIRE(check.total == doctest::Approx(0.0));

    TrainConfig cfg;
    cfg.optimizer = Optimizer::sgd;
    cfg.learning_rate = 0.1;
    auto [updated, loss] = grad_step(rvq, batch, cfg);
    CHECK(loss.total == doctest::Approx(0.0));
    CHECK(updated.stages[0].projection == rvq.stages[0].projection);
    CHECK(updated.stages[0].decoder == rvq.stages[0].decoder);
    CHECK(updated.stages[0].codebook == rvq.stages[0].codebook);
}

TEST_CASE("zero steps returns the initialized quantizer with an empty series") {
    Rng rng(37);
    const Eigen::MatrixXd frames = random_matrix(rng, 100, 8);
    TrainConfig cfg;
    cfg.steps = 0;
    cfg.seed = 9;
    const RvqDims dims{.num_stages = 2, .codebook_size = 8, .code_dim = 4, .input_dim = 8};
    auto [trained, report] = train(frames, cfg, dims);
    CHECK(report.loss_series.empty());
    const MelRvq fresh = init_rvq(frames, cfg, dims);
    CHECK(trained.stages[0].codebook == fresh.stages[0].codebook);
    CHECK(trained.stages[1].projection == fresh.stages[1].projection);
}

TEST_CASE("two separated clusters need two codes") {
    Rng rng(38);
    const int M = 8;
    // Two clusters whose centers sit 10 sigma apart (unit per-dim noise,
    // center distance 10 along the diagonal direction).
    Eigen::VectorXd center = Eigen::VectorXd::Constant(M, 5.0 / std::sqrt(static_cast<double>(M)));
    auto draw = [&](Eigen::MatrixXd& out) {
        for (long i = 0; i < out.rows(); ++i) {
            const double sign = i < out.rows() / 2 ? 1.0 : -1.0;
            for (int j = 0; j < M; ++j) out(i, j) = sign * center(j) + rng.gaussian();
        }
    };
    Eigen::MatrixXd frames(400, M);
    draw(frames);
    Eigen::MatrixXd holdout(100, M);
    draw(holdout);

    auto run = [&](int K) {
        TrainConfig cfg;
        cfg.steps = 400;
        cfg.batch_size = 64;
        cfg.seed = 11;
        const RvqDims dims{.num_stages = 1, .codebook_size = K, .code_dim = 4, .input_dim = M};
        auto [rvq, report] = train(frames, cfg, dims);
        const Eigen::MatrixXd recon = decode_frames(rvq, encode_frames(rvq, holdout));
        return (recon - holdout).squaredNorm() / static_cast<double>(holdout.size());
    };

    const double mse_two = run(2);
    const double mse_one = run(1);
    CHECK(mse_two < mse_one);
}

TEST_CASE("desk-scale training reduces the loss deterministically") {
    Rng rng(39);
    // A mixture with enough distinct clusters to exercise all codes.
    const int M = 12;
    Eigen::MatrixXd centers = random_matrix(rng, 40, M, 4.0);
    Eigen::MatrixXd frames(2000, M);
    for (long i = 0; i < frames.rows(); ++i) {
        frames.row(i) = centers.row(static_cast<long>(rng.uniform_index(40))) +
                        random_matrix(rng, 1, M, 0.3);
    }
    TrainConfig cfg;
    cfg.steps = 300;
    cfg.batch_size = 64;
    cfg.seed = 21;
    const RvqDims dims{.num_stages = 2, .codebook_size = 16, .code_dim = 6, .input_dim = M};
    auto [rvq, report] = train(frames, cfg, dims);
    REQUIRE(report.loss_series.size() == 300);
    CHECK(report.loss_series.back().total < report.loss_series.front().total);

    auto [rvq2, report2] = train(frames, cfg, dims);
    for (size_t i = 0; i < report.loss_series.size(); ++i) {
        CHECK(report.loss_series[i].total == report2.loss_series[i].total);
    }

    TempDir tmp("rvq-determinism");
    save_rvq(tmp.file("a.mrvq"), rvq);
    save_rvq(tmp.file("b.mrvq"), rvq2);
    CHECK(melrvq::testutil::same_bytes(tmp.file("a.mrvq"), tmp.file("b.mrvq")));
}

TEST_CASE("utilization reaches a quarter of the codebook on rich data") {
    Rng rng(40);
    const int M = 16;
    const Eigen::MatrixXd centers = random_matrix(rng, 80, M, 5.0);
    Eigen::MatrixXd frames(4000, M);
    for (long i = 0; i < frames.rows(); ++i) {
        frames.row(i) = centers.row(static_cast<long>(rng.uniform_index(80))) +
                        random_matrix(rng, 1, M, 0.4);
    }
    TrainConfig cfg;
    cfg.steps = 500;
    cfg.batch_size = 128;
    cfg.seed = 31;
    const RvqDims dims{.num_stages = 1, .codebook_size = 64, .code_dim = 8, .input_dim = M};
    auto [rvq, report] = train(frames, cfg, dims);
    REQUIRE(report.utilization.size() == 1);
    CHECK(report.utilization[0] >= 0.25);
}

TEST_CASE("frozen quantizers are deterministic and refuse training") {
    const RvqDims dims{.num_stages = 2, .codebook_size = 16, .code_dim = 4, .input_dim = 8};
    MelRvq a = freeze_random(dims, 55);
    MelRvq b = freeze_random(dims, 55);
    Rng rng(41);
    const Eigen::MatrixXd frames = random_matrix(rng, 50, 8);
    const TokenSequence ta = encode_frames(a, frames);
    const TokenSequence tb = encode_frames(b, frames);
    CHECK((ta.tokens.array() == tb.tokens.array()).all());

    TrainConfig cfg;
    CHECK_THROWS_WITH_AS(RvqTrainer(a, cfg), "train: frozen quantizer", DomainError);
}

TEST_CASE("exploding updates raise a divergence error with a step index") {
    Rng rng(42);
    const Eigen::MatrixXd frames = random_matrix(rng, 200, 8);
    TrainConfig cfg;
    cfg.optimizer = Optimizer::sgd;
    cfg.learning_rate = 1e18;
    cfg.steps = 50;
    cfg.batch_size = 16;
    const RvqDims dims{.num_stages = 2, .codebook_size = 8, .code_dim = 4, .input_dim = 8};
    CHECK_THROWS_AS(train(frames, cfg, dims), DivergenceError);
}

TEST_CASE("dead-code reseeding replaces only unhit rows") {
    // Identity projection and an axis-aligned codebook: a batch of e1-like
    // frames hits exactly row 0, leaving rows 1..3 dead by construction.
    const int M = 4;
    MelRvq rvq;
    StageParams s;
    s.projection = Eigen::MatrixXd::Identity(M, M);
    s.decoder = Eigen::MatrixXd::Zero(M, M);
    s.codebook = 2.0 * Eigen::MatrixXd::Identity(M, M);
    rvq.stages.push_back(s);
    rvq.input_stats = FeatureStats::identity(M);

    Eigen::MatrixXd batch = Eigen::MatrixXd::Zero(16, M);
    batch.col(0).setConstant(3.0);

    TrainConfig cfg;
    cfg.seed = 13;
    cfg.dead_code_threshold = 1;
    RvqTrainer trainer(rvq, cfg);
    trainer.step(batch);

    const Eigen::MatrixXd before = trainer.model().stages[0].codebook;
    trainer.reseed_dead_codes(batch);
    const Eigen::MatrixXd after = trainer.model().stages[0].codebook;
    CHECK((before.row(0).array() == after.row(0).array()).all());
    for (int k = 1; k < M; ++k) {
        CHECK((before.row(k).array() != after.row(k).array()).any());
        // Replacement rows are projections of batch frames.
        CHECK((after.row(k).transpose() - batch.row(0).transpose()).cwiseAbs().maxCoeff() <
              1e-12);
    }

    // Threshold 0 disables reseeding entirely.
    TrainConfig off = cfg;
    off.dead_code_threshold = 0;
    RvqTrainer no_reseed(rvq, off);
    no_reseed.step(batch);
    const Eigen::MatrixXd kept = no_reseed.model().stages[0].codebook;
    no_reseed.reseed_dead_codes(batch);
    CHECK((no_reseed.model().stages[0].codebook.array() == kept.array()).all());
}
