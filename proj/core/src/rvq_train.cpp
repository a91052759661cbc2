#include "melrvq/rvq_train.hpp"

#include <chrono>
#include <cmath>

#include "melrvq/errors.hpp"

namespace melrvq {

namespace {

Eigen::MatrixXd gaussian_matrix(Rng& rng, long rows, long cols, double scale) {
    Eigen::MatrixXd m(rows, cols);
    for (long i = 0; i < rows; ++i) {
        for (long j = 0; j < cols; ++j) m(i, j) = scale * rng.gaussian();
    }
    return m;
}

// d/dv of || v/|v| - c ||^2 for constant c: (2/|v|) * (u (u.c) - c), u = v/|v|.
// Zero by convention when v is the zero vector (norm(0) := 0 in the loss).
Eigen::VectorXd normalized_diff_grad(const Eigen::VectorXd& v, const Eigen::VectorXd& c) {
    const double n = v.norm();
    if (n == 0.0) return Eigen::VectorXd::Zero(v.size());
    const Eigen::VectorXd u = v / n;
    return (2.0 / n) * (u * u.dot(c) - c);
}

struct GradientPass {
    std::vector<StageGradients> grads;
    RvqLosses loss;
    std::vector<std::vector<long>> hits;  // per stage, per code
};

// Single sweep computing losses, gradients, and code-hit counts. Residuals
// entering each stage and all sg() arguments are constants from the forward
// pass; assignments are recomputed each call, never differentiated.
GradientPass gradient_pass(const MelRvq& rvq, const Eigen::MatrixXd& standardized_batch,
                           LossTerm term) {
    if (standardized_batch.rows() == 0) throw DomainError("gradients: empty batch");
    if (standardized_batch.cols() != rvq.input_dim())
        throw ShapeError("gradients: batch dimension mismatch");

    const int N = rvq.num_stages();
    GradientPass pass;
    pass.grads.resize(static_cast<size_t>(N));
    pass.hits.assign(static_cast<size_t>(N),
                     std::vector<long>(static_cast<size_t>(rvq.codebook_size()), 0));
    std::vector<Eigen::MatrixXd> normalized_books;
    normalized_books.reserve(static_cast<size_t>(N));
    for (int n = 0; n < N; ++n) {
        const StageParams& s = rvq.stages[static_cast<size_t>(n)];
        pass.grads[static_cast<size_t>(n)].projection =
            Eigen::MatrixXd::Zero(s.projection.rows(), s.projection.cols());
        pass.grads[static_cast<size_t>(n)].decoder =
            Eigen::MatrixXd::Zero(s.decoder.rows(), s.decoder.cols());
        pass.grads[static_cast<size_t>(n)].codebook =
            Eigen::MatrixXd::Zero(s.codebook.rows(), s.codebook.cols());
        Eigen::MatrixXd nb(s.codebook.rows(), s.codebook.cols());
        for (long i = 0; i < s.codebook.rows(); ++i) {
            nb.row(i) = l2_normalized(s.codebook.row(i).transpose()).transpose();
        }
        normalized_books.push_back(std::move(nb));
    }

    const bool want_code = term == LossTerm::code || term == LossTerm::total;
    const bool want_comm = term == LossTerm::comm || term == LossTerm::total;
    const bool want_recon = term == LossTerm::recon || term == LossTerm::total;
    const double w_code = term == LossTerm::total ? rvq.alpha : 1.0;
    const double w_comm = term == LossTerm::total ? rvq.beta : 1.0;

    for (long b = 0; b < standardized_batch.rows(); ++b) {
        Eigen::VectorXd r = standardized_batch.row(b).transpose();
        for (int n = 0; n < N; ++n) {
            const StageParams& s = rvq.stages[static_cast<size_t>(n)];
            StageGradients& g = pass.grads[static_cast<size_t>(n)];
            const Eigen::MatrixXd& nb = normalized_books[static_cast<size_t>(n)];

            const Eigen::VectorXd z = s.projection * r;
            const Eigen::VectorXd nz = l2_normalized(z);
            int tau = 0;
            double best = std::numeric_limits<double>::infinity();
            const bool degenerate = z.norm() == 0.0;
            for (long i = 0; i < nb.rows(); ++i) {
                const double dist = degenerate
                                        ? (s.codebook.row(i).transpose() - z).squaredNorm()
                                        : (nb.row(i).transpose() - nz).squaredNorm();
                if (dist < best) {
                    best = dist;
                    tau = static_cast<int>(i);
                }
            }
            pass.hits[static_cast<size_t>(n)][static_cast<size_t>(tau)]++;

            const Eigen::VectorXd q = s.codebook.row(tau).transpose();
            const Eigen::VectorXd nq = nb.row(tau).transpose();

            pass.loss.code += (nq - nz).squaredNorm();
            pass.loss.comm += (nz - nq).squaredNorm();

            if (want_code) {
                g.codebook.row(tau) += (w_code * normalized_diff_grad(q, nz)).transpose();
            }
            if (want_comm) {
                const Eigen::VectorXd gz = w_comm * normalized_diff_grad(z, nq);
                g.projection += gz * r.transpose();
            }
            const Eigen::VectorXd recon = s.decoder * q;
            pass.loss.recon += (recon - r).squaredNorm();
            if (want_recon) {
                const Eigen::VectorXd err = 2.0 * (recon - r);
                g.decoder += err * q.transpose();
                g.codebook.row(tau) += (s.decoder.transpose() * err).transpose();
            }
            r -= recon;
        }
    }
    pass.loss.total = rvq.alpha * pass.loss.code + rvq.beta * pass.loss.comm + pass.loss.recon;
    return pass;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw DomainError("train: learning rate must be positive");
    if (batch_size < 1) throw DomainError("train: batch size must be >= 1");
    if (steps < 0) throw DomainError("train: negative step count");
    if (dead_code_threshold < 0) throw DomainError("train: negative dead-code threshold");
}

std::vector<StageGradients> rvq_gradients(const MelRvq& rvq,
                                          const Eigen::MatrixXd& standardized_batch,
                                          LossTerm term) {
    return gradient_pass(rvq, standardized_batch, term).grads;
}

MelRvq init_rvq(const Eigen::MatrixXd& frames, const TrainConfig& cfg, const RvqDims& dims,
                RvqSource source) {
    cfg.validate();
    if (frames.rows() == 0) throw DomainError("init: empty frame set");
    if (frames.cols() != dims.input_dim) throw ShapeError("init: frame dimension mismatch");
    if (cfg.init == RvqInit::kmeans_sample && frames.rows() < dims.codebook_size)
        throw DomainError("init: need at least " + std::to_string(dims.codebook_size) +
                          " frames for sampled codebook init, have " +
                          std::to_string(frames.rows()));

    Rng rng = Rng::derive(cfg.seed, "rvq-init");

    MelRvq rvq;
    rvq.source = source;
    rvq.alpha = dims.alpha;
    rvq.beta = dims.beta;
    rvq.input_stats = compute_feature_stats(frames);
    const Eigen::MatrixXd standardized = standardize(frames, rvq.input_stats);

    const double proj_scale = 1.0 / std::sqrt(static_cast<double>(dims.input_dim));
    const double dec_scale = 1.0 / std::sqrt(static_cast<double>(dims.code_dim));

    Eigen::MatrixXd residual = standardized;
    for (int n = 0; n < dims.num_stages; ++n) {
        StageParams stage;
        stage.projection = gaussian_matrix(rng, dims.code_dim, dims.input_dim, proj_scale);
        stage.decoder = gaussian_matrix(rng, dims.input_dim, dims.code_dim, dec_scale);

        if (cfg.init == RvqInit::random_gaussian) {
            stage.codebook = gaussian_matrix(rng, dims.codebook_size, dims.code_dim, 1.0);
        } else {
            const auto picks = rng.sample_without_replacement(
                static_cast<size_t>(residual.rows()), static_cast<size_t>(dims.codebook_size));
            stage.codebook.resize(dims.codebook_size, dims.code_dim);
            for (int k = 0; k < dims.codebook_size; ++k) {
                stage.codebook.row(k) =
                    (stage.projection *
                     residual.row(static_cast<long>(picks[static_cast<size_t>(k)])).transpose())
                        .transpose();
            }
        }
        // A zero row would make normalization undefined; replace with a draw.
        for (int k = 0; k < dims.codebook_size; ++k) {
            if (stage.codebook.row(k).norm() < 1e-12) {
                for (int j = 0; j < dims.code_dim; ++j) stage.codebook(k, j) = rng.gaussian();
            }
        }
        rvq.stages.push_back(stage);

        if (cfg.init == RvqInit::kmeans_sample && n + 1 < dims.num_stages) {
            // Advance residuals so later stages sample what is left to explain.
            for (long t = 0; t < residual.rows(); ++t) {
                Eigen::VectorXd rt = residual.row(t).transpose();
                QuantizeStep qs = quantize_step(stage, rt, ZeroVectorPolicy::fallback);
                residual.row(t) = qs.next_residual.transpose();
            }
        }
    }
    rvq.validate();
    return rvq;
}

MelRvq freeze_random(const RvqDims& dims, uint64_t seed, RvqSource source) {
    Rng rng = Rng::derive(seed, "rvq-frozen-random");
    MelRvq rvq;
    rvq.source = source;
    rvq.alpha = dims.alpha;
    rvq.beta = dims.beta;
    rvq.frozen_random = true;
    rvq.input_stats = FeatureStats::identity(dims.input_dim);
    const double proj_scale = 1.0 / std::sqrt(static_cast<double>(dims.input_dim));
    const double dec_scale = 1.0 / std::sqrt(static_cast<double>(dims.code_dim));
    for (int n = 0; n < dims.num_stages; ++n) {
        StageParams stage;
        stage.projection = gaussian_matrix(rng, dims.code_dim, dims.input_dim, proj_scale);
        stage.decoder = gaussian_matrix(rng, dims.input_dim, dims.code_dim, dec_scale);
        stage.codebook = gaussian_matrix(rng, dims.codebook_size, dims.code_dim, 1.0);
        rvq.stages.push_back(std::move(stage));
    }
    rvq.validate();
    return rvq;
}

RvqTrainer::RvqTrainer(MelRvq rvq, TrainConfig cfg)
    : rvq_(std::move(rvq)), cfg_(cfg), rng_(Rng::derive(cfg.seed, "rvq-trainer")) {
    cfg_.validate();
    if (rvq_.frozen_random) throw DomainError("train: frozen quantizer");
    rvq_.validate();
    state_.resize(rvq_.stages.size());
    for (size_t n = 0; n < rvq_.stages.size(); ++n) {
        const StageParams& s = rvq_.stages[n];
        auto zero_like = [](const Eigen::MatrixXd& m) {
            return AdamSlot{Eigen::MatrixXd::Zero(m.rows(), m.cols()),
                            Eigen::MatrixXd::Zero(m.rows(), m.cols())};
        };
        state_[n].projection = zero_like(s.projection);
        state_[n].decoder = zero_like(s.decoder);
        state_[n].codebook = zero_like(s.codebook);
        state_[n].hits.assign(static_cast<size_t>(s.codebook.rows()), 0);
    }
}

void RvqTrainer::apply_update(Eigen::MatrixXd& param, AdamSlot& slot,
                              const Eigen::MatrixXd& grad, long step_idx) {
    if (cfg_.optimizer == Optimizer::sgd) {
        param -= cfg_.learning_rate * grad;
        return;
    }
    slot.m = cfg_.adam_beta1 * slot.m + (1.0 - cfg_.adam_beta1) * grad;
    slot.v = cfg_.adam_beta2 * slot.v + (1.0 - cfg_.adam_beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(step_idx));
    const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(step_idx));
    const Eigen::MatrixXd m_hat = slot.m / bc1;
    const Eigen::MatrixXd v_hat = slot.v / bc2;
    param -= cfg_.learning_rate *
             (m_hat.array() / (v_hat.array().sqrt() + cfg_.adam_eps)).matrix();
}

RvqLosses RvqTrainer::step(const Eigen::MatrixXd& standardized_batch) {
    GradientPass pass = gradient_pass(rvq_, standardized_batch, LossTerm::total);
    if (!std::isfinite(pass.loss.total))
        throw DivergenceError("train: non-finite loss", step_count_);
    for (const auto& g : pass.grads) {
        if (!g.projection.allFinite() || !g.decoder.allFinite() || !g.codebook.allFinite())
            throw DivergenceError("train: non-finite gradient", step_count_);
    }
    for (size_t n = 0; n < state_.size(); ++n) {
        for (size_t k = 0; k < state_[n].hits.size(); ++k) {
            state_[n].hits[k] += pass.hits[n][k];
        }
    }

    ++step_count_;
    for (size_t n = 0; n < rvq_.stages.size(); ++n) {
        StageParams& s = rvq_.stages[n];
        apply_update(s.projection, state_[n].projection, pass.grads[n].projection, step_count_);
        apply_update(s.decoder, state_[n].decoder, pass.grads[n].decoder, step_count_);
        apply_update(s.codebook, state_[n].codebook, pass.grads[n].codebook, step_count_);
        if (!s.projection.allFinite() || !s.decoder.allFinite() || !s.codebook.allFinite())
            throw DivergenceError("train: non-finite parameters after update", step_count_ - 1);
    }
    return pass.loss;
}

void RvqTrainer::reseed_dead_codes(const Eigen::MatrixXd& standardized_frames) {
    if (cfg_.dead_code_threshold <= 0) return;
    for (size_t n = 0; n < rvq_.stages.size(); ++n) {
        StageParams& s = rvq_.stages[n];
        for (long k = 0; k < s.codebook.rows(); ++k) {
            if (state_[n].hits[static_cast<size_t>(k)] >= cfg_.dead_code_threshold) continue;
            const long pick = static_cast<long>(
                rng_.uniform_index(static_cast<uint64_t>(standardized_frames.rows())));
            // Replacement row = this stage's projection of the frame's residual.
            Eigen::VectorXd r = standardized_frames.row(pick).transpose();
            for (size_t m = 0; m < n; ++m) {
                r = quantize_step(rvq_.stages[m], r, ZeroVectorPolicy::fallback).next_residual;
            }
            Eigen::VectorXd row = s.projection * r;
            if (row.norm() < 1e-12) {
                for (long j = 0; j < row.size(); ++j) row(j) = rng_.gaussian();
            }
            s.codebook.row(k) = row.transpose();
            state_[n].codebook.m.row(k).setZero();
            state_[n].codebook.v.row(k).setZero();
        }
        std::fill(state_[n].hits.begin(), state_[n].hits.end(), 0);
    }
}

std::pair<MelRvq, RvqLosses> grad_step(const MelRvq& rvq,
                                       const Eigen::MatrixXd& standardized_batch,
                                       const TrainConfig& cfg) {
    RvqTrainer trainer(rvq, cfg);
    RvqLosses loss = trainer.step(standardized_batch);
    return {trainer.take_model(), loss};
}

std::pair<MelRvq, TrainReport> train(const Eigen::MatrixXd& frames, const TrainConfig& cfg,
                                     const RvqDims& dims, RvqSource source) {
    const auto t0 = std::chrono::steady_clock::now();
    cfg.validate();
    if (frames.rows() == 0) throw DomainError("train: empty frame set");

    MelRvq rvq = init_rvq(frames, cfg, dims, source);
    TrainReport report;
    report.seed = cfg.seed;
    if (cfg.steps == 0) {
        report.utilization = codebook_utilization(rvq, frames);
        report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return {std::move(rvq), std::move(report)};
    }

    const Eigen::MatrixXd standardized = standardize(frames, rvq.input_stats);
    RvqTrainer trainer(std::move(rvq), cfg);
    Rng batch_rng = Rng::derive(cfg.seed, "rvq-batches");

    const long steps_per_epoch =
        std::max<long>(1, frames.rows() / std::max<long>(1, cfg.batch_size));

    Eigen::MatrixXd batch(cfg.batch_size, frames.cols());
    report.loss_series.reserve(static_cast<size_t>(cfg.steps));
    for (long step = 0; step < cfg.steps; ++step) {
        for (int b = 0; b < cfg.batch_size; ++b) {
            const long idx =
                static_cast<long>(batch_rng.uniform_index(static_cast<uint64_t>(frames.rows())));
            batch.row(b) = standardized.row(idx);
        }
        report.loss_series.push_back(trainer.step(batch));
        if ((step + 1) % steps_per_epoch == 0) {
            trainer.reseed_dead_codes(standardized);
        }
    }

    MelRvq trained = trainer.take_model();
    report.utilization = codebook_utilization(trained, frames);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(trained), std::move(report)};
}

std::vector<double> codebook_utilization(const MelRvq& rvq, const Eigen::MatrixXd& frames) {
    const TokenSequence toks = encode_frames(rvq, frames, ZeroVectorPolicy::fallback);
    std::vector<double> util(static_cast<size_t>(rvq.num_stages()), 0.0);
    for (int n = 0; n < rvq.num_stages(); ++n) {
        std::vector<bool> seen(static_cast<size_t>(rvq.codebook_size()), false);
        for (long t = 0; t < toks.tokens.rows(); ++t) {
            seen[static_cast<size_t>(toks.tokens(t, n))] = true;
        }
        long used = 0;
        for (bool b : seen) used += b ? 1 : 0;
        util[static_cast<size_t>(n)] =
            static_cast<double>(used) / static_cast<double>(rvq.codebook_size());
    }
    return util;
}

}  // namespace melrvq
