#include <cmath>

#include "melrvq/errors.hpp"
#include "melrvq/io.hpp"
#include "melrvq/rng.hpp"
#include "melrvq/ssl.hpp"

namespace melrvq {

namespace {

constexpr float kLnEps = 1e-5f;
constexpr double kGeluC0 = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC1 = 0.044715;

float gelu(float x) {
    const double t = kGeluC0 * (x + kGeluC1 * static_cast<double>(x) * x * x);
    return static_cast<float>(0.5 * x * (1.0 + std::tanh(t)));
}

float gelu_grad(float x) {
    const double x3 = static_cast<double>(x) * x * x;
    const double t = kGeluC0 * (x + kGeluC1 * x3);
    const double th = std::tanh(t);
    const double sech2 = 1.0 - th * th;
    return static_cast<float>(0.5 * (1.0 + th) +
                              0.5 * x * sech2 * kGeluC0 * (1.0 + 3.0 * kGeluC1 * x * x));
}

// Relative-position attention bias, one slope per head: score(i, j) gets
// -slope * |i - j|. Keeping position strictly relative matters downstream:
// layer latents must not encode absolute frame indices, or tokens derived
// from them could not be predicted from randomly cropped windows.
float alibi_slope(int head, int num_heads) {
    return std::pow(2.0f, -8.0f * static_cast<float>(head + 1) / static_cast<float>(num_heads));
}

struct LnCache {
    Eigen::MatrixXf xhat;          // d x T
    Eigen::VectorXf inv_std;       // T
};

Eigen::MatrixXf layer_norm(const Eigen::MatrixXf& x, const Eigen::MatrixXf& gamma,
                           const Eigen::MatrixXf& beta, LnCache* cache) {
    const long d = x.rows();
    const long T = x.cols();
    Eigen::MatrixXf out(d, T);
    Eigen::MatrixXf xhat(d, T);
    Eigen::VectorXf inv_std(T);
    for (long t = 0; t < T; ++t) {
        // Scalar reductions: identical columns must normalize to identical
        // bits, which SIMD reductions do not guarantee across alignments.
        float mean = 0.0f;
        for (long i = 0; i < d; ++i) mean += x(i, t);
        mean /= static_cast<float>(d);
        float var = 0.0f;
        for (long i = 0; i < d; ++i) {
            const float c = x(i, t) - mean;
            var += c * c;
        }
        var /= static_cast<float>(d);
        const float is = 1.0f / std::sqrt(var + kLnEps);
        for (long i = 0; i < d; ++i) xhat(i, t) = (x(i, t) - mean) * is;
        inv_std(t) = is;
        out.col(t) = gamma.col(0).cwiseProduct(xhat.col(t)) + beta.col(0);
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

// Gradient through layer norm; accumulates dgamma/dbeta, returns dx.
Eigen::MatrixXf layer_norm_backward(const Eigen::MatrixXf& dout, const LnCache& cache,
                                    const Eigen::MatrixXf& gamma, Eigen::MatrixXf& dgamma,
                                    Eigen::MatrixXf& dbeta) {
    const long d = dout.rows();
    const long T = dout.cols();
    Eigen::MatrixXf dx(d, T);
    for (long t = 0; t < T; ++t) {
        dgamma.col(0) += dout.col(t).cwiseProduct(cache.xhat.col(t));
        dbeta.col(0) += dout.col(t);
        const Eigen::VectorXf dxhat = dout.col(t).cwiseProduct(gamma.col(0));
        const float sum_dxhat = dxhat.sum();
        const float dot = dxhat.dot(cache.xhat.col(t));
        dx.col(t) = (cache.inv_std(t) / static_cast<float>(d)) *
                    (static_cast<float>(d) * dxhat.array() - sum_dxhat -
                     cache.xhat.col(t).array() * dot)
                        .matrix();
    }
    return dx;
}

Eigen::MatrixXf gaussian_matrix_f(Rng& rng, long rows, long cols, double scale) {
    Eigen::MatrixXf m(rows, cols);
    for (long i = 0; i < rows; ++i) {
        for (long j = 0; j < cols; ++j) m(i, j) = static_cast<float>(scale * rng.gaussian());
    }
    return m;
}

// Frame-wise linear map computed one column at a time. Blocked GEMM kernels
// round remainder columns differently, which would break the guarantee that
// identical frames produce identical outputs; per-column GEMV keeps the
// reduction order independent of the column index.
Eigen::MatrixXf pointwise_linear(const Eigen::MatrixXf& w, const Eigen::MatrixXf& bias,
                                 const Eigen::MatrixXf& x) {
    Eigen::MatrixXf out(w.rows(), x.cols());
    for (long t = 0; t < x.cols(); ++t) {
        out.col(t).noalias() = w * x.col(t);
        out.col(t) += bias.col(0);
    }
    return out;
}

}  // namespace

void SslModelConfig::validate() const {
    if (input_dim < 1 || width < 1 || attn_heads < 1 || ffn_mult < 1)
        throw DomainError("ssl model: degenerate dimensions");
    if (layers < 0) throw DomainError("ssl model: negative layer count");
    if (width % attn_heads != 0)
        throw DomainError("ssl model: width must be divisible by attn_heads");
    if (num_target_heads < 1 || codebook_size < 1)
        throw DomainError("ssl model: need at least one head and one code");
}

Eigen::MatrixXf LatentStack::layer_frames(int l) const {
    if (l < 0 || static_cast<size_t>(l) >= layers.size())
        throw DomainError("latent layer " + std::to_string(l) + " out of range [0, " +
                          std::to_string(layers.size() - 1) + "]");
    return layers[static_cast<size_t>(l)].transpose();
}

struct SslToyModel::BlockCache {
    Eigen::MatrixXf x_in;                // residual input, d x T
    LnCache ln1;
    Eigen::MatrixXf a;                   // ln1 output
    Eigen::MatrixXf q, k, v;             // d x T
    std::vector<Eigen::MatrixXf> attn;   // per head, T x T softmax rows
    Eigen::MatrixXf concat;              // head outputs stacked, d x T
    Eigen::MatrixXf x_mid;               // after attention residual
    LnCache ln2;
    Eigen::MatrixXf f_in;                // ln2 output
    Eigen::MatrixXf u;                   // pre-activation, d_ff x T
    Eigen::MatrixXf g;                   // gelu(u)
};

struct SslToyModel::Cache {
    Eigen::MatrixXf f;                   // input, M x T
    Eigen::MatrixXf h0;                  // input projection output
    std::vector<BlockCache> blocks;
    LnCache lnf;
    Eigen::MatrixXf y;                   // final normed features
    std::vector<uint8_t> mask;           // for the learned mask embedding
};

void SslToyModel::collect(Tensors& t, std::vector<Eigen::MatrixXf*>& out) {
    out.push_back(&t.w_in);
    out.push_back(&t.b_in);
    for (auto& b : t.blocks) {
        out.push_back(&b.ln1_g);
        out.push_back(&b.ln1_b);
        out.push_back(&b.wq);
        out.push_back(&b.bq);
        out.push_back(&b.wk);
        out.push_back(&b.bk);
        out.push_back(&b.wv);
        out.push_back(&b.bv);
        out.push_back(&b.wo);
        out.push_back(&b.bo);
        out.push_back(&b.ln2_g);
        out.push_back(&b.ln2_b);
        out.push_back(&b.w1);
        out.push_back(&b.b1);
        out.push_back(&b.w2);
        out.push_back(&b.b2);
    }
    out.push_back(&t.lnf_g);
    out.push_back(&t.lnf_b);
    for (auto& h : t.head_w) out.push_back(&h);
    for (auto& h : t.head_b) out.push_back(&h);
    out.push_back(&t.mask_embed);
}

void SslToyModel::allocate(Tensors& t, bool zero) const {
    const int d = cfg_.width;
    const int M = cfg_.input_dim;
    const int dff = cfg_.width * cfg_.ffn_mult;
    t.w_in.resize(d, M);
    t.b_in.resize(d, 1);
    t.lnf_g.resize(d, 1);
    t.lnf_b.resize(d, 1);
    t.blocks.resize(static_cast<size_t>(cfg_.layers));
    for (auto& b : t.blocks) {
        b.ln1_g.resize(d, 1);
        b.ln1_b.resize(d, 1);
        b.wq.resize(d, d);
        b.bq.resize(d, 1);
        b.wk.resize(d, d);
        b.bk.resize(d, 1);
        b.wv.resize(d, d);
        b.bv.resize(d, 1);
        b.wo.resize(d, d);
        b.bo.resize(d, 1);
        b.ln2_g.resize(d, 1);
        b.ln2_b.resize(d, 1);
        b.w1.resize(dff, d);
        b.b1.resize(dff, 1);
        b.w2.resize(d, dff);
        b.b2.resize(d, 1);
    }
    t.head_w.assign(static_cast<size_t>(cfg_.num_target_heads), Eigen::MatrixXf());
    t.head_b.assign(static_cast<size_t>(cfg_.num_target_heads), Eigen::MatrixXf());
    for (int n = 0; n < cfg_.num_target_heads; ++n) {
        t.head_w[static_cast<size_t>(n)].resize(cfg_.codebook_size, d);
        t.head_b[static_cast<size_t>(n)].resize(cfg_.codebook_size, 1);
    }
    t.mask_embed.resize(M, 1);
    if (zero) {
        std::vector<Eigen::MatrixXf*> all;
        collect(t, all);
        for (auto* m : all) m->setZero();
    }
}

SslToyModel::SslToyModel(const SslModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    input_stats_ = FeatureStats::identity(cfg_.input_dim);
    allocate(params_, false);
    allocate(grads_, true);
    allocate(adam_m_, true);
    allocate(adam_v_, true);

    Rng rng = Rng::derive(cfg_.seed, "ssl-model-init");
    const double d_scale = 1.0 / std::sqrt(static_cast<double>(cfg_.width));
    const double in_scale = 1.0 / std::sqrt(static_cast<double>(cfg_.input_dim));
    const double ff_scale = 1.0 / std::sqrt(static_cast<double>(cfg_.width * cfg_.ffn_mult));

    params_.w_in = gaussian_matrix_f(rng, cfg_.width, cfg_.input_dim, in_scale);
    params_.b_in.setZero();
    params_.lnf_g.setOnes();
    params_.lnf_b.setZero();
    for (auto& b : params_.blocks) {
        b.ln1_g.setOnes();
        b.ln1_b.setZero();
        b.wq = gaussian_matrix_f(rng, cfg_.width, cfg_.width, d_scale);
        b.bq.setZero();
        b.wk = gaussian_matrix_f(rng, cfg_.width, cfg_.width, d_scale);
        b.bk.setZero();
        b.wv = gaussian_matrix_f(rng, cfg_.width, cfg_.width, d_scale);
        b.bv.setZero();
        b.wo = gaussian_matrix_f(rng, cfg_.width, cfg_.width, d_scale);
        b.bo.setZero();
        b.ln2_g.setOnes();
        b.ln2_b.setZero();
        b.w1 = gaussian_matrix_f(rng, cfg_.width * cfg_.ffn_mult, cfg_.width, d_scale);
        b.b1.setZero();
        b.w2 = gaussian_matrix_f(rng, cfg_.width, cfg_.width * cfg_.ffn_mult, ff_scale);
        b.b2.setZero();
    }
    for (int n = 0; n < cfg_.num_target_heads; ++n) {
        params_.head_w[static_cast<size_t>(n)] =
            gaussian_matrix_f(rng, cfg_.codebook_size, cfg_.width, d_scale);
        params_.head_b[static_cast<size_t>(n)].setZero();
    }
    params_.mask_embed.setZero();
}

SslToyModel::ForwardResult SslToyModel::run_forward(const Eigen::MatrixXf& frames,
                                                    Cache* cache) const {
    if (frames.cols() != cfg_.input_dim)
        throw ShapeError("ssl forward: expected " + std::to_string(cfg_.input_dim) +
                         " feature dims, got " + std::to_string(frames.cols()));
    const long T = frames.rows();
    if (T < 1) throw DomainError("ssl forward: empty sequence");
    const int H = cfg_.attn_heads;
    const int dh = cfg_.width / H;
    const float attn_scale = 1.0f / std::sqrt(static_cast<float>(dh));

    Eigen::MatrixXf f = frames.transpose();
    Eigen::MatrixXf h0 = pointwise_linear(params_.w_in, params_.b_in, f);

    ForwardResult result;
    result.latents.layers.push_back(h0);

    Eigen::MatrixXf x = h0;

    if (cache) {
        cache->f = f;
        cache->h0 = h0;
        cache->blocks.resize(static_cast<size_t>(cfg_.layers));
    }

    for (int l = 0; l < cfg_.layers; ++l) {
        const Block& b = params_.blocks[static_cast<size_t>(l)];
        BlockCache* bc = cache ? &cache->blocks[static_cast<size_t>(l)] : nullptr;
        LnCache ln1_local, ln2_local;

        if (bc) bc->x_in = x;
        Eigen::MatrixXf a = layer_norm(x, b.ln1_g, b.ln1_b, bc ? &bc->ln1 : &ln1_local);
        Eigen::MatrixXf q = (b.wq * a).colwise() + b.bq.col(0);
        Eigen::MatrixXf k = (b.wk * a).colwise() + b.bk.col(0);
        Eigen::MatrixXf v = (b.wv * a).colwise() + b.bv.col(0);

        Eigen::MatrixXf concat(cfg_.width, T);
        std::vector<Eigen::MatrixXf> attn_cache;
        if (bc) attn_cache.resize(static_cast<size_t>(H));
        for (int h = 0; h < H; ++h) {
            auto qh = q.middleRows(h * dh, dh);
            auto kh = k.middleRows(h * dh, dh);
            auto vh = v.middleRows(h * dh, dh);
            Eigen::MatrixXf scores = (qh.transpose() * kh) * attn_scale;  // T x T
            const float slope = alibi_slope(h, H);
            for (long i = 0; i < T; ++i) {
                for (long j = 0; j < T; ++j) {
                    scores(i, j) -= slope * static_cast<float>(std::abs(i - j));
                }
            }
            for (long i = 0; i < T; ++i) {
                const float row_max = scores.row(i).maxCoeff();
                scores.row(i) = (scores.row(i).array() - row_max).exp();
                scores.row(i) /= scores.row(i).sum();
            }
            concat.middleRows(h * dh, dh) = vh * scores.transpose();
            if (bc) attn_cache[static_cast<size_t>(h)] = std::move(scores);
        }
        Eigen::MatrixXf attn_out = (b.wo * concat).colwise() + b.bo.col(0);
        Eigen::MatrixXf x_mid = x + attn_out;

        Eigen::MatrixXf f_in = layer_norm(x_mid, b.ln2_g, b.ln2_b, bc ? &bc->ln2 : &ln2_local);
        Eigen::MatrixXf u = (b.w1 * f_in).colwise() + b.b1.col(0);
        Eigen::MatrixXf g = u.unaryExpr([](float s) { return gelu(s); });
        Eigen::MatrixXf ffn_out = (b.w2 * g).colwise() + b.b2.col(0);
        x = x_mid + ffn_out;

        if (bc) {
            bc->a = std::move(a);
            bc->q = std::move(q);
            bc->k = std::move(k);
            bc->v = std::move(v);
            bc->attn = std::move(attn_cache);
            bc->concat = std::move(concat);
            bc->x_mid = std::move(x_mid);
            bc->f_in = std::move(f_in);
            bc->u = std::move(u);
            bc->g = std::move(g);
        }
        result.latents.layers.push_back(x);
    }

    LnCache lnf_local;
    Eigen::MatrixXf y =
        layer_norm(x, params_.lnf_g, params_.lnf_b, cache ? &cache->lnf : &lnf_local);
    if (cache) cache->y = y;

    result.logits.per_head.reserve(static_cast<size_t>(cfg_.num_target_heads));
    for (int n = 0; n < cfg_.num_target_heads; ++n) {
        result.logits.per_head.push_back(pointwise_linear(
            params_.head_w[static_cast<size_t>(n)], params_.head_b[static_cast<size_t>(n)], y));
    }
    return result;
}

SslToyModel::ForwardResult SslToyModel::forward(const Eigen::MatrixXf& frames) const {
    return run_forward(frames, nullptr);
}

void SslToyModel::backward(const Cache& cache, const std::vector<Eigen::MatrixXf>& dlogits) {
    const long T = cache.y.cols();
    const int H = cfg_.attn_heads;
    const int dh = cfg_.width / H;
    const float attn_scale = 1.0f / std::sqrt(static_cast<float>(dh));

    Eigen::MatrixXf dy = Eigen::MatrixXf::Zero(cfg_.width, T);
    for (int n = 0; n < cfg_.num_target_heads; ++n) {
        const auto& dl = dlogits[static_cast<size_t>(n)];
        grads_.head_w[static_cast<size_t>(n)] += dl * cache.y.transpose();
        grads_.head_b[static_cast<size_t>(n)].col(0) += dl.rowwise().sum();
        dy += params_.head_w[static_cast<size_t>(n)].transpose() * dl;
    }

    Eigen::MatrixXf dx =
        layer_norm_backward(dy, cache.lnf, params_.lnf_g, grads_.lnf_g, grads_.lnf_b);

    for (int l = cfg_.layers - 1; l >= 0; --l) {
        const Block& b = params_.blocks[static_cast<size_t>(l)];
        Block& gb = grads_.blocks[static_cast<size_t>(l)];
        const BlockCache& bc = cache.blocks[static_cast<size_t>(l)];

        // x = x_mid + ffn(ln2(x_mid))
        const Eigen::MatrixXf& dffn = dx;
        gb.w2 += dffn * bc.g.transpose();
        gb.b2.col(0) += dffn.rowwise().sum();
        Eigen::MatrixXf dg = b.w2.transpose() * dffn;
        Eigen::MatrixXf du =
            dg.cwiseProduct(bc.u.unaryExpr([](float s) { return gelu_grad(s); }));
        gb.w1 += du * bc.f_in.transpose();
        gb.b1.col(0) += du.rowwise().sum();
        Eigen::MatrixXf df_in = b.w1.transpose() * du;
        dx += layer_norm_backward(df_in, bc.ln2, b.ln2_g, gb.ln2_g, gb.ln2_b);

        // x_mid = x_in + attn(ln1(x_in))
        const Eigen::MatrixXf& dattn = dx;
        gb.wo += dattn * bc.concat.transpose();
        gb.bo.col(0) += dattn.rowwise().sum();
        Eigen::MatrixXf dconcat = b.wo.transpose() * dattn;

        Eigen::MatrixXf dq(cfg_.width, T), dk(cfg_.width, T), dv(cfg_.width, T);
        for (int h = 0; h < H; ++h) {
            const auto& A = bc.attn[static_cast<size_t>(h)];  // T x T
            auto qh = bc.q.middleRows(h * dh, dh);
            auto kh = bc.k.middleRows(h * dh, dh);
            auto vh = bc.v.middleRows(h * dh, dh);
            auto doh = dconcat.middleRows(h * dh, dh);

            dv.middleRows(h * dh, dh) = doh * A;
            Eigen::MatrixXf dA = doh.transpose() * vh;  // T x T
            Eigen::MatrixXf dS(T, T);
            for (long i = 0; i < T; ++i) {
                const float dot = dA.row(i).dot(A.row(i));
                dS.row(i) = (A.row(i).array() * (dA.row(i).array() - dot)).matrix() * attn_scale;
            }
            dq.middleRows(h * dh, dh) = kh * dS.transpose();
            dk.middleRows(h * dh, dh) = qh * dS;
        }

        gb.wq += dq * bc.a.transpose();
        gb.bq.col(0) += dq.rowwise().sum();
        gb.wk += dk * bc.a.transpose();
        gb.bk.col(0) += dk.rowwise().sum();
        gb.wv += dv * bc.a.transpose();
        gb.bv.col(0) += dv.rowwise().sum();
        Eigen::MatrixXf da =
            b.wq.transpose() * dq + b.wk.transpose() * dk + b.wv.transpose() * dv;
        dx += layer_norm_backward(da, bc.ln1, b.ln1_g, gb.ln1_g, gb.ln1_b);
    }

    grads_.w_in += dx * cache.f.transpose();
    grads_.b_in.col(0) += dx.rowwise().sum();

    if (cfg_.noise == MaskNoise::learned_embedding && !cache.mask.empty()) {
        Eigen::MatrixXf df = params_.w_in.transpose() * dx;  // M x T
        for (long t = 0; t < T; ++t) {
            if (cache.mask[static_cast<size_t>(t)]) grads_.mask_embed.col(0) += df.col(t);
        }
    }
}

namespace {

// Masked mean cross-entropy and, optionally, its logit gradients.
double masked_ce(const Logits& logits, const TokenSequence& targets,
                 const std::vector<uint8_t>& mask, std::vector<Eigen::MatrixXf>* dlogits) {
    const long T = logits.frames();
    const int N = static_cast<int>(logits.per_head.size());
    if (N == 0) throw DomainError("mlm loss: no prediction heads");
    if (targets.tokens.rows() != T || targets.tokens.cols() != N)
        throw ShapeError("mlm loss: target shape mismatch");
    if (static_cast<long>(mask.size()) != T) throw ShapeError("mlm loss: mask length mismatch");
    const long K = logits.per_head.front().rows();

    long masked = 0;
    for (uint8_t m : mask) masked += m ? 1 : 0;
    if (masked == 0) throw DomainError("mlm loss: mask selects no frames");
    const double count = static_cast<double>(masked) * N;

    if (dlogits) {
        dlogits->clear();
        for (int n = 0; n < N; ++n) {
            dlogits->push_back(Eigen::MatrixXf::Zero(K, T));
        }
    }

    double loss = 0.0;
    std::vector<double> probs(static_cast<size_t>(K));
    for (long t = 0; t < T; ++t) {
        if (!mask[static_cast<size_t>(t)]) continue;
        for (int n = 0; n < N; ++n) {
            const auto& col = logits.per_head[static_cast<size_t>(n)].col(t);
            const int target = targets.tokens(t, n);
            if (target < 0 || target >= K) throw DomainError("mlm loss: target out of range");
            double max_logit = -std::numeric_limits<double>::infinity();
            for (long k = 0; k < K; ++k) max_logit = std::max(max_logit, static_cast<double>(col(k)));
            double z = 0.0;
            for (long k = 0; k < K; ++k) {
                probs[static_cast<size_t>(k)] = std::exp(static_cast<double>(col(k)) - max_logit);
                z += probs[static_cast<size_t>(k)];
            }
            loss += std::log(z) + max_logit - static_cast<double>(col(target));
            if (dlogits) {
                auto dcol = (*dlogits)[static_cast<size_t>(n)].col(t);
                for (long k = 0; k < K; ++k) {
                    dcol(k) = static_cast<float>(probs[static_cast<size_t>(k)] / z / count);
                }
                dcol(target) -= static_cast<float>(1.0 / count);
            }
        }
    }
    return loss / count;
}

}  // namespace

double SslToyModel::accumulate_gradients(const Eigen::MatrixXf& masked_frames,
                                         const TokenSequence& targets,
                                         const std::vector<uint8_t>& mask) {
    Cache cache;
    cache.mask = mask;
    ForwardResult fwd = run_forward(masked_frames, &cache);
    std::vector<Eigen::MatrixXf> dlogits;
    const double loss = masked_ce(fwd.logits, targets, mask, &dlogits);
    backward(cache, dlogits);
    return loss;
}

void SslToyModel::zero_gradients() {
    std::vector<Eigen::MatrixXf*> all;
    collect(grads_, all);
    for (auto* g : all) g->setZero();
}

void SslToyModel::adam_step(double lr, double beta1, double beta2, double eps,
                            double grad_clip) {
    std::vector<Eigen::MatrixXf*> ps, gs, ms, vs;
    collect(params_, ps);
    collect(grads_, gs);
    collect(adam_m_, ms);
    collect(adam_v_, vs);

    if (grad_clip > 0.0) {
        double sq = 0.0;
        for (auto* g : gs) sq += static_cast<double>(g->squaredNorm());
        const double norm = std::sqrt(sq);
        if (norm > grad_clip) {
            const float scale = static_cast<float>(grad_clip / norm);
            for (auto* g : gs) (*g) *= scale;
        }
    }

    ++adam_t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t_));
    for (size_t i = 0; i < ps.size(); ++i) {
        Eigen::MatrixXf& p = *ps[i];
        Eigen::MatrixXf& g = *gs[i];
        Eigen::MatrixXf& m = *ms[i];
        Eigen::MatrixXf& v = *vs[i];
        m = static_cast<float>(beta1) * m + static_cast<float>(1.0 - beta1) * g;
        v = static_cast<float>(beta2) * v +
            static_cast<float>(1.0 - beta2) * g.cwiseProduct(g).eval();
        p -= (static_cast<float>(lr) *
              ((m / static_cast<float>(bc1)).array() /
               ((v / static_cast<float>(bc2)).array().sqrt() + static_cast<float>(eps))))
                 .matrix();
    }
}

std::vector<const Eigen::MatrixXf*> SslToyModel::parameters() const {
    std::vector<Eigen::MatrixXf*> mut;
    collect(const_cast<Tensors&>(params_), mut);
    return {mut.begin(), mut.end()};
}

std::vector<Eigen::MatrixXf*> SslToyModel::parameters() {
    std::vector<Eigen::MatrixXf*> out;
    collect(params_, out);
    return out;
}

std::vector<Eigen::MatrixXf*> SslToyModel::gradients() {
    std::vector<Eigen::MatrixXf*> out;
    collect(grads_, out);
    return out;
}

Eigen::MatrixXf& SslToyModel::head_weight(int n) {
    return params_.head_w.at(static_cast<size_t>(n));
}

Eigen::MatrixXf& SslToyModel::head_bias(int n) {
    return params_.head_b.at(static_cast<size_t>(n));
}

Eigen::VectorXf SslToyModel::mask_fill() const { return params_.mask_embed.col(0); }

double mlm_loss(const Logits& logits, const TokenSequence& targets,
                const std::vector<uint8_t>& mask) {
    return masked_ce(logits, targets, mask, nullptr);
}

std::vector<double> masked_accuracy(const Logits& logits, const TokenSequence& targets,
                                    const std::vector<uint8_t>& mask) {
    const long T = logits.frames();
    const int N = static_cast<int>(logits.per_head.size());
    if (targets.tokens.rows() != T || targets.tokens.cols() != N)
        throw ShapeError("accuracy: target shape mismatch");
    long masked = 0;
    for (uint8_t m : mask) masked += m ? 1 : 0;
    if (masked == 0) throw DomainError("accuracy: mask selects no frames");

    std::vector<double> acc(static_cast<size_t>(N), 0.0);
    for (long t = 0; t < T; ++t) {
        if (!mask[static_cast<size_t>(t)]) continue;
        for (int n = 0; n < N; ++n) {
            long best = 0;
            logits.per_head[static_cast<size_t>(n)].col(t).maxCoeff(&best);
            if (static_cast<int>(best) == targets.tokens(t, n)) acc[static_cast<size_t>(n)] += 1.0;
        }
    }
    for (auto& a : acc) a /= static_cast<double>(masked);
    return acc;
}

void SslToyModel::save(const std::string& path) const {
    PayloadWriter w;
    w.u32(static_cast<uint32_t>(cfg_.input_dim));
    w.u32(static_cast<uint32_t>(cfg_.width));
    w.u32(static_cast<uint32_t>(cfg_.layers));
    w.u32(static_cast<uint32_t>(cfg_.attn_heads));
    w.u32(static_cast<uint32_t>(cfg_.ffn_mult));
    w.u32(static_cast<uint32_t>(cfg_.num_target_heads));
    w.u32(static_cast<uint32_t>(cfg_.codebook_size));
    w.u8(static_cast<uint8_t>(cfg_.noise));
    w.u64(cfg_.seed);
    for (long i = 0; i < input_stats_.mean.size(); ++i)
        w.f32(static_cast<float>(input_stats_.mean(i)));
    for (long i = 0; i < input_stats_.std.size(); ++i)
        w.f32(static_cast<float>(input_stats_.std(i)));
    for (const auto* p : parameters()) {
        for (long i = 0; i < p->rows(); ++i) {
            for (long j = 0; j < p->cols(); ++j) w.f32((*p)(i, j));
        }
    }
    write_envelope(path, "MTOY", 1, w.data());
}

SslToyModel SslToyModel::load(const std::string& path) {
    const auto payload = read_envelope(path, "MTOY", 1);
    PayloadReader r(payload);
    SslModelConfig cfg;
    cfg.input_dim = static_cast<int>(r.u32());
    cfg.width = static_cast<int>(r.u32());
    cfg.layers = static_cast<int>(r.u32());
    cfg.attn_heads = static_cast<int>(r.u32());
    cfg.ffn_mult = static_cast<int>(r.u32());
    cfg.num_target_heads = static_cast<int>(r.u32());
    cfg.codebook_size = static_cast<int>(r.u32());
    const uint8_t noise = r.u8();
    if (noise > 1) throw FormatError(path + ": unknown noise kind");
    cfg.noise = static_cast<MaskNoise>(noise);
    cfg.seed = r.u64();

    SslToyModel model(cfg);
    FeatureStats stats;
    stats.mean.resize(cfg.input_dim);
    stats.std.resize(cfg.input_dim);
    for (int i = 0; i < cfg.input_dim; ++i) stats.mean(i) = static_cast<double>(r.f32());
    for (int i = 0; i < cfg.input_dim; ++i) stats.std(i) = static_cast<double>(r.f32());
    model.set_input_stats(std::move(stats));
    for (auto* p : model.parameters()) {
        for (long i = 0; i < p->rows(); ++i) {
            for (long j = 0; j < p->cols(); ++j) (*p)(i, j) = r.f32();
        }
    }
    r.expect_end();
    return model;
}

}  // namespace melrvq
