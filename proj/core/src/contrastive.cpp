#include "melrvq/contrastive.hpp"

#include <cmath>

#include "melrvq/errors.hpp"

namespace melrvq {

void DclConfig::validate() const {
    if (!(temperature > 0.0)) throw DomainError("dcl: temperature must be positive");
}

Eigen::VectorXd pool_project(const Eigen::MatrixXd& latents, const Eigen::MatrixXd& projection) {
    if (latents.rows() < 1) throw DomainError("pool_project: empty sequence");
    if (projection.cols() != latents.cols())
        throw ShapeError("pool_project: projection expects " + std::to_string(projection.cols()) +
                         " dims, latents have " + std::to_string(latents.cols()));
    const Eigen::VectorXd pooled = latents.colwise().mean();
    return projection * pooled;
}

double dcl_loss_from_similarities(const Eigen::MatrixXd& sims, double temperature) {
    if (!(temperature > 0.0)) throw DomainError("dcl: temperature must be positive");
    const long B = sims.rows();
    if (sims.cols() != B) throw ShapeError("dcl: similarity matrix must be square");
    if (B < 2) throw DomainError("dcl: need at least two pairs for negatives");

    // Per-anchor term: -s_ii/sigma + logsumexp_{j != i}(s_ij/sigma), computed
    // for rows (music->text) and columns (text->music), averaged over 2B.
    auto direction = [&](bool rows) {
        double total = 0.0;
        for (long i = 0; i < B; ++i) {
            double max_neg = -std::numeric_limits<double>::infinity();
            for (long j = 0; j < B; ++j) {
                if (j == i) continue;
                const double s = (rows ? sims(i, j) : sims(j, i)) / temperature;
                max_neg = std::max(max_neg, s);
            }
            double z = 0.0;
            for (long j = 0; j < B; ++j) {
                if (j == i) continue;
                const double s = (rows ? sims(i, j) : sims(j, i)) / temperature;
                z += std::exp(s - max_neg);
            }
            total += -sims(i, i) / temperature + max_neg + std::log(z);
        }
        return total;
    };

    return (direction(true) + direction(false)) / (2.0 * static_cast<double>(B));
}

double dcl_loss(const std::vector<EmbeddingPair>& batch, const DclConfig& cfg) {
    cfg.validate();
    const long B = static_cast<long>(batch.size());
    if (B < 2) throw DomainError("dcl: need at least two pairs for negatives");
    const long d = batch.front().music.size();
    for (const auto& pair : batch) {
        if (pair.music.size() != d || pair.text.size() != d)
            throw ShapeError("dcl: embedding dimensions disagree");
    }
    Eigen::MatrixXd sims(B, B);
    for (long i = 0; i < B; ++i) {
        for (long j = 0; j < B; ++j) {
            sims(i, j) = batch[static_cast<size_t>(i)].music.dot(batch[static_cast<size_t>(j)].text);
        }
    }
    return dcl_loss_from_similarities(sims, cfg.temperature);
}

std::vector<double> tag_scores(const Eigen::VectorXd& music_embedding,
                               const std::vector<Eigen::VectorXd>& tag_embeddings) {
    std::vector<double> scores;
    scores.reserve(tag_embeddings.size());
    for (const auto& tag : tag_embeddings) {
        if (tag.size() != music_embedding.size())
            throw ShapeError("tag_scores: dimension mismatch");
        scores.push_back(music_embedding.dot(tag));
    }
    return scores;
}

}  // namespace melrvq
