#pragma once

#include <Eigen/Dense>
#include <vector>

namespace melrvq {

// One (music, text) embedding pair of equal dimension.
struct EmbeddingPair {
    Eigen::VectorXd music;
    Eigen::VectorXd text;
};

struct DclConfig {
    double temperature = 0.1;  // sigma
    void validate() const;
};

// Temporal mean over the rows of a latent sequence, then a linear projection.
Eigen::VectorXd pool_project(const Eigen::MatrixXd& latents, const Eigen::MatrixXd& projection);

// Decoupled contrastive loss: for each direction (music->text, text->music)
// and each anchor i, -log[ exp(s_ii / sigma) / sum_{j != i} exp(s_ij / sigma) ]
// with s the dot-product similarity and the positive excluded from the
// denominator; the per-anchor terms of both directions are averaged. Needs a
// batch of at least two pairs.
double dcl_loss(const std::vector<EmbeddingPair>& batch, const DclConfig& cfg);

// Same loss from an explicit similarity matrix, sims(i, j) = sim(m_i, t_j).
// Exposed so invariants can be probed on similarities directly.
double dcl_loss_from_similarities(const Eigen::MatrixXd& sims, double temperature);

// Dot-product score of a music embedding against each tag embedding.
std::vector<double> tag_scores(const Eigen::VectorXd& music_embedding,
                               const std::vector<Eigen::VectorXd>& tag_embeddings);

}  // namespace melrvq
