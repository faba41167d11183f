/*
 * Copyright 2026 The xmatch authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License"). You may not use this file except in compliance
 * with the License. A copy of the License is located at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * or in the "license" file accompanying this file. This file is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES
 * OR CONDITIONS OF ANY KIND, either express or implied. See the License for the specific language governing permissions
 * and limitations under the License.
 */

#ifndef XMATCH_MATCHER_HPP
#define XMATCH_MATCHER_HPP

#include <vector>

#include "xmatch/hlt.hpp"
#include "xmatch/types.hpp"

namespace xmatch {

// Text-label matching: a bag-of-features encoder and one label-embedding
// layer per tree level, trained with the two directional contrastive
// alignment losses mixed by lambda. Scores inside the losses are plain dot
// products; the encoder output is unit-normalized.

struct EncoderParams {
    DenseMatrix feature_embeddings;  // D x d, one row per sparse feature
    std::vector<float> bias;         // d

    index_t dim() const { return feature_embeddings.n_cols; }
};

struct LabelEmbeddingLayer {
    index_t level = 0;
    DenseMatrix embeddings;  // K_t x d
};

struct MatcherModel {
    EncoderParams encoder;
    std::vector<LabelEmbeddingLayer> levels;  // one per tree level, 1..D
};

struct MatchConfig {
    float tau = 0.05f;
    float lambda = 0.5f;
    index_t encoder_dim = 64;
    index_t batch_size = 128;
    index_t n_hard_neg = 16;
    float lr_encoder = 5e-2f;  // discriminative rates: encoder vs label layer
    float lr_label = 2e-1f;
    int steps_per_level = 600;
    bool match_last_level_only = false;
    uint64_t seed = 11;
    int threads = 1;

    void validate() const;
};

// z = l2_normalize(sum_j x_j * feature_embeddings[j] + bias); returns the
// pre-normalization norm (0 means the output stayed all-zero).
double encode_text(const EncoderParams& params, std::span<const index_t> cols,
                   std::span<const float> vals, float* out);

DenseMatrix extract_dense_features(const EncoderParams& params, const SparseMatrix& X,
                                   int threads = 1);

// Double-precision gradient accumulator; all loss gradients build up here
// before the float32 parameters are stepped.
struct GradMatrix {
    index_t n_rows = 0;
    index_t n_cols = 0;
    std::vector<double> values;

    GradMatrix() = default;
    GradMatrix(index_t rows, index_t cols)
        : n_rows(rows), n_cols(cols), values(static_cast<size_t>(rows) * cols, 0.0) {}

    double* row(index_t r) { return values.data() + static_cast<size_t>(r) * n_cols; }
    const double* row(index_t r) const { return values.data() + static_cast<size_t>(r) * n_cols; }
    double at(index_t r, index_t c) const { return values[static_cast<size_t>(r) * n_cols + c]; }
};

// One training mini-batch at tree level t.
struct MatchBatch {
    std::vector<index_t> text_ids;
    DenseMatrix z;                     // N_b x d, unit rows
    std::vector<double> z_prenorm;     // pre-normalization norms, for backprop
    std::vector<std::vector<index_t>> positives;       // P1(i), level-t label ids
    std::vector<std::vector<index_t>> hard_negatives;  // disjoint from P1(i)
    std::vector<index_t> batch_label_set;              // the M distinct positive labels
    std::vector<std::vector<index_t>> label_texts;     // P2 per batch label, batch-local ids

    void validate() const;
};

MatchBatch assemble_batch(const EncoderParams& encoder, const SparseMatrix& X,
                          const SparseMatrix& Y_level,
                          const std::vector<std::vector<index_t>>& hard_negatives,
                          std::span<const index_t> text_ids);

// Alignment losses. Gradient buffers are optional (pass nullptr to skip);
// d_z accumulates an N_b x d buffer, d_e a K_t x d buffer indexed by global
// label id. Both losses are computed with stable log-sum-exp.
double text_label_loss(const MatchBatch& batch, const DenseMatrix& label_emb, double tau,
                       GradMatrix* d_z = nullptr, GradMatrix* d_e = nullptr);
double label_text_loss(const MatchBatch& batch, const DenseMatrix& label_emb, double tau,
                       GradMatrix* d_z = nullptr, GradMatrix* d_e = nullptr);
// lambda * L_tl + (1 - lambda) * L_lt; the endpoints reduce exactly to the
// single loss (the other term is never evaluated).
double matching_loss(const MatchBatch& batch, const DenseMatrix& label_emb, double tau,
                     double lambda, GradMatrix* d_z = nullptr, GradMatrix* d_e = nullptr);

// Backprop through the normalized bag-of-features encoder for one batch row.
// d_z is the upstream gradient w.r.t. z; touched feature rows and the bias
// are accumulated into d_table / d_bias.
void encoder_backward(const EncoderParams& params, std::span<const index_t> cols,
                      std::span<const float> vals, const float* z, double prenorm,
                      const double* d_z, GradMatrix* d_table, std::vector<double>* d_bias);

// Top n_hard non-positive labels per text by current model score (dot with
// the level's label embeddings); ties break toward the smaller label id.
// With no scoring layer (level 1, stage one) negatives are sampled uniformly.
std::vector<std::vector<index_t>> mine_hard_negatives(const EncoderParams& encoder,
                                                      const DenseMatrix* label_emb,
                                                      const SparseMatrix& X,
                                                      const SparseMatrix& Y_level,
                                                      index_t n_hard, uint64_t seed,
                                                      int threads = 1);

// Child embeddings inherit their trained parent embedding plus Gaussian
// noise; level 1 is pure Gaussian (sigma = 0.01).
DenseMatrix bootstrap_init(index_t n_children, index_t dim, const DenseMatrix* parent,
                           const SparseMatrix* child_to_parent, double sigma, uint64_t seed);

struct MatcherTrainStats {
    std::vector<std::vector<double>> level_losses;  // per level, per step
};

MatcherModel train_matcher(const SparseMatrix& X, const LabelTree& tree,
                           const std::vector<SparseMatrix>& Y_levels, const MatchConfig& config,
                           MatcherTrainStats* stats = nullptr);

}  // namespace xmatch

#endif  // XMATCH_MATCHER_HPP
