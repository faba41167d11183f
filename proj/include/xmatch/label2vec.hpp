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

#ifndef XMATCH_LABEL2VEC_HPP
#define XMATCH_LABEL2VEC_HPP

#include <random>
#include <utility>
#include <vector>

#include "xmatch/types.hpp"

namespace xmatch {

// Skip-gram-with-negative-sampling over label co-occurrence sets. Each
// sample's positive labels form one unordered sequence; there is no window
// limit, so every label pairs with every other label of the same sample.

struct LabelCorpus {
    std::vector<std::vector<index_t>> sequences;  // distinct label ids per sample
    index_t n_labels = 0;
    std::vector<uint64_t> counts;  // counts[l] = number of sequences containing l

    static LabelCorpus from_labels(const SparseMatrix& labels);
    void validate() const;
};

struct L2VConfig {
    index_t dim = 100;
    int n_neg = 20;
    float ns_exponent = 0.5f;
    int epochs = 20;
    float lr_max = 2.5e-2f;
    float lr_min = 1e-4f;
    uint64_t seed = 1;
    int threads = 1;  // >1 trains hogwild-style, losing bitwise determinism

    void validate() const;
};

struct LabelEmbeddings {
    DenseMatrix target;   // L x dim, the embeddings handed downstream
    DenseMatrix context;  // L x dim
};

// All ordered co-occurrence pairs, sample by sample, in canonical order
// (the trainer shuffles per epoch).
std::vector<std::pair<index_t, index_t>> generate_pairs(const LabelCorpus& corpus);

// Walker alias sampler for P(l) proportional to counts[l]^ns_exponent.
// Negative exponents oversample rare labels and require all counts >= 1.
class NegativeTable {
public:
    static NegativeTable build(const std::vector<uint64_t>& counts, float ns_exponent);

    index_t sample(std::mt19937_64& rng) const;
    const std::vector<double>& probabilities() const { return probs_; }

private:
    std::vector<double> probs_;      // normalized distribution
    std::vector<double> threshold_;  // alias acceptance thresholds
    std::vector<index_t> alias_;
};

// -log sig(wt.wc) - sum_i log sig(-wt.wz_i); double accumulation throughout.
double sgns_loss(const float* w_target, const float* w_context,
                 const std::vector<const float*>& negatives, size_t dim);

// Analytic gradients of sgns_loss at the current parameters. g_negatives is
// laid out as negatives.size() rows of dim.
void sgns_grad(const float* w_target, const float* w_context,
               const std::vector<const float*>& negatives, size_t dim, double* g_target,
               double* g_context, double* g_negatives);

// One exact-gradient SGD step on the rows touched by (target, context, negs).
void sgns_step(LabelEmbeddings& emb, index_t target, index_t context,
               const std::vector<index_t>& negatives, float lr);

LabelEmbeddings train_label2vec(const LabelCorpus& corpus, const L2VConfig& config);

}  // namespace xmatch

#endif  // XMATCH_LABEL2VEC_HPP
