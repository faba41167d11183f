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

#include "xmatch/label2vec.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "xmatch/mathutil.hpp"
#include "xmatch/rng.hpp"
#include "xmatch/simd/kernels.hpp"

namespace xmatch {

LabelCorpus LabelCorpus::from_labels(const SparseMatrix& labels) {
    LabelCorpus corpus;
    corpus.n_labels = labels.n_cols;
    corpus.counts.assign(labels.n_cols, 0);
    corpus.sequences.reserve(labels.n_rows);
    for (index_t i = 0; i < labels.n_rows; ++i) {
        auto cols = labels.row_cols(i);
        if (cols.empty()) {
            throw data_error("label corpus: sample " + std::to_string(i) + " has no labels");
        }
        corpus.sequences.emplace_back(cols.begin(), cols.end());
        for (index_t l : cols) ++corpus.counts[l];
    }
    return corpus;
}

void LabelCorpus::validate() const {
    if (counts.size() != n_labels) throw data_error("label corpus: counts length != n_labels");
    std::vector<uint64_t> recount(n_labels, 0);
    for (const auto& seq : sequences) {
        if (seq.empty()) throw data_error("label corpus: empty sequence");
        for (index_t l : seq) {
            if (l >= n_labels) throw data_error("label corpus: label id out of range");
            ++recount[l];
        }
    }
    if (recount != counts) throw data_error("label corpus: counts inconsistent with sequences");
}

void L2VConfig::validate() const {
    if (dim == 0) throw config_error("label2vec: dim must be positive");
    if (n_neg < 1) throw config_error("label2vec: n_neg must be >= 1");
    if (!(lr_max >= lr_min) || !(lr_min > 0.0f)) {
        throw config_error("label2vec: need lr_max >= lr_min > 0");
    }
    if (epochs < 1) throw config_error("label2vec: epochs must be >= 1");
}

std::vector<std::pair<index_t, index_t>> generate_pairs(const LabelCorpus& corpus) {
    std::vector<std::pair<index_t, index_t>> pairs;
    size_t total = 0;
    for (const auto& seq : corpus.sequences) total += seq.size() * (seq.size() - 1);
    pairs.reserve(total);
    for (const auto& seq : corpus.sequences) {
        for (size_t a = 0; a < seq.size(); ++a) {
            for (size_t b = 0; b < seq.size(); ++b) {
                if (a != b) pairs.emplace_back(seq[a], seq[b]);
            }
        }
    }
    return pairs;
}

NegativeTable NegativeTable::build(const std::vector<uint64_t>& counts, float ns_exponent) {
    if (counts.empty()) throw data_error("negative table: empty counts");
    NegativeTable table;
    size_t n = counts.size();
    table.probs_.resize(n);
    double sum = 0.0;
    for (size_t l = 0; l < n; ++l) {
        if (counts[l] == 0 && ns_exponent < 0.0f) {
            throw data_error("negative table: count 0 with negative exponent for label " +
                             std::to_string(l));
        }
        double w = std::pow(static_cast<double>(counts[l]), static_cast<double>(ns_exponent));
        table.probs_[l] = w;
        sum += w;
    }
    if (!(sum > 0.0) || !std::isfinite(sum)) {
        throw data_error("negative table: degenerate weight sum");
    }
    for (double& p : table.probs_) p /= sum;

    // Vose alias construction
    table.threshold_.assign(n, 0.0);
    table.alias_.assign(n, 0);
    std::vector<double> scaled(n);
    std::vector<index_t> small, large;
    for (size_t l = 0; l < n; ++l) {
        scaled[l] = table.probs_[l] * static_cast<double>(n);
        (scaled[l] < 1.0 ? small : large).push_back(static_cast<index_t>(l));
    }
    while (!small.empty() && !large.empty()) {
        index_t s = small.back();
        small.pop_back();
        index_t g = large.back();
        large.pop_back();
        table.threshold_[s] = scaled[s];
        table.alias_[s] = g;
        scaled[g] = scaled[g] + scaled[s] - 1.0;
        (scaled[g] < 1.0 ? small : large).push_back(g);
    }
    for (index_t l : large) table.threshold_[l] = 1.0;
    for (index_t l : small) table.threshold_[l] = 1.0;
    return table;
}

index_t NegativeTable::sample(std::mt19937_64& rng) const {
    double u = next_double(rng) * static_cast<double>(probs_.size());
    size_t slot = static_cast<size_t>(u);
    if (slot >= probs_.size()) slot = probs_.size() - 1;
    double frac = u - static_cast<double>(slot);
    return frac < threshold_[slot] ? static_cast<index_t>(slot) : alias_[slot];
}

double sgns_loss(const float* w_target, const float* w_context,
                 const std::vector<const float*>& negatives, size_t dim) {
    double loss = -log_sigmoid(simd::dot_acc64(w_target, w_context, dim));
    for (const float* wz : negatives) {
        loss -= log_sigmoid(-simd::dot_acc64(w_target, wz, dim));
    }
    return loss;
}

void sgns_grad(const float* w_target, const float* w_context,
               const std::vector<const float*>& negatives, size_t dim, double* g_target,
               double* g_context, double* g_negatives) {
    double g_pos = sigmoid(simd::dot_acc64(w_target, w_context, dim)) - 1.0;
    for (size_t j = 0; j < dim; ++j) {
        g_target[j] = g_pos * w_context[j];
        g_context[j] = g_pos * w_target[j];
    }
    for (size_t i = 0; i < negatives.size(); ++i) {
        const float* wz = negatives[i];
        double g_neg = sigmoid(simd::dot_acc64(w_target, wz, dim));
        double* out = g_negatives + i * dim;
        for (size_t j = 0; j < dim; ++j) {
            g_target[j] += g_neg * wz[j];
            out[j] = g_neg * w_target[j];
        }
    }
}

namespace {

// One SGD step; scratch must hold dim floats. All coefficients are computed
// from the pre-update rows, so the applied update is the exact gradient.
inline void step_rows(float* wt, float* wc, float* const* negs, size_t k, size_t dim, float lr,
                      float* scratch) {
    double g_pos = sigmoid(simd::dot_acc64(wt, wc, dim)) - 1.0;
    std::fill(scratch, scratch + dim, 0.0f);
    simd::axpy(static_cast<float>(g_pos), wc, scratch, dim);

    // coefficient pass over negatives uses the old target row
    for (size_t i = 0; i < k; ++i) {
        double g_neg = sigmoid(simd::dot_acc64(wt, negs[i], dim));
        simd::axpy(static_cast<float>(g_neg), negs[i], scratch, dim);
        simd::axpy(static_cast<float>(-lr * g_neg), wt, negs[i], dim);
    }
    simd::axpy(static_cast<float>(-lr * g_pos), wt, wc, dim);
    simd::axpy(-lr, scratch, wt, dim);
}

}  // namespace

void sgns_step(LabelEmbeddings& emb, index_t target, index_t context,
               const std::vector<index_t>& negatives, float lr) {
    if (!(lr > 0.0f)) throw config_error("sgns_step: lr must be positive");
    size_t dim = emb.target.n_cols;
    std::vector<float> scratch(dim);
    std::vector<float*> negs;
    negs.reserve(negatives.size());
    for (index_t z : negatives) negs.push_back(emb.context.row(z));
    step_rows(emb.target.row(target), emb.context.row(context), negs.data(), negs.size(), dim, lr,
              scratch.data());
}

LabelEmbeddings train_label2vec(const LabelCorpus& corpus, const L2VConfig& config) {
    config.validate();
    if (corpus.sequences.empty()) throw data_error("label2vec: empty corpus");

    const size_t dim = config.dim;
    const index_t n_labels = corpus.n_labels;

    LabelEmbeddings emb;
    emb.target = DenseMatrix(n_labels, config.dim);
    emb.context = DenseMatrix(n_labels, config.dim);
    {
        std::mt19937_64 rng(derive_seed(config.seed, "l2v-init"));
        const double half = 0.5 / static_cast<double>(dim);
        for (float& v : emb.target.values) {
            v = static_cast<float>((next_double(rng) * 2.0 - 1.0) * half);
        }
    }

    NegativeTable table = NegativeTable::build(corpus.counts, config.ns_exponent);
    std::vector<std::pair<index_t, index_t>> pairs = generate_pairs(corpus);
    if (pairs.empty()) return emb;  // all singleton sequences, nothing to train on

    const size_t pairs_per_epoch = pairs.size();
    const size_t total_steps = pairs_per_epoch * static_cast<size_t>(config.epochs);
    const double lr_span = static_cast<double>(config.lr_max) - config.lr_min;
    auto lr_at = [&](size_t step) {
        double t = total_steps > 1
                       ? static_cast<double>(step) / static_cast<double>(total_steps - 1)
                       : 0.0;
        return static_cast<float>(config.lr_max - lr_span * t);
    };

    std::vector<size_t> order(pairs_per_epoch);
    const int threads = config.threads < 1 ? 1 : config.threads;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (size_t i = 0; i < pairs_per_epoch; ++i) order[i] = i;
        std::mt19937_64 shuffle_rng(
            splitmix64(derive_seed(config.seed, "l2v-shuffle") + static_cast<uint64_t>(epoch)));
        shuffle_inplace(order, shuffle_rng);

        auto run_span = [&](size_t begin, size_t end, uint64_t neg_salt) {
            std::mt19937_64 neg_rng(
                splitmix64(derive_seed(config.seed, "l2v-neg") + neg_salt));
            std::vector<float> scratch(dim);
            std::vector<float*> negs(static_cast<size_t>(config.n_neg));
            const size_t epoch_base = static_cast<size_t>(epoch) * pairs_per_epoch;
            for (size_t i = begin; i < end; ++i) {
                auto [target, context] = pairs[order[i]];
                for (int z = 0; z < config.n_neg; ++z) {
                    index_t neg = context;
                    for (int tries = 0; neg == context && tries < 1000; ++tries) {
                        neg = table.sample(neg_rng);
                    }
                    negs[static_cast<size_t>(z)] = emb.context.row(neg);
                }
                step_rows(emb.target.row(target), emb.context.row(context), negs.data(),
                          negs.size(), dim, lr_at(epoch_base + i), scratch.data());
            }
        };

        if (threads <= 1) {
            run_span(0, pairs_per_epoch, static_cast<uint64_t>(epoch));
        } else {
            // hogwild: workers update rows without coordination
            std::vector<std::thread> pool;
            size_t chunk = (pairs_per_epoch + threads - 1) / threads;
            for (int t = 0; t < threads; ++t) {
                size_t begin = chunk * static_cast<size_t>(t);
                size_t end = std::min(begin + chunk, pairs_per_epoch);
                if (begin >= end) break;
                uint64_t salt = static_cast<uint64_t>(epoch) * threads + static_cast<uint64_t>(t) + 1;
                pool.emplace_back([&run_span, begin, end, salt]() { run_span(begin, end, salt); });
            }
            for (auto& th : pool) th.join();
        }
    }
    return emb;
}

}  // namespace xmatch
