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

#include "xmatch/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "xmatch/parallel.hpp"
#include "xmatch/rng.hpp"
#include "xmatch/simd/kernels.hpp"

namespace xmatch {

void MatchConfig::validate() const {
    if (!(tau > 0.0f)) throw config_error("matcher: tau must be positive");
    if (lambda < 0.0f || lambda > 1.0f) throw config_error("matcher: lambda must be in [0,1]");
    if (encoder_dim == 0) throw config_error("matcher: encoder_dim must be positive");
    if (batch_size == 0) throw config_error("matcher: batch_size must be positive");
    if (steps_per_level < 0) throw config_error("matcher: steps_per_level must be >= 0");
    if (!(lr_encoder > 0.0f) || !(lr_label > 0.0f)) {
        throw config_error("matcher: learning rates must be positive");
    }
}

void MatchBatch::validate() const {
    for (size_t i = 0; i < positives.size(); ++i) {
        if (positives[i].empty()) throw data_error("match batch: empty positive set");
        std::unordered_set<index_t> pos(positives[i].begin(), positives[i].end());
        for (index_t n : hard_negatives[i]) {
            if (pos.count(n)) throw data_error("match batch: hard negative overlaps positives");
        }
    }
    if (batch_label_set.empty()) throw data_error("match batch: empty batch label set");
}

double encode_text(const EncoderParams& params, std::span<const index_t> cols,
                   std::span<const float> vals, float* out) {
    const index_t d = params.dim();
    std::vector<double> u(params.bias.begin(), params.bias.end());
    for (size_t j = 0; j < cols.size(); ++j) {
        const float* row = params.feature_embeddings.row(cols[j]);
        double x = vals[j];
        for (index_t c = 0; c < d; ++c) u[c] += x * row[c];
    }
    double norm_sq = 0.0;
    for (index_t c = 0; c < d; ++c) norm_sq += u[c] * u[c];
    double norm = std::sqrt(norm_sq);
    if (norm > 0.0) {
        for (index_t c = 0; c < d; ++c) out[c] = static_cast<float>(u[c] / norm);
    } else {
        std::fill(out, out + d, 0.0f);
    }
    return norm;
}

DenseMatrix extract_dense_features(const EncoderParams& params, const SparseMatrix& X,
                                   int threads) {
    if (X.n_cols != params.feature_embeddings.n_rows) {
        throw data_error("extract_dense_features: feature width mismatch");
    }
    DenseMatrix out(X.n_rows, params.dim());
    parallel_for(0, X.n_rows, threads, [&](size_t i) {
        index_t r = static_cast<index_t>(i);
        encode_text(params, X.row_cols(r), X.row_vals(r), out.row(r));
    });
    return out;
}

MatchBatch assemble_batch(const EncoderParams& encoder, const SparseMatrix& X,
                          const SparseMatrix& Y_level,
                          const std::vector<std::vector<index_t>>& hard_negatives,
                          std::span<const index_t> text_ids) {
    MatchBatch batch;
    const index_t n = static_cast<index_t>(text_ids.size());
    batch.text_ids.assign(text_ids.begin(), text_ids.end());
    batch.z = DenseMatrix(n, encoder.dim());
    batch.z_prenorm.resize(n);
    batch.positives.resize(n);
    batch.hard_negatives.resize(n);
    for (index_t i = 0; i < n; ++i) {
        index_t id = text_ids[i];
        batch.z_prenorm[i] = encode_text(encoder, X.row_cols(id), X.row_vals(id), batch.z.row(i));
        auto pos = Y_level.row_cols(id);
        batch.positives[i].assign(pos.begin(), pos.end());
        if (!hard_negatives.empty()) batch.hard_negatives[i] = hard_negatives[id];
    }
    // batch label set: distinct positives, ascending; P2 lists batch-local
    std::vector<index_t> all;
    for (const auto& p : batch.positives) all.insert(all.end(), p.begin(), p.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    batch.batch_label_set = std::move(all);
    batch.label_texts.resize(batch.batch_label_set.size());
    for (index_t i = 0; i < n; ++i) {
        for (index_t p : batch.positives[i]) {
            size_t slot = static_cast<size_t>(
                std::lower_bound(batch.batch_label_set.begin(), batch.batch_label_set.end(), p) -
                batch.batch_label_set.begin());
            batch.label_texts[slot].push_back(i);
        }
    }
    return batch;
}

namespace {

// Shared softmax-group machinery for both alignment directions. Logits are
// s_a / tau; group loss is mean over positives of (-s_p/tau + LSE). coeff_out
// receives d(group loss)/d(s_a) for each candidate.
double softmax_group(const std::vector<double>& scores, std::span<const size_t> positive_slots,
                     double tau, std::vector<double>* coeff_out) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (double s : scores) max_logit = std::max(max_logit, s / tau);
    double z = 0.0;
    for (double s : scores) z += std::exp(s / tau - max_logit);
    double lse = max_logit + std::log(z);

    double inv_p = 1.0 / static_cast<double>(positive_slots.size());
    double loss = 0.0;
    for (size_t p : positive_slots) loss += (-scores[p] / tau + lse) * inv_p;

    if (coeff_out) {
        coeff_out->assign(scores.size(), 0.0);
        for (size_t a = 0; a < scores.size(); ++a) {
            (*coeff_out)[a] = std::exp(scores[a] / tau - max_logit) / z / tau;
        }
        for (size_t p : positive_slots) (*coeff_out)[p] -= inv_p / tau;
    }
    return loss;
}

double text_label_loss_scaled(const MatchBatch& batch, const DenseMatrix& label_emb, double tau,
                              double weight, GradMatrix* d_z, GradMatrix* d_e) {
    const index_t n = batch.z.n_rows;
    const index_t d = batch.z.n_cols;
    double loss = 0.0;
    std::vector<double> scores, coeff;
    std::vector<size_t> pos_slots;
    std::vector<index_t> cands;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (index_t i = 0; i < n; ++i) {
        if (batch.positives[i].empty()) throw data_error("text_label_loss: empty positive set");
        cands.clear();
        cands.insert(cands.end(), batch.positives[i].begin(), batch.positives[i].end());
        cands.insert(cands.end(), batch.hard_negatives[i].begin(), batch.hard_negatives[i].end());
        pos_slots.resize(batch.positives[i].size());
        for (size_t p = 0; p < pos_slots.size(); ++p) pos_slots[p] = p;

        const float* zi = batch.z.row(i);
        scores.resize(cands.size());
        for (size_t a = 0; a < cands.size(); ++a) {
            scores[a] = simd::dot_acc64(zi, label_emb.row(cands[a]), d);
        }
        loss += softmax_group(scores, pos_slots, tau, d_z || d_e ? &coeff : nullptr) * inv_n;
        if (d_z || d_e) {
            for (size_t a = 0; a < cands.size(); ++a) {
                double c = coeff[a] * inv_n * weight;
                if (c == 0.0) continue;
                if (d_z) {
                    const float* ea = label_emb.row(cands[a]);
                    double* gz = d_z->row(i);
                    for (index_t j = 0; j < d; ++j) gz[j] += c * ea[j];
                }
                if (d_e) {
                    double* ge = d_e->row(cands[a]);
                    for (index_t j = 0; j < d; ++j) ge[j] += c * zi[j];
                }
            }
        }
    }
    return loss;
}

double label_text_loss_scaled(const MatchBatch& batch, const DenseMatrix& label_emb, double tau,
                              double weight, GradMatrix* d_z, GradMatrix* d_e) {
    const index_t n = batch.z.n_rows;
    const index_t d = batch.z.n_cols;
    const size_t m = batch.batch_label_set.size();
    if (m == 0) throw data_error("label_text_loss: empty batch label set");
    double loss = 0.0;
    std::vector<double> scores(n), coeff;
    std::vector<size_t> pos_slots;
    const double inv_m = 1.0 / static_cast<double>(m);
    for (size_t li = 0; li < m; ++li) {
        index_t label = batch.batch_label_set[li];
        const float* e = label_emb.row(label);
        for (index_t a = 0; a < n; ++a) scores[a] = simd::dot_acc64(e, batch.z.row(a), d);
        pos_slots.assign(batch.label_texts[li].begin(), batch.label_texts[li].end());
        loss += softmax_group(scores, pos_slots, tau, d_z || d_e ? &coeff : nullptr) * inv_m;
        if (d_z || d_e) {
            for (index_t a = 0; a < n; ++a) {
                double c = coeff[a] * inv_m * weight;
                if (c == 0.0) continue;
                if (d_e) {
                    double* ge = d_e->row(label);
                    const float* za = batch.z.row(a);
                    for (index_t j = 0; j < d; ++j) ge[j] += c * za[j];
                }
                if (d_z) {
                    double* gz = d_z->row(a);
                    for (index_t j = 0; j < d; ++j) gz[j] += c * e[j];
                }
            }
        }
    }
    return loss;
}

}  // namespace

double text_label_loss(const MatchBatch& batch, const DenseMatrix& label_emb, double tau,
                       GradMatrix* d_z, GradMatrix* d_e) {
    return text_label_loss_scaled(batch, label_emb, tau, 1.0, d_z, d_e);
}

double label_text_loss(const MatchBatch& batch, const DenseMatrix& label_emb, double tau,
                       GradMatrix* d_z, GradMatrix* d_e) {
    return label_text_loss_scaled(batch, label_emb, tau, 1.0, d_z, d_e);
}

double matching_loss(const MatchBatch& batch, const DenseMatrix& label_emb, double tau,
                     double lambda, GradMatrix* d_z, GradMatrix* d_e) {
    if (lambda < 0.0 || lambda > 1.0) throw config_error("matching_loss: lambda must be in [0,1]");
    if (lambda == 1.0) return text_label_loss_scaled(batch, label_emb, tau, 1.0, d_z, d_e);
    if (lambda == 0.0) return label_text_loss_scaled(batch, label_emb, tau, 1.0, d_z, d_e);
    double tl = text_label_loss_scaled(batch, label_emb, tau, lambda, d_z, d_e);
    double lt = label_text_loss_scaled(batch, label_emb, tau, 1.0 - lambda, d_z, d_e);
    return lambda * tl + (1.0 - lambda) * lt;
}

void encoder_backward(const EncoderParams& params, std::span<const index_t> cols,
                      std::span<const float> vals, const float* z, double prenorm,
                      const double* d_z, GradMatrix* d_table, std::vector<double>* d_bias) {
    if (prenorm <= 0.0) return;  // zero pre-normalization vector has no usable direction
    const index_t d = params.dim();
    std::vector<double> du(d);
    double zdot = 0.0;
    for (index_t c = 0; c < d; ++c) zdot += static_cast<double>(z[c]) * d_z[c];
    for (index_t c = 0; c < d; ++c) du[c] = (d_z[c] - static_cast<double>(z[c]) * zdot) / prenorm;

    if (d_bias) {
        for (index_t c = 0; c < d; ++c) (*d_bias)[c] += du[c];
    }
    if (d_table) {
        for (size_t j = 0; j < cols.size(); ++j) {
            double* row = d_table->row(cols[j]);
            double x = vals[j];
            for (index_t c = 0; c < d; ++c) row[c] += x * du[c];
        }
    }
}

std::vector<std::vector<index_t>> mine_hard_negatives(const EncoderParams& encoder,
                                                      const DenseMatrix* label_emb,
                                                      const SparseMatrix& X,
                                                      const SparseMatrix& Y_level,
                                                      index_t n_hard, uint64_t seed,
                                                      int threads) {
    const index_t n = X.n_rows;
    const index_t n_labels = Y_level.n_cols;
    std::vector<std::vector<index_t>> result(n);
    parallel_for(0, n, threads, [&](size_t ii) {
        index_t i = static_cast<index_t>(ii);
        auto pos = Y_level.row_cols(i);
        index_t n_neg_avail = n_labels - static_cast<index_t>(pos.size());
        index_t want = std::min(n_hard, n_neg_avail);
        auto is_positive = [&](index_t l) {
            return std::binary_search(pos.begin(), pos.end(), l);
        };
        std::vector<index_t>& out = result[ii];
        if (want == 0) return;
        if (label_emb == nullptr) {
            // stage one: no scoring model yet, sample negatives uniformly
            if (n_neg_avail <= n_hard) {
                for (index_t l = 0; l < n_labels; ++l) {
                    if (!is_positive(l)) out.push_back(l);
                }
                return;
            }
            std::mt19937_64 rng(splitmix64(seed + i));
            std::unordered_set<index_t> chosen;
            while (out.size() < want) {
                index_t l = static_cast<index_t>(next_below(rng, n_labels));
                if (is_positive(l) || chosen.count(l)) continue;
                chosen.insert(l);
                out.push_back(l);
            }
            std::sort(out.begin(), out.end());
            return;
        }
        std::vector<float> z(encoder.dim());
        encode_text(encoder, X.row_cols(i), X.row_vals(i), z.data());
        std::vector<std::pair<float, index_t>> scored;
        scored.reserve(n_neg_avail);
        for (index_t l = 0; l < n_labels; ++l) {
            if (is_positive(l)) continue;
            scored.emplace_back(simd::dot(z.data(), label_emb->row(l), encoder.dim()), l);
        }
        auto better = [](const std::pair<float, index_t>& a, const std::pair<float, index_t>& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        };
        std::partial_sort(scored.begin(), scored.begin() + want, scored.end(), better);
        out.reserve(want);
        for (index_t j = 0; j < want; ++j) out.push_back(scored[j].second);
        std::sort(out.begin(), out.end());
    });
    return result;
}

DenseMatrix bootstrap_init(index_t n_children, index_t dim, const DenseMatrix* parent,
                           const SparseMatrix* child_to_parent, double sigma, uint64_t seed) {
    DenseMatrix emb(n_children, dim);
    std::mt19937_64 rng(seed);
    if (parent == nullptr) {
        for (float& v : emb.values) v = static_cast<float>(sigma * next_gaussian(rng));
        return emb;
    }
    if (child_to_parent == nullptr || child_to_parent->n_rows != n_children ||
        child_to_parent->n_cols != parent->n_rows || parent->n_cols != dim) {
        throw data_error("bootstrap_init: child/parent shape mismatch");
    }
    for (index_t child = 0; child < n_children; ++child) {
        index_t p = child_to_parent->row_cols(child)[0];
        const float* src = parent->row(p);
        float* dst = emb.row(child);
        for (index_t c = 0; c < dim; ++c) {
            dst[c] = src[c] + static_cast<float>(sigma * next_gaussian(rng));
        }
    }
    return emb;
}

MatcherModel train_matcher(const SparseMatrix& X, const LabelTree& tree,
                           const std::vector<SparseMatrix>& Y_levels, const MatchConfig& config,
                           MatcherTrainStats* stats) {
    config.validate();
    if (Y_levels.size() != tree.depth()) {
        throw data_error("train_matcher: need one propagated label matrix per tree level");
    }

    const index_t d = config.encoder_dim;
    MatcherModel model;
    model.encoder.feature_embeddings = DenseMatrix(X.n_cols, d);
    model.encoder.bias.assign(d, 0.0f);
    {
        std::mt19937_64 rng(derive_seed(config.seed, "match-encoder-init"));
        for (float& v : model.encoder.feature_embeddings.values) {
            v = static_cast<float>(0.1 * next_gaussian(rng));
        }
    }
    if (stats) stats->level_losses.assign(tree.depth(), {});

    GradMatrix d_table(X.n_cols, d);
    std::vector<double> d_bias(d, 0.0);

    for (index_t t = 1; t <= tree.depth(); ++t) {
        const SparseMatrix& Y_t = Y_levels[t - 1];
        const index_t k_t = tree.level_size(t);
        DenseMatrix E = bootstrap_init(
            k_t, d, t == 1 ? nullptr : &model.levels.back().embeddings,
            t == 1 ? nullptr : &tree.assignments[t - 1], 0.01,
            derive_seed(config.seed, "match-bootstrap") + t);

        bool train_this_level = !(config.match_last_level_only && t < tree.depth());
        if (train_this_level && config.steps_per_level > 0) {
            auto hard_negs = mine_hard_negatives(model.encoder, t == 1 ? nullptr : &E, X, Y_t,
                                                 config.n_hard_neg,
                                                 derive_seed(config.seed, "match-hardneg") + t,
                                                 config.threads);

            std::mt19937_64 order_rng(derive_seed(config.seed, "match-order") + t);
            std::vector<index_t> order(X.n_rows);
            std::iota(order.begin(), order.end(), index_t{0});
            shuffle_inplace(order, order_rng);
            size_t cursor = 0;

            GradMatrix d_z(config.batch_size, d);
            GradMatrix d_e(k_t, d);
            std::vector<index_t> batch_ids(config.batch_size);

            for (int step = 0; step < config.steps_per_level; ++step) {
                for (index_t b = 0; b < config.batch_size; ++b) {
                    if (cursor == order.size()) {
                        shuffle_inplace(order, order_rng);
                        cursor = 0;
                    }
                    batch_ids[b] = order[cursor++];
                }
                MatchBatch batch =
                    assemble_batch(model.encoder, X, Y_t, hard_negs, batch_ids);

                // zero only what the previous step touched
                std::fill(d_z.values.begin(), d_z.values.end(), 0.0);
                std::vector<index_t> touched_labels = batch.batch_label_set;
                for (const auto& negs : batch.hard_negatives) {
                    touched_labels.insert(touched_labels.end(), negs.begin(), negs.end());
                }
                std::sort(touched_labels.begin(), touched_labels.end());
                touched_labels.erase(std::unique(touched_labels.begin(), touched_labels.end()),
                                     touched_labels.end());
                for (index_t l : touched_labels) {
                    std::fill(d_e.row(l), d_e.row(l) + d, 0.0);
                }

                double loss =
                    matching_loss(batch, E, config.tau, config.lambda, &d_z, &d_e);
                if (!std::isfinite(loss)) throw numeric_error("matcher: non-finite loss");
                if (stats) stats->level_losses[t - 1].push_back(loss);

                // encoder backward over the batch
                std::vector<index_t> touched_feats;
                for (index_t b = 0; b < config.batch_size; ++b) {
                    index_t id = batch.text_ids[b];
                    auto cols = X.row_cols(id);
                    encoder_backward(model.encoder, cols, X.row_vals(id), batch.z.row(b),
                                     batch.z_prenorm[b], d_z.row(b), &d_table, &d_bias);
                    touched_feats.insert(touched_feats.end(), cols.begin(), cols.end());
                }
                std::sort(touched_feats.begin(), touched_feats.end());
                touched_feats.erase(std::unique(touched_feats.begin(), touched_feats.end()),
                                    touched_feats.end());

                // single-writer SGD updates with decoupled learning rates
                for (index_t j : touched_feats) {
                    float* row = model.encoder.feature_embeddings.row(j);
                    double* g = d_table.row(j);
                    for (index_t c = 0; c < d; ++c) {
                        row[c] -= static_cast<float>(config.lr_encoder * g[c]);
                        g[c] = 0.0;
                    }
                }
                for (index_t c = 0; c < d; ++c) {
                    model.encoder.bias[c] -= static_cast<float>(config.lr_encoder * d_bias[c]);
                    d_bias[c] = 0.0;
                }
                for (index_t l : touched_labels) {
                    float* row = E.row(l);
                    const double* g = d_e.row(l);
                    for (index_t c = 0; c < d; ++c) {
                        row[c] -= static_cast<float>(config.lr_label * g[c]);
                    }
                }
            }
        }
        model.levels.push_back({t, std::move(E)});
    }
    return model;
}

}  // namespace xmatch
