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

#include "xmatch/ranker.hpp"

#include <algorithm>
#include <cmath>

#include "xmatch/inference.hpp"
#include "xmatch/mathutil.hpp"
#include "xmatch/ops.hpp"
#include "xmatch/parallel.hpp"
#include "xmatch/simd/kernels.hpp"

namespace xmatch {

void RankerConfig::validate() const {
    if (!(alpha >= 0.0)) throw config_error("ranker: alpha must be >= 0");
    if (epochs < 1) throw config_error("ranker: epochs must be >= 1");
    if (prune_eps < 0.0f) throw config_error("ranker: prune_eps must be >= 0");
    if (beam_size < 1) throw config_error("ranker: beam_size must be >= 1");
}

double RankerLayer::score(index_t label, const float* dense_x) const {
    float m = simd::gather_dot(weights.col_indices.data() + weights.row_offsets[label],
                               weights.values.data() + weights.row_offsets[label],
                               weights.row_nnz(label), dense_x);
    return sigmoid(static_cast<double>(m));
}

SparseMatrix build_tfn(const SparseMatrix& Y_t, const SparseMatrix* Y_prev,
                       const SparseMatrix& C_t) {
    if (C_t.n_rows != Y_t.n_cols) throw data_error("build_tfn: C^(t) rows must equal K_t");
    if (Y_prev && Y_prev->n_cols != C_t.n_cols) {
        throw data_error("build_tfn: Y^(t-1) columns must equal K_{t-1}");
    }
    if (Y_prev && Y_prev->n_rows != Y_t.n_rows) {
        throw data_error("build_tfn: instance counts differ");
    }
    std::vector<std::vector<index_t>> children(C_t.n_cols);
    for (index_t child = 0; child < C_t.n_rows; ++child) {
        children[C_t.row_cols(child)[0]].push_back(child);
    }
    SparseMatrix out(Y_t.n_rows, Y_t.n_cols);
    std::vector<index_t> cands;
    for (index_t i = 0; i < Y_t.n_rows; ++i) {
        cands.clear();
        if (Y_prev) {
            for (index_t p : Y_prev->row_cols(i)) {
                cands.insert(cands.end(), children[p].begin(), children[p].end());
            }
            std::sort(cands.begin(), cands.end());
        } else {
            cands.resize(Y_t.n_cols);
            for (index_t l = 0; l < Y_t.n_cols; ++l) cands[l] = l;
        }
        for (index_t l : cands) {
            out.col_indices.push_back(l);
            out.values.push_back(1.0f);
        }
        out.row_offsets[i + 1] = out.col_indices.size();
    }
    return out;
}

SparseMatrix build_man(const std::vector<std::vector<std::pair<index_t, float>>>& predictions,
                       index_t n_rows, index_t n_cols, index_t k_b) {
    if (predictions.size() != n_rows) throw data_error("build_man: prediction row count mismatch");
    SparseMatrix out(n_rows, n_cols);
    std::vector<std::pair<index_t, float>> scored;
    std::vector<index_t> keep;
    for (index_t i = 0; i < n_rows; ++i) {
        scored = predictions[i];
        size_t take = std::min<size_t>(k_b, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + take, scored.end(),
                          [](const auto& a, const auto& b) {
                              if (a.second != b.second) return a.second > b.second;
                              return a.first < b.first;
                          });
        keep.clear();
        for (size_t j = 0; j < take; ++j) keep.push_back(scored[j].first);
        std::sort(keep.begin(), keep.end());
        for (index_t l : keep) {
            out.col_indices.push_back(l);
            out.values.push_back(1.0f);
        }
        out.row_offsets[i + 1] = out.col_indices.size();
    }
    return out;
}

SparseMatrix union_candidates(const SparseMatrix& a, const SparseMatrix& b) {
    if (a.n_rows != b.n_rows || a.n_cols != b.n_cols) {
        throw data_error("union_candidates: shape mismatch");
    }
    SparseMatrix out(a.n_rows, a.n_cols);
    for (index_t i = 0; i < a.n_rows; ++i) {
        auto ca = a.row_cols(i);
        auto cb = b.row_cols(i);
        size_t pa = 0, pb = 0;
        while (pa < ca.size() || pb < cb.size()) {
            index_t next;
            if (pb == cb.size() || (pa < ca.size() && ca[pa] <= cb[pb])) {
                next = ca[pa];
                if (pb < cb.size() && cb[pb] == next) ++pb;
                ++pa;
            } else {
                next = cb[pb++];
            }
            out.col_indices.push_back(next);
            out.values.push_back(1.0f);
        }
        out.row_offsets[i + 1] = out.col_indices.size();
    }
    return out;
}

double column_objective(const SparseMatrix& X, const std::vector<index_t>& instances,
                        const std::vector<int8_t>& sign, std::span<const index_t> w_cols,
                        std::span<const float> w_vals, double alpha, double w_pos, double w_neg) {
    double obj = 0.0;
    for (size_t s = 0; s < instances.size(); ++s) {
        auto cols = X.row_cols(instances[s]);
        auto vals = X.row_vals(instances[s]);
        double m = 0.0;
        size_t a = 0, b = 0;
        while (a < cols.size() && b < w_cols.size()) {
            if (cols[a] < w_cols[b]) {
                ++a;
            } else if (cols[a] > w_cols[b]) {
                ++b;
            } else {
                m += static_cast<double>(vals[a++]) * w_vals[b++];
            }
        }
        double r = 1.0 - static_cast<double>(sign[s]) * m;
        if (r > 0.0) obj += (sign[s] > 0 ? w_pos : w_neg) * r * r;
    }
    for (float w : w_vals) obj += alpha * static_cast<double>(w) * w;
    return obj;
}

namespace {

struct ColumnProblem {
    std::vector<index_t> instances;  // global row ids, ascending
    std::vector<int8_t> sign;        // +1 positive, -1 negative
};

// Coordinate-descent Newton solve of one label's squared-hinge subproblem.
// Touches only features present in the sampled instances. The Armijo line
// search keeps the objective non-increasing step by step.
void solve_column(const SparseMatrix& X, const ColumnProblem& prob, const RankerConfig& config,
                  std::vector<index_t>& out_cols, std::vector<float>& out_vals) {
    struct Entry {
        index_t feat;
        index_t local;
        float val;
    };
    const size_t n = prob.instances.size();
    std::vector<Entry> entries;
    size_t nnz_total = 0;
    for (index_t i : prob.instances) nnz_total += X.row_nnz(i);
    entries.reserve(nnz_total);
    for (size_t li = 0; li < n; ++li) {
        auto cols = X.row_cols(prob.instances[li]);
        auto vals = X.row_vals(prob.instances[li]);
        for (size_t j = 0; j < cols.size(); ++j) {
            entries.push_back({cols[j], static_cast<index_t>(li), vals[j]});
        }
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.feat != b.feat) return a.feat < b.feat;
        return a.local < b.local;
    });

    // feature groups as [begin, end) spans over entries
    std::vector<std::pair<size_t, size_t>> groups;
    std::vector<index_t> feats;
    for (size_t e = 0; e < entries.size();) {
        size_t begin = e;
        index_t f = entries[e].feat;
        while (e < entries.size() && entries[e].feat == f) ++e;
        groups.emplace_back(begin, e);
        feats.push_back(f);
    }

    std::vector<double> w(groups.size(), 0.0);
    std::vector<double> margin(n, 0.0);
    std::vector<double> cw(n);
    for (size_t li = 0; li < n; ++li) {
        cw[li] = prob.sign[li] > 0 ? config.weight_positive : config.weight_negative;
    }

    const double alpha = config.alpha;
    const double sigma_armijo = 0.01;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double max_step = 0.0;
        for (size_t gi = 0; gi < groups.size(); ++gi) {
            auto [begin, end] = groups[gi];
            double g = 2.0 * alpha * w[gi];
            double h = 2.0 * alpha;
            for (size_t e = begin; e < end; ++e) {
                const Entry& ent = entries[e];
                double s = prob.sign[ent.local];
                double r = 1.0 - s * margin[ent.local];
                if (r > 0.0) {
                    g -= 2.0 * cw[ent.local] * s * ent.val * r;
                    h += 2.0 * cw[ent.local] * static_cast<double>(ent.val) * ent.val;
                }
            }
            if (std::abs(g) < 1e-12) continue;
            double dir = -g / h;
            double lambda = 1.0;
            double accepted = 0.0;
            for (int ls = 0; ls < 30; ++ls) {
                double step = lambda * dir;
                double delta = alpha * ((w[gi] + step) * (w[gi] + step) - w[gi] * w[gi]);
                for (size_t e = begin; e < end; ++e) {
                    const Entry& ent = entries[e];
                    double s = prob.sign[ent.local];
                    double r_old = 1.0 - s * margin[ent.local];
                    double r_new = r_old - s * step * ent.val;
                    double h_old = r_old > 0.0 ? r_old * r_old : 0.0;
                    double h_new = r_new > 0.0 ? r_new * r_new : 0.0;
                    delta += cw[ent.local] * (h_new - h_old);
                }
                if (delta <= sigma_armijo * lambda * g * dir + 1e-15) {
                    accepted = step;
                    break;
                }
                lambda *= 0.5;
            }
            if (accepted != 0.0) {
                w[gi] += accepted;
                for (size_t e = begin; e < end; ++e) {
                    margin[entries[e].local] += accepted * entries[e].val;
                }
                max_step = std::max(max_step, std::abs(accepted));
            }
        }
        if (max_step < 1e-8) break;
    }

    out_cols.clear();
    out_vals.clear();
    for (size_t gi = 0; gi < groups.size(); ++gi) {
        float wf = static_cast<float>(w[gi]);
        if (std::abs(wf) >= config.prune_eps) {
            out_cols.push_back(feats[gi]);
            out_vals.push_back(wf);
        }
    }
}

}  // namespace

RankerLayer train_layer(const SparseMatrix& X, const SparseMatrix& Y_t, const SparseMatrix& M_t,
                        const RankerConfig& config, index_t level) {
    config.validate();
    if (M_t.n_rows != X.n_rows || M_t.n_rows != Y_t.n_rows || M_t.n_cols != Y_t.n_cols) {
        throw data_error("train_layer: shape mismatch between X, Y and M");
    }
    const index_t n_labels = M_t.n_cols;

    SparseMatrix m_csc = transpose(M_t);
    SparseMatrix y_csc = transpose(Y_t);

    std::vector<std::vector<index_t>> cols(n_labels);
    std::vector<std::vector<float>> vals(n_labels);
    std::vector<uint8_t> untrained(n_labels, 0);

    parallel_for(0, n_labels, config.threads, [&](size_t l) {
        auto sampled = m_csc.row_cols(static_cast<index_t>(l));
        if (sampled.empty()) {
            untrained[l] = 1;
            return;
        }
        ColumnProblem prob;
        prob.instances.assign(sampled.begin(), sampled.end());
        prob.sign.assign(sampled.size(), -1);
        auto positives = y_csc.row_cols(static_cast<index_t>(l));
        size_t p = 0;
        for (size_t s = 0; s < prob.instances.size(); ++s) {
            while (p < positives.size() && positives[p] < prob.instances[s]) ++p;
            if (p < positives.size() && positives[p] == prob.instances[s]) prob.sign[s] = 1;
        }
        solve_column(X, prob, config, cols[l], vals[l]);
    }, 1);

    RankerLayer layer;
    layer.level = level;
    layer.alpha = config.alpha;
    layer.untrained = std::move(untrained);
    SparseMatrix w(n_labels, X.n_cols);
    for (index_t l = 0; l < n_labels; ++l) {
        w.col_indices.insert(w.col_indices.end(), cols[l].begin(), cols[l].end());
        w.values.insert(w.values.end(), vals[l].begin(), vals[l].end());
        w.row_offsets[l + 1] = w.col_indices.size();
    }
    layer.weights = std::move(w);
    return layer;
}

std::vector<RankerLayer> train_ranker(const SparseMatrix& X, const LabelTree& tree,
                                      const std::vector<SparseMatrix>& Y_levels,
                                      const MatcherModel* matcher, const RankerConfig& config,
                                      const DenseMatrix* encoder_outputs) {
    config.validate();
    if (Y_levels.size() != tree.depth()) {
        throw data_error("train_ranker: need one propagated label matrix per level");
    }
    if (matcher && (!encoder_outputs || encoder_outputs->n_rows != X.n_rows)) {
        throw data_error("train_ranker: matcher given without matching encoder outputs");
    }
    const index_t depth = tree.depth();
    std::vector<RankerLayer> layers;
    layers.reserve(depth);
    TreeTopology topo = TreeTopology::build(tree);

    const DenseMatrix* Z = encoder_outputs;

    for (index_t t = 1; t <= depth; ++t) {
        const SparseMatrix& Y_t = Y_levels[t - 1];
        const SparseMatrix& C_t = tree.assignments[t - 1];
        SparseMatrix tfn = build_tfn(Y_t, t == 1 ? nullptr : &Y_levels[t - 2], C_t);

        SparseMatrix candidates = std::move(tfn);
        const index_t k_t = tree.level_size(t);
        bool have_man = (t == 1) ? (matcher != nullptr) : true;
        if (have_man) {
            std::vector<std::vector<std::pair<index_t, float>>> predictions(X.n_rows);
            if (t == 1) {
                const DenseMatrix& E1 = matcher->levels[0].embeddings;
                parallel_for(0, X.n_rows, config.threads, [&](size_t i) {
                    auto& out = predictions[i];
                    out.reserve(k_t);
                    const float* z = Z->row(static_cast<index_t>(i));
                    for (index_t l = 0; l < k_t; ++l) {
                        out.emplace_back(l, simd::dot(z, E1.row(l), Z->n_cols));
                    }
                });
            } else {
                const DenseMatrix* E_t = matcher ? &matcher->levels[t - 1].embeddings : nullptr;
                parallel_for(0, X.n_rows, config.threads, [&](size_t i) {
                    thread_local FeatureScratch scratch;
                    index_t row = static_cast<index_t>(i);
                    auto beam = beam_levels(X.row_cols(row), X.row_vals(row), topo, layers, t - 1,
                                            config.beam_size, scratch);
                    auto& out = predictions[i];
                    for (auto& [node, path_score] : beam) {
                        for (index_t child : topo.children_of(t, node)) {
                            float s = E_t ? simd::dot(Z->row(row), E_t->row(child), Z->n_cols)
                                          : static_cast<float>(path_score);
                            out.emplace_back(child, s);
                        }
                    }
                }, 64);
            }
            SparseMatrix man = build_man(predictions, X.n_rows, k_t, config.beam_size);
            candidates = union_candidates(candidates, man);
        }
        layers.push_back(train_layer(X, Y_t, candidates, config, t));
    }
    return layers;
}

}  // namespace xmatch
