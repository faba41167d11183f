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

#include "xmatch/hlt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>

#include "xmatch/ops.hpp"
#include "xmatch/parallel.hpp"
#include "xmatch/rng.hpp"
#include "xmatch/simd/kernels.hpp"

namespace xmatch {

void HltConfig::validate() const {
    if (branching < 2) throw config_error("hlt: branching must be >= 2");
    if (max_leaf < 1) throw config_error("hlt: max_leaf must be >= 1");
    if (max_iters < 1) throw config_error("hlt: max_iters must be >= 1");
}

std::vector<std::vector<index_t>> LabelTree::children_at(index_t t) const {
    const SparseMatrix& c = assignments[t - 1];
    std::vector<std::vector<index_t>> children(c.n_cols);
    for (index_t child = 0; child < c.n_rows; ++child) {
        children[c.row_cols(child)[0]].push_back(child);
    }
    return children;
}

TreeTopology TreeTopology::build(const LabelTree& tree) {
    TreeTopology topo;
    topo.offsets.resize(tree.depth());
    topo.children.resize(tree.depth());
    for (index_t t = 1; t <= tree.depth(); ++t) {
        const SparseMatrix& c = tree.assignments[t - 1];
        auto& off = topo.offsets[t - 1];
        auto& ch = topo.children[t - 1];
        off.assign(static_cast<size_t>(c.n_cols) + 1, 0);
        ch.resize(c.n_rows);
        for (index_t child = 0; child < c.n_rows; ++child) ++off[c.row_cols(child)[0] + 1];
        for (size_t p = 1; p < off.size(); ++p) off[p] += off[p - 1];
        std::vector<offset_t> cursor(off.begin(), off.end() - 1);
        for (index_t child = 0; child < c.n_rows; ++child) {
            ch[cursor[c.row_cols(child)[0]]++] = child;
        }
    }
    return topo;
}

void LabelTree::validate() const {
    if (assignments.empty()) throw data_error("label tree: empty assignment chain");
    if (assignments.front().n_cols != 1) throw data_error("label tree: K_0 must be 1");
    if (assignments.back().n_rows != n_labels) throw data_error("label tree: K_D must equal L");
    for (size_t t = 0; t < assignments.size(); ++t) {
        const SparseMatrix& c = assignments[t];
        c.validate();
        if (t > 0 && c.n_cols != assignments[t - 1].n_rows) {
            throw data_error("label tree: level shapes do not chain");
        }
        std::vector<offset_t> col_sums(c.n_cols, 0);
        for (index_t r = 0; r < c.n_rows; ++r) {
            if (c.row_nnz(r) != 1 || c.row_vals(r)[0] != 1.0f) {
                throw data_error("label tree: every node needs exactly one parent");
            }
            ++col_sums[c.row_cols(r)[0]];
        }
        auto [min_it, max_it] = std::minmax_element(col_sums.begin(), col_sums.end());
        if (*max_it - *min_it > 1) throw data_error("label tree: unbalanced assignment");
    }
}

namespace {

// Row adapters so one k-means implementation serves dense label2vec vectors
// and sparse PIFA rows.
struct DenseRows {
    const DenseMatrix& m;
    size_t dim() const { return m.n_cols; }
    float dot(index_t r, const float* centroid) const {
        return simd::dot(m.row(r), centroid, m.n_cols);
    }
    void add_to(index_t r, double* acc) const {
        const float* row = m.row(r);
        for (index_t c = 0; c < m.n_cols; ++c) acc[c] += row[c];
    }
};

struct SparseRows {
    const SparseMatrix& m;
    size_t dim() const { return m.n_cols; }
    float dot(index_t r, const float* centroid) const {
        return simd::gather_dot(m.col_indices.data() + m.row_offsets[r],
                                m.values.data() + m.row_offsets[r], m.row_nnz(r), centroid);
    }
    void add_to(index_t r, double* acc) const {
        auto cols = m.row_cols(r);
        auto vals = m.row_vals(r);
        for (size_t j = 0; j < cols.size(); ++j) acc[cols[j]] += vals[j];
    }
};

template <class Rows>
std::vector<index_t> kmeans_impl(const Rows& rows, std::span<const index_t> subset, index_t k,
                                 std::mt19937_64& rng, int max_iters, double tol) {
    const size_t n = subset.size();
    if (k == 0 || k > n) throw config_error("balanced_kmeans: need 1 <= k <= n_rows");
    if (k == 1) return std::vector<index_t>(n, 0);

    const size_t dim = rows.dim();
    DenseMatrix centroids(k, static_cast<index_t>(dim));

    // k-means++ style seeding under cosine distance
    {
        std::vector<double> dist(n, 2.0);
        size_t first = static_cast<size_t>(next_below(rng, n));
        std::vector<double> acc(dim, 0.0);
        auto place = [&](index_t c, size_t point) {
            std::fill(acc.begin(), acc.end(), 0.0);
            rows.add_to(subset[point], acc.data());
            float* row = centroids.row(c);
            for (size_t j = 0; j < dim; ++j) row[j] = static_cast<float>(acc[j]);
        };
        place(0, first);
        for (index_t c = 1; c < k; ++c) {
            double total = 0.0;
            for (size_t i = 0; i < n; ++i) {
                double d = 2.0 - 2.0 * rows.dot(subset[i], centroids.row(c - 1));
                if (d < dist[i]) dist[i] = d < 0.0 ? 0.0 : d;
                total += dist[i];
            }
            size_t pick;
            if (total > 0.0) {
                double target = next_double(rng) * total;
                double run = 0.0;
                pick = n - 1;
                for (size_t i = 0; i < n; ++i) {
                    run += dist[i];
                    if (run >= target) {
                        pick = i;
                        break;
                    }
                }
            } else {
                pick = static_cast<size_t>(next_below(rng, n));
            }
            place(c, pick);
        }
    }

    const size_t floor_cap = n / k;
    const size_t extra = n % k;  // this many groups may hold floor_cap + 1

    std::vector<index_t> assign(n, 0);
    std::vector<float> sims(n * static_cast<size_t>(k));
    std::vector<size_t> order(n);
    std::vector<size_t> counts(k);
    std::vector<double> acc(dim);

    for (int iter = 0; iter < max_iters; ++iter) {
        for (size_t i = 0; i < n; ++i) {
            for (index_t c = 0; c < k; ++c) {
                sims[i * k + c] = rows.dot(subset[i], centroids.row(c));
            }
        }
        // margin = best - second best; most decided points choose first
        std::vector<float> margin(n);
        for (size_t i = 0; i < n; ++i) {
            float best = -2.0f, second = -2.0f;
            for (index_t c = 0; c < k; ++c) {
                float s = sims[i * k + c];
                if (s > best) {
                    second = best;
                    best = s;
                } else if (s > second) {
                    second = s;
                }
            }
            margin[i] = best - second;
        }
        std::iota(order.begin(), order.end(), size_t{0});
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (margin[a] != margin[b]) return margin[a] > margin[b];
            return a < b;
        });

        std::fill(counts.begin(), counts.end(), size_t{0});
        size_t ceil_used = 0;
        for (size_t i : order) {
            int chosen = -1;
            float chosen_sim = 0.0f;
            for (index_t c = 0; c < k; ++c) {
                bool can_take =
                    counts[c] < floor_cap || (counts[c] == floor_cap && ceil_used < extra);
                if (!can_take) continue;
                float s = sims[i * k + c];
                if (chosen < 0 || s > chosen_sim) {
                    chosen = static_cast<int>(c);
                    chosen_sim = s;
                }
            }
            assign[i] = static_cast<index_t>(chosen);
            if (++counts[static_cast<size_t>(chosen)] == floor_cap + 1) ++ceil_used;
        }

        double shift = 0.0;
        for (index_t c = 0; c < k; ++c) {
            std::fill(acc.begin(), acc.end(), 0.0);
            size_t members = 0;
            for (size_t i = 0; i < n; ++i) {
                if (assign[i] == c) {
                    rows.add_to(subset[i], acc.data());
                    ++members;
                }
            }
            double norm_sq = 0.0;
            for (size_t j = 0; j < dim; ++j) {
                acc[j] /= static_cast<double>(members);
                norm_sq += acc[j] * acc[j];
            }
            double inv = norm_sq > 0.0 ? 1.0 / std::sqrt(norm_sq) : 0.0;
            float* row = centroids.row(c);
            double delta_sq = 0.0;
            for (size_t j = 0; j < dim; ++j) {
                double v = acc[j] * inv;
                double d = v - row[j];
                delta_sq += d * d;
                row[j] = static_cast<float>(v);
            }
            shift = std::max(shift, std::sqrt(delta_sq));
        }
        if (shift < tol) break;
    }
    return assign;
}

template <class Rows>
LabelTree build_tree_impl(const Rows& rows, index_t n_labels, const HltConfig& config) {
    config.validate();
    if (n_labels == 0) throw data_error("build_tree: no labels");

    LabelTree tree;
    tree.n_labels = n_labels;
    tree.branching = config.branching;

    if (n_labels <= config.max_leaf) {
        // flat one-vs-rest chain
        SparseBuilder c1(n_labels, 1);
        for (index_t l = 0; l < n_labels; ++l) {
            c1.add(0, 1.0f);
            c1.finish_row();
        }
        tree.assignments.push_back(c1.build());
        return tree;
    }

    // splitting rounds: smallest s with L <= max_leaf * b^s
    index_t rounds = 0;
    {
        double need = static_cast<double>(n_labels) / config.max_leaf;
        std::uint64_t reach = 1;
        while (static_cast<double>(reach) < need) {
            reach *= config.branching;
            ++rounds;
        }
        if (rounds == 0) rounds = 1;
    }

    std::vector<std::vector<index_t>> nodes{std::vector<index_t>(n_labels)};
    std::iota(nodes[0].begin(), nodes[0].end(), index_t{0});

    uint64_t base_seed = derive_seed(config.seed, "hlt-split");
    index_t node_counter = 0;

    for (index_t round = 1; round <= rounds; ++round) {
        std::vector<std::vector<std::vector<index_t>>> split(nodes.size());
        std::vector<index_t> first_child_seed(nodes.size());
        for (size_t p = 0; p < nodes.size(); ++p) {
            first_child_seed[p] = node_counter;
            ++node_counter;
        }
        // sibling subtrees are independent; seeds depend only on node ids
        parallel_for(0, nodes.size(), config.threads, [&](size_t p) {
            const std::vector<index_t>& members = nodes[p];
            index_t k = std::min<index_t>(config.branching, static_cast<index_t>(members.size()));
            std::mt19937_64 rng(splitmix64(base_seed + first_child_seed[p]));
            std::vector<index_t> assign =
                kmeans_impl(rows, std::span<const index_t>(members), k, rng, config.max_iters,
                            config.tol);
            split[p].assign(k, {});
            for (size_t i = 0; i < members.size(); ++i) {
                split[p][assign[i]].push_back(members[i]);
            }
        }, 1);

        std::vector<std::vector<index_t>> next_nodes;
        index_t total_children = 0;
        for (auto& groups : split) total_children += static_cast<index_t>(groups.size());
        SparseBuilder builder(total_children, static_cast<index_t>(nodes.size()));
        for (size_t p = 0; p < split.size(); ++p) {
            for (auto& group : split[p]) {
                builder.add(static_cast<index_t>(p), 1.0f);
                builder.finish_row();
                next_nodes.push_back(std::move(group));
            }
        }
        tree.assignments.push_back(builder.build());
        nodes = std::move(next_nodes);
    }

    // final matrix: label -> deepest cluster
    std::vector<index_t> leaf_of(n_labels);
    for (size_t p = 0; p < nodes.size(); ++p) {
        for (index_t l : nodes[p]) leaf_of[l] = static_cast<index_t>(p);
    }
    SparseBuilder leaves(n_labels, static_cast<index_t>(nodes.size()));
    for (index_t l = 0; l < n_labels; ++l) {
        leaves.add(leaf_of[l], 1.0f);
        leaves.finish_row();
    }
    tree.assignments.push_back(leaves.build());
    tree.validate();
    return tree;
}

}  // namespace

std::vector<index_t> balanced_kmeans(const DenseMatrix& points, index_t k, uint64_t seed,
                                     int max_iters, double tol) {
    std::vector<index_t> all(points.n_rows);
    std::iota(all.begin(), all.end(), index_t{0});
    std::mt19937_64 rng(seed);
    return kmeans_impl(DenseRows{points}, std::span<const index_t>(all), k, rng, max_iters, tol);
}

std::vector<index_t> balanced_kmeans(const SparseMatrix& points, index_t k, uint64_t seed,
                                     int max_iters, double tol) {
    std::vector<index_t> all(points.n_rows);
    std::iota(all.begin(), all.end(), index_t{0});
    std::mt19937_64 rng(seed);
    return kmeans_impl(SparseRows{points}, std::span<const index_t>(all), k, rng, max_iters, tol);
}

LabelTree build_tree(const DenseMatrix& embeddings, const HltConfig& config) {
    DenseMatrix normalized = l2_normalize_rows(embeddings);
    return build_tree_impl(DenseRows{normalized}, normalized.n_rows, config);
}

LabelTree build_tree(const SparseMatrix& embeddings, const HltConfig& config) {
    SparseMatrix normalized = l2_normalize_rows(embeddings);
    return build_tree_impl(SparseRows{normalized}, normalized.n_rows, config);
}

std::vector<SparseMatrix> propagate_labels(const SparseMatrix& labels, const LabelTree& tree) {
    if (labels.n_cols != tree.n_labels) {
        throw data_error("propagate_labels: label matrix has " + std::to_string(labels.n_cols) +
                         " columns, tree expects " + std::to_string(tree.n_labels));
    }
    index_t depth = tree.depth();
    std::vector<SparseMatrix> result(depth);
    result[depth - 1] = labels;
    for (index_t t = depth - 1; t >= 1; --t) {
        result[t - 1] = binarize(spmm(result[t], tree.assignments[t]));
    }
    return result;
}

}  // namespace xmatch
