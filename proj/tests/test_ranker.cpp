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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "synthetic.hpp"
#include "test_util.hpp"
#include "xmatch/hlt.hpp"
#include "xmatch/inference.hpp"
#include "xmatch/metrics.hpp"
#include "xmatch/ops.hpp"
#include "xmatch/pipeline.hpp"
#include "xmatch/ranker.hpp"
#include "xmatch/simd/kernels.hpp"

using namespace xmatch;
using namespace xmatch::testutil;

namespace {

SparseMatrix binary_rows(std::vector<std::vector<index_t>> rows, index_t cols) {
    SparseBuilder b(static_cast<index_t>(rows.size()), cols);
    for (auto& row : rows) {
        std::sort(row.begin(), row.end());
        for (index_t c : row) b.add(c, 1.0f);
        b.finish_row();
    }
    return b.build();
}

// brute-force minimization of the 1-D column objective on a grid + refinement
double minimize_scalar(const std::function<double(double)>& f, double lo, double hi) {
    double best_x = lo, best = f(lo);
    for (int pass = 0; pass < 6; ++pass) {
        double step = (hi - lo) / 200.0;
        for (double x = lo; x <= hi; x += step) {
            double v = f(x);
            if (v < best) {
                best = v;
                best_x = x;
            }
        }
        lo = best_x - step;
        hi = best_x + step;
    }
    return best_x;
}

}  // namespace

TEST_CASE("build_tfn: depth-1 case is all ones") {
    SparseMatrix y = binary_rows({{0, 2}, {1}}, 3);
    SparseMatrix c = binary_rows({{0}, {0}, {0}}, 1);  // all labels under the root
    SparseMatrix tfn = build_tfn(y, nullptr, c);
    for (index_t i = 0; i < 2; ++i) CHECK(tfn.row_nnz(i) == 3);
}

TEST_CASE("build_tfn candidates are children of positive parents") {
    // parents: labels {0,1}->0, {2}->1; instance positive for parent 0 only
    SparseMatrix y_prev = binary_rows({{0}}, 2);
    SparseMatrix y = binary_rows({{0}}, 3);
    SparseMatrix c = binary_rows({{0}, {0}, {1}}, 2);
    SparseMatrix tfn = build_tfn(y, &y_prev, c);
    auto cands = tfn.row_cols(0);
    REQUIRE(cands.size() == 2);
    CHECK(cands[0] == 0);
    CHECK(cands[1] == 1);
}

TEST_CASE("build_tfn equals a brute-force parent-membership oracle") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        index_t n = 4 + static_cast<index_t>(next_below(rng, 10));
        index_t k_prev = 2 + static_cast<index_t>(next_below(rng, 4));
        index_t k_t = k_prev + 2 + static_cast<index_t>(next_below(rng, 8));
        // random single-parent map
        SparseBuilder cb(k_t, k_prev);
        std::vector<index_t> parent_of(k_t);
        for (index_t child = 0; child < k_t; ++child) {
            parent_of[child] = static_cast<index_t>(next_below(rng, k_prev));
            cb.add(parent_of[child], 1.0f);
            cb.finish_row();
        }
        SparseMatrix c = cb.build();
        SparseMatrix y = random_labels(rng, n, k_t, 3);
        SparseMatrix y_prev = binarize(spmm(y, c));
        SparseMatrix tfn = build_tfn(y, &y_prev, c);
        for (index_t i = 0; i < n; ++i) {
            for (index_t l = 0; l < k_t; ++l) {
                bool expect = y_prev.has_entry(i, parent_of[l]);
                CHECK(tfn.has_entry(i, l) == expect);
            }
        }
        // superset property: every positive is sampled
        CHECK(union_candidates(tfn, y) == tfn);
    }
}

TEST_CASE("build_man selects top-k_b with deterministic tie-breaks") {
    std::vector<std::vector<std::pair<index_t, float>>> preds(1);
    preds[0] = {{0, 0.1f}, {1, 0.9f}, {2, 0.9f}, {3, 0.4f}, {4, 0.2f}};
    SparseMatrix man = build_man(preds, 1, 5, 3);
    auto cands = man.row_cols(0);
    REQUIRE(cands.size() == 3);
    CHECK(cands[0] == 1);  // 0.9, smaller id first on tie
    CHECK(cands[1] == 2);  // 0.9
    CHECK(cands[2] == 3);  // 0.4

    // k_b >= candidate count keeps everything
    SparseMatrix all = build_man(preds, 1, 5, 10);
    CHECK(all.row_nnz(0) == 5);

    // equals a naive sort oracle on random scores
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<std::pair<index_t, float>>> p(1);
        index_t m = 5 + static_cast<index_t>(next_below(rng, 20));
        for (index_t l = 0; l < m; ++l) {
            p[0].emplace_back(l, static_cast<float>(next_below(rng, 8)) * 0.125f);
        }
        index_t k_b = 1 + static_cast<index_t>(next_below(rng, m));
        SparseMatrix got = build_man(p, 1, m, k_b);
        auto sorted = p[0];
        std::sort(sorted.begin(), sorted.end(), [](auto a, auto b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        std::vector<index_t> expect;
        for (index_t j = 0; j < k_b; ++j) expect.push_back(sorted[j].first);
        std::sort(expect.begin(), expect.end());
        auto cols = got.row_cols(0);
        REQUIRE(cols.size() == expect.size());
        for (size_t j = 0; j < expect.size(); ++j) CHECK(cols[j] == expect[j]);
    }
}

TEST_CASE("MAN predictions equal to positives leave the TFN union unchanged") {
    SparseMatrix y = binary_rows({{0, 1}, {2}}, 3);
    SparseMatrix c = binary_rows({{0}, {0}, {0}}, 1);
    SparseMatrix tfn = build_tfn(y, nullptr, c);
    std::vector<std::vector<std::pair<index_t, float>>> preds(2);
    for (index_t i = 0; i < 2; ++i) {
        for (index_t l : y.row_cols(i)) preds[i].emplace_back(l, 1.0f);
    }
    SparseMatrix man = build_man(preds, 2, 3, 5);
    CHECK(union_candidates(tfn, man) == tfn);
}

TEST_CASE("train_layer solves the separable 1-D problem") {
    // positives at x = +1, negatives at x = -1; margin met exactly at w = 1
    SparseBuilder xb(6, 1);
    for (index_t i = 0; i < 6; ++i) {
        xb.add(0, i < 3 ? 1.0f : -1.0f);
        xb.finish_row();
    }
    SparseMatrix x = xb.build();
    SparseMatrix y = binary_rows({{0}, {0}, {0}, {}, {}, {}}, 1);
    SparseMatrix m = binary_rows({{0}, {0}, {0}, {0}, {0}, {0}}, 1);

    RankerConfig cfg;
    cfg.alpha = 1e-6;
    cfg.epochs = 60;
    cfg.prune_eps = 0.0f;
    RankerLayer layer = train_layer(x, y, m, cfg, 1);
    REQUIRE(layer.weights.row_nnz(0) == 1);
    double w = layer.weights.row_vals(0)[0];

    auto objective = [&](double v) {
        double obj = 6.0 * std::max(0.0, 1.0 - v) * std::max(0.0, 1.0 - v);
        return obj + cfg.alpha * v * v;
    };
    double w_star = minimize_scalar(objective, -2.0, 3.0);
    CHECK(w == doctest::Approx(w_star).epsilon(1e-3));
    CHECK(w == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("train_layer: alpha dominates and positives-only stays finite") {
    SparseBuilder xb(4, 2);
    for (index_t i = 0; i < 4; ++i) {
        xb.add(0, 1.0f);
        xb.add(1, 0.5f);
        xb.finish_row();
    }
    SparseMatrix x = xb.build();
    SparseMatrix y = binary_rows({{0}, {0}, {0}, {0}}, 1);
    SparseMatrix m = binary_rows({{0}, {0}, {0}, {0}}, 1);

    RankerConfig heavy;
    heavy.alpha = 1e9;
    heavy.prune_eps = 0.0f;
    RankerLayer crushed = train_layer(x, y, m, heavy, 1);
    for (float v : crushed.weights.values) CHECK(std::abs(v) < 1e-5f);

    RankerConfig cfg;
    cfg.alpha = 1.0;
    cfg.prune_eps = 0.0f;
    RankerLayer layer = train_layer(x, y, m, cfg, 1);
    // positives only: regularizer bounds the weights, direction is positive
    REQUIRE(layer.weights.row_nnz(0) >= 1);
    for (float v : layer.weights.row_vals(0)) {
        CHECK(std::isfinite(v));
        CHECK(v > 0.0f);
    }

    // a label with no sampled instances is flagged and left at zero
    SparseMatrix m_empty(4, 1);
    RankerLayer empty = train_layer(x, y, m_empty, cfg, 1);
    CHECK(empty.untrained[0] == 1);
    CHECK(empty.weights.row_nnz(0) == 0);
}

TEST_CASE("instance-weight hook shifts the decision toward the weighted class") {
    // one conflicted coordinate: positives and negatives both sit at x = +1
    SparseBuilder xb(4, 1);
    for (index_t i = 0; i < 4; ++i) {
        xb.add(0, 1.0f);
        xb.finish_row();
    }
    SparseMatrix x = xb.build();
    SparseMatrix y = binary_rows({{0}, {0}, {}, {}}, 1);
    SparseMatrix m = binary_rows({{0}, {0}, {0}, {0}}, 1);

    RankerConfig cfg;
    cfg.alpha = 1e-3;
    cfg.prune_eps = 0.0f;
    RankerLayer balanced = train_layer(x, y, m, cfg, 1);
    cfg.weight_positive = 9.0;
    RankerLayer pos_heavy = train_layer(x, y, m, cfg, 1);
    auto w_of = [](const RankerLayer& l) {
        return l.weights.row_nnz(0) ? l.weights.row_vals(0)[0] : 0.0f;
    };
    // balanced classes cancel out; up-weighting positives pushes w above 0
    CHECK(std::abs(w_of(balanced)) < 1e-4f);
    CHECK(w_of(pos_heavy) > 0.5f);
}

TEST_CASE("per-column objective is non-increasing in solver epochs") {
    std::mt19937_64 rng(11);
    SparseMatrix x = random_sparse(rng, 40, 12, 0.4, -1.0f, 1.0f);
    SparseMatrix y = random_labels(rng, 40, 3, 2);
    SparseMatrix m = build_tfn(y, nullptr, binary_rows({{0}, {0}, {0}}, 1));

    RankerConfig cfg;
    cfg.alpha = 0.5;
    cfg.prune_eps = 0.0f;
    double prev = 1e300;
    for (int epochs : {1, 2, 4, 8, 16}) {
        cfg.epochs = epochs;
        RankerLayer layer = train_layer(x, y, m, cfg, 1);
        double total = 0.0;
        for (index_t l = 0; l < 3; ++l) {
            std::vector<index_t> instances;
            std::vector<int8_t> sign;
            for (index_t i = 0; i < 40; ++i) {
                instances.push_back(i);
                sign.push_back(y.has_entry(i, l) ? 1 : -1);
            }
            total += column_objective(x, instances, sign, layer.weights.row_cols(l),
                                      layer.weights.row_vals(l), cfg.alpha, 1.0, 1.0);
        }
        CHECK(total <= prev + 1e-9);
        prev = total;
    }
}

TEST_CASE("pruning moves scores by no more than prune_eps * ||x||_1") {
    std::mt19937_64 rng(13);
    SparseMatrix x = random_sparse(rng, 30, 10, 0.5, -1.0f, 1.0f);
    SparseMatrix y = random_labels(rng, 30, 4, 2);
    SparseMatrix m = build_tfn(y, nullptr, binary_rows({{0}, {0}, {0}, {0}}, 1));

    RankerConfig raw;
    raw.alpha = 1.0;
    raw.prune_eps = 0.0f;
    RankerConfig pruned = raw;
    pruned.prune_eps = 1e-2f;
    RankerLayer full = train_layer(x, y, m, raw, 1);
    RankerLayer trimmed = train_layer(x, y, m, pruned, 1);

    FeatureScratch scratch;
    for (index_t i = 0; i < 10; ++i) {
        scratch.scatter(x.row_cols(i), x.row_vals(i), 10);
        double l1 = 0.0;
        for (float v : x.row_vals(i)) l1 += std::abs(v);
        for (index_t l = 0; l < 4; ++l) {
            // compare margins, not sigmoids (sigmoid contracts distances)
            float m_full =
                simd::gather_dot(full.weights.col_indices.data() + full.weights.row_offsets[l],
                                 full.weights.values.data() + full.weights.row_offsets[l],
                                 full.weights.row_nnz(l), scratch.dense.data());
            float m_trim = simd::gather_dot(
                trimmed.weights.col_indices.data() + trimmed.weights.row_offsets[l],
                trimmed.weights.values.data() + trimmed.weights.row_offsets[l],
                trimmed.weights.row_nnz(l), scratch.dense.data());
            CHECK(std::abs(m_full - m_trim) <= pruned.prune_eps * l1 + 1e-6);
        }
        scratch.clear(x.row_cols(i));
    }
}

TEST_CASE("column results are independent of scheduling") {
    std::mt19937_64 rng(17);
    SparseMatrix x = random_sparse(rng, 50, 15, 0.3, -1.0f, 1.0f);
    SparseMatrix y = random_labels(rng, 50, 6, 2);
    SparseMatrix m =
        build_tfn(y, nullptr, binary_rows({{0}, {0}, {0}, {0}, {0}, {0}}, 1));
    RankerConfig cfg;
    cfg.threads = 1;
    RankerLayer serial = train_layer(x, y, m, cfg, 1);
    cfg.threads = 4;
    RankerLayer parallel = train_layer(x, y, m, cfg, 1);
    CHECK(serial.weights == parallel.weights);
}

TEST_CASE("train_ranker on a depth-1 tree is plain one-vs-rest") {
    std::mt19937_64 rng(19);
    SparseMatrix x = random_sparse(rng, 30, 8, 0.5, 0.0f, 1.0f);
    SparseMatrix y = random_labels(rng, 30, 5, 2);

    LabelTree tree;
    tree.n_labels = 5;
    tree.branching = 16;
    tree.assignments.push_back(binary_rows({{0}, {0}, {0}, {0}, {0}}, 1));
    auto y_levels = propagate_labels(y, tree);

    RankerConfig cfg;
    auto layers = train_ranker(x, tree, y_levels, nullptr, cfg);
    REQUIRE(layers.size() == 1);

    // identical to training the single layer over the all-ones candidate set
    SparseMatrix m = build_tfn(y, nullptr, tree.assignments[0]);
    RankerLayer direct = train_layer(x, y, m, cfg, 1);
    CHECK(layers[0].weights == direct.weights);
}

TEST_CASE("train_ranker reaches high training precision on the synthetic set") {
    TwoGroupSpec spec;
    spec.n_samples = 240;
    spec.seed = 3;
    Dataset ds = make_two_group_dataset(spec);
    SparseMatrix x = l2_normalize_rows(ds.features_sparse);

    HltConfig hcfg;
    hcfg.branching = 2;
    hcfg.max_leaf = 5;
    hcfg.seed = 5;
    LabelTree tree = build_tree(pifa_embeddings(x, ds.labels), hcfg);
    auto y_levels = propagate_labels(ds.labels, tree);

    RankerConfig cfg;
    cfg.alpha = 0.5;
    auto layers = train_ranker(x, tree, y_levels, nullptr, cfg);

    BeamConfig beam;
    beam.beam_size = 4;
    beam.top_k = 1;
    Predictions preds = predict_batch(x, tree, layers, beam, 2);
    double hits = 0;
    for (index_t i = 0; i < x.n_rows; ++i) {
        if (!preds.rows[i].empty() && ds.labels.has_entry(i, preds.rows[i][0].first)) hits += 1;
    }
    CHECK(hits / x.n_rows >= 0.95);
}
