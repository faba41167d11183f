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
#include <numeric>
#include <random>
#include <set>

#include "synthetic.hpp"
#include "test_util.hpp"
#include "xmatch/hlt.hpp"
#include "xmatch/matcher.hpp"
#include "xmatch/ops.hpp"
#include "xmatch/simd/kernels.hpp"

using namespace xmatch;
using namespace xmatch::testutil;

namespace {

MatchBatch tiny_batch(const DenseMatrix& z, std::vector<std::vector<index_t>> positives,
                      std::vector<std::vector<index_t>> hard_negatives) {
    MatchBatch batch;
    batch.z = z;
    batch.z_prenorm.assign(z.n_rows, 1.0);
    batch.text_ids.resize(z.n_rows);
    std::iota(batch.text_ids.begin(), batch.text_ids.end(), index_t{0});
    batch.positives = std::move(positives);
    batch.hard_negatives = std::move(hard_negatives);
    std::vector<index_t> all;
    for (const auto& p : batch.positives) all.insert(all.end(), p.begin(), p.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    batch.batch_label_set = all;
    batch.label_texts.resize(all.size());
    for (index_t i = 0; i < z.n_rows; ++i) {
        for (index_t p : batch.positives[i]) {
            size_t slot = std::lower_bound(all.begin(), all.end(), p) - all.begin();
            batch.label_texts[slot].push_back(i);
        }
    }
    return batch;
}

// slow direct evaluation of the label-text loss for the oracle comparison
double naive_label_text(const MatchBatch& batch, const DenseMatrix& E, double tau) {
    double total = 0.0;
    for (size_t li = 0; li < batch.batch_label_set.size(); ++li) {
        index_t label = batch.batch_label_set[li];
        double inner = 0.0;
        for (index_t p : batch.label_texts[li]) {
            double num = 0.0, den = 0.0;
            for (index_t c = 0; c < batch.z.n_cols; ++c) {
                num += static_cast<double>(E.at(label, c)) * batch.z.at(p, c);
            }
            for (index_t a = 0; a < batch.z.n_rows; ++a) {
                double s = 0.0;
                for (index_t c = 0; c < batch.z.n_cols; ++c) {
                    s += static_cast<double>(E.at(label, c)) * batch.z.at(a, c);
                }
                den += std::exp(s / tau);
            }
            inner += -std::log(std::exp(num / tau) / den);
        }
        total += inner / batch.label_texts[li].size();
    }
    return total / batch.batch_label_set.size();
}

}  // namespace

TEST_CASE("encode_text follows the normalized bag-of-features contract") {
    EncoderParams params;
    params.feature_embeddings = DenseMatrix(3, 2);
    params.feature_embeddings.at(1, 0) = 3.0f;
    params.feature_embeddings.at(1, 1) = 4.0f;
    params.bias.assign(2, 0.0f);

    std::vector<index_t> cols{1};
    std::vector<float> vals{1.0f};
    std::vector<float> z(2);
    encode_text(params, cols, vals, z.data());
    CHECK(z[0] == doctest::Approx(0.6));
    CHECK(z[1] == doctest::Approx(0.8));

    // empty input returns the normalized bias
    params.bias = {0.0f, 2.0f};
    encode_text(params, {}, {}, z.data());
    CHECK(z[0] == 0.0f);
    CHECK(z[1] == doctest::Approx(1.0));

    // all-zero input and bias stays zero
    params.bias = {0.0f, 0.0f};
    double prenorm = encode_text(params, {}, {}, z.data());
    CHECK(prenorm == 0.0);
    CHECK(z[0] == 0.0f);
    CHECK(z[1] == 0.0f);
}

TEST_CASE("text_label_loss hand values") {
    DenseMatrix z(1, 2);
    z.at(0, 0) = 1.0f;
    DenseMatrix e(2, 2);  // both labels orthogonal to z: all dots zero

    MatchBatch batch = tiny_batch(z, {{0}}, {{1}});
    CHECK(text_label_loss(batch, e, 0.05) == doctest::Approx(std::log(2.0)).epsilon(1e-9));

    // (z,e_p)/tau = 2, (z,e_n)/tau = 0 -> ln(1 + e^-2)
    double tau = 0.5;
    e.at(0, 0) = static_cast<float>(2.0 * tau);
    CHECK(text_label_loss(batch, e, tau) ==
          doctest::Approx(0.1269280110429726).epsilon(1e-6));

    // no negatives, equal positive dots: loss = ln |P1|
    DenseMatrix e3(3, 2);
    MatchBatch batch3 = tiny_batch(z, {{0, 1, 2}}, {{}});
    CHECK(text_label_loss(batch3, e3, 0.05) == doctest::Approx(std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("label_text_loss hand values and oracle") {
    // two texts, label 0 positive for text 0 only, all dots zero -> ln 2
    DenseMatrix z(2, 3);
    DenseMatrix e(1, 3);
    MatchBatch batch = tiny_batch(z, {{0}, {0}}, {{}, {}});
    batch.batch_label_set = {0};
    batch.label_texts = {{0}};
    batch.positives = {{0}, {0}};
    // rebuild by hand: label 0 positive only for text 0
    batch = tiny_batch(z, {{0}, {0}}, {{}, {}});
    batch.label_texts[0] = {0};
    CHECK(label_text_loss(batch, e, 0.05) == doctest::Approx(std::log(2.0)).epsilon(1e-9));

    // batch of one text: softmax over a single candidate is 1, loss 0
    DenseMatrix z1(1, 3);
    MatchBatch one = tiny_batch(z1, {{0}}, {{}});
    CHECK(label_text_loss(one, e, 0.05) == doctest::Approx(0.0));

    // random small batch matches the naive double loop
    std::mt19937_64 rng(3);
    DenseMatrix zr = random_dense(rng, 5, 4);
    DenseMatrix er = random_dense(rng, 7, 4);
    std::vector<std::vector<index_t>> pos(5);
    for (auto& p : pos) {
        size_t count = 1 + next_below(rng, 3);
        std::set<index_t> chosen;
        while (chosen.size() < count) chosen.insert(static_cast<index_t>(next_below(rng, 7)));
        p.assign(chosen.begin(), chosen.end());
    }
    MatchBatch rb = tiny_batch(zr, pos, std::vector<std::vector<index_t>>(5));
    CHECK(label_text_loss(rb, er, 0.3) == doctest::Approx(naive_label_text(rb, er, 0.3)).epsilon(1e-9));
}

TEST_CASE("matching_loss endpoints and mixing") {
    std::mt19937_64 rng(7);
    DenseMatrix z = random_dense(rng, 4, 5);
    DenseMatrix e = random_dense(rng, 6, 5);
    std::vector<std::vector<index_t>> pos{{0, 1}, {2}, {3, 4}, {5}};
    std::vector<std::vector<index_t>> negs{{2, 3}, {0}, {1}, {0, 2}};
    MatchBatch batch = tiny_batch(z, pos, negs);

    double tl = text_label_loss(batch, e, 0.05);
    double lt = label_text_loss(batch, e, 0.05);
    CHECK(matching_loss(batch, e, 0.05, 1.0) == tl);
    CHECK(matching_loss(batch, e, 0.05, 0.0) == lt);
    CHECK(matching_loss(batch, e, 0.05, 0.5) == doctest::Approx(0.5 * tl + 0.5 * lt).epsilon(1e-12));
    CHECK(matching_loss(batch, e, 0.05, 0.25) ==
          doctest::Approx(0.25 * tl + 0.75 * lt).epsilon(1e-12));
}

TEST_CASE("shift invariance: adding a constant to one softmax group's logits") {
    // adding c to every dot of one text's candidate set leaves L_tl unchanged;
    // realized by shifting e along a direction orthogonal to the other texts
    std::mt19937_64 rng(11);
    DenseMatrix z(1, 3);
    z.at(0, 0) = 1.0f;
    DenseMatrix e = random_dense(rng, 4, 3);
    MatchBatch batch = tiny_batch(z, {{0, 2}}, {{1, 3}});
    double before = text_label_loss(batch, e, 0.07);
    DenseMatrix shifted = e;
    for (index_t l = 0; l < 4; ++l) shifted.at(l, 0) += 0.9f;  // shifts every dot by 0.9
    double after = text_label_loss(batch, shifted, 0.07);
    CHECK(before == doctest::Approx(after).epsilon(1e-6));
}

TEST_CASE("losses stay finite at extreme logits") {
    DenseMatrix z(2, 2);
    z.at(0, 0) = 1.0f;
    z.at(1, 0) = -1.0f;
    DenseMatrix e(2, 2);
    e.at(0, 0) = 50.0f / 0.05f;  // dot = +/- 1000 at tau 0.05
    e.at(1, 0) = -50.0f / 0.05f;
    MatchBatch batch = tiny_batch(z, {{0}, {1}}, {{1}, {0}});
    double tl = text_label_loss(batch, e, 0.05);
    double lt = label_text_loss(batch, e, 0.05);
    CHECK(std::isfinite(tl));
    CHECK(std::isfinite(lt));
}

TEST_CASE("loss gradients match central finite differences") {
    std::mt19937_64 rng(13);
    const index_t d = 4;
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        DenseMatrix z = random_dense(rng, 3, d);
        DenseMatrix e = random_dense(rng, 5, d);
        std::vector<std::vector<index_t>> pos{{0, 1}, {2}, {3}};
        std::vector<std::vector<index_t>> negs{{4}, {0, 4}, {1}};
        MatchBatch batch = tiny_batch(z, pos, negs);
        double tau = 0.2 + 0.3 * next_double(rng);
        double lambda = (trial % 3 == 0) ? 1.0 : (trial % 3 == 1) ? 0.0 : 0.5;

        GradMatrix dz(3, d), de(5, d);
        matching_loss(batch, e, tau, lambda, &dz, &de);

        auto loss_at = [&]() { return matching_loss(batch, e, tau, lambda); };
        auto fd = [&](float* slot) {
            float saved = *slot;
            const float h = 1e-3f;
            *slot = saved + h;
            double up = loss_at();
            double x_up = *slot;
            *slot = saved - h;
            double down = loss_at();
            double x_down = *slot;
            *slot = saved;
            return (up - down) / (x_up - x_down);
        };
        index_t zi = static_cast<index_t>(next_below(rng, 3));
        index_t zc = static_cast<index_t>(next_below(rng, d));
        double numeric_z = fd(&batch.z.values[zi * d + zc]);
        double analytic_z = dz.at(zi, zc);
        double scale_z = std::max({std::abs(numeric_z), std::abs(analytic_z), 1e-3});
        CHECK(std::abs(numeric_z - analytic_z) / scale_z < 1e-4);

        index_t ei = static_cast<index_t>(next_below(rng, 5));
        index_t ec = static_cast<index_t>(next_below(rng, d));
        double numeric_e = fd(&e.values[ei * d + ec]);
        double analytic_e = de.at(ei, ec);
        double scale_e = std::max({std::abs(numeric_e), std::abs(analytic_e), 1e-3});
        CHECK(std::abs(numeric_e - analytic_e) / scale_e < 1e-4);
        checked += 2;
    }
    CHECK(checked >= 100);
}

TEST_CASE("encoder gradient matches finite differences through the chain") {
    std::mt19937_64 rng(17);
    const index_t d = 3;
    EncoderParams params;
    params.feature_embeddings = random_dense(rng, 6, d);
    params.bias = {0.1f, -0.2f, 0.3f};
    DenseMatrix e = random_dense(rng, 4, d);

    SparseMatrix x = random_sparse(rng, 2, 6, 0.7, 0.1f, 1.0f);
    std::vector<std::vector<index_t>> hard_negs{{3}, {2}};
    SparseBuilder yb(2, 4);
    yb.add(0, 1.0f);
    yb.add(1, 1.0f);
    yb.finish_row();
    yb.add(1, 1.0f);
    yb.finish_row();
    SparseMatrix y = yb.build();

    const double tau = 0.4, lambda = 0.6;

    // independent all-double forward pass (production truncates z to float32,
    // which is too grainy for finite differences at h = 1e-3)
    auto loss_at = [&]() {
        std::vector<std::vector<double>> z(2, std::vector<double>(d));
        for (index_t i = 0; i < 2; ++i) {
            std::vector<double> u(params.bias.begin(), params.bias.end());
            auto cols = x.row_cols(i);
            auto vals = x.row_vals(i);
            for (size_t j = 0; j < cols.size(); ++j) {
                const float* row = params.feature_embeddings.row(cols[j]);
                for (index_t c = 0; c < d; ++c) u[c] += (double)vals[j] * row[c];
            }
            double norm = 0.0;
            for (double v : u) norm += v * v;
            norm = std::sqrt(norm);
            for (index_t c = 0; c < d; ++c) z[i][c] = norm > 0 ? u[c] / norm : 0.0;
        }
        auto dot_e = [&](const std::vector<double>& zi, index_t label) {
            double s = 0.0;
            for (index_t c = 0; c < d; ++c) s += zi[c] * e.at(label, c);
            return s;
        };
        // text-label direction
        std::vector<std::vector<index_t>> pos{{0, 1}, {1}};
        double tl = 0.0;
        for (index_t i = 0; i < 2; ++i) {
            std::vector<index_t> cands = pos[i];
            cands.insert(cands.end(), hard_negs[i].begin(), hard_negs[i].end());
            double denom = 0.0;
            for (index_t a : cands) denom += std::exp(dot_e(z[i], a) / tau);
            double inner = 0.0;
            for (index_t p : pos[i]) {
                inner += -std::log(std::exp(dot_e(z[i], p) / tau) / denom);
            }
            tl += inner / pos[i].size();
        }
        tl /= 2.0;
        // label-text direction: batch labels {0, 1}; P2(0)={0}, P2(1)={0,1}
        double lt = 0.0;
        std::vector<index_t> batch_labels{0, 1};
        std::vector<std::vector<index_t>> p2{{0}, {0, 1}};
        for (size_t li = 0; li < batch_labels.size(); ++li) {
            double denom = 0.0;
            for (index_t a = 0; a < 2; ++a) denom += std::exp(dot_e(z[a], batch_labels[li]) / tau);
            double inner = 0.0;
            for (index_t p : p2[li]) {
                inner += -std::log(std::exp(dot_e(z[p], batch_labels[li]) / tau) / denom);
            }
            lt += inner / p2[li].size();
        }
        lt /= batch_labels.size();
        return lambda * tl + (1.0 - lambda) * lt;
    };

    // analytic: production loss grads -> encoder backward
    std::vector<index_t> ids{0, 1};
    MatchBatch batch = assemble_batch(params, x, y, hard_negs, ids);
    GradMatrix dz(2, d), de(4, d);
    double prod_loss = matching_loss(batch, e, tau, lambda, &dz, &de);
    CHECK(prod_loss == doctest::Approx(loss_at()).epsilon(1e-5));  // forward cross-check
    GradMatrix d_table(6, d);
    std::vector<double> d_bias(d, 0.0);
    for (index_t i = 0; i < 2; ++i) {
        encoder_backward(params, x.row_cols(i), x.row_vals(i), batch.z.row(i), batch.z_prenorm[i],
                         dz.row(i), &d_table, &d_bias);
    }

    int checked = 0;
    for (int trial = 0; trial < 40; ++trial) {
        index_t r = static_cast<index_t>(next_below(rng, 6));
        index_t c = static_cast<index_t>(next_below(rng, d));
        float* slot = &params.feature_embeddings.values[r * d + c];
        float saved = *slot;
        const float h = 1e-3f;
        *slot = saved + h;
        double up = loss_at();
        double x_up = *slot;
        *slot = saved - h;
        double down = loss_at();
        double x_down = *slot;
        *slot = saved;
        double numeric = (up - down) / (x_up - x_down);
        double analytic = d_table.at(r, c);
        double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
        CHECK(std::abs(numeric - analytic) / scale < 1e-4);
        ++checked;
    }
    CHECK(checked == 40);

    // bias gradient too
    for (index_t c = 0; c < d; ++c) {
        float saved = params.bias[c];
        const float h = 1e-3f;
        params.bias[c] = saved + h;
        double up = loss_at();
        double x_up = params.bias[c];
        params.bias[c] = saved - h;
        double down = loss_at();
        double x_down = params.bias[c];
        params.bias[c] = saved;
        double numeric = (up - down) / (x_up - x_down);
        // bias components can be near zero; the float32 z quantization puts
        // ~1e-6 of absolute noise on the analytic side, so floor the scale
        double scale = std::max({std::abs(numeric), std::abs(d_bias[c]), 1e-2});
        CHECK(std::abs(numeric - d_bias[c]) / scale < 1e-4);
    }
}

TEST_CASE("mine_hard_negatives obeys its contract") {
    std::mt19937_64 rng(19);
    EncoderParams params;
    params.feature_embeddings = random_dense(rng, 8, 4);
    params.bias.assign(4, 0.0f);
    SparseMatrix x = random_sparse(rng, 6, 8, 0.5, 0.1f, 1.0f);
    SparseMatrix y = random_labels(rng, 6, 12, 3);

    // stage one: uniform fallback, seeded, exclusion holds
    auto uniform = mine_hard_negatives(params, nullptr, x, y, 4, 99);
    auto uniform2 = mine_hard_negatives(params, nullptr, x, y, 4, 99);
    CHECK(uniform == uniform2);
    for (index_t i = 0; i < 6; ++i) {
        CHECK(uniform[i].size() == 4);
        for (index_t n : uniform[i]) CHECK_FALSE(y.has_entry(i, n));
    }

    // scored: equals a naive top-k oracle
    DenseMatrix e = random_dense(rng, 12, 4);
    auto mined = mine_hard_negatives(params, &e, x, y, 3, 1);
    for (index_t i = 0; i < 6; ++i) {
        std::vector<float> z(4);
        encode_text(params, x.row_cols(i), x.row_vals(i), z.data());
        std::vector<std::pair<float, index_t>> scored;
        for (index_t l = 0; l < 12; ++l) {
            if (!y.has_entry(i, l)) {
                scored.emplace_back(simd::dot(z.data(), e.row(l), 4), l);
            }
        }
        std::sort(scored.begin(), scored.end(), [](auto a, auto b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        std::vector<index_t> expect;
        for (size_t j = 0; j < 3; ++j) expect.push_back(scored[j].second);
        std::sort(expect.begin(), expect.end());
        CHECK(mined[i] == expect);
    }

    // clamp: asking for more than exist returns all negatives
    auto all = mine_hard_negatives(params, &e, x, y, 100, 1);
    for (index_t i = 0; i < 6; ++i) {
        CHECK(all[i].size() == 12 - y.row_nnz(i));
    }
}

TEST_CASE("bootstrap_init inherits parents exactly at sigma 0") {
    DenseMatrix parent(2, 3);
    for (index_t c = 0; c < 3; ++c) {
        parent.at(0, c) = static_cast<float>(c + 1);
        parent.at(1, c) = static_cast<float>(10 * (c + 1));
    }
    SparseBuilder cb(3, 2);
    cb.add(0, 1.0f);
    cb.finish_row();
    cb.add(0, 1.0f);
    cb.finish_row();
    cb.add(1, 1.0f);
    cb.finish_row();
    SparseMatrix c_map = cb.build();

    DenseMatrix child = bootstrap_init(3, 3, &parent, &c_map, 0.0, 5);
    for (index_t c = 0; c < 3; ++c) {
        CHECK(child.at(0, c) == parent.at(0, c));
        CHECK(child.at(1, c) == parent.at(0, c));
        CHECK(child.at(2, c) == parent.at(1, c));
    }
}

TEST_CASE("bootstrap noise has the declared scale") {
    const index_t dim = 64;
    const index_t n = 400;
    DenseMatrix parent(1, dim);
    SparseBuilder cb(n, 1);
    for (index_t i = 0; i < n; ++i) {
        cb.add(0, 1.0f);
        cb.finish_row();
    }
    SparseMatrix c_map = cb.build();
    DenseMatrix child = bootstrap_init(n, dim, &parent, &c_map, 0.01, 7);
    double mean_norm = 0.0;
    for (index_t i = 0; i < n; ++i) {
        double norm_sq = 0.0;
        for (index_t c = 0; c < dim; ++c) norm_sq += (double)child.at(i, c) * child.at(i, c);
        mean_norm += std::sqrt(norm_sq);
    }
    mean_norm /= n;
    CHECK(mean_norm == doctest::Approx(0.01 * std::sqrt((double)dim)).epsilon(0.05));

    // level 1: pure Gaussian of the same scale
    DenseMatrix level1 = bootstrap_init(n, dim, nullptr, nullptr, 0.01, 9);
    double var = 0.0;
    for (float v : level1.values) var += (double)v * v;
    var /= level1.values.size();
    CHECK(std::sqrt(var) == doctest::Approx(0.01).epsilon(0.05));
}

TEST_CASE("train_matcher aligns the synthetic groups and the loss decreases") {
    TwoGroupSpec spec;
    spec.n_samples = 300;
    spec.seed = 23;
    Dataset ds = make_two_group_dataset(spec);
    SparseMatrix x = l2_normalize_rows(ds.features_sparse);

    HltConfig hcfg;
    hcfg.branching = 2;
    hcfg.max_leaf = 5;
    hcfg.seed = 3;
    LabelCorpus corpus = LabelCorpus::from_labels(ds.labels);
    L2VConfig l2v;
    l2v.dim = 16;
    l2v.epochs = 6;
    l2v.n_neg = 5;
    l2v.seed = 4;
    LabelTree tree = build_tree(train_label2vec(corpus, l2v).target, hcfg);
    auto y_levels = propagate_labels(ds.labels, tree);

    MatchConfig cfg;
    cfg.encoder_dim = 16;
    cfg.batch_size = 32;
    cfg.steps_per_level = 300;
    cfg.n_hard_neg = 4;
    cfg.tau = 0.05f;
    cfg.lambda = 0.5f;
    cfg.lr_encoder = 5e-2f;
    cfg.lr_label = 2e-1f;
    cfg.seed = 31;
    MatcherTrainStats stats;
    MatcherModel model = train_matcher(x, tree, y_levels, cfg, &stats);

    // loss decreases: mean of the last tenth < mean of the first tenth
    const auto& leaf_losses = stats.level_losses.back();
    REQUIRE(leaf_losses.size() == 300);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 30; ++i) head += leaf_losses[i];
    for (int i = 270; i < 300; ++i) tail += leaf_losses[i];
    CHECK(tail / 30.0 < head / 30.0);

    // top-1 leaf label by dot product is a true positive for >= 90% of texts
    const DenseMatrix& e_leaf = model.levels.back().embeddings;
    index_t hits = 0;
    for (index_t i = 0; i < x.n_rows; ++i) {
        std::vector<float> z(cfg.encoder_dim);
        encode_text(model.encoder, x.row_cols(i), x.row_vals(i), z.data());
        index_t best = 0;
        float best_score = -1e30f;
        for (index_t l = 0; l < e_leaf.n_rows; ++l) {
            float s = simd::dot(z.data(), e_leaf.row(l), cfg.encoder_dim);
            if (s > best_score) {
                best_score = s;
                best = l;
            }
        }
        if (ds.labels.has_entry(i, best)) ++hits;
    }
    CHECK(static_cast<double>(hits) / x.n_rows >= 0.9);

    // extract_dense_features matches per-row encode_text and rows are unit
    DenseMatrix features = extract_dense_features(model.encoder, x, 2);
    for (index_t i = 0; i < 5; ++i) {
        std::vector<float> z(cfg.encoder_dim);
        encode_text(model.encoder, x.row_cols(i), x.row_vals(i), z.data());
        for (index_t c = 0; c < cfg.encoder_dim; ++c) CHECK(features.at(i, c) == z[c]);
        CHECK(simd::squared_norm(features.row(i), cfg.encoder_dim) ==
              doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("batch assembly rejects overlapping hard negatives") {
    DenseMatrix z(1, 2);
    MatchBatch bad = tiny_batch(z, {{0}}, {{0}});
    CHECK_THROWS_AS(bad.validate(), data_error);
}

TEST_CASE("match-last-level-only restores the single-stage schedule") {
    TwoGroupSpec spec;
    spec.n_samples = 120;
    spec.seed = 37;
    Dataset ds = make_two_group_dataset(spec);
    SparseMatrix x = l2_normalize_rows(ds.features_sparse);
    HltConfig hcfg;
    hcfg.branching = 2;
    hcfg.max_leaf = 5;
    LabelCorpus corpus = LabelCorpus::from_labels(ds.labels);
    L2VConfig l2v;
    l2v.dim = 8;
    l2v.epochs = 4;
    l2v.n_neg = 3;
    LabelTree tree = build_tree(train_label2vec(corpus, l2v).target, hcfg);
    auto y_levels = propagate_labels(ds.labels, tree);
    REQUIRE(tree.depth() == 2);

    MatchConfig cfg;
    cfg.encoder_dim = 8;
    cfg.batch_size = 16;
    cfg.steps_per_level = 40;
    cfg.n_hard_neg = 3;
    cfg.seed = 5;
    cfg.match_last_level_only = true;
    MatcherTrainStats stats;
    MatcherModel model = train_matcher(x, tree, y_levels, cfg, &stats);
    REQUIRE(model.levels.size() == 2);
    CHECK(stats.level_losses[0].empty());       // level 1 skipped
    CHECK(stats.level_losses[1].size() == 40);  // deepest level trained

    // the untouched level-1 layer is exactly its bootstrap initialization
    DenseMatrix boot = bootstrap_init(tree.level_size(1), cfg.encoder_dim, nullptr, nullptr, 0.01,
                                      derive_seed(cfg.seed, "match-bootstrap") + 1);
    CHECK(model.levels[0].embeddings.values == boot.values);
}
