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

#include "xmatch/inference.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include "xmatch/parallel.hpp"

namespace xmatch {

void BeamConfig::validate() const {
    if (beam_size < 1) throw config_error("beam: beam_size must be >= 1");
    if (top_k < 1) throw config_error("beam: top_k must be >= 1");
}

std::vector<std::pair<index_t, double>> beam_levels(std::span<const index_t> x_cols,
                                                    std::span<const float> x_vals,
                                                    const TreeTopology& topo,
                                                    const std::vector<RankerLayer>& layers,
                                                    index_t n_levels, index_t beam_size,
                                                    FeatureScratch& scratch) {
    if (n_levels > layers.size() || n_levels > topo.offsets.size()) {
        throw config_error("beam_levels: not enough trained layers");
    }
    if (!layers.empty() && !x_cols.empty() && x_cols.back() >= layers[0].weights.n_cols) {
        throw data_error("beam_levels: feature width mismatch");
    }
    scratch.scatter(x_cols, x_vals, layers.empty() ? 0 : layers[0].weights.n_cols);

    std::vector<std::pair<index_t, double>> frontier{{0u, 1.0}};  // single root, score 1
    std::vector<std::pair<index_t, double>> next;
    auto by_rank = [](const std::pair<index_t, double>& a, const std::pair<index_t, double>& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    };
    for (index_t t = 1; t <= n_levels; ++t) {
        next.clear();
        for (const auto& [parent, path] : frontier) {
            for (index_t child : topo.children_of(t, parent)) {
                double s = layers[t - 1].score(child, scratch.dense.data());
                next.emplace_back(child, path * s);
            }
        }
        size_t keep = std::min<size_t>(beam_size, next.size());
        std::partial_sort(next.begin(), next.begin() + keep, next.end(), by_rank);
        next.resize(keep);
        frontier = next;
    }
    scratch.clear(x_cols);
    return frontier;
}

std::vector<std::pair<index_t, float>> beam_search(std::span<const index_t> x_cols,
                                                   std::span<const float> x_vals,
                                                   const TreeTopology& topo,
                                                   const std::vector<RankerLayer>& layers,
                                                   const BeamConfig& config,
                                                   FeatureScratch& scratch) {
    config.validate();
    index_t depth = static_cast<index_t>(topo.offsets.size());
    if (layers.size() != depth) {
        throw config_error("beam_search: one ranker layer per tree level required");
    }
    auto leaves = beam_levels(x_cols, x_vals, topo, layers, depth, config.beam_size, scratch);
    size_t keep = std::min<size_t>(config.top_k, leaves.size());
    std::vector<std::pair<index_t, float>> out;
    out.reserve(keep);
    for (size_t j = 0; j < keep; ++j) {
        // deep paths of tiny sigmoids can underflow float; keep scores positive
        float score = static_cast<float>(leaves[j].second);
        if (score <= 0.0f) score = std::numeric_limits<float>::min();
        out.emplace_back(leaves[j].first, score);
    }
    return out;
}

SparseMatrix Predictions::to_sparse() const {
    SparseBuilder builder(static_cast<index_t>(rows.size()), n_labels);
    for (const auto& row : rows) {
        for (const auto& [label, score] : row) builder.add(label, score);
        builder.finish_row();
    }
    return builder.build();
}

Predictions predict_batch(const SparseMatrix& X, const LabelTree& tree,
                          const std::vector<RankerLayer>& layers, const BeamConfig& config,
                          int threads) {
    Predictions preds;
    preds.n_labels = tree.n_labels;
    preds.rows.resize(X.n_rows);
    TreeTopology topo = TreeTopology::build(tree);
    parallel_for(0, X.n_rows, threads, [&](size_t i) {
        thread_local FeatureScratch scratch;
        index_t r = static_cast<index_t>(i);
        preds.rows[i] = beam_search(X.row_cols(r), X.row_vals(r), topo, layers, config, scratch);
    }, 64);
    return preds;
}

void write_predictions(const std::string& path, const Predictions& preds) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot open file for writing: " + path);
    std::string buf;
    for (const auto& row : preds.rows) {
        buf.clear();
        for (size_t j = 0; j < row.size(); ++j) {
            if (j) buf += ' ';
            buf += std::to_string(row[j].first);
            buf += ':';
            char tmp[32];
            auto [p, ec] = std::to_chars(tmp, tmp + sizeof(tmp), row[j].second);
            (void)ec;
            buf.append(tmp, p);
        }
        buf += '\n';
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw data_error("write failed: " + path);
}

Predictions load_predictions(const std::string& path, index_t n_labels) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open file: " + path);
    Predictions preds;
    preds.n_labels = n_labels;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto& row = preds.rows.emplace_back();
        size_t pos = 0;
        while (pos < line.size()) {
            size_t start = line.find_first_not_of(" \t", pos);
            if (start == std::string::npos) break;
            size_t end = line.find_first_of(" \t", start);
            if (end == std::string::npos) end = line.size();
            std::string_view tok(line.data() + start, end - start);
            size_t colon = tok.find(':');
            if (colon == std::string_view::npos) {
                throw data_error(path + ":" + std::to_string(line_no) + ": malformed entry '" +
                                 std::string(tok) + "'");
            }
            index_t label = 0;
            float score = 0.0f;
            auto r1 = std::from_chars(tok.data(), tok.data() + colon, label);
            auto r2 = std::from_chars(tok.data() + colon + 1, tok.data() + tok.size(), score);
            if (r1.ec != std::errc{} || r2.ec != std::errc{} ||
                r2.ptr != tok.data() + tok.size() || label >= n_labels) {
                throw data_error(path + ":" + std::to_string(line_no) + ": malformed entry '" +
                                 std::string(tok) + "'");
            }
            row.emplace_back(label, score);
            pos = end;
        }
    }
    return preds;
}

}  // namespace xmatch
