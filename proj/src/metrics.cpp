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

#include "xmatch/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace xmatch {

namespace {

inline double log2_discount(index_t rank) {
    // 1 / log2(rank + 1), rank is 1-based
    return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

inline bool hit(std::span<const index_t> truth, index_t label) {
    return std::binary_search(truth.begin(), truth.end(), label);
}

}  // namespace

PropensityModel PropensityModel::unit(index_t n_labels) {
    PropensityModel m;
    m.a_param = 0.0;
    m.b_param = 0.0;
    m.c_param = 0.0;
    m.propensities.assign(n_labels, 1.0);
    return m;
}

PropensityModel propensities(const std::vector<uint64_t>& label_counts, uint64_t n_samples,
                             double a_param, double b_param) {
    if (n_samples < 1) throw data_error("propensities: need at least one sample");
    PropensityModel m;
    m.a_param = a_param;
    m.b_param = b_param;
    m.c_param = (std::log(static_cast<double>(n_samples)) - 1.0) * std::pow(b_param + 1.0, a_param);
    m.propensities.resize(label_counts.size());
    for (size_t l = 0; l < label_counts.size(); ++l) {
        double n_l = static_cast<double>(label_counts[l]);
        m.propensities[l] = 1.0 / (1.0 + m.c_param * std::exp(-a_param * std::log(n_l + b_param)));
    }
    return m;
}

double precision_at_k(std::span<const index_t> truth, std::span<const index_t> pred, index_t k) {
    if (k < 1) throw config_error("precision_at_k: k must be >= 1");
    index_t hits = 0;
    index_t upto = std::min<index_t>(k, static_cast<index_t>(pred.size()));
    for (index_t r = 0; r < upto; ++r) {
        if (hit(truth, pred[r])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

double ndcg_at_k(std::span<const index_t> truth, std::span<const index_t> pred, index_t k) {
    if (k < 1) throw config_error("ndcg_at_k: k must be >= 1");
    if (truth.empty()) throw data_error("ndcg_at_k: empty truth set");
    double dcg = 0.0;
    index_t upto = std::min<index_t>(k, static_cast<index_t>(pred.size()));
    for (index_t r = 0; r < upto; ++r) {
        if (hit(truth, pred[r])) dcg += log2_discount(r + 1);
    }
    double ideal = 0.0;
    index_t ideal_upto = std::min<index_t>(k, static_cast<index_t>(truth.size()));
    for (index_t r = 1; r <= ideal_upto; ++r) ideal += log2_discount(r);
    return dcg / ideal;
}

double psp_at_k(std::span<const index_t> truth, std::span<const index_t> pred, index_t k,
                const PropensityModel& model) {
    if (k < 1) throw config_error("psp_at_k: k must be >= 1");
    double sum = 0.0;
    index_t upto = std::min<index_t>(k, static_cast<index_t>(pred.size()));
    for (index_t r = 0; r < upto; ++r) {
        if (hit(truth, pred[r])) sum += 1.0 / model.propensities[pred[r]];
    }
    return sum / static_cast<double>(k);
}

double psndcg_at_k(std::span<const index_t> truth, std::span<const index_t> pred, index_t k,
                   const PropensityModel& model) {
    if (k < 1) throw config_error("psndcg_at_k: k must be >= 1");
    // numerator and denominator both carry 1/k, so the factor cancels
    double psdcg = 0.0;
    index_t upto = std::min<index_t>(k, static_cast<index_t>(pred.size()));
    for (index_t r = 0; r < upto; ++r) {
        if (hit(truth, pred[r])) {
            psdcg += log2_discount(r + 1) / model.propensities[pred[r]];
        }
    }
    double denom = 0.0;
    for (index_t r = 1; r <= k; ++r) denom += log2_discount(r);
    return psdcg / denom;
}

EvalReport evaluate(const SparseMatrix& y_true,
                    const std::vector<std::vector<std::pair<index_t, float>>>& predictions,
                    std::span<const index_t> ks, const PropensityModel* model) {
    if (predictions.size() != y_true.n_rows) {
        throw data_error("evaluate: prediction row count does not match truth");
    }
    if (model && model->propensities.size() != y_true.n_cols) {
        throw data_error("evaluate: propensity model does not cover all labels");
    }
    EvalReport report;
    if (y_true.n_rows == 0) return report;
    std::vector<index_t> pred;
    std::vector<double> p_sum(ks.size(), 0.0), n_sum(ks.size(), 0.0), psp_sum(ks.size(), 0.0),
        psn_sum(ks.size(), 0.0);
    for (index_t i = 0; i < y_true.n_rows; ++i) {
        auto truth = y_true.row_cols(i);
        pred.clear();
        for (const auto& [label, score] : predictions[i]) pred.push_back(label);
        for (size_t j = 0; j < ks.size(); ++j) {
            p_sum[j] += precision_at_k(truth, pred, ks[j]);
            n_sum[j] += ndcg_at_k(truth, pred, ks[j]);
            if (model) {
                psp_sum[j] += psp_at_k(truth, pred, ks[j], *model);
                psn_sum[j] += psndcg_at_k(truth, pred, ks[j], *model);
            }
        }
    }
    double inv_n = 1.0 / static_cast<double>(y_true.n_rows);
    for (size_t j = 0; j < ks.size(); ++j) {
        report.p_at[ks[j]] = p_sum[j] * inv_n;
        report.ndcg_at[ks[j]] = n_sum[j] * inv_n;
        if (model) {
            report.psp_at[ks[j]] = psp_sum[j] * inv_n;
            report.psndcg_at[ks[j]] = psn_sum[j] * inv_n;
        }
    }
    return report;
}

}  // namespace xmatch
