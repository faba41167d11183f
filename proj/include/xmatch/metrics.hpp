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

#ifndef XMATCH_METRICS_HPP
#define XMATCH_METRICS_HPP

#include <map>
#include <span>
#include <vector>

#include "xmatch/types.hpp"

namespace xmatch {

// Inverse-propensity model for missing-label-unbiased metrics:
// p_l = 1 / (1 + C * exp(-A * ln(N_l + B))) with C = (ln N - 1)(B + 1)^A.
struct PropensityModel {
    double a_param = 0.55;
    double b_param = 1.5;
    double c_param = 0.0;
    std::vector<double> propensities;  // per label, in (0, 1]

    static PropensityModel unit(index_t n_labels);  // all p_l = 1
};

PropensityModel propensities(const std::vector<uint64_t>& label_counts, uint64_t n_samples,
                             double a_param, double b_param);

// Per-row metrics. `truth` is the sorted positive label set of the row,
// `pred` the ranked prediction list. DCG discounts use log base 2.
double precision_at_k(std::span<const index_t> truth, std::span<const index_t> pred, index_t k);
double ndcg_at_k(std::span<const index_t> truth, std::span<const index_t> pred, index_t k);
double psp_at_k(std::span<const index_t> truth, std::span<const index_t> pred, index_t k,
                const PropensityModel& model);
double psndcg_at_k(std::span<const index_t> truth, std::span<const index_t> pred, index_t k,
                   const PropensityModel& model);

struct EvalReport {
    std::map<index_t, double> p_at;
    std::map<index_t, double> ndcg_at;
    std::map<index_t, double> psp_at;     // empty unless a propensity model was given
    std::map<index_t, double> psndcg_at;
};

// Macro-average over test rows; ranked predictions per row.
EvalReport evaluate(const SparseMatrix& y_true,
                    const std::vector<std::vector<std::pair<index_t, float>>>& predictions,
                    std::span<const index_t> ks, const PropensityModel* model = nullptr);

}  // namespace xmatch

#endif  // XMATCH_METRICS_HPP
