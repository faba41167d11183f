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

#ifndef XMATCH_PIPELINE_HPP
#define XMATCH_PIPELINE_HPP

#include <optional>
#include <string>

#include <json.hpp>

#include "xmatch/hlt.hpp"
#include "xmatch/inference.hpp"
#include "xmatch/label2vec.hpp"
#include "xmatch/matcher.hpp"
#include "xmatch/metrics.hpp"
#include "xmatch/ops.hpp"
#include "xmatch/ranker.hpp"
#include "xmatch/types.hpp"

namespace xmatch {

// End-to-end training configuration. One master seed fans out to per-stage
// seeds (stage name hashed in), so the sub-config seed fields are overwritten
// at run time.
struct PipelineConfig {
    std::string train_path;
    std::string test_path;          // optional; used by the CLI for evaluation
    std::string static_train_path;  // optional pre-computed dense sentence embeddings
    std::string static_test_path;
    std::string out_dir;  // empty = do not persist

    std::string emb = "label2vec";  // label embedding source: "label2vec" or "tfidf" (PIFA)
    bool use_matcher = true;        // train the matcher and append its dense block

    float weight_sparse = 1.0f;
    float weight_encoder = 1.0f;
    float weight_static = 1.0f;

    L2VConfig l2v;
    HltConfig hlt;
    MatchConfig match;
    RankerConfig ranker;
    BeamConfig beam;

    uint64_t seed = 1;
    int threads = 1;

    void validate() const;
    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);
    static PipelineConfig from_json_file(const std::string& path);
};

// Persisted training artifact: tree + matcher + per-level ranker weights +
// the feature concatenation recipe.
struct ModelBundle {
    std::string version = "1";
    LabelTree tree;
    std::optional<MatcherModel> matcher;
    std::vector<RankerLayer> layers;
    ConcatRecipe recipe;
    std::optional<PropensityModel> propensity;
    nlohmann::json manifest;

    void save(const std::string& dir) const;
    static ModelBundle load(const std::string& dir);

    // Builds the concatenated test-time features per the stored recipe.
    SparseMatrix assemble_features(const SparseMatrix& x_sparse, const DenseMatrix* x_static,
                                   int threads = 1) const;
    Predictions predict(const SparseMatrix& x_sparse, const DenseMatrix* x_static,
                        const BeamConfig& beam, int threads = 1) const;
};

// PIFA label embeddings: row l = l2-normalized sum of the feature rows of
// l's positive instances. Labels without positives come out as zero rows.
SparseMatrix pifa_embeddings(const SparseMatrix& features, const SparseMatrix& labels);

ModelBundle run_pipeline(const PipelineConfig& config);

// Builds the manifest for a bundle trained with `config` (stored inside
// run_pipeline; exposed for the CLI's train-ranker path).
nlohmann::json build_manifest(const ModelBundle& bundle, const nlohmann::json& config_echo,
                              uint64_t seed);

}  // namespace xmatch

#endif  // XMATCH_PIPELINE_HPP
