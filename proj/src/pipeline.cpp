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

#include "xmatch/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "xmatch/io.hpp"
#include "xmatch/rng.hpp"

namespace xmatch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) {
            if (it.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) throw config_error("unknown config key '" + it.key() + "' in " + where);
    }
}

std::string tree_file(index_t t) { return "tree_level_" + std::to_string(t) + ".smat"; }
std::string ranker_file(index_t t) { return "ranker_level_" + std::to_string(t) + ".smat"; }
std::string labelemb_file(index_t t) { return "labelemb_level_" + std::to_string(t) + ".dmat"; }

}  // namespace

void PipelineConfig::validate() const {
    if (train_path.empty()) throw config_error("pipeline: train path is required");
    if (emb != "label2vec" && emb != "tfidf") {
        throw config_error("pipeline: emb must be 'label2vec' or 'tfidf'");
    }
    if (!(weight_sparse > 0.0f) || !(weight_encoder > 0.0f) || !(weight_static > 0.0f)) {
        throw config_error("pipeline: block weights must be positive");
    }
    hlt.validate();
    match.validate();
    ranker.validate();
    beam.validate();
}

json PipelineConfig::to_json() const {
    return json{
        {"train", train_path},
        {"test", test_path},
        {"static_train", static_train_path},
        {"static_test", static_test_path},
        {"out", out_dir},
        {"emb", emb},
        {"use_matcher", use_matcher},
        {"block_weights",
         {{"sparse", weight_sparse}, {"encoder", weight_encoder}, {"static", weight_static}}},
        {"label2vec",
         {{"dim", l2v.dim},
          {"n_neg", l2v.n_neg},
          {"ns_exponent", l2v.ns_exponent},
          {"epochs", l2v.epochs},
          {"lr_max", l2v.lr_max},
          {"lr_min", l2v.lr_min}}},
        {"hlt",
         {{"branching", hlt.branching},
          {"max_leaf", hlt.max_leaf},
          {"max_iters", hlt.max_iters},
          {"tol", hlt.tol}}},
        {"matcher",
         {{"tau", match.tau},
          {"lambda", match.lambda},
          {"encoder_dim", match.encoder_dim},
          {"batch_size", match.batch_size},
          {"n_hard_neg", match.n_hard_neg},
          {"lr_encoder", match.lr_encoder},
          {"lr_label", match.lr_label},
          {"steps_per_level", match.steps_per_level},
          {"match_last_level_only", match.match_last_level_only}}},
        {"ranker",
         {{"alpha", ranker.alpha},
          {"epochs", ranker.epochs},
          {"prune_eps", ranker.prune_eps},
          {"beam_size", ranker.beam_size}}},
        {"beam", {{"beam_size", beam.beam_size}, {"top_k", beam.top_k}}},
        {"seed", seed},
        {"threads", threads},
    };
}

PipelineConfig PipelineConfig::from_json(const json& j) {
    check_keys(j,
               {"train", "test", "static_train", "static_test", "out", "emb", "use_matcher",
                "block_weights", "label2vec", "hlt", "matcher", "ranker", "beam", "seed",
                "threads"},
               "pipeline config");
    PipelineConfig c;
    c.train_path = j.value("train", c.train_path);
    c.test_path = j.value("test", c.test_path);
    c.static_train_path = j.value("static_train", c.static_train_path);
    c.static_test_path = j.value("static_test", c.static_test_path);
    c.out_dir = j.value("out", c.out_dir);
    c.emb = j.value("emb", c.emb);
    c.use_matcher = j.value("use_matcher", c.use_matcher);
    if (j.contains("block_weights")) {
        const json& w = j.at("block_weights");
        check_keys(w, {"sparse", "encoder", "static"}, "block_weights");
        c.weight_sparse = w.value("sparse", c.weight_sparse);
        c.weight_encoder = w.value("encoder", c.weight_encoder);
        c.weight_static = w.value("static", c.weight_static);
    }
    if (j.contains("label2vec")) {
        const json& v = j.at("label2vec");
        check_keys(v, {"dim", "n_neg", "ns_exponent", "epochs", "lr_max", "lr_min"}, "label2vec");
        c.l2v.dim = v.value("dim", c.l2v.dim);
        c.l2v.n_neg = v.value("n_neg", c.l2v.n_neg);
        c.l2v.ns_exponent = v.value("ns_exponent", c.l2v.ns_exponent);
        c.l2v.epochs = v.value("epochs", c.l2v.epochs);
        c.l2v.lr_max = v.value("lr_max", c.l2v.lr_max);
        c.l2v.lr_min = v.value("lr_min", c.l2v.lr_min);
    }
    if (j.contains("hlt")) {
        const json& v = j.at("hlt");
        check_keys(v, {"branching", "max_leaf", "max_iters", "tol"}, "hlt");
        c.hlt.branching = v.value("branching", c.hlt.branching);
        c.hlt.max_leaf = v.value("max_leaf", c.hlt.max_leaf);
        c.hlt.max_iters = v.value("max_iters", c.hlt.max_iters);
        c.hlt.tol = v.value("tol", c.hlt.tol);
    }
    if (j.contains("matcher")) {
        const json& v = j.at("matcher");
        check_keys(v,
                   {"tau", "lambda", "encoder_dim", "batch_size", "n_hard_neg", "lr_encoder",
                    "lr_label", "steps_per_level", "match_last_level_only"},
                   "matcher");
        c.match.tau = v.value("tau", c.match.tau);
        c.match.lambda = v.value("lambda", c.match.lambda);
        c.match.encoder_dim = v.value("encoder_dim", c.match.encoder_dim);
        c.match.batch_size = v.value("batch_size", c.match.batch_size);
        c.match.n_hard_neg = v.value("n_hard_neg", c.match.n_hard_neg);
        c.match.lr_encoder = v.value("lr_encoder", c.match.lr_encoder);
        c.match.lr_label = v.value("lr_label", c.match.lr_label);
        c.match.steps_per_level = v.value("steps_per_level", c.match.steps_per_level);
        c.match.match_last_level_only =
            v.value("match_last_level_only", c.match.match_last_level_only);
    }
    if (j.contains("ranker")) {
        const json& v = j.at("ranker");
        check_keys(v, {"alpha", "epochs", "prune_eps", "beam_size"}, "ranker");
        c.ranker.alpha = v.value("alpha", c.ranker.alpha);
        c.ranker.epochs = v.value("epochs", c.ranker.epochs);
        c.ranker.prune_eps = v.value("prune_eps", c.ranker.prune_eps);
        c.ranker.beam_size = v.value("beam_size", c.ranker.beam_size);
    }
    if (j.contains("beam")) {
        const json& v = j.at("beam");
        check_keys(v, {"beam_size", "top_k"}, "beam");
        c.beam.beam_size = v.value("beam_size", c.beam.beam_size);
        c.beam.top_k = v.value("top_k", c.beam.top_k);
    }
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    return c;
}

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error("config parse error in " + path + ": " + e.what());
    }
    return from_json(j);
}

SparseMatrix pifa_embeddings(const SparseMatrix& features, const SparseMatrix& labels) {
    if (features.n_rows != labels.n_rows) {
        throw data_error("pifa: feature/label row count mismatch");
    }
    SparseMatrix by_label = transpose(labels);  // L x N
    SparseMatrix out(labels.n_cols, features.n_cols);
    std::vector<double> acc(features.n_cols, 0.0);
    std::vector<index_t> touched;
    index_t empty = 0;
    for (index_t l = 0; l < labels.n_cols; ++l) {
        touched.clear();
        for (index_t i : by_label.row_cols(l)) {
            auto cols = features.row_cols(i);
            auto vals = features.row_vals(i);
            for (size_t j = 0; j < cols.size(); ++j) {
                if (acc[cols[j]] == 0.0) touched.push_back(cols[j]);
                acc[cols[j]] += vals[j];
            }
        }
        if (by_label.row_nnz(l) == 0) ++empty;
        std::sort(touched.begin(), touched.end());
        double norm_sq = 0.0;
        for (index_t c : touched) norm_sq += acc[c] * acc[c];
        double inv = norm_sq > 0.0 ? 1.0 / std::sqrt(norm_sq) : 0.0;
        for (index_t c : touched) {
            float v = static_cast<float>(acc[c] * inv);
            if (v != 0.0f) {
                out.col_indices.push_back(c);
                out.values.push_back(v);
            }
            acc[c] = 0.0;
        }
        out.row_offsets[l + 1] = out.col_indices.size();
    }
    if (empty > 0) {
        std::fprintf(stderr, "[xmatch] pifa: %u label(s) have no positive instances\n", empty);
    }
    return out;
}

json build_manifest(const ModelBundle& bundle, const json& config_echo, uint64_t seed) {
    json manifest;
    manifest["format_version"] = bundle.version;

    index_t encoder_dim = bundle.matcher ? bundle.matcher->encoder.dim() : 0;
    index_t static_dim = 0;
    json blocks = json::array();
    for (const auto& b : bundle.recipe.blocks) {
        blocks.push_back(
            {{"name", b.name}, {"offset", b.offset}, {"width", b.width}, {"weight", b.weight}});
        if (b.name == "static") static_dim = b.width;
    }
    std::vector<index_t> level_sizes;
    for (index_t t = 1; t <= bundle.tree.depth(); ++t) level_sizes.push_back(bundle.tree.level_size(t));
    manifest["dimensions"] = {
        {"n_features_sparse", bundle.recipe.blocks.front().width},
        {"n_labels", bundle.tree.n_labels},
        {"encoder_dim", encoder_dim},
        {"static_dim", static_dim},
        {"d_total", bundle.recipe.total_cols},
        {"depth", bundle.tree.depth()},
        {"branching", bundle.tree.branching},
        {"level_sizes", level_sizes},
    };
    manifest["blocks"] = blocks;

    json components;
    json tree_files = json::array(), ranker_files = json::array();
    for (index_t t = 1; t <= bundle.tree.depth(); ++t) {
        tree_files.push_back(tree_file(t));
        ranker_files.push_back(ranker_file(t));
    }
    components["tree"] = tree_files;
    components["ranker"] = ranker_files;
    if (bundle.matcher) {
        components["encoder"] = "encoder.dmat";
        components["encoder_bias"] = "encoder_bias.dmat";
        json emb_files = json::array();
        for (index_t t = 1; t <= bundle.tree.depth(); ++t) emb_files.push_back(labelemb_file(t));
        components["label_embeddings"] = emb_files;
    }
    if (bundle.propensity) components["propensity"] = "propensity.json";
    manifest["components"] = components;

    json untrained;
    for (const auto& layer : bundle.layers) {
        json ids = json::array();
        for (index_t l = 0; l < layer.untrained.size(); ++l) {
            if (layer.untrained[l]) ids.push_back(l);
        }
        if (!ids.empty()) untrained[std::to_string(layer.level)] = ids;
    }
    manifest["ranker_meta"] = {{"alpha", bundle.layers.empty() ? 0.0 : bundle.layers[0].alpha},
                               {"untrained_columns", untrained}};

    json echo = config_echo;
    echo.erase("out");  // where the bundle lives is not part of what it is
    manifest["config"] = echo;
    manifest["seed"] = seed;
    return manifest;
}

void ModelBundle::save(const std::string& dir) const {
    fs::create_directories(dir);
    auto at = [&](const std::string& name) { return (fs::path(dir) / name).string(); };
    for (index_t t = 1; t <= tree.depth(); ++t) {
        write_sparse_text(at(tree_file(t)), tree.assignments[t - 1]);
        write_sparse_text(at(ranker_file(t)), layers[t - 1].weights);
    }
    if (matcher) {
        write_dense_text(at("encoder.dmat"), matcher->encoder.feature_embeddings);
        DenseMatrix bias(1, static_cast<index_t>(matcher->encoder.bias.size()));
        bias.values = matcher->encoder.bias;
        write_dense_text(at("encoder_bias.dmat"), bias);
        for (index_t t = 1; t <= tree.depth(); ++t) {
            write_dense_text(at(labelemb_file(t)), matcher->levels[t - 1].embeddings);
        }
    }
    if (propensity) {
        json p = {{"a", propensity->a_param},
                  {"b", propensity->b_param},
                  {"c", propensity->c_param},
                  {"propensities", propensity->propensities}};
        std::ofstream out(at("propensity.json"), std::ios::trunc);
        out << p.dump(2) << "\n";
        if (!out) throw data_error("write failed: " + at("propensity.json"));
    }
    std::ofstream out(at("manifest.json"), std::ios::trunc);
    out << manifest.dump(2) << "\n";
    if (!out) throw data_error("write failed: " + at("manifest.json"));
}

ModelBundle ModelBundle::load(const std::string& dir) {
    auto at = [&](const std::string& name) { return (fs::path(dir) / name).string(); };
    std::ifstream in(at("manifest.json"));
    if (!in) throw data_error("cannot open bundle manifest: " + at("manifest.json"));
    ModelBundle bundle;
    try {
        in >> bundle.manifest;
    } catch (const json::exception& e) {
        throw data_error("bundle manifest parse error: " + std::string(e.what()));
    }
    const json& manifest = bundle.manifest;
    if (manifest.value("format_version", "") != "1") {
        throw data_error("bundle: unsupported format version");
    }
    bundle.version = "1";

    const json& dims = manifest.at("dimensions");
    bundle.tree.n_labels = dims.at("n_labels").get<index_t>();
    bundle.tree.branching = dims.at("branching").get<index_t>();
    index_t depth = dims.at("depth").get<index_t>();

    for (const auto& b : manifest.at("blocks")) {
        bundle.recipe.blocks.push_back({b.at("name").get<std::string>(),
                                        b.at("offset").get<index_t>(),
                                        b.at("width").get<index_t>(), b.at("weight").get<float>()});
    }
    bundle.recipe.total_cols = dims.at("d_total").get<index_t>();

    const json& components = manifest.at("components");
    for (index_t t = 1; t <= depth; ++t) {
        bundle.tree.assignments.push_back(
            load_sparse_text(at(components.at("tree").at(t - 1).get<std::string>())));
        RankerLayer layer;
        layer.level = t;
        layer.weights = load_sparse_text(at(components.at("ranker").at(t - 1).get<std::string>()));
        layer.alpha = manifest.at("ranker_meta").at("alpha").get<double>();
        layer.untrained.assign(layer.weights.n_rows, 0);
        bundle.layers.push_back(std::move(layer));
    }
    const json& untrained = manifest.at("ranker_meta").at("untrained_columns");
    for (auto it = untrained.begin(); it != untrained.end(); ++it) {
        index_t level = static_cast<index_t>(std::stoul(it.key()));
        for (index_t id : it.value()) bundle.layers[level - 1].untrained[id] = 1;
    }
    bundle.tree.validate();

    if (components.contains("encoder")) {
        MatcherModel m;
        m.encoder.feature_embeddings =
            load_dense_text(at(components.at("encoder").get<std::string>()));
        DenseMatrix bias = load_dense_text(at(components.at("encoder_bias").get<std::string>()));
        m.encoder.bias = bias.values;
        for (index_t t = 1; t <= depth; ++t) {
            m.levels.push_back(
                {t, load_dense_text(
                        at(components.at("label_embeddings").at(t - 1).get<std::string>()))});
        }
        bundle.matcher = std::move(m);
    }
    if (components.contains("propensity")) {
        std::ifstream pin(at("propensity.json"));
        if (!pin) throw data_error("cannot open propensity file");
        json p;
        pin >> p;
        PropensityModel model;
        model.a_param = p.at("a").get<double>();
        model.b_param = p.at("b").get<double>();
        model.c_param = p.at("c").get<double>();
        model.propensities = p.at("propensities").get<std::vector<double>>();
        bundle.propensity = std::move(model);
    }
    return bundle;
}

SparseMatrix ModelBundle::assemble_features(const SparseMatrix& x_sparse,
                                            const DenseMatrix* x_static, int threads) const {
    if (x_sparse.n_cols != recipe.blocks.front().width) {
        throw data_error("assemble_features: sparse feature width mismatch");
    }
    SparseMatrix normalized = l2_normalize_rows(x_sparse);
    DenseMatrix encoded, static_norm;
    std::vector<const DenseMatrix*> blocks;
    std::vector<float> weights{recipe.blocks.front().weight};
    for (size_t b = 1; b < recipe.blocks.size(); ++b) {
        const auto& blk = recipe.blocks[b];
        if (blk.name == "encoder") {
            if (!matcher) throw data_error("assemble_features: recipe expects an encoder block");
            encoded = extract_dense_features(matcher->encoder, normalized, threads);
            blocks.push_back(&encoded);
        } else if (blk.name == "static") {
            if (!x_static) {
                throw data_error("assemble_features: recipe expects static dense embeddings");
            }
            if (x_static->n_cols != blk.width) {
                throw data_error("assemble_features: static block width mismatch");
            }
            static_norm = l2_normalize_rows(*x_static);
            blocks.push_back(&static_norm);
        } else {
            throw data_error("assemble_features: unknown block '" + blk.name + "'");
        }
        weights.push_back(blk.weight);
    }
    ConcatResult result = concat_features(normalized, blocks, weights);
    if (result.recipe.total_cols != recipe.total_cols) {
        throw data_error("assemble_features: assembled width disagrees with recipe");
    }
    return std::move(result.matrix);
}

Predictions ModelBundle::predict(const SparseMatrix& x_sparse, const DenseMatrix* x_static,
                                 const BeamConfig& beam, int threads) const {
    SparseMatrix features = assemble_features(x_sparse, x_static, threads);
    return predict_batch(features, tree, layers, beam, threads);
}

ModelBundle run_pipeline(const PipelineConfig& config_in) {
    PipelineConfig config = config_in;
    config.validate();
    // stage seeds derive from the master seed
    config.l2v.seed = derive_seed(config.seed, "label2vec");
    config.hlt.seed = derive_seed(config.seed, "hlt");
    config.match.seed = derive_seed(config.seed, "matcher");
    config.l2v.threads = config.threads;
    config.hlt.threads = config.threads;
    config.match.threads = config.threads;
    config.ranker.threads = config.threads;

    auto stage_start = std::chrono::steady_clock::now();
    auto log_stage = [&](const char* name) {
        std::fprintf(stderr, "[xmatch] %-14s %8.2fs\n", name, seconds_since(stage_start));
        stage_start = std::chrono::steady_clock::now();
    };

    XmcData train = load_xmc_text(config.train_path);
    Dataset dataset;
    dataset.features_sparse = std::move(train.features);
    dataset.labels = std::move(train.labels);
    if (!config.static_train_path.empty()) {
        dataset.features_dense = load_dense_text(config.static_train_path);
    }
    dataset.validate();
    log_stage("load");

    SparseMatrix x_norm = l2_normalize_rows(dataset.features_sparse);

    LabelTree tree;
    if (config.emb == "label2vec") {
        LabelCorpus corpus = LabelCorpus::from_labels(dataset.labels);
        LabelEmbeddings emb = train_label2vec(corpus, config.l2v);
        log_stage("label2vec");
        tree = build_tree(emb.target, config.hlt);
    } else {
        SparseMatrix pifa = pifa_embeddings(x_norm, dataset.labels);
        log_stage("pifa");
        tree = build_tree(pifa, config.hlt);
    }
    log_stage("build-tree");

    std::vector<SparseMatrix> y_levels = propagate_labels(dataset.labels, tree);
    log_stage("propagate");

    ModelBundle bundle;
    bundle.tree = std::move(tree);

    std::vector<const DenseMatrix*> dense_blocks;
    std::vector<float> weights{config.weight_sparse};
    std::vector<std::string> block_names{"sparse"};
    DenseMatrix encoded;
    if (config.use_matcher) {
        MatcherModel matcher = train_matcher(x_norm, bundle.tree, y_levels, config.match);
        log_stage("train-matcher");
        encoded = extract_dense_features(matcher.encoder, x_norm, config.threads);
        log_stage("embed");
        bundle.matcher = std::move(matcher);
        dense_blocks.push_back(&encoded);
        weights.push_back(config.weight_encoder);
        block_names.push_back("encoder");
    }
    DenseMatrix static_norm;
    if (dataset.features_dense) {
        static_norm = l2_normalize_rows(*dataset.features_dense);
        dense_blocks.push_back(&static_norm);
        weights.push_back(config.weight_static);
        block_names.push_back("static");
    }

    ConcatResult concat = concat_features(x_norm, dense_blocks, weights);
    for (size_t b = 0; b < concat.recipe.blocks.size(); ++b) {
        concat.recipe.blocks[b].name = block_names[b];
    }
    bundle.recipe = std::move(concat.recipe);
    log_stage("concat");

    bundle.layers = train_ranker(concat.matrix, bundle.tree, y_levels,
                                 bundle.matcher ? &*bundle.matcher : nullptr, config.ranker,
                                 bundle.matcher ? &encoded : nullptr);
    log_stage("train-ranker");

    std::vector<uint64_t> label_counts(dataset.labels.n_cols, 0);
    for (index_t c : dataset.labels.col_indices) ++label_counts[c];
    bundle.propensity = propensities(label_counts, dataset.labels.n_rows, 0.55, 1.5);

    bundle.manifest = build_manifest(bundle, config.to_json(), config.seed);
    if (!config.out_dir.empty()) {
        bundle.save(config.out_dir);
        log_stage("save");
    }
    return bundle;
}

}  // namespace xmatch
