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

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "xmatch/io.hpp"
#include "xmatch/parallel.hpp"
#include "xmatch/pipeline.hpp"
#include "xmatch/rng.hpp"
#include "xmatch/simd/kernels.hpp"

// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.

namespace {

using namespace xmatch;

int g_threads = -1;  // -1: fall back to XMATCH_THREADS, then 1

int threads() { return resolve_threads(g_threads); }

std::vector<index_t> parse_ks(const std::string& spec) {
    std::vector<index_t> ks;
    size_t pos = 0;
    while (pos <= spec.size()) {
        size_t comma = spec.find(',', pos);
        std::string tok = spec.substr(pos, comma == std::string::npos ? spec.size() - pos
                                                                      : comma - pos);
        if (tok.empty()) throw config_error("bad --k list: '" + spec + "'");
        ks.push_back(static_cast<index_t>(std::stoul(tok)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return ks;
}

void cmd_label2vec(const std::string& input, const std::string& out, L2VConfig config) {
    config.threads = threads();
    XmcData data = load_xmc_text(input);
    LabelCorpus corpus = LabelCorpus::from_labels(data.labels);
    LabelEmbeddings emb = train_label2vec(corpus, config);
    write_dense_text(out, emb.target);
    std::fprintf(stderr, "[xmatch] wrote %u x %u label embeddings to %s\n", emb.target.n_rows,
                 emb.target.n_cols, out.c_str());
}

void cmd_build_tree(const std::string& embeddings, const std::string& format,
                    const std::string& out, HltConfig config) {
    config.threads = threads();
    LabelTree tree;
    if (format == "dense") {
        tree = build_tree(load_dense_text(embeddings), config);
    } else if (format == "sparse") {
        tree = build_tree(load_sparse_text(embeddings), config);
    } else {
        throw config_error("--format must be 'dense' or 'sparse'");
    }
    namespace fs = std::filesystem;
    fs::create_directories(out);
    nlohmann::json manifest;
    manifest["n_labels"] = tree.n_labels;
    manifest["branching"] = tree.branching;
    manifest["depth"] = tree.depth();
    nlohmann::json files = nlohmann::json::array();
    for (index_t t = 1; t <= tree.depth(); ++t) {
        std::string name = "level_" + std::to_string(t) + ".smat";
        write_sparse_text((fs::path(out) / name).string(), tree.assignments[t - 1]);
        files.push_back(name);
    }
    manifest["levels"] = files;
    std::ofstream mf((fs::path(out) / "tree.json").string(), std::ios::trunc);
    mf << manifest.dump(2) << "\n";
    if (!mf) throw data_error("write failed: " + out + "/tree.json");
    std::fprintf(stderr, "[xmatch] tree depth %u, level sizes:", tree.depth());
    for (index_t t = 1; t <= tree.depth(); ++t) std::fprintf(stderr, " %u", tree.level_size(t));
    std::fprintf(stderr, "\n");
}

LabelTree load_tree_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf((fs::path(dir) / "tree.json").string());
    if (!mf) throw data_error("cannot open " + dir + "/tree.json");
    nlohmann::json manifest;
    mf >> manifest;
    LabelTree tree;
    tree.n_labels = manifest.at("n_labels").get<index_t>();
    tree.branching = manifest.at("branching").get<index_t>();
    for (const auto& name : manifest.at("levels")) {
        tree.assignments.push_back(
            load_sparse_text((fs::path(dir) / name.get<std::string>()).string()));
    }
    tree.validate();
    return tree;
}

void save_matcher_dir(const std::string& dir, const MatcherModel& model) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_dense_text((fs::path(dir) / "encoder.dmat").string(), model.encoder.feature_embeddings);
    DenseMatrix bias(1, static_cast<index_t>(model.encoder.bias.size()));
    bias.values = model.encoder.bias;
    write_dense_text((fs::path(dir) / "encoder_bias.dmat").string(), bias);
    nlohmann::json manifest;
    manifest["levels"] = model.levels.size();
    for (const auto& level : model.levels) {
        write_dense_text(
            (fs::path(dir) / ("labelemb_level_" + std::to_string(level.level) + ".dmat")).string(),
            level.embeddings);
    }
    std::ofstream mf((fs::path(dir) / "matcher.json").string(), std::ios::trunc);
    mf << manifest.dump(2) << "\n";
    if (!mf) throw data_error("write failed: " + dir + "/matcher.json");
}

MatcherModel load_matcher_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf((fs::path(dir) / "matcher.json").string());
    if (!mf) throw data_error("cannot open " + dir + "/matcher.json");
    nlohmann::json manifest;
    mf >> manifest;
    MatcherModel model;
    model.encoder.feature_embeddings =
        load_dense_text((fs::path(dir) / "encoder.dmat").string());
    DenseMatrix bias = load_dense_text((fs::path(dir) / "encoder_bias.dmat").string());
    model.encoder.bias = bias.values;
    size_t levels = manifest.at("levels").get<size_t>();
    for (size_t t = 1; t <= levels; ++t) {
        model.levels.push_back(
            {static_cast<index_t>(t),
             load_dense_text(
                 (fs::path(dir) / ("labelemb_level_" + std::to_string(t) + ".dmat")).string())});
    }
    return model;
}

void cmd_train_matcher(const std::string& data, const std::string& tree_dir,
                       const std::string& out, MatchConfig config) {
    config.threads = threads();
    XmcData train = load_xmc_text(data);
    SparseMatrix x_norm = l2_normalize_rows(train.features);
    LabelTree tree = load_tree_dir(tree_dir);
    std::vector<SparseMatrix> y_levels = propagate_labels(train.labels, tree);
    MatcherModel model = train_matcher(x_norm, tree, y_levels, config);
    save_matcher_dir(out, model);
    std::fprintf(stderr, "[xmatch] matcher saved to %s\n", out.c_str());
}

void cmd_embed(const std::string& matcher_dir, const std::string& data, const std::string& out) {
    MatcherModel model = load_matcher_dir(matcher_dir);
    XmcData d = load_xmc_text(data);
    SparseMatrix x_norm = l2_normalize_rows(d.features);
    DenseMatrix features = extract_dense_features(model.encoder, x_norm, threads());
    write_dense_text(out, features);
}

void cmd_train_ranker(const std::string& data, const std::string& features_path,
                      const std::string& tree_dir, const std::string& matcher_dir,
                      const std::string& out, RankerConfig config, float weight_sparse,
                      float weight_encoder) {
    config.threads = threads();
    XmcData train = load_xmc_text(data);
    LabelTree tree = load_tree_dir(tree_dir);
    std::vector<SparseMatrix> y_levels = propagate_labels(train.labels, tree);

    std::optional<MatcherModel> matcher;
    if (!matcher_dir.empty()) matcher = load_matcher_dir(matcher_dir);

    ModelBundle bundle;
    bundle.tree = std::move(tree);
    bundle.matcher = std::move(matcher);

    SparseMatrix features;
    DenseMatrix encoded;
    if (!features_path.empty()) {
        // pre-assembled concatenated features
        features = load_sparse_text(features_path);
        bundle.recipe.blocks.push_back({"sparse", 0, features.n_cols, 1.0f});
        bundle.recipe.total_cols = features.n_cols;
        if (bundle.matcher) {
            encoded = extract_dense_features(bundle.matcher->encoder,
                                             l2_normalize_rows(train.features), threads());
        }
    } else {
        SparseMatrix x_norm = l2_normalize_rows(train.features);
        std::vector<const DenseMatrix*> blocks;
        std::vector<float> weights{weight_sparse};
        if (bundle.matcher) {
            encoded = extract_dense_features(bundle.matcher->encoder, x_norm, threads());
            blocks.push_back(&encoded);
            weights.push_back(weight_encoder);
        }
        ConcatResult concat = concat_features(x_norm, blocks, weights);
        if (bundle.matcher) concat.recipe.blocks[1].name = "encoder";
        bundle.recipe = std::move(concat.recipe);
        features = std::move(concat.matrix);
    }
    if (features.n_rows != train.labels.n_rows) {
        throw data_error("train-ranker: feature/label row mismatch");
    }

    bundle.layers = train_ranker(features, bundle.tree, y_levels,
                                 bundle.matcher ? &*bundle.matcher : nullptr, config,
                                 bundle.matcher ? &encoded : nullptr);
    std::vector<uint64_t> counts(train.labels.n_cols, 0);
    for (index_t c : train.labels.col_indices) ++counts[c];
    bundle.propensity = propensities(counts, train.labels.n_rows, 0.55, 1.5);

    nlohmann::json echo = {{"data", data}, {"alpha", config.alpha}, {"epochs", config.epochs},
                           {"prune_eps", config.prune_eps}, {"out", out}};
    bundle.manifest = build_manifest(bundle, echo, 0);
    bundle.save(out);
    std::fprintf(stderr, "[xmatch] model bundle saved to %s\n", out.c_str());
}

void cmd_predict(const std::string& model_dir, const std::string& data,
                 const std::string& static_path, const std::string& out, BeamConfig config) {
    ModelBundle bundle = ModelBundle::load(model_dir);
    XmcData d = load_xmc_text(data);
    std::optional<DenseMatrix> x_static;
    if (!static_path.empty()) x_static = load_dense_text(static_path);
    Predictions preds =
        bundle.predict(d.features, x_static ? &*x_static : nullptr, config, threads());
    write_predictions(out, preds);
    std::fprintf(stderr, "[xmatch] wrote predictions for %zu rows to %s\n", preds.rows.size(),
                 out.c_str());
}

void cmd_evaluate(const std::string& pred_path, const std::string& truth_path,
                  const std::string& train_truth_path, const std::string& k_spec, bool psp,
                  double prop_a, double prop_b, const std::string& json_out) {
    XmcData truth = load_xmc_text(truth_path);
    Predictions preds = load_predictions(pred_path, truth.labels.n_cols);
    if (preds.rows.size() != truth.labels.n_rows) {
        throw data_error("evaluate: prediction/truth row count mismatch");
    }
    std::vector<index_t> ks = parse_ks(k_spec);

    std::optional<PropensityModel> model;
    if (psp) {
        const SparseMatrix* source = &truth.labels;
        XmcData train;
        if (!train_truth_path.empty()) {
            train = load_xmc_text(train_truth_path);
            source = &train.labels;
        }
        std::vector<uint64_t> counts(source->n_cols, 0);
        for (index_t c : source->col_indices) ++counts[c];
        model = propensities(counts, source->n_rows, prop_a, prop_b);
    }
    EvalReport report = evaluate(truth.labels, preds.rows, ks, model ? &*model : nullptr);

    nlohmann::json j;
    for (index_t k : ks) {
        std::printf("P@%-3u    %.4f\n", k, report.p_at[k] * 100.0);
        j["p"][std::to_string(k)] = report.p_at[k];
    }
    for (index_t k : ks) {
        std::printf("nDCG@%-3u %.4f\n", k, report.ndcg_at[k] * 100.0);
        j["ndcg"][std::to_string(k)] = report.ndcg_at[k];
    }
    if (model) {
        for (index_t k : ks) {
            std::printf("PSP@%-3u  %.4f\n", k, report.psp_at[k] * 100.0);
            j["psp"][std::to_string(k)] = report.psp_at[k];
        }
        for (index_t k : ks) {
            std::printf("PSnDCG@%-2u %.4f\n", k, report.psndcg_at[k] * 100.0);
            j["psndcg"][std::to_string(k)] = report.psndcg_at[k];
        }
    }
    if (!json_out.empty()) {
        std::ofstream out(json_out, std::ios::trunc);
        out << j.dump(2) << "\n";
        if (!out) throw data_error("write failed: " + json_out);
    }
}

void cmd_pipeline(const std::string& config_path, PipelineConfig overrides,
                  const std::vector<std::string>& set_flags) {
    PipelineConfig config;
    if (!config_path.empty()) config = PipelineConfig::from_json_file(config_path);
    // flags win over the file
    nlohmann::json merged = config.to_json();
    for (const std::string& kv : set_flags) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos) throw config_error("--set expects key=value, got " + kv);
        std::string key = kv.substr(0, eq);
        std::string value = kv.substr(eq + 1);
        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(value);
        } catch (const nlohmann::json::exception&) {
            parsed = value;  // plain strings may come unquoted
        }
        nlohmann::json* slot = &merged;
        size_t pos = 0;
        for (;;) {
            size_t dot = key.find('.', pos);
            std::string part = key.substr(pos, dot == std::string::npos ? key.size() - pos
                                                                        : dot - pos);
            if (dot == std::string::npos) {
                (*slot)[part] = parsed;
                break;
            }
            slot = &(*slot)[part];
            pos = dot + 1;
        }
    }
    config = PipelineConfig::from_json(merged);
    if (!overrides.train_path.empty()) config.train_path = overrides.train_path;
    if (!overrides.test_path.empty()) config.test_path = overrides.test_path;
    if (!overrides.out_dir.empty()) config.out_dir = overrides.out_dir;
    if (overrides.seed != 1) config.seed = overrides.seed;
    config.threads = threads();

    ModelBundle bundle = run_pipeline(config);
    if (!config.test_path.empty()) {
        XmcData test = load_xmc_text(config.test_path);
        std::optional<DenseMatrix> x_static;
        if (!config.static_test_path.empty()) {
            x_static = load_dense_text(config.static_test_path);
        }
        Predictions preds =
            bundle.predict(test.features, x_static ? &*x_static : nullptr, config.beam,
                           config.threads);
        if (!config.out_dir.empty()) {
            write_predictions(
                (std::filesystem::path(config.out_dir) / "preds.txt").string(), preds);
        }
        std::vector<index_t> ks{1, 3, 5};
        EvalReport report = evaluate(test.labels, preds.rows, ks, nullptr);
        for (index_t k : ks) {
            std::printf("P@%-3u    %.4f\n", k, report.p_at[k] * 100.0);
        }
        for (index_t k : ks) {
            std::printf("nDCG@%-3u %.4f\n", k, report.ndcg_at[k] * 100.0);
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"xmatch: extreme multi-label text classification pipeline"};
    app.require_subcommand(1);
    app.add_option("--threads", g_threads, "worker threads (0 = all cores)")
        ->envname("XMATCH_THREADS");

    // label2vec
    auto* l2v = app.add_subcommand("label2vec", "train dense label embeddings");
    std::string l2v_input, l2v_out;
    L2VConfig l2v_cfg;
    l2v->add_option("--input", l2v_input, "training data (XMC text)")->required();
    l2v->add_option("--out", l2v_out, "output embedding file")->required();
    l2v->add_option("--dim", l2v_cfg.dim, "embedding width");
    l2v->add_option("--neg", l2v_cfg.n_neg, "negatives per pair");
    l2v->add_option("--ns-exponent", l2v_cfg.ns_exponent, "negative-sampling exponent");
    l2v->add_option("--epochs", l2v_cfg.epochs, "training epochs");
    l2v->add_option("--lr-max", l2v_cfg.lr_max, "initial learning rate");
    l2v->add_option("--lr-min", l2v_cfg.lr_min, "final learning rate");
    l2v->add_option("--seed", l2v_cfg.seed, "rng seed");

    // build-tree
    auto* bt = app.add_subcommand("build-tree", "build the hierarchical label tree");
    std::string bt_emb, bt_out, bt_format = "dense";
    HltConfig bt_cfg;
    bt->add_option("--embeddings", bt_emb, "label embedding file")->required();
    bt->add_option("--format", bt_format, "embedding file format: dense|sparse");
    bt->add_option("--out", bt_out, "output tree directory")->required();
    bt->add_option("--branching", bt_cfg.branching, "branching factor");
    bt->add_option("--max-leaf", bt_cfg.max_leaf, "max labels per leaf cluster");
    bt->add_option("--seed", bt_cfg.seed, "rng seed");
    bt->add_option("--max-iters", bt_cfg.max_iters, "k-means iteration cap");
    bt->add_option("--tol", bt_cfg.tol, "centroid-shift convergence threshold");

    // train-matcher
    auto* tm = app.add_subcommand("train-matcher", "train the text-label matcher");
    std::string tm_data, tm_tree, tm_out;
    MatchConfig tm_cfg;
    tm->add_option("--data", tm_data, "training data (XMC text)")->required();
    tm->add_option("--tree", tm_tree, "tree directory")->required();
    tm->add_option("--out", tm_out, "output matcher directory")->required();
    tm->add_option("--tau", tm_cfg.tau, "softmax temperature");
    tm->add_option("--lambda", tm_cfg.lambda, "text-label vs label-text mix");
    tm->add_option("--batch", tm_cfg.batch_size, "batch size");
    tm->add_option("--steps", tm_cfg.steps_per_level, "training steps per level");
    tm->add_option("--n-hard", tm_cfg.n_hard_neg, "hard negatives per text");
    tm->add_option("--encoder-dim", tm_cfg.encoder_dim, "encoder output width");
    tm->add_option("--lr-encoder", tm_cfg.lr_encoder, "encoder learning rate");
    tm->add_option("--lr-label", tm_cfg.lr_label, "label embedding learning rate");
    tm->add_flag("--match-last-level-only", tm_cfg.match_last_level_only,
                 "train the matching loss only on the deepest level");
    tm->add_option("--seed", tm_cfg.seed, "rng seed");

    // embed
    auto* em = app.add_subcommand("embed", "extract dense text features");
    std::string em_matcher, em_data, em_out;
    em->add_option("--matcher", em_matcher, "matcher directory")->required();
    em->add_option("--data", em_data, "input data (XMC text)")->required();
    em->add_option("--out", em_out, "output dense matrix file")->required();

    // train-ranker
    auto* tr = app.add_subcommand("train-ranker", "train the hierarchical linear ranker");
    std::string tr_data, tr_features, tr_tree, tr_matcher, tr_out;
    RankerConfig tr_cfg;
    float tr_w_sparse = 1.0f, tr_w_encoder = 1.0f;
    tr->add_option("--data", tr_data, "training data (XMC text)")->required();
    tr->add_option("--features", tr_features, "pre-assembled feature matrix (sparse text)");
    tr->add_option("--tree", tr_tree, "tree directory")->required();
    tr->add_option("--matcher", tr_matcher, "matcher directory (optional)");
    tr->add_option("--out", tr_out, "output model bundle directory")->required();
    tr->add_option("--alpha", tr_cfg.alpha, "L2 regularization");
    tr->add_option("--epochs", tr_cfg.epochs, "solver epochs per label");
    tr->add_option("--prune-eps", tr_cfg.prune_eps, "weight pruning threshold");
    tr->add_option("--beam", tr_cfg.beam_size, "beam size for matcher-aware negatives");
    tr->add_option("--weight-sparse", tr_w_sparse, "sparse block weight");
    tr->add_option("--weight-encoder", tr_w_encoder, "encoder block weight");

    // predict
    auto* pr = app.add_subcommand("predict", "beam-search prediction");
    std::string pr_model, pr_data, pr_static, pr_out;
    BeamConfig pr_cfg;
    pr->add_option("--model", pr_model, "model bundle directory")->required();
    pr->add_option("--data", pr_data, "test data (XMC text)")->required();
    pr->add_option("--static", pr_static, "static dense embeddings for the test split");
    pr->add_option("--out", pr_out, "output prediction file")->required();
    pr->add_option("--beam", pr_cfg.beam_size, "beam size");
    pr->add_option("--topk", pr_cfg.top_k, "labels to return per row");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "compute ranking metrics");
    std::string ev_pred, ev_truth, ev_train, ev_k = "1,3,5", ev_json;
    bool ev_psp = false;
    double ev_a = 0.55, ev_b = 1.5;
    ev->add_option("--pred", ev_pred, "prediction file")->required();
    ev->add_option("--truth", ev_truth, "ground-truth data (XMC text)")->required();
    ev->add_option("--train-truth", ev_train,
                   "training data for propensity counts (defaults to --truth)");
    ev->add_option("--k", ev_k, "comma-separated k list");
    ev->add_flag("--psp", ev_psp, "also report propensity-scored metrics");
    ev->add_option("--prop-a", ev_a, "propensity parameter A");
    ev->add_option("--prop-b", ev_b, "propensity parameter B");
    ev->add_option("--json", ev_json, "also write a JSON report");

    // pipeline
    auto* pl = app.add_subcommand("pipeline", "run the full training pipeline");
    std::string pl_config;
    PipelineConfig pl_overrides;
    std::vector<std::string> pl_sets;
    pl->add_option("--config", pl_config, "pipeline config (JSON)");
    pl->add_option("--train", pl_overrides.train_path, "training data (XMC text)");
    pl->add_option("--test", pl_overrides.test_path, "test data (XMC text)");
    pl->add_option("--out", pl_overrides.out_dir, "output bundle directory");
    pl->add_option("--seed", pl_overrides.seed, "master seed");
    pl->add_option("--set", pl_sets, "config override, e.g. --set ranker.alpha=0.5");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*l2v) cmd_label2vec(l2v_input, l2v_out, l2v_cfg);
        if (*bt) cmd_build_tree(bt_emb, bt_format, bt_out, bt_cfg);
        if (*tm) cmd_train_matcher(tm_data, tm_tree, tm_out, tm_cfg);
        if (*em) cmd_embed(em_matcher, em_data, em_out);
        if (*tr) {
            cmd_train_ranker(tr_data, tr_features, tr_tree, tr_matcher, tr_out, tr_cfg,
                             tr_w_sparse, tr_w_encoder);
        }
        if (*pr) cmd_predict(pr_model, pr_data, pr_static, pr_out, pr_cfg);
        if (*ev) cmd_evaluate(ev_pred, ev_truth, ev_train, ev_k, ev_psp, ev_a, ev_b, ev_json);
        if (*pl) cmd_pipeline(pl_config, pl_overrides, pl_sets);
    } catch (const config_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const data_error& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const numeric_error& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
