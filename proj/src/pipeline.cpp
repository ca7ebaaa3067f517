#include "taxgrow/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "taxgrow/errors.hpp"
#include "taxgrow/eval.hpp"
#include "taxgrow/taxonomy.hpp"

namespace taxgrow {

namespace {

std::string checksum_hex(std::uint64_t checksum) {
    std::ostringstream out;
    out << "0x" << std::hex << checksum;
    return out.str();
}

void require_file(const std::string& field, const std::string& path) {
    if (path.empty()) throw ConfigError("missing required config field: " + field);
    if (!std::filesystem::exists(path))
        throw ConfigError("config field " + field + " names a missing file: " + path);
}

// Runs one stage body with manifest bookkeeping and a stage-named error.
template <typename Fn>
void run_stage(const std::string& name, Manifest& manifest, Fn&& body) {
    manifest.stage_started(name);
    manifest.save();
    try {
        body();
    } catch (const std::exception& e) {
        manifest.stage_failed(name, e.what());
        manifest.save();
        if (dynamic_cast<const ConfigError*>(&e))
            throw ConfigError("stage " + name + ": " + e.what());
        throw DataError("stage " + name + ": " + e.what());
    }
    manifest.save();
}

// Loads the feature cache when fresh, otherwise (re)builds it from the
// corpus and saves it.
FeatureStore obtain_features(const RunConfig& cfg, Manifest& manifest, nlohmann::json* details) {
    const auto cache_path = cfg.out(Artifacts::features_cache);
    const CorpusOptions opts = cfg.corpus_options();
    std::uint64_t corpus_checksum = 0;
    const bool have_corpus = !cfg.corpus.empty();
    if (have_corpus) {
        require_file("corpus", cfg.corpus);
        corpus_checksum = file_checksum(cfg.corpus);
        manifest.record_input("corpus", cfg.corpus);
    }
    if (std::filesystem::exists(cache_path)) {
        std::uint64_t cached_checksum = 0;
        CorpusOptions cached_opts;
        FeatureStore store = load_feature_cache(cache_path, &cached_checksum, &cached_opts);
        const bool fresh = !have_corpus || (cached_checksum == corpus_checksum &&
                                            cached_opts.noun_tags == opts.noun_tags &&
                                            cached_opts.lowercase_context == opts.lowercase_context);
        if (fresh) {
            if (details) (*details)["features_cache"] = "reused";
            return store;
        }
        if (details) (*details)["features_cache"] = "stale, rebuilt";
    }
    if (!have_corpus)
        throw ConfigError("missing required config field: corpus (no feature cache present)");
    IngestStats stats;
    FeatureStore store = build_feature_store_from_jsonl(cfg.corpus, opts, cfg.threads, &stats);
    save_feature_cache(store, cache_path, corpus_checksum, opts);
    manifest.record_artifact("features_cache", Artifacts::features_cache);
    if (details) {
        (*details)["lines_read"] = stats.lines_read;
        (*details)["lines_unparsable"] = stats.lines_unparsable;
        (*details)["records_malformed"] = stats.records_malformed;
        (*details)["records_kept"] = stats.records_kept;
        (*details)["occurrences_kept"] = stats.occurrences_kept;
        (*details)["vocab_size"] = store.vocab_size();
        (*details)["pattern_count"] = store.pattern_count();
    }
    return store;
}

struct LoadedStores {
    FeatureStore features;
    TypeStore types;
    EmbeddingStore embeddings;
};

LoadedStores load_stores(const RunConfig& cfg, Manifest& manifest, nlohmann::json* details) {
    LoadedStores stores;
    stores.features = obtain_features(cfg, manifest, details);
    require_file("embeddings", cfg.embeddings);
    manifest.record_input("embeddings", cfg.embeddings);
    std::uint64_t rejected = 0;
    stores.embeddings = EmbeddingStore::load_word2vec_text(cfg.embeddings, &rejected);
    if (details) {
        (*details)["embeddings_loaded"] = stores.embeddings.size();
        (*details)["embeddings_rejected"] = rejected;
    }
    if (!cfg.types.empty()) {
        manifest.record_input("types", cfg.types);
        std::uint64_t bad = 0;
        stores.types = TypeStore::load_tsv(cfg.types, &bad);
        if (details) {
            (*details)["type_terms"] = stores.types.term_count();
            (*details)["type_lines_rejected"] = bad;
        }
    }
    return stores;
}

} // namespace

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

RunConfig RunConfig::from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig cfg;
    for (const auto& [key, value] : doc.items()) {
        try {
            if (key == "corpus") cfg.corpus = value.get<std::string>();
            else if (key == "embeddings") cfg.embeddings = value.get<std::string>();
            else if (key == "types") cfg.types = value.get<std::string>();
            else if (key == "seed_taxonomy") cfg.seed_taxonomy = value.get<std::string>();
            else if (key == "gold_taxonomy") cfg.gold_taxonomy = value.get<std::string>();
            else if (key == "output_dir") cfg.output_dir = value.get<std::string>();
            else if (key == "top_features") cfg.top_features = value.get<int>();
            else if (key == "num_subsets") cfg.num_subsets = value.get<int>();
            else if (key == "subset_size") cfg.subset_size = value.get<int>();
            else if (key == "mrr_rank_threshold") cfg.mrr_rank_threshold = value.get<int>();
            else if (key == "max_admitted") cfg.max_admitted = value.get<int>();
            else if (key == "max_iter") cfg.max_iter = value.get<int>();
            else if (key == "mu1") cfg.mu1 = value.get<double>();
            else if (key == "mu2") cfg.mu2 = value.get<double>();
            else if (key == "noun_tags") cfg.noun_tags = value.get<std::vector<std::string>>();
            else if (key == "rng_seed") cfg.rng_seed = value.get<std::uint64_t>();
            else if (key == "lowercase_context") cfg.lowercase_context = value.get<bool>();
            else if (key == "global_optimization") cfg.global_optimization = value.get<bool>();
            else if (key == "dump_matrices") cfg.dump_matrices = value.get<bool>();
            else if (key == "threads") cfg.threads = value.get<unsigned>();
            else throw ConfigError("unknown config field: " + key);
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("config field " + key + " has the wrong type");
        }
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("invalid JSON in config file: " + path.string());
    return from_json(doc);
}

nlohmann::json RunConfig::to_json() const {
    return {{"corpus", corpus},
            {"embeddings", embeddings},
            {"types", types},
            {"seed_taxonomy", seed_taxonomy},
            {"gold_taxonomy", gold_taxonomy},
            {"output_dir", output_dir},
            {"top_features", top_features},
            {"num_subsets", num_subsets},
            {"subset_size", subset_size},
            {"mrr_rank_threshold", mrr_rank_threshold},
            {"max_admitted", max_admitted},
            {"max_iter", max_iter},
            {"mu1", mu1},
            {"mu2", mu2},
            {"noun_tags", noun_tags},
            {"rng_seed", rng_seed},
            {"lowercase_context", lowercase_context},
            {"global_optimization", global_optimization},
            {"dump_matrices", dump_matrices},
            {"threads", threads}};
}

EnsembleConfig RunConfig::ensemble() const {
    EnsembleConfig e;
    e.top_features = top_features;
    e.num_subsets = num_subsets;
    e.subset_size = subset_size;
    e.mrr_rank_threshold = mrr_rank_threshold;
    e.max_admitted = max_admitted;
    e.rng_seed = rng_seed;
    return e;
}

CorpusOptions RunConfig::corpus_options() const {
    CorpusOptions o;
    o.noun_tags = noun_tags;
    o.lowercase_context = lowercase_context;
    return o;
}

GlobalOptOptions RunConfig::global_opt_options() const {
    GlobalOptOptions o;
    o.mu1 = mu1;
    o.mu2 = mu2;
    o.top_features = top_features;
    o.threads = threads;
    return o;
}

std::filesystem::path RunConfig::out(const std::string& name) const {
    if (output_dir.empty()) throw ConfigError("missing required config field: output_dir");
    return std::filesystem::path(output_dir) / name;
}

std::string Artifacts::iteration_snapshot(int iteration) {
    return "taxonomy_iter_" + std::to_string(iteration) + ".json";
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

Manifest::Manifest(std::filesystem::path path) : path_(std::move(path)) {
    if (std::filesystem::exists(path_)) {
        std::ifstream in(path_);
        nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
        if (!doc.is_discarded() && doc.is_object()) doc_ = std::move(doc);
    }
    if (!doc_.is_object()) doc_ = nlohmann::json::object();
}

void Manifest::set_config(const RunConfig& cfg) {
    doc_["config"] = cfg.to_json();
    doc_["rng_seed"] = cfg.rng_seed;
}

void Manifest::record_input(const std::string& field, const std::filesystem::path& file) {
    doc_["inputs"][field] = {{"path", file.string()}, {"checksum", checksum_hex(file_checksum(file))}};
}

void Manifest::stage_started(const std::string& stage) {
    doc_["stages"][stage] = {{"status", "started"}};
}

void Manifest::stage_completed(const std::string& stage, const nlohmann::json& details) {
    doc_["stages"][stage] = {{"status", "completed"}};
    if (!details.is_null() && !details.empty()) doc_["stages"][stage]["details"] = details;
}

void Manifest::stage_failed(const std::string& stage, const std::string& error) {
    doc_["stages"][stage] = {{"status", "failed"}, {"error", error}};
    doc_["partial"] = true;
}

void Manifest::record_iteration(int iteration, const std::string& snapshot, std::size_t node_count) {
    if (!doc_.contains("iterations") || !doc_["iterations"].is_array())
        doc_["iterations"] = nlohmann::json::array();
    auto& arr = doc_["iterations"];
    arr.erase(std::remove_if(arr.begin(), arr.end(),
                             [&](const nlohmann::json& e) {
                                 return e.is_object() && e.value("iteration", -1) == iteration;
                             }),
              arr.end());
    arr.push_back({{"iteration", iteration}, {"snapshot", snapshot}, {"nodes", node_count}});
}

void Manifest::record_artifact(const std::string& key, const std::string& name) {
    doc_["artifacts"][key] = name;
}

void Manifest::save() const {
    std::ofstream out(path_, std::ios::trunc);
    if (!out) throw DataError("cannot write manifest: " + path_.string());
    out << doc_.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

void stage_extract_features(const RunConfig& cfg, Manifest& manifest) {
    run_stage("extract-features", manifest, [&] {
        nlohmann::json details;
        obtain_features(cfg, manifest, &details);
        manifest.stage_completed("extract-features", details);
    });
}

void stage_expand(const RunConfig& cfg, Manifest& manifest) {
    run_stage("expand", manifest, [&] {
        nlohmann::json details;
        LoadedStores stores = load_stores(cfg, manifest, &details);
        require_file("seed_taxonomy", cfg.seed_taxonomy);
        manifest.record_input("seed_taxonomy", cfg.seed_taxonomy);
        Taxonomy tax = Taxonomy::load_json(cfg.seed_taxonomy);
        tax.check_invariants(/*require_unique_terms=*/true);

        const SimilarityContext ctx{stores.features, stores.types, stores.embeddings};
        ExpandHooks hooks;
        hooks.on_iteration_end = [&](int iteration, const Taxonomy& snapshot) {
            const std::string name = Artifacts::iteration_snapshot(iteration);
            snapshot.save_json(cfg.out(name));
            manifest.record_iteration(iteration, name, snapshot.node_count());
            manifest.save();
        };
        expand(ctx, tax, cfg.ensemble(), cfg.max_iter, hooks);
        tax.check_invariants(/*require_unique_terms=*/true);
        tax.save_json(cfg.out(Artifacts::taxonomy_pre_opt));
        manifest.record_artifact("taxonomy_pre_opt", Artifacts::taxonomy_pre_opt);
        details["nodes"] = tax.node_count();
        manifest.stage_completed("expand", details);
    });
}

void stage_optimize(const RunConfig& cfg, Manifest& manifest) {
    run_stage("optimize", manifest, [&] {
        nlohmann::json details;
        const auto pre_opt_path = cfg.out(Artifacts::taxonomy_pre_opt);
        if (!std::filesystem::exists(pre_opt_path))
            throw ConfigError("optimize needs " + pre_opt_path.string() + " (run expand first)");
        Taxonomy tax = Taxonomy::load_json(pre_opt_path);

        if (!cfg.global_optimization) {
            details["global_optimization"] = "disabled";
        } else {
            LoadedStores stores = load_stores(cfg, manifest, nullptr);
            const SimilarityContext ctx{stores.features, stores.types, stores.embeddings};
            const GlobalOptOptions opts = cfg.global_opt_options();
            if (cfg.dump_matrices) {
                const int deepest = tax.max_depth();
                ReassignResult total;
                for (int level = 1; level < deepest; ++level) {
                    auto parent_nodes = tax.nodes_at_depth(level);
                    auto child_nodes = tax.nodes_at_depth(level + 1);
                    if (parent_nodes.size() >= 2 && !child_nodes.empty()) {
                        std::vector<TermId> parents;
                        for (const auto* n : parent_nodes) parents.push_back(n->term);
                        std::vector<TermId> children;
                        std::vector<Eigen::Index> current;
                        for (const auto* n : child_nodes) {
                            children.push_back(n->term);
                            const auto it =
                                std::find(parent_nodes.begin(), parent_nodes.end(), n->parent);
                            current.push_back(static_cast<Eigen::Index>(it - parent_nodes.begin()));
                        }
                        const AssignmentMatrices m =
                            build_matrices(ctx, parents, children, current, opts);
                        const Eigen::MatrixXd F = solve(m);
                        const std::string prefix = "gto_level" + std::to_string(level) + "_";
                        write_matrix_tsv(m.W, children, children, cfg.out(prefix + "W.tsv"));
                        write_matrix_tsv(m.Yc, children, parents, cfg.out(prefix + "Yc.tsv"));
                        write_matrix_tsv(m.Ys, children, parents, cfg.out(prefix + "Ys.tsv"));
                        write_matrix_tsv(F, children, parents, cfg.out(prefix + "F.tsv"));
                    }
                    const ReassignResult r = reassign(ctx, tax, level, opts);
                    total.moved += r.moved;
                }
                details["moved"] = total.moved;
            } else {
                const ReassignResult result = optimize_taxonomy(ctx, tax, opts);
                details["moved"] = result.moved;
                auto moves = nlohmann::json::array();
                for (const auto& mv : result.moves)
                    moves.push_back({{"child", mv.child}, {"new_parent", mv.parent}});
                details["moves"] = std::move(moves);
            }
            tax.check_invariants(/*require_unique_terms=*/true);
        }
        tax.save_json(cfg.out(Artifacts::taxonomy));
        manifest.record_artifact("taxonomy", Artifacts::taxonomy);
        manifest.stage_completed("optimize", details);
    });
}

void stage_export_dot(const RunConfig& cfg, Manifest& manifest) {
    run_stage("export-dot", manifest, [&] {
        const auto tax_path = cfg.out(Artifacts::taxonomy);
        if (!std::filesystem::exists(tax_path))
            throw ConfigError("export-dot needs " + tax_path.string() + " (run optimize first)");
        const Taxonomy tax = Taxonomy::load_json(tax_path);
        std::ofstream out(cfg.out(Artifacts::taxonomy_dot), std::ios::trunc);
        if (!out) throw DataError("cannot write DOT export");
        out << tax.to_dot();
        manifest.record_artifact("taxonomy_dot", Artifacts::taxonomy_dot);
        manifest.stage_completed("export-dot");
    });
}

void stage_evaluate(const RunConfig& cfg, Manifest& manifest) {
    run_stage("evaluate", manifest, [&] {
        const auto tax_path = cfg.out(Artifacts::taxonomy);
        if (!std::filesystem::exists(tax_path))
            throw ConfigError("evaluate needs " + tax_path.string() + " (run optimize first)");
        require_file("gold_taxonomy", cfg.gold_taxonomy);
        manifest.record_input("gold_taxonomy", cfg.gold_taxonomy);
        const Taxonomy pred = Taxonomy::load_json(tax_path);
        const Taxonomy gold = Taxonomy::load_json(cfg.gold_taxonomy);
        const nlohmann::json report = eval_report(pred, gold);
        std::ofstream out(cfg.out(Artifacts::eval_report), std::ios::trunc);
        if (!out) throw DataError("cannot write eval report");
        out << report.dump(2) << '\n';
        manifest.record_artifact("eval_report", Artifacts::eval_report);
        manifest.stage_completed("evaluate", report);
    });
}

void run_pipeline(const RunConfig& cfg) {
    if (cfg.output_dir.empty()) throw ConfigError("missing required config field: output_dir");
    std::filesystem::create_directories(cfg.output_dir);
    Manifest manifest(cfg.out(Artifacts::manifest));
    manifest.set_config(cfg);
    manifest.save();

    stage_extract_features(cfg, manifest);
    stage_expand(cfg, manifest);
    stage_optimize(cfg, manifest);
    stage_export_dot(cfg, manifest);
    if (!cfg.gold_taxonomy.empty()) stage_evaluate(cfg, manifest);
    manifest.save();
}

} // namespace taxgrow
