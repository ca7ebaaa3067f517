#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "taxgrow/corpus.hpp"
#include "taxgrow/expansion.hpp"
#include "taxgrow/global_opt.hpp"

namespace taxgrow {

// Full pipeline configuration. CLI flags mirror these field names verbatim
// and override values loaded from a JSON config file.
struct RunConfig {
    std::string corpus;
    std::string embeddings;
    std::string types;
    std::string seed_taxonomy;
    std::string gold_taxonomy;
    std::string output_dir;

    int top_features = 200;
    int num_subsets = 10;
    int subset_size = 120;
    int mrr_rank_threshold = 5;
    int max_admitted = 0;
    int max_iter = 5;
    double mu1 = 0.1;
    double mu2 = 0.01;
    std::vector<std::string> noun_tags = {"NN", "NNS", "NNP", "NNPS"};
    std::uint64_t rng_seed = 0;
    bool lowercase_context = false;
    bool global_optimization = true;
    bool dump_matrices = false;
    unsigned threads = 0;

    // Unknown keys raise ConfigError.
    static RunConfig from_json(const nlohmann::json& doc);
    static RunConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    EnsembleConfig ensemble() const;
    CorpusOptions corpus_options() const;
    GlobalOptOptions global_opt_options() const;

    std::filesystem::path out(const std::string& name) const;
};

// Well-known artifact names inside output_dir.
struct Artifacts {
    static constexpr const char* features_cache = "features.bin";
    static constexpr const char* taxonomy_pre_opt = "taxonomy_pre_opt.json";
    static constexpr const char* taxonomy = "taxonomy.json";
    static constexpr const char* taxonomy_dot = "taxonomy.dot";
    static constexpr const char* eval_report = "eval_report.json";
    static constexpr const char* manifest = "manifest.json";
    static std::string iteration_snapshot(int iteration);
};

// Incrementally saved run manifest: config echo, input checksums, stage
// statuses, iteration snapshots. Stage failures are recorded before the
// error propagates, so partial runs are visible.
class Manifest {
public:
    explicit Manifest(std::filesystem::path path);

    void set_config(const RunConfig& cfg);
    void record_input(const std::string& field, const std::filesystem::path& file);
    void stage_started(const std::string& stage);
    void stage_completed(const std::string& stage, const nlohmann::json& details = {});
    void stage_failed(const std::string& stage, const std::string& error);
    void record_iteration(int iteration, const std::string& snapshot, std::size_t node_count);
    void record_artifact(const std::string& key, const std::string& name);

    const nlohmann::json& json() const { return doc_; }
    void save() const;

private:
    std::filesystem::path path_;
    nlohmann::json doc_;
};

// Individual pipeline stages; each consumes/produces the documented
// artifacts so stages can be rerun independently. All throw ConfigError /
// DataError with the stage name prefixed.
void stage_extract_features(const RunConfig& cfg, Manifest& manifest);
void stage_expand(const RunConfig& cfg, Manifest& manifest);
void stage_optimize(const RunConfig& cfg, Manifest& manifest);
void stage_evaluate(const RunConfig& cfg, Manifest& manifest);
void stage_export_dot(const RunConfig& cfg, Manifest& manifest);

// ingest -> expand -> optimize -> export -> evaluate (when gold given).
void run_pipeline(const RunConfig& cfg);

} // namespace taxgrow
