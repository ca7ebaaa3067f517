// taxgrow: grows a small seed taxonomy into a full taxonomy from an
// entity-annotated corpus, then adjusts its global structure.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "taxgrow/errors.hpp"
#include "taxgrow/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitDataError = 3;
constexpr int kExitInternalError = 4;

struct CliOptions {
    std::string config_path;
    taxgrow::RunConfig overrides;
    // CLI11 reports which flags were actually given; track the ones that
    // need merge-over-config semantics.
    bool config_given = false;
};

void add_config_flags(CLI::App& cmd, taxgrow::RunConfig& cfg) {
    cmd.add_option("--corpus", cfg.corpus, "Annotated corpus (JSONL)");
    cmd.add_option("--embeddings", cfg.embeddings, "Term embeddings (word2vec text format)");
    cmd.add_option("--types", cfg.types, "Term type confidences (TSV)");
    cmd.add_option("--seed_taxonomy", cfg.seed_taxonomy, "Seed taxonomy (JSON)");
    cmd.add_option("--gold_taxonomy", cfg.gold_taxonomy, "Gold taxonomy for evaluation (JSON)");
    cmd.add_option("--output_dir", cfg.output_dir, "Directory for run artifacts");
    cmd.add_option("--top_features", cfg.top_features, "Quality feature pool size");
    cmd.add_option("--num_subsets", cfg.num_subsets, "Number of sampled feature subsets");
    cmd.add_option("--subset_size", cfg.subset_size, "Patterns per sampled subset");
    cmd.add_option("--mrr_rank_threshold", cfg.mrr_rank_threshold,
                   "Admission threshold r (admit when mrr > 1/r)");
    cmd.add_option("--max_admitted", cfg.max_admitted, "Cap per width expansion (0 = unlimited)");
    cmd.add_option("--max_iter", cfg.max_iter, "Expansion iterations");
    cmd.add_option("--mu1", cfg.mu1, "Parenthood term weight in global optimization");
    cmd.add_option("--mu2", cfg.mu2, "Smoothness term weight in global optimization");
    cmd.add_option("--noun_tags", cfg.noun_tags, "POS tags an occurrence must contain")
        ->delimiter(',');
    cmd.add_option("--rng_seed", cfg.rng_seed, "Seed for subset sampling");
    cmd.add_flag("--lowercase_context,!--no-lowercase_context", cfg.lowercase_context,
                 "Lowercase skip-pattern context tokens");
    cmd.add_flag("--global_optimization,!--no-global_optimization", cfg.global_optimization,
                 "Run the global structure adjustment");
    cmd.add_flag("--dump_matrices,!--no-dump_matrices", cfg.dump_matrices,
                 "Dump per-level W/Yc/Ys/F matrices as TSV");
    cmd.add_option("--threads", cfg.threads, "Worker threads (0 = hardware)");
}

// Config file first, then any explicitly given flags on top.
taxgrow::RunConfig effective_config(const CLI::App& cmd, const std::string& config_path,
                                    const taxgrow::RunConfig& flag_values) {
    taxgrow::RunConfig cfg;
    if (!config_path.empty()) cfg = taxgrow::RunConfig::load(config_path);
    const nlohmann::json flags = flag_values.to_json();
    nlohmann::json merged = cfg.to_json();
    for (const auto& [key, value] : flags.items()) {
        if (cmd.count("--" + key) > 0) merged[key] = value;
    }
    return taxgrow::RunConfig::from_json(merged);
}

taxgrow::Manifest open_manifest(const taxgrow::RunConfig& cfg) {
    std::filesystem::create_directories(cfg.output_dir.empty() ? "." : cfg.output_dir);
    taxgrow::Manifest manifest(cfg.out(taxgrow::Artifacts::manifest));
    manifest.set_config(cfg);
    return manifest;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"taxgrow: seed-guided taxonomy expansion over an annotated corpus"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file; flags override its values")
        ->expected(1);

    taxgrow::RunConfig flag_values;

    CLI::App* run = app.add_subcommand("run", "Full pipeline: ingest, expand, optimize, export, evaluate");
    CLI::App* extract = app.add_subcommand("extract-features", "Build the skip-pattern feature cache");
    CLI::App* expand_cmd = app.add_subcommand("expand", "Grow the seed taxonomy");
    CLI::App* optimize = app.add_subcommand("optimize", "Adjust the expanded taxonomy's structure");
    CLI::App* evaluate = app.add_subcommand("evaluate", "Score the taxonomy against a gold tree");
    CLI::App* export_dot = app.add_subcommand("export-dot", "Write a DOT rendering of the taxonomy");
    for (CLI::App* cmd : {run, extract, expand_cmd, optimize, evaluate, export_dot})
        add_config_flags(*cmd, flag_values);

    CLI11_PARSE(app, argc, argv);

    CLI::App* chosen = app.get_subcommands().front();
    try {
        const taxgrow::RunConfig cfg = effective_config(*chosen, config_path, flag_values);
        if (chosen == run) {
            taxgrow::run_pipeline(cfg);
        } else {
            taxgrow::Manifest manifest = open_manifest(cfg);
            if (chosen == extract) taxgrow::stage_extract_features(cfg, manifest);
            else if (chosen == expand_cmd) taxgrow::stage_expand(cfg, manifest);
            else if (chosen == optimize) taxgrow::stage_optimize(cfg, manifest);
            else if (chosen == evaluate) taxgrow::stage_evaluate(cfg, manifest);
            else if (chosen == export_dot) taxgrow::stage_export_dot(cfg, manifest);
        }
    } catch (const taxgrow::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const taxgrow::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitDataError;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternalError;
    }
    return kExitOk;
}
