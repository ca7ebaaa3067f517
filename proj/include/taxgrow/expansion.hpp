#pragma once

#include <random>
#include <span>
#include <unordered_set>
#include <vector>

#include "taxgrow/similarity.hpp"
#include "taxgrow/types.hpp"

namespace taxgrow {

// Ensemble ranking parameters for width expansion.
struct EnsembleConfig {
    int top_features = 200;      // quality feature pool size
    int num_subsets = 10;        // number of sampled feature subsets
    int subset_size = 120;       // patterns per subset
    int mrr_rank_threshold = 5;  // r; admit when mrr > 1/r
    int max_admitted = 0;        // per-call cap; 0 = unlimited
    std::uint64_t rng_seed = 0;

    // Throws ConfigError on an invalid combination.
    void validate() const;
};

// A ranked list of scored terms, scores nonincreasing, ties broken by
// ascending TermId. Ranks are 1-based.
struct RankedList {
    std::vector<ScoredTerm> entries;

    // Sorts `scored` into ranked order.
    static RankedList ranked(std::vector<ScoredTerm> scored);
};

using TermSet = std::unordered_set<TermId>;

// Top-k skip-patterns by accumulated strength sum_{e in S} f_{e,sk};
// zero-strength patterns are never selected, so fewer than k may return.
FeatureSubset select_quality_features(const FeatureStore& store, std::span<const TermId> seed_set,
                                      int k);

// Mean sibling similarity of a candidate against the seed set, restricted
// to one feature subset.
double score_candidate(const SimilarityContext& ctx, const TermId& candidate,
                       std::span<const TermId> seed_set, const FeatureSubset& subset);

// Uniform draw from [0, n) by rejection; byte-reproducible across
// platforms (unlike std::uniform_int_distribution).
std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t n);

// k distinct positions from [0, n), partial Fisher-Yates.
std::vector<std::uint32_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                      std::mt19937_64& rng);

// Ensemble width expansion: samples `num_subsets` feature subsets from the
// quality pool, ranks the candidates associated with each subset, and
// admits those whose mean reciprocal rank exceeds 1/r. Seeds and
// blacklisted terms are excluded. Output is ordered by descending mrr
// (ties by TermId) and scores carry the mrr values.
std::vector<ScoredTerm> width_expand(const SimilarityContext& ctx, std::span<const TermId> seed_set,
                                     const TermSet& blacklist, const EnsembleConfig& cfg,
                                     std::mt19937_64& rng);

// Convenience overload seeding a fresh generator from cfg.rng_seed.
std::vector<ScoredTerm> width_expand(const SimilarityContext& ctx, std::span<const TermId> seed_set,
                                     const TermSet& blacklist, const EnsembleConfig& cfg);

// Ranks candidates by parenthood similarity against the mean reference
// offset and returns the top `max_children`. Candidates without an
// embedding and blacklisted terms are skipped; an unusable reference set
// or missing target embedding yields an empty result.
std::vector<ScoredTerm> depth_expand(const SimilarityContext& ctx, const TermId& target,
                                     std::span<const TermPair> reference_edges,
                                     std::span<const TermId> candidates, const TermSet& blacklist,
                                     int max_children = 3);

} // namespace taxgrow
