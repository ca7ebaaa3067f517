#include "taxgrow/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "taxgrow/errors.hpp"

namespace taxgrow {

namespace {

bool ranked_before(const ScoredTerm& a, const ScoredTerm& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.term < b.term;
}

double combined_sib_sim(double sk_ratio, double emb_clamped, double tp) {
    if (emb_clamped <= 0.0) return 0.0;
    return std::sqrt((1.0 + sk_ratio) * emb_clamped) * std::sqrt(1.0 + tp);
}

} // namespace

void EnsembleConfig::validate() const {
    if (top_features < 1) throw ConfigError("top_features must be >= 1");
    if (num_subsets < 1) throw ConfigError("num_subsets must be >= 1");
    if (subset_size < 1) throw ConfigError("subset_size must be >= 1");
    if (subset_size > top_features) throw ConfigError("subset_size must be <= top_features");
    if (mrr_rank_threshold < 1) throw ConfigError("mrr_rank_threshold must be >= 1");
    if (max_admitted < 0) throw ConfigError("max_admitted must be >= 0");
}

RankedList RankedList::ranked(std::vector<ScoredTerm> scored) {
    std::sort(scored.begin(), scored.end(), ranked_before);
    return RankedList{std::move(scored)};
}

FeatureSubset select_quality_features(const FeatureStore& store, std::span<const TermId> seed_set,
                                      int k) {
    std::unordered_map<FeatureStore::PatternIndex, double> strength;
    for (const auto& seed : seed_set) {
        const auto t = store.term_index(seed);
        if (!t) continue;
        for (const auto& pc : store.patterns_of(*t)) {
            const double w = store.skip_weight(*t, pc.pattern);
            if (w > 0.0) strength[pc.pattern] += w;
        }
    }
    std::vector<std::pair<FeatureStore::PatternIndex, double>> scored;
    scored.reserve(strength.size());
    for (const auto& [pattern, s] : strength) {
        if (s > 0.0) scored.emplace_back(pattern, s);
    }
    // Pattern indices are lexicographic by construction, so index order is
    // a stable textual tie-break.
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (k >= 0 && scored.size() > static_cast<std::size_t>(k)) scored.resize(static_cast<std::size_t>(k));
    FeatureSubset subset;
    subset.patterns.reserve(scored.size());
    for (const auto& [pattern, s] : scored) subset.patterns.push_back(pattern);
    std::sort(subset.patterns.begin(), subset.patterns.end());
    return subset;
}

double score_candidate(const SimilarityContext& ctx, const TermId& candidate,
                       std::span<const TermId> seed_set, const FeatureSubset& subset) {
    if (seed_set.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& seed : seed_set) sum += sib_sim(ctx, candidate, seed, subset);
    return sum / static_cast<double>(seed_set.size());
}

std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

std::vector<std::uint32_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                      std::mt19937_64& rng) {
    k = std::min(k, n);
    std::vector<std::uint32_t> indices(n);
    std::iota(indices.begin(), indices.end(), 0u);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(bounded_draw(rng, n - i));
        std::swap(indices[i], indices[j]);
    }
    indices.resize(k);
    return indices;
}

std::vector<ScoredTerm> width_expand(const SimilarityContext& ctx, std::span<const TermId> seed_set,
                                     const TermSet& blacklist, const EnsembleConfig& cfg,
                                     std::mt19937_64& rng) {
    cfg.validate();
    if (seed_set.empty()) throw std::invalid_argument("width_expand: empty seed set");
    const FeatureStore& store = ctx.features;

    const FeatureSubset pool = select_quality_features(store, seed_set, cfg.top_features);
    if (pool.empty()) return {};

    // Sample the feature subsets up front so rng consumption is independent
    // of everything below.
    std::vector<FeatureSubset> subsets;
    subsets.reserve(static_cast<std::size_t>(cfg.num_subsets));
    for (int t = 0; t < cfg.num_subsets; ++t) {
        FeatureSubset sk;
        if (pool.size() <= static_cast<std::size_t>(cfg.subset_size)) {
            sk = pool;
        } else {
            const auto picks =
                sample_without_replacement(pool.size(), static_cast<std::size_t>(cfg.subset_size), rng);
            sk.patterns.reserve(picks.size());
            for (auto p : picks) sk.patterns.push_back(pool.patterns[p]);
            std::sort(sk.patterns.begin(), sk.patterns.end());
        }
        subsets.push_back(std::move(sk));
    }

    TermSet excluded(blacklist.begin(), blacklist.end());
    for (const auto& s : seed_set) excluded.insert(s);

    // Embedding and type similarities against the seeds do not depend on the
    // sampled subset; cache them per candidate.
    struct SeedSims {
        Eigen::VectorXd emb_clamped;
        Eigen::VectorXd tp;
    };
    std::unordered_map<FeatureStore::TermIndex, SeedSims> seed_sims;
    auto sims_for = [&](FeatureStore::TermIndex cand) -> const SeedSims& {
        auto it = seed_sims.find(cand);
        if (it != seed_sims.end()) return it->second;
        SeedSims sims;
        const auto n = static_cast<Eigen::Index>(seed_set.size());
        sims.emb_clamped.resize(n);
        sims.tp.resize(n);
        const TermId& cand_term = store.term(cand);
        for (Eigen::Index s = 0; s < n; ++s) {
            const double emb = try_cosine(ctx.embeddings, cand_term, seed_set[static_cast<std::size_t>(s)])
                                   .value_or(0.0);
            sims.emb_clamped[s] = emb > 0.0 ? emb : 0.0;
            sims.tp[s] = ctx.types.type_similarity(cand_term, seed_set[static_cast<std::size_t>(s)],
                                                   store.vocab_size());
        }
        return seed_sims.emplace(cand, std::move(sims)).first->second;
    };

    std::unordered_map<FeatureStore::TermIndex, double> reciprocal_sum;
    for (const FeatureSubset& sk : subsets) {
        // Candidates associated with at least one pattern of this subset.
        std::vector<FeatureStore::TermIndex> eligible;
        for (const auto pattern : sk.patterns) {
            for (const auto& tc : store.terms_with(pattern)) eligible.push_back(tc.term);
        }
        std::sort(eligible.begin(), eligible.end());
        eligible.erase(std::unique(eligible.begin(), eligible.end()), eligible.end());

        std::vector<Eigen::VectorXd> seed_weights;
        seed_weights.reserve(seed_set.size());
        for (const auto& seed : seed_set) {
            const auto t = store.term_index(seed);
            seed_weights.push_back(t ? weights_over(store, *t, sk)
                                     : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sk.size())));
        }

        std::vector<ScoredTerm> scored;
        scored.reserve(eligible.size());
        for (const auto cand : eligible) {
            const TermId& cand_term = store.term(cand);
            if (excluded.count(cand_term)) continue;
            const SeedSims& sims = sims_for(cand);
            if (sims.emb_clamped.maxCoeff() <= 0.0) continue;
            const Eigen::VectorXd w = weights_over(store, cand, sk);
            double sum = 0.0;
            for (std::size_t s = 0; s < seed_set.size(); ++s) {
                const auto si = static_cast<Eigen::Index>(s);
                sum += combined_sib_sim(min_max_ratio(w, seed_weights[s]), sims.emb_clamped[si],
                                        sims.tp[si]);
            }
            const double score = sum / static_cast<double>(seed_set.size());
            if (score > 0.0) scored.push_back({cand_term, score});
        }
        std::sort(scored.begin(), scored.end(), ranked_before);
        for (std::size_t rank = 0; rank < scored.size(); ++rank) {
            const auto t = store.term_index(scored[rank].term);
            reciprocal_sum[*t] += 1.0 / static_cast<double>(rank + 1);
        }
    }

    const double gate = 1.0 / static_cast<double>(cfg.mrr_rank_threshold);
    std::vector<ScoredTerm> admitted;
    for (const auto& [term, sum] : reciprocal_sum) {
        const double mrr = sum / static_cast<double>(cfg.num_subsets);
        if (mrr > gate) admitted.push_back({store.term(term), mrr});
    }
    std::sort(admitted.begin(), admitted.end(), ranked_before);
    if (cfg.max_admitted > 0 && admitted.size() > static_cast<std::size_t>(cfg.max_admitted))
        admitted.resize(static_cast<std::size_t>(cfg.max_admitted));
    return admitted;
}

std::vector<ScoredTerm> width_expand(const SimilarityContext& ctx, std::span<const TermId> seed_set,
                                     const TermSet& blacklist, const EnsembleConfig& cfg) {
    std::mt19937_64 rng(cfg.rng_seed);
    return width_expand(ctx, seed_set, blacklist, cfg, rng);
}

std::vector<ScoredTerm> depth_expand(const SimilarityContext& ctx, const TermId& target,
                                     std::span<const TermPair> reference_edges,
                                     std::span<const TermId> candidates, const TermSet& blacklist,
                                     int max_children) {
    if (max_children <= 0) return {};
    if (!ctx.embeddings.contains(target)) return {};
    const auto mean = mean_reference_offset(ctx.embeddings, reference_edges);
    if (!mean || mean->norm() == 0.0) return {};

    std::vector<ScoredTerm> scored;
    for (const auto& cand : candidates) {
        if (cand == target || blacklist.count(cand)) continue;
        const auto s = try_par_sim(ctx.embeddings, target, cand, *mean);
        if (!s) continue;
        scored.push_back({cand, *s});
    }
    std::sort(scored.begin(), scored.end(), ranked_before);
    if (scored.size() > static_cast<std::size_t>(max_children))
        scored.resize(static_cast<std::size_t>(max_children));
    return scored;
}

} // namespace taxgrow
