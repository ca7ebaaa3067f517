#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "taxgrow/corpus.hpp"
#include "taxgrow/embeddings.hpp"
#include "taxgrow/typestore.hpp"
#include "taxgrow/types.hpp"

namespace taxgrow {

// A selected set of skip-pattern features (the pool SK or one sampled
// subset SK_t), held as sorted unique pattern indices.
struct FeatureSubset {
    std::vector<FeatureStore::PatternIndex> patterns;

    bool empty() const { return patterns.empty(); }
    std::size_t size() const { return patterns.size(); }

    // Resolves serialized patterns against a store; unknown ones are dropped.
    static FeatureSubset of(const FeatureStore& store, std::span<const std::string> serialized);
};

// The three immutable stores every similarity computation reads from.
struct SimilarityContext {
    const FeatureStore& features;
    const TypeStore& types;
    const EmbeddingStore& embeddings;
};

// sum(min) / sum(max) over paired nonnegative weights; 0 when the
// denominator vanishes.
double min_max_ratio(const Eigen::Ref<const Eigen::VectorXd>& a,
                     const Eigen::Ref<const Eigen::VectorXd>& b);

// Dense weight vector of one term over the subset's patterns, in subset order.
Eigen::VectorXd weights_over(const FeatureStore& store, FeatureStore::TermIndex term,
                             const FeatureSubset& subset);

// Skip-pattern sibling similarity restricted to `subset` (min/max ratio of
// clamped TF-IDF weights), in [0, 1].
double sib_sim_sk(const FeatureStore& store, const TermId& e1, const TermId& e2,
                  const FeatureSubset& subset);

// Combined sibling similarity:
//   sqrt((1 + sim_sk) * max(0, sim_emb)) * sqrt(1 + sim_tp).
// A term without an embedding contributes sim_emb = 0, zeroing the result.
double sib_sim(const SimilarityContext& ctx, const TermId& e1, const TermId& e2,
               const FeatureSubset& subset);

// Mean of v(parent) - v(child) over the reference edges whose endpoints
// both have embeddings; nullopt when no edge is usable.
std::optional<Eigen::VectorXd> mean_reference_offset(const EmbeddingStore& store,
                                                     std::span<const TermPair> reference_edges);

// Parenthood similarity: cosine between v(parent) - v(x) and the mean
// reference offset. Throws DataError when the similarity is undefined
// (no usable reference edge, missing embedding, or a zero offset).
double par_sim(const EmbeddingStore& store, const TermId& parent, const TermId& x,
               std::span<const TermPair> reference_edges);

// Non-throwing form used inside scoring loops; the mean offset is
// precomputed once per candidate batch.
std::optional<double> try_par_sim(const EmbeddingStore& store, const TermId& parent,
                                  const TermId& x, const Eigen::Ref<const Eigen::VectorXd>& mean_offset);

} // namespace taxgrow
