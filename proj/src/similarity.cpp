#include "taxgrow/similarity.hpp"

#include <algorithm>
#include <cmath>

#include "taxgrow/errors.hpp"

namespace taxgrow {

FeatureSubset FeatureSubset::of(const FeatureStore& store, std::span<const std::string> serialized) {
    FeatureSubset subset;
    subset.patterns.reserve(serialized.size());
    for (const auto& s : serialized) {
        if (auto idx = store.pattern_index(s)) subset.patterns.push_back(*idx);
    }
    std::sort(subset.patterns.begin(), subset.patterns.end());
    subset.patterns.erase(std::unique(subset.patterns.begin(), subset.patterns.end()),
                          subset.patterns.end());
    return subset;
}

double min_max_ratio(const Eigen::Ref<const Eigen::VectorXd>& a,
                     const Eigen::Ref<const Eigen::VectorXd>& b) {
    const double max_sum = a.cwiseMax(b).sum();
    if (max_sum <= 0.0) return 0.0;
    return a.cwiseMin(b).sum() / max_sum;
}

Eigen::VectorXd weights_over(const FeatureStore& store, FeatureStore::TermIndex term,
                             const FeatureSubset& subset) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(subset.size()));
    const auto row = store.patterns_of(term);
    // Both sides are sorted by pattern index; walk them together.
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < subset.patterns.size() && j < row.size()) {
        if (row[j].pattern < subset.patterns[i]) {
            ++j;
        } else if (subset.patterns[i] < row[j].pattern) {
            ++i;
        } else {
            out[static_cast<Eigen::Index>(i)] = store.skip_weight(term, subset.patterns[i]);
            ++i;
            ++j;
        }
    }
    return out;
}

double sib_sim_sk(const FeatureStore& store, const TermId& e1, const TermId& e2,
                  const FeatureSubset& subset) {
    if (subset.empty()) return 0.0;
    const auto t1 = store.term_index(e1);
    const auto t2 = store.term_index(e2);
    if (!t1 && !t2) return 0.0;
    Eigen::VectorXd w1 = t1 ? weights_over(store, *t1, subset)
                            : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(subset.size()));
    Eigen::VectorXd w2 = t2 ? weights_over(store, *t2, subset)
                            : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(subset.size()));
    return min_max_ratio(w1, w2);
}

double sib_sim(const SimilarityContext& ctx, const TermId& e1, const TermId& e2,
               const FeatureSubset& subset) {
    const double emb = try_cosine(ctx.embeddings, e1, e2).value_or(0.0);
    const double emb_clamped = emb > 0.0 ? emb : 0.0;
    if (emb_clamped == 0.0) return 0.0;
    const double sk = sib_sim_sk(ctx.features, e1, e2, subset);
    const double tp = ctx.types.type_similarity(e1, e2, ctx.features.vocab_size());
    return std::sqrt((1.0 + sk) * emb_clamped) * std::sqrt(1.0 + tp);
}

std::optional<Eigen::VectorXd> mean_reference_offset(const EmbeddingStore& store,
                                                     std::span<const TermPair> reference_edges) {
    Eigen::VectorXd sum;
    std::size_t used = 0;
    for (const auto& edge : reference_edges) {
        const auto p = store.find(edge.parent);
        const auto c = store.find(edge.child);
        if (!p || !c) continue;
        if (used == 0) {
            sum = store.vec(*p) - store.vec(*c);
        } else {
            sum += store.vec(*p) - store.vec(*c);
        }
        ++used;
    }
    if (used == 0) return std::nullopt;
    return sum / static_cast<double>(used);
}

double par_sim(const EmbeddingStore& store, const TermId& parent, const TermId& x,
               std::span<const TermPair> reference_edges) {
    const auto mean = mean_reference_offset(store, reference_edges);
    if (!mean) throw DataError("parenthood similarity undefined: no usable reference edge");
    if (mean->norm() == 0.0)
        throw DataError("parenthood similarity undefined: zero mean reference offset");
    const Eigen::VectorXd diff = offset(store, parent, x);
    if (diff.norm() == 0.0)
        throw DataError("parenthood similarity undefined: zero offset between " + parent + " and " + x);
    return cosine(diff, *mean);
}

std::optional<double> try_par_sim(const EmbeddingStore& store, const TermId& parent,
                                  const TermId& x,
                                  const Eigen::Ref<const Eigen::VectorXd>& mean_offset) {
    const auto p = store.find(parent);
    const auto c = store.find(x);
    if (!p || !c) return std::nullopt;
    const Eigen::VectorXd diff = store.vec(*p) - store.vec(*c);
    const double dn = diff.norm();
    const double mn = mean_offset.norm();
    if (dn == 0.0 || mn == 0.0) return std::nullopt;
    return diff.dot(mean_offset) / (dn * mn);
}

} // namespace taxgrow
