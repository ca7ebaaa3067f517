#pragma once

#include <set>
#include <utility>

#include <json.hpp>

#include "taxgrow/taxonomy.hpp"
#include "taxgrow/types.hpp"

namespace taxgrow {

// Ordered term pairs; self-pairs and pairs touching the pseudo-root are
// excluded by construction.
struct PairSet {
    std::set<std::pair<TermId, TermId>> pairs;

    std::size_t size() const { return pairs.size(); }
    bool contains(const TermId& a, const TermId& b) const { return pairs.count({a, b}) != 0; }
};

// All (ancestor, descendant) pairs of the tree, transitive closure.
PairSet ancestor_pairs(const Taxonomy& tax);

// Direct (parent, child) pairs only.
PairSet edge_pairs(const Taxonomy& tax);

struct PrfReport {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t pred_pairs = 0;
    std::size_t gold_pairs = 0;
    std::size_t common_pairs = 0;
};

// Precision/recall over the two pair sets; 0/0 counts as 0, and F1 is 0
// when precision + recall is 0.
PrfReport score_pairs(const PairSet& pred, const PairSet& gold);

PrfReport ancestor_f1(const Taxonomy& pred, const Taxonomy& gold);
PrfReport edge_f1(const Taxonomy& pred, const Taxonomy& gold);

// JSON report carrying both metric triples plus pair counts.
nlohmann::json eval_report(const Taxonomy& pred, const Taxonomy& gold);

} // namespace taxgrow
