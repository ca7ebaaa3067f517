#include "taxgrow/eval.hpp"

#include <algorithm>
#include <vector>

namespace taxgrow {

PairSet ancestor_pairs(const Taxonomy& tax) {
    PairSet out;
    // DFS carrying the ancestor chain (pseudo-root excluded).
    std::vector<const TermId*> chain;
    std::function<void(const TaxoNode&)> walk = [&](const TaxoNode& node) {
        if (!node.is_root()) {
            for (const TermId* ancestor : chain) {
                if (*ancestor != node.term) out.pairs.emplace(*ancestor, node.term);
            }
            chain.push_back(&node.term);
        }
        for (const auto& child : node.children) walk(*child);
        if (!node.is_root()) chain.pop_back();
    };
    walk(tax.root());
    return out;
}

PairSet edge_pairs(const Taxonomy& tax) {
    PairSet out;
    for (const auto& [parent, child] : tax.edges()) {
        if (parent == Taxonomy::root_term() || child == Taxonomy::root_term()) continue;
        if (parent != child) out.pairs.emplace(parent, child);
    }
    return out;
}

PrfReport score_pairs(const PairSet& pred, const PairSet& gold) {
    PrfReport r;
    r.pred_pairs = pred.size();
    r.gold_pairs = gold.size();
    std::vector<std::pair<TermId, TermId>> common;
    std::set_intersection(pred.pairs.begin(), pred.pairs.end(), gold.pairs.begin(),
                          gold.pairs.end(), std::back_inserter(common));
    r.common_pairs = common.size();
    r.precision = r.pred_pairs == 0 ? 0.0 : static_cast<double>(r.common_pairs) / r.pred_pairs;
    r.recall = r.gold_pairs == 0 ? 0.0 : static_cast<double>(r.common_pairs) / r.gold_pairs;
    r.f1 = (r.precision + r.recall) == 0.0
               ? 0.0
               : 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

PrfReport ancestor_f1(const Taxonomy& pred, const Taxonomy& gold) {
    return score_pairs(ancestor_pairs(pred), ancestor_pairs(gold));
}

PrfReport edge_f1(const Taxonomy& pred, const Taxonomy& gold) {
    return score_pairs(edge_pairs(pred), edge_pairs(gold));
}

namespace {

nlohmann::json report_to_json(const PrfReport& r) {
    return {{"precision", r.precision}, {"recall", r.recall},   {"f1", r.f1},
            {"pred_pairs", r.pred_pairs}, {"gold_pairs", r.gold_pairs},
            {"common_pairs", r.common_pairs}};
}

} // namespace

nlohmann::json eval_report(const Taxonomy& pred, const Taxonomy& gold) {
    return {{"ancestor", report_to_json(ancestor_f1(pred, gold))},
            {"edge", report_to_json(edge_f1(pred, gold))}};
}

} // namespace taxgrow
