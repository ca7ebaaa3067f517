#include "taxgrow/taxonomy.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <random>
#include <sstream>

#include "taxgrow/errors.hpp"

namespace taxgrow {

std::string to_string(NodeOrigin origin) {
    switch (origin) {
        case NodeOrigin::seed: return "seed";
        case NodeOrigin::width: return "width";
        case NodeOrigin::depth: return "depth";
    }
    return "seed";
}

NodeOrigin origin_from_string(const std::string& s) {
    if (s == "seed") return NodeOrigin::seed;
    if (s == "width") return NodeOrigin::width;
    if (s == "depth") return NodeOrigin::depth;
    throw DataError("unknown node origin: " + s);
}

TaxoNode* TaxoNode::find_child(const TermId& t) const {
    for (const auto& child : children) {
        if (child->term == t) return child.get();
    }
    return nullptr;
}

const TermId& Taxonomy::root_term() {
    static const TermId root = "Root";
    return root;
}

Taxonomy::Taxonomy() : root_(std::make_unique<TaxoNode>()) {
    root_->term = root_term();
    index_node(root_.get());
}

void Taxonomy::index_node(TaxoNode* node) { index_[node->term].push_back(node); }

void Taxonomy::unindex_node(TaxoNode* node) {
    auto it = index_.find(node->term);
    if (it == index_.end()) return;
    std::erase(it->second, node);
    if (it->second.empty()) index_.erase(it);
}

Taxonomy Taxonomy::clone() const {
    Taxonomy copy;
    std::function<void(const TaxoNode&, TaxoNode&)> dup = [&](const TaxoNode& src, TaxoNode& dst) {
        dst.children_blacklist = src.children_blacklist;
        dst.origin = src.origin;
        dst.iteration_added = src.iteration_added;
        dst.confidence = src.confidence;
        for (const auto& child : src.children) {
            auto node = std::make_unique<TaxoNode>();
            node->term = child->term;
            node->parent = &dst;
            copy.index_node(node.get());
            dup(*child, *node);
            dst.children.push_back(std::move(node));
        }
    };
    dup(*root_, *copy.root_);
    return copy;
}

TaxoNode* Taxonomy::add_child(TaxoNode& parent, const TermId& term, NodeOrigin origin,
                              int iteration, double confidence) {
    if (term.empty() || term == root_term())
        throw std::invalid_argument("add_child: reserved or empty term: " + term);
    if (parent.find_child(term))
        throw std::invalid_argument("add_child: duplicate child term: " + term);
    if (parent.children_blacklist.count(term))
        throw std::invalid_argument("add_child: blacklisted child term: " + term);
    auto node = std::make_unique<TaxoNode>();
    node->term = term;
    node->parent = &parent;
    node->origin = origin;
    node->iteration_added = iteration;
    node->confidence = confidence;
    TaxoNode* raw = node.get();
    parent.children.push_back(std::move(node));
    index_node(raw);
    return raw;
}

void Taxonomy::remove_subtree(TaxoNode* node) {
    if (!node || node->is_root()) throw std::invalid_argument("remove_subtree: cannot remove root");
    std::function<void(TaxoNode*)> unindex_all = [&](TaxoNode* n) {
        unindex_node(n);
        for (const auto& child : n->children) unindex_all(child.get());
    };
    unindex_all(node);
    auto& siblings = node->parent->children;
    auto it = std::find_if(siblings.begin(), siblings.end(),
                           [&](const std::unique_ptr<TaxoNode>& p) { return p.get() == node; });
    siblings.erase(it);
}

void Taxonomy::move_subtree(TaxoNode* node, TaxoNode& new_parent) {
    if (!node || node->is_root()) throw std::invalid_argument("move_subtree: cannot move root");
    if (node->parent == &new_parent) return;
    if (node == &new_parent || is_ancestor(*node, new_parent))
        throw std::invalid_argument("move_subtree: target parent is inside the subtree");
    if (new_parent.find_child(node->term))
        throw std::invalid_argument("move_subtree: duplicate child term: " + node->term);
    if (new_parent.children_blacklist.count(node->term))
        throw std::invalid_argument("move_subtree: blacklisted child term: " + node->term);
    auto& siblings = node->parent->children;
    auto it = std::find_if(siblings.begin(), siblings.end(),
                           [&](const std::unique_ptr<TaxoNode>& p) { return p.get() == node; });
    std::unique_ptr<TaxoNode> owned = std::move(*it);
    siblings.erase(it);
    owned->parent = &new_parent;
    new_parent.children.push_back(std::move(owned));
}

std::span<TaxoNode* const> Taxonomy::positions(const TermId& term) const {
    auto it = index_.find(term);
    if (it == index_.end()) return {};
    return {it->second.data(), it->second.size()};
}

std::vector<TaxoNode*> Taxonomy::bfs_order() {
    std::vector<TaxoNode*> order;
    std::deque<TaxoNode*> queue{root_.get()};
    while (!queue.empty()) {
        TaxoNode* node = queue.front();
        queue.pop_front();
        order.push_back(node);
        for (const auto& child : node->children) queue.push_back(child.get());
    }
    return order;
}

std::vector<const TaxoNode*> Taxonomy::bfs_order() const {
    auto order = const_cast<Taxonomy*>(this)->bfs_order();
    return {order.begin(), order.end()};
}

std::size_t Taxonomy::node_count() const {
    std::size_t n = 0;
    for (const auto& [term, nodes] : index_) n += nodes.size();
    return n;
}

int Taxonomy::depth(const TaxoNode& node) const {
    int d = 0;
    for (const TaxoNode* p = node.parent; p != nullptr; p = p->parent) ++d;
    return d;
}

int Taxonomy::max_depth() const {
    int deepest = 0;
    for (const TaxoNode* node : bfs_order()) deepest = std::max(deepest, depth(*node));
    return deepest;
}

std::vector<TaxoNode*> Taxonomy::nodes_at_depth(int target) {
    std::vector<TaxoNode*> out;
    for (TaxoNode* node : bfs_order()) {
        if (depth(*node) == target) out.push_back(node);
    }
    return out;
}

bool Taxonomy::is_ancestor(const TaxoNode& ancestor, const TaxoNode& descendant) {
    for (const TaxoNode* p = descendant.parent; p != nullptr; p = p->parent) {
        if (p == &ancestor) return true;
    }
    return false;
}

std::vector<TermPair> Taxonomy::edges() const {
    std::vector<TermPair> out;
    for (const TaxoNode* node : bfs_order()) {
        for (const auto& child : node->children) out.push_back({node->term, child->term});
    }
    return out;
}

void Taxonomy::check_invariants(bool require_unique_terms) const {
    std::size_t seen = 0;
    for (const TaxoNode* node : bfs_order()) {
        ++seen;
        std::unordered_set<TermId> child_terms;
        for (const auto& child : node->children) {
            if (child->parent != node) throw DataError("taxonomy: broken parent pointer");
            if (!child_terms.insert(child->term).second)
                throw DataError("taxonomy: duplicate child term " + child->term);
            if (node->children_blacklist.count(child->term))
                throw DataError("taxonomy: blacklisted child " + child->term + " attached under " +
                                node->term);
        }
        const auto pos = positions(node->term);
        if (std::find(pos.begin(), pos.end(), node) == pos.end())
            throw DataError("taxonomy: node missing from index: " + node->term);
    }
    if (seen != node_count()) throw DataError("taxonomy: index size does not match traversal");
    if (require_unique_terms) {
        for (const auto& [term, nodes] : index_) {
            if (nodes.size() > 1) throw DataError("taxonomy: term at multiple positions: " + term);
        }
    }
}

// ---------------------------------------------------------------------------
// JSON / DOT
// ---------------------------------------------------------------------------

namespace {

nlohmann::json node_to_json(const TaxoNode& node) {
    nlohmann::json doc;
    doc["term"] = node.term;
    doc["origin"] = to_string(node.origin);
    doc["iteration_added"] = node.iteration_added;
    doc["confidence"] = node.confidence;
    if (!node.children_blacklist.empty()) {
        std::vector<TermId> blacklist(node.children_blacklist.begin(), node.children_blacklist.end());
        std::sort(blacklist.begin(), blacklist.end());
        doc["children_blacklist"] = blacklist;
    }
    auto children = nlohmann::json::array();
    for (const auto& child : node.children) children.push_back(node_to_json(*child));
    doc["children"] = std::move(children);
    return doc;
}

void node_from_json(Taxonomy& tax, TaxoNode& parent, const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("term") || !doc["term"].is_string())
        throw DataError("taxonomy JSON: node lacks a string \"term\"");
    const TermId term = doc["term"].get<TermId>();
    if (tax.on_tree(term)) throw DataError("taxonomy JSON: duplicate term: " + term);
    TaxoNode* node = tax.add_child(parent, term, NodeOrigin::seed, 0, 0.0);
    if (doc.contains("origin")) node->origin = origin_from_string(doc["origin"].get<std::string>());
    if (doc.contains("iteration_added")) node->iteration_added = doc["iteration_added"].get<int>();
    if (doc.contains("confidence")) node->confidence = doc["confidence"].get<double>();
    if (doc.contains("children_blacklist")) {
        for (const auto& t : doc["children_blacklist"])
            node->children_blacklist.insert(t.get<TermId>());
    }
    if (doc.contains("children")) {
        if (!doc["children"].is_array()) throw DataError("taxonomy JSON: \"children\" must be an array");
        for (const auto& child : doc["children"]) node_from_json(tax, *node, child);
    }
}

std::string dot_escape(const TermId& term) {
    std::string out;
    for (char c : term) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

} // namespace

Taxonomy Taxonomy::from_json(const nlohmann::json& doc) {
    try {
        Taxonomy tax;
        if (doc.is_array()) {
            for (const auto& child : doc) node_from_json(tax, tax.root(), child);
            return tax;
        }
        if (!doc.is_object() || !doc.contains("term") || !doc["term"].is_string())
            throw DataError("taxonomy JSON: expected an object with \"term\" or an array of nodes");
        if (doc["term"].get<TermId>() == root_term()) {
            if (doc.contains("children_blacklist")) {
                for (const auto& t : doc["children_blacklist"])
                    tax.root().children_blacklist.insert(t.get<TermId>());
            }
            if (doc.contains("children")) {
                for (const auto& child : doc["children"]) node_from_json(tax, tax.root(), child);
            }
            return tax;
        }
        node_from_json(tax, tax.root(), doc);
        return tax;
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("taxonomy JSON: ") + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("taxonomy JSON: ") + e.what());
    }
}

Taxonomy Taxonomy::load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open taxonomy file: " + path.string());
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw DataError("invalid JSON in taxonomy file: " + path.string());
    return from_json(doc);
}

nlohmann::json Taxonomy::to_json() const { return node_to_json(*root_); }

void Taxonomy::save_json(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open taxonomy file for writing: " + path.string());
    out << to_json().dump(2) << '\n';
    if (!out) throw DataError("failed writing taxonomy file: " + path.string());
}

std::string Taxonomy::to_dot() const {
    std::ostringstream out;
    out << "digraph taxonomy {\n";
    out << "  rankdir=TB;\n";
    for (const TaxoNode* node : bfs_order())
        out << "  \"" << dot_escape(node->term) << "\" [label=\"" << dot_escape(node->term)
            << "\"];\n";
    for (const auto& [parent, child] : edges())
        out << "  \"" << dot_escape(parent) << "\" -> \"" << dot_escape(child) << "\";\n";
    out << "}\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Conflict resolution
// ---------------------------------------------------------------------------

std::vector<Conflict> find_conflicts(Taxonomy& tax) {
    std::vector<TermId> terms;
    for (const TaxoNode* node : tax.bfs_order()) {
        if (!node->is_root() && tax.positions(node->term).size() > 1) terms.push_back(node->term);
    }
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    std::vector<Conflict> out;
    out.reserve(terms.size());
    for (auto& term : terms) {
        auto pos = tax.positions(term);
        out.push_back({std::move(term), {pos.begin(), pos.end()}});
    }
    return out;
}

std::vector<TermPair> sibling_reference_edges(const TaxoNode& target) {
    std::vector<TermPair> out;
    if (target.is_root() || target.parent == nullptr) return out;
    for (const auto& sibling : target.parent->children) {
        if (sibling.get() == &target) continue;
        for (const auto& child : sibling->children) out.push_back({sibling->term, child->term});
    }
    return out;
}

double node_confidence(const SimilarityContext& ctx, const TaxoNode& node,
                       int top_features) {
    if (node.is_root() || node.parent == nullptr) return 0.0;
    const TaxoNode& parent = *node.parent;

    const auto refs = sibling_reference_edges(parent);
    const auto mean = mean_reference_offset(ctx.embeddings, refs);
    double psim = 0.0;
    bool scorable = false;
    if (mean && mean->norm() != 0.0) {
        if (auto s = try_par_sim(ctx.embeddings, parent.term, node.term, *mean)) {
            psim = *s;
            scorable = true;
        }
    }
    if (!scorable) return 0.0;

    std::vector<TermId> siblings;
    siblings.reserve(parent.children.size());
    for (const auto& child : parent.children) {
        if (child.get() != &node) siblings.push_back(child->term);
    }
    if (siblings.empty()) return psim > 0.0 ? psim : 0.0;

    const FeatureSubset sk = select_quality_features(ctx.features, siblings, top_features);
    double sum = 0.0;
    for (const auto& sibling : siblings) sum += sib_sim(ctx, node.term, sibling, sk);
    const double conf = sum / static_cast<double>(siblings.size()) * psim;
    return conf > 0.0 ? conf : 0.0;
}

namespace {

// Ordering used both for the confidence tie-break and the "added after"
// relation: earlier iteration first, then current in-list position.
std::pair<int, std::size_t> temporal_key(const TaxoNode& node) {
    const auto& siblings = node.parent->children;
    const auto it = std::find_if(siblings.begin(), siblings.end(),
                                 [&](const std::unique_ptr<TaxoNode>& p) { return p.get() == &node; });
    return {node.iteration_added, static_cast<std::size_t>(it - siblings.begin())};
}

} // namespace

void resolve_conflicts(const SimilarityContext& ctx, Taxonomy& tax, int top_features,
                       std::vector<ResolutionEvent>* events) {
    const auto conflicts = find_conflicts(tax);
    for (const auto& conflict : conflicts) {
        // Earlier resolutions may have removed positions of this term.
        auto live = tax.positions(conflict.term);
        std::vector<TaxoNode*> nodes(live.begin(), live.end());
        if (nodes.size() < 2) continue;

        TaxoNode* winner = nullptr;
        // Rule 1: a seed position wins outright.
        for (TaxoNode* node : nodes) {
            if (node->origin == NodeOrigin::seed) {
                winner = node;
                break;
            }
        }
        if (!winner) {
            // Rule 2: drop positions strictly descended from another
            // conflicting position; the ancestors survive.
            std::vector<TaxoNode*> survivors;
            for (TaxoNode* node : nodes) {
                const bool descended =
                    std::any_of(nodes.begin(), nodes.end(), [&](TaxoNode* other) {
                        return other != node && Taxonomy::is_ancestor(*other, *node);
                    });
                if (!descended) survivors.push_back(node);
            }
            // Rule 3: highest confidence among the survivors; ties go to the
            // earlier position, then to the lexicographically smaller parent.
            std::vector<double> confidence(survivors.size());
            for (std::size_t i = 0; i < survivors.size(); ++i)
                confidence[i] = node_confidence(ctx, *survivors[i], top_features);
            std::size_t best = 0;
            for (std::size_t i = 1; i < survivors.size(); ++i) {
                if (confidence[i] != confidence[best]) {
                    if (confidence[i] > confidence[best]) best = i;
                    continue;
                }
                const auto ki = temporal_key(*survivors[i]);
                const auto kb = temporal_key(*survivors[best]);
                if (ki.first != kb.first) {
                    if (ki.first < kb.first) best = i;
                    continue;
                }
                if (survivors[i]->parent->term < survivors[best]->parent->term) best = i;
            }
            winner = survivors[best];
        }

        ResolutionEvent event;
        event.term = conflict.term;
        event.winner_parent = winner->parent ? winner->parent->term : TermId{};
        for (TaxoNode* loser : nodes) {
            if (loser == winner) continue;
            // A previously processed loser may have taken this one with it.
            auto still_live = tax.positions(conflict.term);
            if (std::find(still_live.begin(), still_live.end(), loser) == still_live.end()) continue;

            TaxoNode* parent = loser->parent;
            const auto loser_key = temporal_key(*loser);
            std::vector<TaxoNode*> to_cut;
            for (const auto& sibling : parent->children) {
                if (sibling.get() == loser) continue;
                if (temporal_key(*sibling) <= loser_key) continue;
                // Never cut seed nodes or the subtree holding the winner.
                if (sibling->origin == NodeOrigin::seed) continue;
                if (sibling.get() == winner || Taxonomy::is_ancestor(*sibling, *winner)) continue;
                to_cut.push_back(sibling.get());
            }
            event.losing_parents.push_back(parent->term);
            tax.remove_subtree(loser);
            for (TaxoNode* sibling : to_cut) {
                event.cut_siblings.push_back(sibling->term);
                tax.remove_subtree(sibling);
            }
            parent->children_blacklist.insert(conflict.term);
        }
        if (events) events->push_back(std::move(event));
    }
}

// ---------------------------------------------------------------------------
// Expansion driver
// ---------------------------------------------------------------------------

void expand(const SimilarityContext& ctx, Taxonomy& tax, const EnsembleConfig& cfg, int max_iter,
            const ExpandHooks& hooks) {
    cfg.validate();
    if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
    std::mt19937_64 rng(cfg.rng_seed);

    for (int iter = 1; iter <= max_iter; ++iter) {
        std::deque<TaxoNode*> queue{&tax.root()};
        while (!queue.empty()) {
            TaxoNode* node = queue.front();
            queue.pop_front();

            if (node->children.empty()) {
                const auto refs = sibling_reference_edges(*node);
                if (!refs.empty() && ctx.embeddings.contains(node->term)) {
                    std::vector<TermId> candidates;
                    candidates.reserve(ctx.features.candidate_terms().size());
                    for (const auto& term : ctx.features.candidate_terms()) {
                        if (!tax.on_tree(term)) candidates.push_back(term);
                    }
                    const auto initial =
                        depth_expand(ctx, node->term, refs, candidates, node->children_blacklist);
                    for (const auto& child : initial)
                        tax.add_child(*node, child.term, NodeOrigin::depth, iter, child.score);
                }
            }

            if (!node->children.empty()) {
                std::vector<TermId> seeds;
                seeds.reserve(node->children.size());
                for (const auto& child : node->children) seeds.push_back(child->term);
                const auto admitted = width_expand(ctx, seeds, node->children_blacklist, cfg, rng);
                for (const auto& sibling : admitted)
                    tax.add_child(*node, sibling.term, NodeOrigin::width, iter, sibling.score);
            }

            for (const auto& child : node->children) queue.push_back(child.get());
        }

        std::vector<ResolutionEvent> events;
        resolve_conflicts(ctx, tax, cfg.top_features, &events);
        if (hooks.on_conflicts_resolved) hooks.on_conflicts_resolved(iter, events);
        if (hooks.on_iteration_end) hooks.on_iteration_end(iter, tax);
    }
}

} // namespace taxgrow
