#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "taxgrow/expansion.hpp"
#include "taxgrow/similarity.hpp"
#include "taxgrow/types.hpp"

namespace taxgrow {

enum class NodeOrigin { seed, width, depth };

std::string to_string(NodeOrigin origin);
NodeOrigin origin_from_string(const std::string& s);

struct TaxoNode {
    TermId term;
    TaxoNode* parent = nullptr;
    std::vector<std::unique_ptr<TaxoNode>> children;
    // Terms barred from (re)attachment under this node.
    std::unordered_set<TermId> children_blacklist;
    NodeOrigin origin = NodeOrigin::seed;
    int iteration_added = 0;
    double confidence = 0.0; // score at admission

    bool is_root() const { return parent == nullptr; }
    TaxoNode* find_child(const TermId& term) const;
};

// A rooted tree of terms under the reserved pseudo-root "Root", with a
// term -> positions index. During an expansion iteration a term may occupy
// several positions; conflict resolution restores uniqueness.
class Taxonomy {
public:
    static const TermId& root_term();

    Taxonomy();
    Taxonomy(Taxonomy&&) = default;
    Taxonomy& operator=(Taxonomy&&) = default;

    Taxonomy clone() const;

    // Accepts {"term": "Root", "children": [...]}, a single non-root
    // object (wrapped under an implicit pseudo-root), or an array of such
    // objects. Duplicate terms raise DataError.
    static Taxonomy from_json(const nlohmann::json& doc);
    static Taxonomy load_json(const std::filesystem::path& path);
    nlohmann::json to_json() const;
    void save_json(const std::filesystem::path& path) const;

    // One node line per term plus one line per parent->child edge.
    std::string to_dot() const;

    TaxoNode& root() { return *root_; }
    const TaxoNode& root() const { return *root_; }

    // Throws std::invalid_argument when the term is reserved, already a
    // child of `parent`, or blacklisted there.
    TaxoNode* add_child(TaxoNode& parent, const TermId& term, NodeOrigin origin, int iteration,
                        double confidence);
    // Detaches and destroys the node and its whole subtree.
    void remove_subtree(TaxoNode* node);
    // Re-attaches the node (and its subtree) under a new parent, appended
    // to the child list. Same validity checks as add_child.
    void move_subtree(TaxoNode* node, TaxoNode& new_parent);

    std::span<TaxoNode* const> positions(const TermId& term) const;
    bool on_tree(const TermId& term) const { return !positions(term).empty(); }

    std::vector<TaxoNode*> bfs_order();
    std::vector<const TaxoNode*> bfs_order() const;
    std::size_t node_count() const; // includes the pseudo-root
    int depth(const TaxoNode& node) const; // root = 0
    int max_depth() const;
    std::vector<TaxoNode*> nodes_at_depth(int depth);

    static bool is_ancestor(const TaxoNode& ancestor, const TaxoNode& descendant);

    // All parent->child edges, BFS order, including edges from the root.
    std::vector<TermPair> edges() const;

    // Structural invariants: acyclic single-parent shape, unique children
    // per parent, no blacklist violations, index consistency. Throws
    // DataError on violation.
    void check_invariants(bool require_unique_terms = false) const;

private:
    std::unique_ptr<TaxoNode> root_;
    std::unordered_map<TermId, std::vector<TaxoNode*>> index_;

    void index_node(TaxoNode* node);
    void unindex_node(TaxoNode* node);
};

struct Conflict {
    TermId term;
    std::vector<TaxoNode*> positions;
};

// Terms occupying more than one position, sorted by term.
std::vector<Conflict> find_conflicts(Taxonomy& tax);

// Edges whose parent is a sibling of `target` (all children edges of every
// sibling). Used as Eq.-7 reference edges for depth expansion and node
// confidence.
std::vector<TermPair> sibling_reference_edges(const TaxoNode& target);

// Confidence of keeping a node at its position: mean sibling similarity
// (over a feature set selected from the siblings) times the parenthood
// similarity, clamped at 0. Falls back to the parenthood term alone when
// the node has no siblings, and to 0 when the parenthood similarity is
// unscorable.
double node_confidence(const SimilarityContext& ctx, const TaxoNode& node,
                       int top_features = 200);

struct ResolutionEvent {
    TermId term;
    TermId winner_parent;
    std::vector<TermId> losing_parents;
    std::vector<TermId> cut_siblings;
};

// Applies the three conflict rules (seed wins; ancestor survives; highest
// confidence wins) and, per losing position: deletes its subtree, cuts
// siblings added after it, and blacklists the term under its parent.
void resolve_conflicts(const SimilarityContext& ctx, Taxonomy& tax, int top_features = 200,
                       std::vector<ResolutionEvent>* events = nullptr);

struct ExpandHooks {
    std::function<void(int iteration, const Taxonomy&)> on_iteration_end;
    std::function<void(int iteration, std::span<const ResolutionEvent>)> on_conflicts_resolved;
};

// Hierarchical tree expansion: per iteration, BFS from the root; each
// visited node is depth-expanded when childless, then width-expanded over
// its children; conflicts are resolved at iteration end.
void expand(const SimilarityContext& ctx, Taxonomy& tax, const EnsembleConfig& cfg, int max_iter,
            const ExpandHooks& hooks = {});

} // namespace taxgrow
