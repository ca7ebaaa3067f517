#include "taxgrow/global_opt.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>

#include "taxgrow/errors.hpp"
#include "taxgrow/expansion.hpp"
#include "taxgrow/parallel.hpp"

namespace taxgrow {

void GlobalOptOptions::validate() const {
    if (mu1 < 0.0 || mu2 < 0.0) throw ConfigError("mu1 and mu2 must be >= 0");
    if (top_features < 1) throw ConfigError("top_features must be >= 1");
}

AssignmentMatrices build_matrices(const SimilarityContext& ctx, std::span<const TermId> parents,
                                  std::span<const TermId> children,
                                  std::span<const Eigen::Index> current_parent,
                                  const GlobalOptOptions& opts) {
    opts.validate();
    if (children.size() != current_parent.size())
        throw std::invalid_argument("build_matrices: children/current_parent size mismatch");
    const auto n = static_cast<Eigen::Index>(children.size());
    const auto p = static_cast<Eigen::Index>(parents.size());

    AssignmentMatrices m;
    m.parents.assign(parents.begin(), parents.end());
    m.children.assign(children.begin(), children.end());
    m.current_parent.assign(current_parent.begin(), current_parent.end());
    m.mu1 = opts.mu1;
    m.mu2 = opts.mu2;

    const FeatureSubset pool = select_quality_features(ctx.features, children, opts.top_features);
    m.W = Eigen::MatrixXd::Zero(n, n);
    parallel_for(static_cast<std::size_t>(n), opts.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = i + 1; j < static_cast<std::size_t>(n); ++j) {
                const double s = sib_sim(ctx, children[i], children[j], pool);
                m.W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s;
                m.W(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = s;
            }
        }
    });

    std::vector<TermPair> level_edges;
    level_edges.reserve(children.size());
    for (Eigen::Index i = 0; i < n; ++i)
        level_edges.push_back({parents[static_cast<std::size_t>(m.current_parent[i])],
                               children[static_cast<std::size_t>(i)]});
    const auto mean = mean_reference_offset(ctx.embeddings, level_edges);

    m.Yc = Eigen::MatrixXd::Zero(n, p);
    if (mean && mean->norm() != 0.0) {
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < p; ++j) {
                const auto s = try_par_sim(ctx.embeddings, parents[static_cast<std::size_t>(j)],
                                           children[static_cast<std::size_t>(i)], *mean);
                if (s && *s > 0.0) m.Yc(i, j) = *s;
            }
        }
    }

    m.Ys = Eigen::MatrixXd::Zero(n, p);
    for (Eigen::Index i = 0; i < n; ++i) m.Ys(i, m.current_parent[static_cast<std::size_t>(i)]) = 1.0;
    return m;
}

Eigen::VectorXd row_sums(const Eigen::MatrixXd& W) { return W.rowwise().sum(); }

Eigen::MatrixXd normalized_similarity(const Eigen::MatrixXd& W) {
    const Eigen::VectorXd d = row_sums(W);
    Eigen::VectorXd dinv(d.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) dinv[i] = d[i] > 0.0 ? 1.0 / std::sqrt(d[i]) : 0.0;
    return dinv.asDiagonal() * W * dinv.asDiagonal();
}

Eigen::MatrixXd row_l1_normalized(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out = m;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double l1 = m.row(i).cwiseAbs().sum();
        if (l1 > 0.0) out.row(i) /= l1;
    }
    return out;
}

Eigen::MatrixXd solve(const AssignmentMatrices& m) {
    const double denom = 1.0 + m.mu1 + m.mu2;
    const double alpha = 1.0 / denom;
    const double beta1 = m.mu1 / denom;
    const double beta2 = m.mu2 / denom;
    const Eigen::MatrixXd S = normalized_similarity(m.W);
    const Eigen::MatrixXd B = beta1 * row_l1_normalized(m.Yc) + beta2 * m.Ys;
    const Eigen::Index n = S.rows();

    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - alpha * S;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() == Eigen::Success) {
        Eigen::MatrixXd F = ldlt.solve(B);
        if (F.allFinite() && (A * F - B).cwiseAbs().maxCoeff() <= 1e-10) return F;
    }
    // Fixed-point fallback: F <- aSF + B contracts whenever a < 1 and the
    // spectral radius of S is at most 1.
    Eigen::MatrixXd F = B;
    for (int it = 0; it < 1'000'000; ++it) {
        Eigen::MatrixXd next = alpha * (S * F) + B;
        const double change = (next - F).cwiseAbs().maxCoeff();
        F = std::move(next);
        if (change < 1e-9) break;
    }
    return F;
}

namespace {

Eigen::Index pick_parent(const AssignmentMatrices& m, const Eigen::MatrixXd& F, Eigen::Index child,
                         const std::vector<const TaxoNode*>& parent_nodes) {
    const Eigen::Index current = m.current_parent[static_cast<std::size_t>(child)];
    const TermId& term = m.children[static_cast<std::size_t>(child)];
    Eigen::Index best = -1;
    for (Eigen::Index j = 0; j < F.cols(); ++j) {
        if (j != current && parent_nodes[static_cast<std::size_t>(j)]->children_blacklist.count(term))
            continue;
        if (best == -1 || F(child, j) > F(child, best)) {
            best = j;
            continue;
        }
        if (F(child, j) == F(child, best)) {
            // Tie: prefer the current parent, then the smaller term.
            if (j == current) {
                best = j;
            } else if (best != current &&
                       m.parents[static_cast<std::size_t>(j)] < m.parents[static_cast<std::size_t>(best)]) {
                best = j;
            }
        }
    }
    return best == -1 ? current : best;
}

} // namespace

ReassignResult reassign(const SimilarityContext& ctx, Taxonomy& tax, int level,
                        const GlobalOptOptions& opts) {
    if (level < 1) throw std::invalid_argument("reassign: level must be >= 1");
    ReassignResult result;
    const auto parent_nodes_mut = tax.nodes_at_depth(level);
    const auto child_nodes = tax.nodes_at_depth(level + 1);
    if (parent_nodes_mut.size() < 2 || child_nodes.empty()) return result;

    std::vector<const TaxoNode*> parent_nodes(parent_nodes_mut.begin(), parent_nodes_mut.end());
    std::vector<TermId> parents;
    parents.reserve(parent_nodes.size());
    for (const TaxoNode* node : parent_nodes) parents.push_back(node->term);
    std::vector<TermId> children;
    std::vector<Eigen::Index> current;
    children.reserve(child_nodes.size());
    current.reserve(child_nodes.size());
    for (const TaxoNode* node : child_nodes) {
        children.push_back(node->term);
        const auto it = std::find(parent_nodes_mut.begin(), parent_nodes_mut.end(), node->parent);
        current.push_back(static_cast<Eigen::Index>(it - parent_nodes_mut.begin()));
    }

    const AssignmentMatrices m = build_matrices(ctx, parents, children, current, opts);
    const Eigen::MatrixXd F = solve(m);

    for (std::size_t i = 0; i < child_nodes.size(); ++i) {
        const Eigen::Index target = pick_parent(m, F, static_cast<Eigen::Index>(i), parent_nodes);
        if (target == m.current_parent[i]) continue;
        tax.move_subtree(child_nodes[i], *parent_nodes_mut[static_cast<std::size_t>(target)]);
        ++result.moved;
        result.moves.push_back({parents[static_cast<std::size_t>(target)], children[i]});
    }
    return result;
}

ReassignResult optimize_taxonomy(const SimilarityContext& ctx, Taxonomy& tax,
                                 const GlobalOptOptions& opts) {
    opts.validate();
    ReassignResult total;
    const int deepest = tax.max_depth();
    for (int level = 1; level < deepest; ++level) {
        ReassignResult r = reassign(ctx, tax, level, opts);
        total.moved += r.moved;
        total.moves.insert(total.moves.end(), r.moves.begin(), r.moves.end());
    }
    return total;
}

void write_matrix_tsv(const Eigen::MatrixXd& m, std::span<const TermId> row_labels,
                      std::span<const TermId> col_labels, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open matrix dump for writing: " + path.string());
    for (const auto& label : col_labels) out << '\t' << label;
    out << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out << (static_cast<std::size_t>(i) < row_labels.size() ? row_labels[static_cast<std::size_t>(i)]
                                                                : TermId{});
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << '\t' << m(i, j);
        out << '\n';
    }
}

} // namespace taxgrow
