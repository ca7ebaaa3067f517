#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <span>
#include <vector>

#include "taxgrow/similarity.hpp"
#include "taxgrow/taxonomy.hpp"
#include "taxgrow/types.hpp"

namespace taxgrow {

struct GlobalOptOptions {
    double mu1 = 0.1;       // parenthood term weight
    double mu2 = 0.01;      // current-assignment smoothness weight
    int top_features = 200; // SK pool size for the sibling matrix
    unsigned threads = 0;

    void validate() const; // throws ConfigError
};

// Dense inputs of one level-pair solve: n children against p parents.
struct AssignmentMatrices {
    std::vector<TermId> parents;
    std::vector<TermId> children;
    std::vector<Eigen::Index> current_parent; // per child, index into parents
    Eigen::MatrixXd W;  // n x n sibling similarity, symmetric, zero diagonal
    Eigen::MatrixXd Yc; // n x p parenthood similarity, clamped at 0
    Eigen::MatrixXd Ys; // n x p one-hot current assignment
    double mu1 = 0.1;
    double mu2 = 0.01;
};

// Fills W from sibling similarity over the top-k feature pool selected on
// the children, Yc from parenthood similarity against the mean offset of
// all current level edges, and Ys from the given attachment.
AssignmentMatrices build_matrices(const SimilarityContext& ctx, std::span<const TermId> parents,
                                  std::span<const TermId> children,
                                  std::span<const Eigen::Index> current_parent,
                                  const GlobalOptOptions& opts = {});

// Row sums of W (the diagonal of D).
Eigen::VectorXd row_sums(const Eigen::MatrixXd& W);

// S = D^{-1/2} W D^{-1/2}; rows and columns with a zero row sum stay zero.
Eigen::MatrixXd normalized_similarity(const Eigen::MatrixXd& W);

// Rows divided by their L1 norm; zero rows stay zero.
Eigen::MatrixXd row_l1_normalized(const Eigen::MatrixXd& m);

// Closed-form assignment scores F = (I - aS)^{-1} (b1 Yc_norm + b2 Ys)
// with a = 1/(1+mu1+mu2), b1 = mu1/(1+mu1+mu2), b2 = mu2/(1+mu1+mu2).
// Falls back to fixed-point iteration when the direct solve fails.
Eigen::MatrixXd solve(const AssignmentMatrices& m);

struct ReassignResult {
    int moved = 0;
    std::vector<TermPair> moves; // (new parent, moved child)
};

// Solves the level pair (parents at `level`, children below) and moves each
// child subtree under its argmax parent. Ties keep the current parent, then
// take the lexicographically smaller parent; parents blacklisting the child
// term are skipped.
ReassignResult reassign(const SimilarityContext& ctx, Taxonomy& tax, int level,
                        const GlobalOptOptions& opts = {});

// Runs reassign over every contiguous level pair, top-down.
ReassignResult optimize_taxonomy(const SimilarityContext& ctx, Taxonomy& tax,
                                 const GlobalOptOptions& opts = {});

// TSV audit dump (row/column labels included).
void write_matrix_tsv(const Eigen::MatrixXd& m, std::span<const TermId> row_labels,
                      std::span<const TermId> col_labels, const std::filesystem::path& path);

} // namespace taxgrow
