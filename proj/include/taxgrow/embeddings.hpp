#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "taxgrow/types.hpp"

namespace taxgrow {

// Immutable term -> dense vector store. Vectors live in the columns of one
// d x n matrix; norms are precomputed at load.
class EmbeddingStore {
public:
    EmbeddingStore() = default;

    static EmbeddingStore from_vectors(std::vector<std::pair<TermId, Eigen::VectorXd>> vectors);

    // word2vec text convention: first line "<count> <dim>", then one term
    // followed by dim floats per line. Dimension mismatches and unparsable
    // values raise DataError naming the line; zero-norm or non-finite
    // vectors are skipped and counted in `rejected`.
    static EmbeddingStore load_word2vec_text(const std::filesystem::path& path,
                                             std::uint64_t* rejected = nullptr);

    Eigen::Index dim() const { return matrix_.rows(); }
    std::size_t size() const { return index_.size(); }
    bool contains(const TermId& term) const { return index_.count(term) != 0; }
    std::optional<Eigen::Index> find(const TermId& term) const;

    Eigen::Ref<const Eigen::VectorXd> vec(Eigen::Index i) const { return matrix_.col(i); }
    // Throws DataError naming the term when it has no embedding.
    Eigen::Ref<const Eigen::VectorXd> vec(const TermId& term) const;
    double norm(Eigen::Index i) const { return norms_[static_cast<std::size_t>(i)]; }

private:
    Eigen::MatrixXd matrix_;
    std::vector<double> norms_;
    std::unordered_map<TermId, Eigen::Index> index_;
};

// Standard cosine similarity. Throws std::invalid_argument on length
// mismatch or a zero-norm argument.
double cosine(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v);

// v(parent) - v(child). Throws DataError when either term is missing.
Eigen::VectorXd offset(const EmbeddingStore& store, const TermId& parent, const TermId& child);

// Cosine between two stored terms; nullopt when either is missing.
std::optional<double> try_cosine(const EmbeddingStore& store, const TermId& a, const TermId& b);

} // namespace taxgrow
