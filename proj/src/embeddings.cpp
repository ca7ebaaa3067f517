#include "taxgrow/embeddings.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "taxgrow/errors.hpp"

namespace taxgrow {

namespace {

[[noreturn]] void line_error(const std::filesystem::path& path, std::size_t line_no,
                             const std::string& what) {
    throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + what);
}

} // namespace

EmbeddingStore EmbeddingStore::from_vectors(std::vector<std::pair<TermId, Eigen::VectorXd>> vectors) {
    EmbeddingStore store;
    if (vectors.empty()) return store;
    const Eigen::Index dim = vectors.front().second.size();
    store.matrix_.resize(dim, static_cast<Eigen::Index>(vectors.size()));
    store.norms_.reserve(vectors.size());
    Eigen::Index col = 0;
    for (auto& [term, vec] : vectors) {
        if (vec.size() != dim) throw DataError("embedding dimension mismatch for term: " + term);
        if (!vec.allFinite()) throw DataError("non-finite embedding for term: " + term);
        const double n = vec.norm();
        if (n == 0.0) throw DataError("zero-norm embedding for term: " + term);
        if (!store.index_.emplace(term, col).second)
            throw DataError("duplicate embedding for term: " + term);
        store.matrix_.col(col) = vec;
        store.norms_.push_back(n);
        ++col;
    }
    return store;
}

EmbeddingStore EmbeddingStore::load_word2vec_text(const std::filesystem::path& path,
                                                  std::uint64_t* rejected) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embeddings file: " + path.string());
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw DataError("embeddings file is empty: " + path.string());
    std::size_t declared_count = 0;
    std::size_t dim = 0;
    {
        const char* first = line.data();
        const char* last = line.data() + line.size();
        auto r1 = std::from_chars(first, last, declared_count);
        if (r1.ec != std::errc{}) line_error(path, 1, "expected \"<count> <dim>\" header");
        first = r1.ptr;
        while (first != last && *first == ' ') ++first;
        auto r2 = std::from_chars(first, last, dim);
        if (r2.ec != std::errc{} || dim == 0) line_error(path, 1, "expected \"<count> <dim>\" header");
    }

    EmbeddingStore store;
    store.matrix_.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(declared_count));
    Eigen::Index col = 0;
    std::uint64_t skipped = 0;
    Eigen::VectorXd vec(static_cast<Eigen::Index>(dim));
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const char* first = line.data();
        const char* last = line.data() + line.size();
        const char* term_end = first;
        while (term_end != last && *term_end != ' ') ++term_end;
        if (term_end == first || term_end == last) line_error(path, line_no, "expected term and values");
        TermId term(first, term_end);
        first = term_end;
        for (std::size_t d = 0; d < dim; ++d) {
            while (first != last && *first == ' ') ++first;
            double value = 0.0;
            auto r = std::from_chars(first, last, value);
            if (r.ec != std::errc{})
                line_error(path, line_no, "expected " + std::to_string(dim) + " values, found " +
                                              std::to_string(d));
            vec[static_cast<Eigen::Index>(d)] = value;
            first = r.ptr;
        }
        while (first != last && *first == ' ') ++first;
        if (first != last)
            line_error(path, line_no, "more than " + std::to_string(dim) + " values on line");

        if (!vec.allFinite() || vec.norm() == 0.0) {
            ++skipped;
            continue;
        }
        if (store.index_.count(term) != 0) line_error(path, line_no, "duplicate term: " + term);
        if (col >= store.matrix_.cols()) {
            store.matrix_.conservativeResize(Eigen::NoChange, store.matrix_.cols() + 1024);
        }
        store.matrix_.col(col) = vec;
        store.norms_.push_back(vec.norm());
        store.index_.emplace(std::move(term), col);
        ++col;
    }
    store.matrix_.conservativeResize(Eigen::NoChange, col);
    if (rejected) *rejected = skipped;
    return store;
}

std::optional<Eigen::Index> EmbeddingStore::find(const TermId& term) const {
    auto it = index_.find(term);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

Eigen::Ref<const Eigen::VectorXd> EmbeddingStore::vec(const TermId& term) const {
    auto it = index_.find(term);
    if (it == index_.end()) throw DataError("missing embedding for term: " + term);
    return matrix_.col(it->second);
}

double cosine(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v) {
    if (u.size() != v.size()) throw std::invalid_argument("cosine: length mismatch");
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("cosine: zero-norm vector");
    return u.dot(v) / (nu * nv);
}

Eigen::VectorXd offset(const EmbeddingStore& store, const TermId& parent, const TermId& child) {
    return store.vec(parent) - store.vec(child);
}

std::optional<double> try_cosine(const EmbeddingStore& store, const TermId& a, const TermId& b) {
    const auto ia = store.find(a);
    const auto ib = store.find(b);
    if (!ia || !ib) return std::nullopt;
    return store.vec(*ia).dot(store.vec(*ib)) / (store.norm(*ia) * store.norm(*ib));
}

} // namespace taxgrow
