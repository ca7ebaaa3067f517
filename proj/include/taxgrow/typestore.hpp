#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "taxgrow/types.hpp"

namespace taxgrow {

// One (term, type, confidence) association, Probase-style.
struct TypeRecord {
    TermId term;
    std::string type_label;
    double confidence = 0.0;
};

// Immutable term -> type confidence table.
class TypeStore {
public:
    using TypeIndex = std::uint32_t;

    struct TypeConfidence {
        TypeIndex type;
        double confidence;
    };

    TypeStore() = default;

    // Duplicate (term, type) pairs and non-positive confidences are counted
    // in `rejected` and skipped (first entry wins).
    static TypeStore from_records(std::span<const TypeRecord> records,
                                  std::uint64_t* rejected = nullptr);

    // TSV columns: term_id, type_label, confidence. A missing file yields an
    // empty store. Malformed lines are counted and skipped.
    static TypeStore load_tsv(const std::filesystem::path& path,
                              std::uint64_t* rejected = nullptr);

    bool empty() const { return per_term_.empty(); }
    std::size_t term_count() const { return per_term_.size(); }
    std::size_t type_count() const { return type_labels_.size(); }

    const std::string& type_label(TypeIndex i) const { return type_labels_[i]; }
    std::optional<TypeIndex> type_index(std::string_view label) const;

    // C_{e,ty}; 0 when the pair is absent.
    double confidence(const TermId& term, std::string_view type_label) const;
    // Sum of C over all terms for one type.
    double type_total(TypeIndex type) const { return totals_[type]; }

    std::span<const TypeConfidence> types_of(const TermId& term) const;

    // max(0, log(1 + C) * (log |V| - log sum_e' C)); 0 if the pair is absent.
    double type_weight(const TermId& term, std::string_view type_label,
                       std::size_t vocab_size) const;

    // Weighted min/max-ratio similarity over all type labels; 0 when the
    // denominator vanishes (e.g. either term has no type records).
    double type_similarity(const TermId& e1, const TermId& e2, std::size_t vocab_size) const;

private:
    double weight_of(const TypeConfidence& tc, double log_vocab) const;

    std::vector<std::string> type_labels_;
    std::unordered_map<std::string, TypeIndex> type_index_;
    std::unordered_map<TermId, std::vector<TypeConfidence>> per_term_; // sorted by type
    std::vector<double> totals_;
};

} // namespace taxgrow
