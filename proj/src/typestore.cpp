#include "taxgrow/typestore.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "taxgrow/errors.hpp"

namespace taxgrow {

TypeStore TypeStore::from_records(std::span<const TypeRecord> records, std::uint64_t* rejected) {
    TypeStore store;
    std::uint64_t bad = 0;
    for (const auto& rec : records) {
        if (!(rec.confidence > 0.0) || !std::isfinite(rec.confidence) || rec.term.empty() ||
            rec.type_label.empty()) {
            ++bad;
            continue;
        }
        auto [it, inserted] =
            store.type_index_.try_emplace(rec.type_label, static_cast<TypeIndex>(store.type_labels_.size()));
        if (inserted) {
            store.type_labels_.push_back(rec.type_label);
            store.totals_.push_back(0.0);
        }
        const TypeIndex type = it->second;
        auto& row = store.per_term_[rec.term];
        const bool duplicate =
            std::any_of(row.begin(), row.end(), [&](const TypeConfidence& tc) { return tc.type == type; });
        if (duplicate) {
            ++bad;
            continue;
        }
        row.push_back({type, rec.confidence});
        store.totals_[type] += rec.confidence;
    }
    for (auto& [term, row] : store.per_term_)
        std::sort(row.begin(), row.end(),
                  [](const TypeConfidence& a, const TypeConfidence& b) { return a.type < b.type; });
    if (rejected) *rejected = bad;
    return store;
}

TypeStore TypeStore::load_tsv(const std::filesystem::path& path, std::uint64_t* rejected) {
    if (rejected) *rejected = 0;
    std::ifstream in(path);
    if (!in) return TypeStore{};
    std::vector<TypeRecord> records;
    std::uint64_t bad = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const auto tab1 = line.find('\t');
        const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
        if (tab2 == std::string::npos) {
            ++bad;
            continue;
        }
        TypeRecord rec;
        rec.term = line.substr(0, tab1);
        rec.type_label = line.substr(tab1 + 1, tab2 - tab1 - 1);
        const char* first = line.data() + tab2 + 1;
        const char* last = line.data() + line.size();
        auto [ptr, ec] = std::from_chars(first, last, rec.confidence);
        if (ec != std::errc{} || ptr != last) {
            ++bad;
            continue;
        }
        records.push_back(std::move(rec));
    }
    std::uint64_t from_records_bad = 0;
    TypeStore store = from_records(records, &from_records_bad);
    if (rejected) *rejected = bad + from_records_bad;
    return store;
}

std::optional<TypeStore::TypeIndex> TypeStore::type_index(std::string_view label) const {
    auto it = type_index_.find(std::string(label));
    if (it == type_index_.end()) return std::nullopt;
    return it->second;
}

std::span<const TypeStore::TypeConfidence> TypeStore::types_of(const TermId& term) const {
    auto it = per_term_.find(term);
    if (it == per_term_.end()) return {};
    return {it->second.data(), it->second.size()};
}

double TypeStore::confidence(const TermId& term, std::string_view label) const {
    const auto type = type_index(label);
    if (!type) return 0.0;
    for (const auto& tc : types_of(term)) {
        if (tc.type == *type) return tc.confidence;
    }
    return 0.0;
}

double TypeStore::weight_of(const TypeConfidence& tc, double log_vocab) const {
    const double w = std::log1p(tc.confidence) * (log_vocab - std::log(totals_[tc.type]));
    return w > 0.0 ? w : 0.0;
}

double TypeStore::type_weight(const TermId& term, std::string_view label,
                              std::size_t vocab_size) const {
    const auto type = type_index(label);
    if (!type) return 0.0;
    const double log_vocab = std::log(static_cast<double>(vocab_size));
    for (const auto& tc : types_of(term)) {
        if (tc.type == *type) return weight_of(tc, log_vocab);
    }
    return 0.0;
}

double TypeStore::type_similarity(const TermId& e1, const TermId& e2,
                                  std::size_t vocab_size) const {
    const auto a = types_of(e1);
    const auto b = types_of(e2);
    if (a.empty() && b.empty()) return 0.0;
    const double log_vocab = std::log(static_cast<double>(vocab_size));
    double min_sum = 0.0;
    double max_sum = 0.0;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < a.size() || j < b.size()) {
        if (j == b.size() || (i < a.size() && a[i].type < b[j].type)) {
            max_sum += weight_of(a[i], log_vocab);
            ++i;
        } else if (i == a.size() || b[j].type < a[i].type) {
            max_sum += weight_of(b[j], log_vocab);
            ++j;
        } else {
            const double wa = weight_of(a[i], log_vocab);
            const double wb = weight_of(b[j], log_vocab);
            min_sum += std::min(wa, wb);
            max_sum += std::max(wa, wb);
            ++i;
            ++j;
        }
    }
    if (max_sum <= 0.0) return 0.0;
    return min_sum / max_sum;
}

} // namespace taxgrow
