#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "taxgrow/types.hpp"

namespace taxgrow {

// One annotated entity occurrence: token span [start, end) plus the
// canonical term id (span tokens joined by "_").
struct EntitySpan {
    std::int32_t start = 0;
    std::int32_t end = 0;
    TermId term;

    friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
};

// One corpus sentence with POS tags and entity annotations.
struct SentenceRecord {
    std::vector<std::string> tokens;
    std::vector<std::string> pos;
    std::vector<EntitySpan> entities;
};

struct CorpusOptions {
    // Occurrences survive the POS filter iff their tag sequence contains
    // at least one of these tags.
    std::vector<std::string> noun_tags = {"NN", "NNS", "NNP", "NNPS"};
    // Lowercase context tokens when forming skip-patterns.
    bool lowercase_context = false;
};

// A lexical context around a term occurrence, the occurrence replaced by a
// placeholder. Serialized as left tokens, "__", right tokens, joined by
// single spaces (e.g. "pay __ tax").
struct SkipPattern {
    std::vector<std::string> left;
    std::vector<std::string> right;

    std::string str() const;

    friend bool operator==(const SkipPattern&, const SkipPattern&) = default;
};

// Ingestion diagnostics. Malformed input is counted and skipped, never fatal.
struct IngestStats {
    std::uint64_t lines_read = 0;
    std::uint64_t lines_unparsable = 0;   // broken JSON / wrong field shapes
    std::uint64_t records_seen = 0;
    std::uint64_t records_malformed = 0;  // length mismatch, bad span, bad term
    std::uint64_t records_dropped = 0;    // no entity survived the POS filter
    std::uint64_t records_kept = 0;
    std::uint64_t occurrences_seen = 0;
    std::uint64_t occurrences_dropped = 0;
    std::uint64_t occurrences_kept = 0;

    void merge(const IngestStats& other);
};

// Structural well-formedness: |pos| == |tokens|, spans in range, and each
// span's tokens joined by "_" equal to its TermId.
bool validate_record(const SentenceRecord& rec);

// Drops entity spans whose POS subsequence carries no noun tag; returns
// false when no span survives (the record is then dropped entirely).
bool filter_record(SentenceRecord& rec, const CorpusOptions& opts);

// Batch form of the occurrence filter. Malformed records are rejected
// per-record and counted in `stats`.
std::vector<SentenceRecord> filter_occurrences(std::vector<SentenceRecord> records,
                                               const CorpusOptions& opts,
                                               IngestStats* stats = nullptr);

// Extracts the skip-patterns of one occurrence: context shapes
// (left,right) in {(1,1),(2,1),(1,2),(2,2),(3,1),(1,3)}, in that order.
// Shapes that would cross a sentence boundary are skipped, so at most six
// patterns are returned.
std::vector<SkipPattern> extract_skip_patterns(const SentenceRecord& rec,
                                               const EntitySpan& occurrence,
                                               bool lowercase_context = false);

// Parses one corpus JSONL line:
//   {"tokens": [...], "pos": [...], "entities": [[start, end, "term"], ...]}
// Throws DataError on unparsable input.
SentenceRecord parse_corpus_line(std::string_view line);

// Immutable term/skip-pattern co-occurrence store. Terms are indexed in
// first-seen corpus order; patterns are indexed in lexicographic order of
// their serialized form, so the store contents do not depend on how the
// input stream was chunked across threads.
class FeatureStore {
public:
    using TermIndex = std::uint32_t;
    using PatternIndex = std::uint32_t;

    struct PatternCount {
        PatternIndex pattern;
        std::uint32_t count;
    };
    struct TermCount {
        TermIndex term;
        std::uint32_t count;
    };

    std::size_t vocab_size() const { return terms_.size(); }
    const std::vector<TermId>& candidate_terms() const { return terms_; }
    const TermId& term(TermIndex i) const { return terms_[i]; }
    std::optional<TermIndex> term_index(std::string_view term) const;

    std::size_t pattern_count() const { return patterns_.size(); }
    const std::string& pattern(PatternIndex i) const { return patterns_[i]; }
    std::optional<PatternIndex> pattern_index(std::string_view serialized) const;

    // X_{e,sk}; 0 when the pair is absent.
    std::uint32_t count(TermIndex term, PatternIndex pattern) const;
    // Sum of X over all terms for one pattern.
    std::uint64_t pattern_total(PatternIndex pattern) const { return totals_[pattern]; }

    std::span<const PatternCount> patterns_of(TermIndex term) const;
    std::span<const TermCount> terms_with(PatternIndex pattern) const;

    // Eq-style TF-IDF weight, natural log, clamped at zero:
    //   max(0, log(1 + X) * (log |V| - log sum_e' X)).
    double skip_weight(TermIndex term, PatternIndex pattern) const;

    // Full consistency check (totals vs. a rescan of both index directions);
    // used by tests. Throws DataError on violation.
    void check_consistency() const;

    friend bool operator==(const FeatureStore& a, const FeatureStore& b);

private:
    friend class FeatureStoreBuilder;
    friend void save_feature_cache(const FeatureStore&, const std::filesystem::path&,
                                   std::uint64_t, const CorpusOptions&);
    friend FeatureStore load_feature_cache(const std::filesystem::path&,
                                           std::uint64_t* corpus_checksum,
                                           CorpusOptions* opts);

    std::vector<TermId> terms_;
    std::unordered_map<std::string, TermIndex> term_index_;
    std::vector<std::string> patterns_;
    std::unordered_map<std::string, PatternIndex> pattern_index_;
    std::vector<std::uint64_t> totals_;

    // CSR in both directions, each sorted by the secondary index.
    std::vector<PatternCount> term_patterns_;
    std::vector<std::size_t> term_offsets_;
    std::vector<TermCount> pattern_terms_;
    std::vector<std::size_t> pattern_offsets_;

    void rebuild_lookup_tables();
};

// TermId/SkipPattern convenience form of FeatureStore::skip_weight.
double skip_weight(const FeatureStore& store, const TermId& term, const SkipPattern& pattern);

// Pull-based record source; returns false when exhausted.
using RecordSource = std::function<bool(SentenceRecord&)>;

// Validates, POS-filters, and counts skip-pattern co-occurrences over the
// stream. `threads` 0 means hardware concurrency; any thread count yields
// an identical store.
FeatureStore build_feature_store(const RecordSource& source,
                                 const CorpusOptions& opts = {},
                                 unsigned threads = 0,
                                 IngestStats* stats = nullptr);

FeatureStore build_feature_store(const std::vector<SentenceRecord>& records,
                                 const CorpusOptions& opts = {},
                                 unsigned threads = 0,
                                 IngestStats* stats = nullptr);

// Streams a JSONL corpus file. Unparsable lines are counted and skipped.
// Throws DataError if the file cannot be opened.
FeatureStore build_feature_store_from_jsonl(const std::filesystem::path& path,
                                            const CorpusOptions& opts = {},
                                            unsigned threads = 0,
                                            IngestStats* stats = nullptr);

// Binary feature cache (versioned header; little-endian fixed-width
// integers). The corpus checksum and extraction options are embedded so a
// stale cache is detectable.
void save_feature_cache(const FeatureStore& store, const std::filesystem::path& path,
                        std::uint64_t corpus_checksum, const CorpusOptions& opts);
FeatureStore load_feature_cache(const std::filesystem::path& path,
                                std::uint64_t* corpus_checksum = nullptr,
                                CorpusOptions* opts = nullptr);

// FNV-1a 64 over a file's bytes; used for stale-cache detection and run
// manifests. Throws DataError if the file cannot be read.
std::uint64_t file_checksum(const std::filesystem::path& path);

} // namespace taxgrow
