#include "taxgrow/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "taxgrow/errors.hpp"
#include "taxgrow/parallel.hpp"

namespace taxgrow {

namespace {

// (left, right) context shapes, in output order.
constexpr std::array<std::pair<int, int>, 6> kContextShapes = {
    {{1, 1}, {2, 1}, {1, 2}, {2, 2}, {3, 1}, {1, 3}}};

void append_token(std::string& buf, const std::string& token, bool lower) {
    if (!buf.empty()) buf.push_back(' ');
    if (!lower) {
        buf.append(token);
        return;
    }
    for (char c : token) buf.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
}

// Serialized pattern for shape (l, r) around [start, end); assumes the
// shape fits within the sentence.
void serialize_pattern(const SentenceRecord& rec, std::int32_t start, std::int32_t end,
                       int l, int r, bool lower, std::string& buf) {
    buf.clear();
    for (int i = l; i >= 1; --i) append_token(buf, rec.tokens[static_cast<std::size_t>(start - i)], lower);
    if (!buf.empty()) buf.push_back(' ');
    buf.append("__");
    for (int i = 0; i < r; ++i) append_token(buf, rec.tokens[static_cast<std::size_t>(end + i)], lower);
}

std::string join_underscore(const SentenceRecord& rec, std::int32_t start, std::int32_t end) {
    std::string out;
    for (std::int32_t i = start; i < end; ++i) {
        if (i > start) out.push_back('_');
        out.append(rec.tokens[static_cast<std::size_t>(i)]);
    }
    return out;
}

} // namespace

std::string SkipPattern::str() const {
    std::string out;
    for (const auto& t : left) {
        if (!out.empty()) out.push_back(' ');
        out.append(t);
    }
    if (!out.empty()) out.push_back(' ');
    out.append("__");
    for (const auto& t : right) {
        out.push_back(' ');
        out.append(t);
    }
    return out;
}

void IngestStats::merge(const IngestStats& other) {
    lines_read += other.lines_read;
    lines_unparsable += other.lines_unparsable;
    records_seen += other.records_seen;
    records_malformed += other.records_malformed;
    records_dropped += other.records_dropped;
    records_kept += other.records_kept;
    occurrences_seen += other.occurrences_seen;
    occurrences_dropped += other.occurrences_dropped;
    occurrences_kept += other.occurrences_kept;
}

bool validate_record(const SentenceRecord& rec) {
    if (rec.pos.size() != rec.tokens.size()) return false;
    const auto len = static_cast<std::int32_t>(rec.tokens.size());
    for (const auto& span : rec.entities) {
        if (span.start < 0 || span.start >= span.end || span.end > len) return false;
        if (span.term != join_underscore(rec, span.start, span.end)) return false;
    }
    return true;
}

bool filter_record(SentenceRecord& rec, const CorpusOptions& opts) {
    auto has_noun = [&](const EntitySpan& span) {
        for (std::int32_t i = span.start; i < span.end; ++i) {
            const auto& tag = rec.pos[static_cast<std::size_t>(i)];
            for (const auto& noun : opts.noun_tags) {
                if (tag == noun) return true;
            }
        }
        return false;
    };
    std::erase_if(rec.entities, [&](const EntitySpan& s) { return !has_noun(s); });
    return !rec.entities.empty();
}

std::vector<SentenceRecord> filter_occurrences(std::vector<SentenceRecord> records,
                                               const CorpusOptions& opts, IngestStats* stats) {
    IngestStats local;
    std::vector<SentenceRecord> out;
    out.reserve(records.size());
    for (auto& rec : records) {
        ++local.records_seen;
        local.occurrences_seen += rec.entities.size();
        if (!validate_record(rec)) {
            ++local.records_malformed;
            continue;
        }
        const std::size_t before = rec.entities.size();
        if (!filter_record(rec, opts)) {
            ++local.records_dropped;
            local.occurrences_dropped += before;
            continue;
        }
        local.occurrences_dropped += before - rec.entities.size();
        local.occurrences_kept += rec.entities.size();
        ++local.records_kept;
        out.push_back(std::move(rec));
    }
    if (stats) stats->merge(local);
    return out;
}

std::vector<SkipPattern> extract_skip_patterns(const SentenceRecord& rec,
                                               const EntitySpan& occurrence,
                                               bool lowercase_context) {
    const auto len = static_cast<std::int32_t>(rec.tokens.size());
    std::vector<SkipPattern> out;
    out.reserve(kContextShapes.size());
    for (auto [l, r] : kContextShapes) {
        if (occurrence.start - l < 0 || occurrence.end + r > len) continue;
        SkipPattern p;
        p.left.reserve(static_cast<std::size_t>(l));
        p.right.reserve(static_cast<std::size_t>(r));
        for (int i = l; i >= 1; --i) {
            std::string tok = rec.tokens[static_cast<std::size_t>(occurrence.start - i)];
            if (lowercase_context) {
                for (auto& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            }
            p.left.push_back(std::move(tok));
        }
        for (int i = 0; i < r; ++i) {
            std::string tok = rec.tokens[static_cast<std::size_t>(occurrence.end + i)];
            if (lowercase_context) {
                for (auto& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            }
            p.right.push_back(std::move(tok));
        }
        out.push_back(std::move(p));
    }
    return out;
}

SentenceRecord parse_corpus_line(std::string_view line) {
    nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw DataError("corpus line is not a JSON object");
    SentenceRecord rec;
    const auto tokens = doc.find("tokens");
    const auto pos = doc.find("pos");
    const auto entities = doc.find("entities");
    if (tokens == doc.end() || !tokens->is_array() || pos == doc.end() || !pos->is_array() ||
        entities == doc.end() || !entities->is_array()) {
        throw DataError("corpus line lacks tokens/pos/entities arrays");
    }
    rec.tokens.reserve(tokens->size());
    for (const auto& t : *tokens) {
        if (!t.is_string()) throw DataError("corpus token is not a string");
        rec.tokens.push_back(t.get<std::string>());
    }
    rec.pos.reserve(pos->size());
    for (const auto& t : *pos) {
        if (!t.is_string()) throw DataError("corpus POS tag is not a string");
        rec.pos.push_back(t.get<std::string>());
    }
    rec.entities.reserve(entities->size());
    for (const auto& e : *entities) {
        if (!e.is_array() || e.size() != 3 || !e[0].is_number_integer() ||
            !e[1].is_number_integer() || !e[2].is_string()) {
            throw DataError("corpus entity is not [start, end, term]");
        }
        rec.entities.push_back(EntitySpan{e[0].get<std::int32_t>(), e[1].get<std::int32_t>(),
                                          e[2].get<std::string>()});
    }
    return rec;
}

// ---------------------------------------------------------------------------
// FeatureStore queries
// ---------------------------------------------------------------------------

std::optional<FeatureStore::TermIndex> FeatureStore::term_index(std::string_view term) const {
    auto it = term_index_.find(std::string(term));
    if (it == term_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<FeatureStore::PatternIndex> FeatureStore::pattern_index(std::string_view serialized) const {
    auto it = pattern_index_.find(std::string(serialized));
    if (it == pattern_index_.end()) return std::nullopt;
    return it->second;
}

std::span<const FeatureStore::PatternCount> FeatureStore::patterns_of(TermIndex term) const {
    return {term_patterns_.data() + term_offsets_[term],
            term_offsets_[term + 1] - term_offsets_[term]};
}

std::span<const FeatureStore::TermCount> FeatureStore::terms_with(PatternIndex pattern) const {
    return {pattern_terms_.data() + pattern_offsets_[pattern],
            pattern_offsets_[pattern + 1] - pattern_offsets_[pattern]};
}

std::uint32_t FeatureStore::count(TermIndex term, PatternIndex pattern) const {
    auto row = patterns_of(term);
    auto it = std::lower_bound(row.begin(), row.end(), pattern,
                               [](const PatternCount& pc, PatternIndex p) { return pc.pattern < p; });
    if (it == row.end() || it->pattern != pattern) return 0;
    return it->count;
}

double FeatureStore::skip_weight(TermIndex term, PatternIndex pattern) const {
    const std::uint32_t x = count(term, pattern);
    if (x == 0) return 0.0;
    const double bracket =
        std::log(static_cast<double>(vocab_size())) - std::log(static_cast<double>(totals_[pattern]));
    const double w = std::log1p(static_cast<double>(x)) * bracket;
    return w > 0.0 ? w : 0.0;
}

double skip_weight(const FeatureStore& store, const TermId& term, const SkipPattern& pattern) {
    const auto t = store.term_index(term);
    if (!t) return 0.0;
    const auto p = store.pattern_index(pattern.str());
    if (!p) return 0.0;
    return store.skip_weight(*t, *p);
}

void FeatureStore::rebuild_lookup_tables() {
    term_index_.clear();
    term_index_.reserve(terms_.size());
    for (std::size_t i = 0; i < terms_.size(); ++i) term_index_[terms_[i]] = static_cast<TermIndex>(i);
    pattern_index_.clear();
    pattern_index_.reserve(patterns_.size());
    for (std::size_t i = 0; i < patterns_.size(); ++i) pattern_index_[patterns_[i]] = static_cast<PatternIndex>(i);
}

void FeatureStore::check_consistency() const {
    if (terms_.size() != vocab_size() || term_offsets_.size() != terms_.size() + 1 ||
        pattern_offsets_.size() != patterns_.size() + 1 || totals_.size() != patterns_.size()) {
        throw DataError("feature store: inconsistent table sizes");
    }
    std::vector<std::uint64_t> rescan(patterns_.size(), 0);
    for (std::size_t t = 0; t < terms_.size(); ++t) {
        auto row = patterns_of(static_cast<TermIndex>(t));
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (row[i].count == 0) throw DataError("feature store: zero count stored");
            if (i > 0 && row[i - 1].pattern >= row[i].pattern)
                throw DataError("feature store: term row not strictly sorted");
            rescan[row[i].pattern] += row[i].count;
        }
    }
    if (rescan != totals_) throw DataError("feature store: totals do not match rescan");
    std::vector<std::uint64_t> inverted(patterns_.size(), 0);
    std::size_t entries = 0;
    for (std::size_t p = 0; p < patterns_.size(); ++p) {
        auto col = terms_with(static_cast<PatternIndex>(p));
        for (std::size_t i = 0; i < col.size(); ++i) {
            if (i > 0 && col[i - 1].term >= col[i].term)
                throw DataError("feature store: pattern column not strictly sorted");
            if (count(col[i].term, static_cast<PatternIndex>(p)) != col[i].count)
                throw DataError("feature store: CSR directions disagree");
            inverted[p] += col[i].count;
            ++entries;
        }
    }
    if (inverted != totals_ || entries != term_patterns_.size())
        throw DataError("feature store: inverted index does not match totals");
}

bool operator==(const FeatureStore& a, const FeatureStore& b) {
    return a.terms_ == b.terms_ && a.patterns_ == b.patterns_ && a.totals_ == b.totals_ &&
           a.term_patterns_.size() == b.term_patterns_.size() &&
           std::equal(a.term_patterns_.begin(), a.term_patterns_.end(), b.term_patterns_.begin(),
                      [](const FeatureStore::PatternCount& x, const FeatureStore::PatternCount& y) {
                          return x.pattern == y.pattern && x.count == y.count;
                      }) &&
           a.term_offsets_ == b.term_offsets_;
}

// ---------------------------------------------------------------------------
// Builder: worker-local shards with an associative merge, then a
// deterministic finalize (terms by first-seen position, patterns sorted).
// ---------------------------------------------------------------------------

namespace {

struct Shard {
    std::unordered_map<std::string, std::uint32_t> term_ids;
    std::vector<std::string> terms;
    std::vector<std::uint64_t> first_seen;
    std::unordered_map<std::string, std::uint32_t> pattern_ids;
    std::vector<std::string> patterns;
    std::unordered_map<std::uint64_t, std::uint64_t> counts; // (term << 32) | pattern
    IngestStats stats;
    std::string pattern_buf;

    std::uint32_t intern_term(const std::string& term, std::uint64_t seen_key) {
        auto [it, inserted] = term_ids.try_emplace(term, static_cast<std::uint32_t>(terms.size()));
        if (inserted) {
            terms.push_back(term);
            first_seen.push_back(seen_key);
        } else if (seen_key < first_seen[it->second]) {
            first_seen[it->second] = seen_key;
        }
        return it->second;
    }

    std::uint32_t intern_pattern(const std::string& pattern) {
        auto [it, inserted] = pattern_ids.try_emplace(pattern, static_cast<std::uint32_t>(patterns.size()));
        if (inserted) patterns.push_back(pattern);
        return it->second;
    }

    void add(SentenceRecord& rec, std::uint64_t stream_index, const CorpusOptions& opts) {
        ++stats.records_seen;
        stats.occurrences_seen += rec.entities.size();
        if (!validate_record(rec)) {
            ++stats.records_malformed;
            return;
        }
        const std::size_t before = rec.entities.size();
        if (!filter_record(rec, opts)) {
            ++stats.records_dropped;
            stats.occurrences_dropped += before;
            return;
        }
        stats.occurrences_dropped += before - rec.entities.size();
        stats.occurrences_kept += rec.entities.size();
        ++stats.records_kept;

        const auto len = static_cast<std::int32_t>(rec.tokens.size());
        for (std::size_t e = 0; e < rec.entities.size(); ++e) {
            const EntitySpan& span = rec.entities[e];
            const std::uint64_t seen_key =
                (stream_index << 16) | std::min<std::uint64_t>(e, 0xffff);
            const std::uint32_t term = intern_term(span.term, seen_key);
            for (auto [l, r] : kContextShapes) {
                if (span.start - l < 0 || span.end + r > len) continue;
                serialize_pattern(rec, span.start, span.end, l, r, opts.lowercase_context, pattern_buf);
                const std::uint32_t pat = intern_pattern(pattern_buf);
                ++counts[(static_cast<std::uint64_t>(term) << 32) | pat];
            }
        }
    }
};

} // namespace

// Friend of FeatureStore; folds worker shards and builds the immutable store.
class FeatureStoreBuilder {
public:
    static FeatureStore finalize(std::vector<Shard>& shards, IngestStats* stats);
};

FeatureStore FeatureStoreBuilder::finalize(std::vector<Shard>& shards, IngestStats* stats) {
    // Fold every shard into shard 0's id space. Count addition and
    // first-seen minimum are commutative, so fold order cannot matter.
    if (shards.empty()) shards.emplace_back();
    Shard& g = shards[0];
    for (std::size_t s = 1; s < shards.size(); ++s) {
        Shard& local = shards[s];
        g.stats.merge(local.stats);
        std::vector<std::uint32_t> term_map(local.terms.size());
        for (std::size_t i = 0; i < local.terms.size(); ++i)
            term_map[i] = g.intern_term(local.terms[i], local.first_seen[i]);
        std::vector<std::uint32_t> pat_map(local.patterns.size());
        for (std::size_t i = 0; i < local.patterns.size(); ++i)
            pat_map[i] = g.intern_pattern(local.patterns[i]);
        for (const auto& [key, n] : local.counts) {
            const std::uint32_t t = term_map[key >> 32];
            const std::uint32_t p = pat_map[key & 0xffffffffu];
            g.counts[(static_cast<std::uint64_t>(t) << 32) | p] += n;
        }
        local = Shard{};
    }
    if (stats) stats->merge(g.stats);

    FeatureStore store;
    // Terms ordered by first appearance in the stream.
    std::vector<std::uint32_t> term_order(g.terms.size());
    std::iota(term_order.begin(), term_order.end(), 0u);
    std::sort(term_order.begin(), term_order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (g.first_seen[a] != g.first_seen[b]) return g.first_seen[a] < g.first_seen[b];
        return g.terms[a] < g.terms[b];
    });
    std::vector<std::uint32_t> term_rank(g.terms.size());
    store.terms_.reserve(g.terms.size());
    for (std::uint32_t rank = 0; rank < term_order.size(); ++rank) {
        term_rank[term_order[rank]] = rank;
        store.terms_.push_back(std::move(g.terms[term_order[rank]]));
    }
    // Patterns ordered lexicographically.
    std::vector<std::uint32_t> pat_order(g.patterns.size());
    std::iota(pat_order.begin(), pat_order.end(), 0u);
    std::sort(pat_order.begin(), pat_order.end(),
              [&](std::uint32_t a, std::uint32_t b) { return g.patterns[a] < g.patterns[b]; });
    std::vector<std::uint32_t> pat_rank(g.patterns.size());
    store.patterns_.reserve(g.patterns.size());
    for (std::uint32_t rank = 0; rank < pat_order.size(); ++rank) {
        pat_rank[pat_order[rank]] = rank;
        store.patterns_.push_back(std::move(g.patterns[pat_order[rank]]));
    }

    std::vector<std::tuple<std::uint32_t, std::uint32_t, std::uint64_t>> triples;
    triples.reserve(g.counts.size());
    for (const auto& [key, n] : g.counts)
        triples.emplace_back(term_rank[key >> 32], pat_rank[key & 0xffffffffu], n);
    g.counts.clear();
    std::sort(triples.begin(), triples.end());

    store.term_offsets_.assign(store.terms_.size() + 1, 0);
    store.term_patterns_.reserve(triples.size());
    store.totals_.assign(store.patterns_.size(), 0);
    for (const auto& [t, p, n] : triples) {
        ++store.term_offsets_[t + 1];
        store.term_patterns_.push_back({p, static_cast<std::uint32_t>(n)});
        store.totals_[p] += n;
    }
    std::partial_sum(store.term_offsets_.begin(), store.term_offsets_.end(), store.term_offsets_.begin());

    // Inverted direction.
    store.pattern_offsets_.assign(store.patterns_.size() + 1, 0);
    for (const auto& [t, p, n] : triples) ++store.pattern_offsets_[p + 1];
    std::partial_sum(store.pattern_offsets_.begin(), store.pattern_offsets_.end(),
                     store.pattern_offsets_.begin());
    store.pattern_terms_.resize(triples.size());
    std::vector<std::size_t> cursor(store.pattern_offsets_.begin(), store.pattern_offsets_.end() - 1);
    for (const auto& [t, p, n] : triples)
        store.pattern_terms_[cursor[p]++] = {t, static_cast<std::uint32_t>(n)};

    store.rebuild_lookup_tables();
    return store;
}

namespace {

// Generic pump: workers pull batches from a shared producer and feed their
// own shard; `process` turns one pulled item into zero or one record adds.
template <typename Item, typename Pull, typename Process>
FeatureStore pump_build(const Pull& pull, const Process& process, unsigned threads,
                        IngestStats* stats) {
    const unsigned n = effective_threads(threads);
    std::vector<Shard> shards(n);
    auto worker = [&](unsigned w) {
        std::vector<Item> batch;
        while (pull(batch)) {
            for (auto& item : batch) process(shards[w], item);
        }
    };
    if (n == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n);
        for (unsigned w = 0; w < n; ++w) pool.emplace_back(worker, w);
        for (auto& t : pool) t.join();
    }
    return FeatureStoreBuilder::finalize(shards, stats);
}

constexpr std::size_t kBatchSize = 256;

} // namespace

FeatureStore build_feature_store(const RecordSource& source, const CorpusOptions& opts,
                                 unsigned threads, IngestStats* stats) {
    using Item = std::pair<std::uint64_t, SentenceRecord>;
    std::mutex source_mutex;
    std::uint64_t next_index = 0;
    bool exhausted = false;
    auto pull = [&](std::vector<Item>& out) {
        std::lock_guard lock(source_mutex);
        out.clear();
        if (exhausted) return false;
        SentenceRecord rec;
        while (out.size() < kBatchSize) {
            if (!source(rec)) {
                exhausted = true;
                break;
            }
            out.emplace_back(next_index++, std::move(rec));
            rec = SentenceRecord{};
        }
        return !out.empty();
    };
    auto process = [&](Shard& shard, Item& item) { shard.add(item.second, item.first, opts); };
    return pump_build<Item>(pull, process, threads, stats);
}

FeatureStore build_feature_store(const std::vector<SentenceRecord>& records,
                                 const CorpusOptions& opts, unsigned threads, IngestStats* stats) {
    std::size_t next = 0;
    RecordSource source = [&](SentenceRecord& out) {
        if (next >= records.size()) return false;
        out = records[next++];
        return true;
    };
    return build_feature_store(source, opts, threads, stats);
}

FeatureStore build_feature_store_from_jsonl(const std::filesystem::path& path,
                                            const CorpusOptions& opts, unsigned threads,
                                            IngestStats* stats) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open corpus file: " + path.string());
    using Item = std::pair<std::uint64_t, std::string>;
    std::mutex source_mutex;
    std::uint64_t line_no = 0;
    IngestStats line_stats;
    auto pull = [&](std::vector<Item>& out) {
        std::lock_guard lock(source_mutex);
        out.clear();
        std::string line;
        while (out.size() < kBatchSize && std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            ++line_stats.lines_read;
            out.emplace_back(line_no, std::move(line));
            line = std::string{};
        }
        return !out.empty();
    };
    auto process = [&](Shard& shard, Item& item) {
        SentenceRecord rec;
        try {
            rec = parse_corpus_line(item.second);
        } catch (const DataError&) {
            ++shard.stats.lines_unparsable;
            return;
        }
        shard.add(rec, item.first, opts);
    };
    FeatureStore store = pump_build<Item>(pull, process, threads, stats);
    if (stats) stats->merge(line_stats);
    return store;
}

// ---------------------------------------------------------------------------
// Binary cache + checksums
// ---------------------------------------------------------------------------

namespace {

constexpr char kCacheMagic[4] = {'T', 'G', 'F', 'C'};
constexpr std::uint32_t kCacheVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

void write_str(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DataError("feature cache: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw DataError("feature cache: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

std::string read_str(std::istream& in) {
    const std::uint32_t len = read_u32(in);
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) throw DataError("feature cache: truncated string");
    return s;
}

} // namespace

void save_feature_cache(const FeatureStore& store, const std::filesystem::path& path,
                        std::uint64_t corpus_checksum, const CorpusOptions& opts) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open feature cache for writing: " + path.string());
    out.write(kCacheMagic, 4);
    write_u32(out, kCacheVersion);
    write_u64(out, corpus_checksum);
    write_u32(out, opts.lowercase_context ? 1 : 0);
    write_u32(out, static_cast<std::uint32_t>(opts.noun_tags.size()));
    for (const auto& t : opts.noun_tags) write_str(out, t);
    write_u64(out, store.terms_.size());
    for (const auto& t : store.terms_) write_str(out, t);
    write_u64(out, store.patterns_.size());
    for (const auto& p : store.patterns_) write_str(out, p);
    for (std::size_t t = 0; t < store.terms_.size(); ++t) {
        auto row = store.patterns_of(static_cast<FeatureStore::TermIndex>(t));
        write_u64(out, row.size());
        for (const auto& pc : row) {
            write_u32(out, pc.pattern);
            write_u32(out, pc.count);
        }
    }
    if (!out) throw DataError("failed writing feature cache: " + path.string());
}

FeatureStore load_feature_cache(const std::filesystem::path& path,
                                std::uint64_t* corpus_checksum, CorpusOptions* opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open feature cache: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCacheMagic, 4) != 0)
        throw DataError("feature cache: bad magic in " + path.string());
    if (read_u32(in) != kCacheVersion) throw DataError("feature cache: unsupported version");
    const std::uint64_t checksum = read_u64(in);
    if (corpus_checksum) *corpus_checksum = checksum;
    CorpusOptions stored;
    stored.lowercase_context = read_u32(in) != 0;
    stored.noun_tags.clear();
    const std::uint32_t tag_count = read_u32(in);
    for (std::uint32_t i = 0; i < tag_count; ++i) stored.noun_tags.push_back(read_str(in));
    if (opts) *opts = stored;

    FeatureStore store;
    const std::uint64_t term_count = read_u64(in);
    store.terms_.reserve(term_count);
    for (std::uint64_t i = 0; i < term_count; ++i) store.terms_.push_back(read_str(in));
    const std::uint64_t pattern_count = read_u64(in);
    store.patterns_.reserve(pattern_count);
    for (std::uint64_t i = 0; i < pattern_count; ++i) store.patterns_.push_back(read_str(in));
    store.totals_.assign(pattern_count, 0);
    store.term_offsets_.assign(term_count + 1, 0);
    for (std::uint64_t t = 0; t < term_count; ++t) {
        const std::uint64_t row_len = read_u64(in);
        store.term_offsets_[t + 1] = store.term_offsets_[t] + row_len;
        for (std::uint64_t i = 0; i < row_len; ++i) {
            const std::uint32_t pat = read_u32(in);
            const std::uint32_t cnt = read_u32(in);
            if (pat >= pattern_count) throw DataError("feature cache: pattern index out of range");
            store.term_patterns_.push_back({pat, cnt});
            store.totals_[pat] += cnt;
        }
    }
    store.pattern_offsets_.assign(pattern_count + 1, 0);
    for (const auto& pc : store.term_patterns_) ++store.pattern_offsets_[pc.pattern + 1];
    std::partial_sum(store.pattern_offsets_.begin(), store.pattern_offsets_.end(),
                     store.pattern_offsets_.begin());
    store.pattern_terms_.resize(store.term_patterns_.size());
    std::vector<std::size_t> cursor(store.pattern_offsets_.begin(), store.pattern_offsets_.end() - 1);
    for (std::uint64_t t = 0; t < term_count; ++t) {
        auto row = store.patterns_of(static_cast<FeatureStore::TermIndex>(t));
        for (const auto& pc : row)
            store.pattern_terms_[cursor[pc.pattern]++] = {static_cast<FeatureStore::TermIndex>(t), pc.count};
    }
    store.rebuild_lookup_tables();
    return store;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file for checksum: " + path.string());
    std::uint64_t hash = 1469598103934665603ull; // FNV offset basis
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 1099511628211ull; // FNV prime
        }
    }
    return hash;
}

} // namespace taxgrow
