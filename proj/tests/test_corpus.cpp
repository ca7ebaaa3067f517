#include <doctest.h>

#include <cmath>
#include <random>

#include "support/oracles.hpp"
#include "support/planted.hpp"
#include "taxgrow/corpus.hpp"
#include "taxgrow/errors.hpp"

using namespace taxgrow;
using namespace taxgrow::testsupport;

namespace {

SentenceRecord record(std::vector<std::string> tokens, std::vector<std::string> pos,
                      std::vector<EntitySpan> entities) {
    return SentenceRecord{std::move(tokens), std::move(pos), std::move(entities)};
}

std::vector<std::string> pattern_strings(const std::vector<SkipPattern>& ps) {
    std::vector<std::string> out;
    for (const auto& p : ps) out.push_back(p.str());
    return out;
}

} // namespace

TEST_CASE("occurrence filter keeps noun-tagged spans") {
    CorpusOptions opts;

    SUBCASE("single NNP tag kept") {
        auto recs = filter_occurrences(
            {record({"visit", "Paris"}, {"VB", "NNP"}, {{1, 2, "Paris"}})}, opts);
        REQUIRE(recs.size() == 1);
        CHECK(recs[0].entities.size() == 1);
    }
    SUBCASE("verb-only span removed and empty record dropped") {
        IngestStats stats;
        auto recs = filter_occurrences(
            {record({"they", "run", "fast"}, {"PRP", "VB", "VBD"}, {{1, 3, "run_fast"}})}, opts,
            &stats);
        CHECK(recs.empty());
        CHECK(stats.records_dropped == 1);
        CHECK(stats.occurrences_dropped == 1);
    }
    SUBCASE("one noun tag in a multi-token span suffices") {
        auto recs = filter_occurrences(
            {record({"heavy", "metals", "leak"}, {"JJ", "NNS", "VB"}, {{0, 2, "heavy_metals"}})},
            opts);
        REQUIRE(recs.size() == 1);
        CHECK(recs[0].entities.size() == 1);
    }
    SUBCASE("mixed record keeps only the noun span") {
        auto recs = filter_occurrences({record({"they", "run", "to", "Boston"},
                                               {"PRP", "VB", "TO", "NNP"},
                                               {{1, 2, "run"}, {3, 4, "Boston"}})},
                                       opts);
        REQUIRE(recs.size() == 1);
        REQUIRE(recs[0].entities.size() == 1);
        CHECK(recs[0].entities[0].term == "Boston");
    }
    SUBCASE("malformed records rejected per record, stream continues") {
        IngestStats stats;
        auto recs = filter_occurrences(
            {
                record({"a"}, {"NN", "NN"}, {{0, 1, "a"}}),              // length mismatch
                record({"a", "b"}, {"NN", "NN"}, {{1, 3, "b"}}),         // span out of range
                record({"a", "b"}, {"NN", "NN"}, {{0, 1, "mismatch"}}),  // term != joined span
                record({"ok", "term"}, {"NN", "NN"}, {{1, 2, "term"}}),  // fine
            },
            opts, &stats);
        CHECK(stats.records_malformed == 3);
        REQUIRE(recs.size() == 1);
        CHECK(recs[0].entities[0].term == "term");
    }
    SUBCASE("custom noun tag set is honored") {
        CorpusOptions custom;
        custom.noun_tags = {"FOO"};
        auto recs = filter_occurrences(
            {record({"visit", "Paris"}, {"VB", "NNP"}, {{1, 2, "Paris"}})}, custom);
        CHECK(recs.empty());
    }
}

TEST_CASE("skip-pattern extraction") {
    SUBCASE("the pay-tax sentence") {
        auto rec = record({"We", "need", "to", "pay", "California", "tax", "."},
                          {"PRP", "VB", "TO", "VB", "NNP", "NN", "."}, {{4, 5, "California"}});
        auto got = pattern_strings(extract_skip_patterns(rec, rec.entities[0]));
        CHECK(std::find(got.begin(), got.end(), "pay __ tax") != got.end());
        CHECK(got.size() == 5); // (1,3) crosses the right boundary
    }
    SUBCASE("boundary shapes are skipped, order is fixed") {
        auto rec = record({"a", "b", "T", "c", "d"}, {"DT", "DT", "NN", "DT", "DT"},
                          {{2, 3, "T"}});
        auto got = pattern_strings(extract_skip_patterns(rec, rec.entities[0]));
        const std::vector<std::string> expected = {"b __ c", "a b __ c", "b __ c d",
                                                   "a b __ c d"};
        CHECK(got == expected);
    }
    SUBCASE("span at sentence start yields nothing") {
        auto rec = record({"T", "c", "d"}, {"NN", "DT", "DT"}, {{0, 1, "T"}});
        CHECK(extract_skip_patterns(rec, rec.entities[0]).empty());
    }
    SUBCASE("multi-token span uses one placeholder") {
        auto rec = record({"the", "Baja", "California", "coast"}, {"DT", "NNP", "NNP", "NN"},
                          {{1, 3, "Baja_California"}});
        auto got = pattern_strings(extract_skip_patterns(rec, rec.entities[0]));
        CHECK(got[0] == "the __ coast");
    }
    SUBCASE("lowercase switch applies to context only") {
        auto rec = record({"The", "Paris", "Region"}, {"DT", "NNP", "NN"}, {{1, 2, "Paris"}});
        auto got = pattern_strings(extract_skip_patterns(rec, rec.entities[0], true));
        CHECK(got[0] == "the __ region");
    }
    SUBCASE("never more than six patterns") {
        std::mt19937_64 rng(5);
        for (int trial = 0; trial < 50; ++trial) {
            auto toy = random_toy(rng);
            for (const auto& rec : toy.records) {
                for (const auto& span : rec.entities)
                    CHECK(extract_skip_patterns(rec, span).size() <= 6);
            }
        }
    }
    SUBCASE("matches the independent pattern walker") {
        std::mt19937_64 rng(6);
        auto toy = random_toy(rng);
        for (const auto& rec : toy.records) {
            for (const auto& span : rec.entities) {
                CHECK(pattern_strings(extract_skip_patterns(rec, span)) ==
                      oracle_patterns(rec.tokens, span.start, span.end, false));
            }
        }
    }
}

TEST_CASE("feature store counting") {
    CorpusOptions opts;

    SUBCASE("single occurrence counts once per pattern") {
        auto store = build_feature_store(
            std::vector<SentenceRecord>{
                record({"in", "Texas", "today"}, {"IN", "NNP", "NN"}, {{1, 2, "Texas"}})},
            opts, 1);
        REQUIRE(store.vocab_size() == 1);
        auto t = store.term_index("Texas");
        REQUIRE(t.has_value());
        for (const auto& pc : store.patterns_of(*t)) CHECK(pc.count == 1);
        CHECK(store.patterns_of(*t).size() == 1); // only (1,1) fits a 3-token sentence
    }
    SUBCASE("same context twice counts twice") {
        auto rec = record({"in", "Texas", "today"}, {"IN", "NNP", "NN"}, {{1, 2, "Texas"}});
        auto store = build_feature_store(std::vector<SentenceRecord>{rec, rec}, opts, 1);
        auto t = store.term_index("Texas");
        auto p = store.pattern_index("in __ today");
        REQUIRE(t.has_value());
        REQUIRE(p.has_value());
        CHECK(store.count(*t, *p) == 2);
        CHECK(store.pattern_total(*p) == 2);
    }
    SUBCASE("toy corpus equals a brute-force enumeration") {
        std::vector<SentenceRecord> recs = {
            record({"go", "to", "Austin", "now", "."}, {"VB", "TO", "NNP", "RB", "."},
                   {{2, 3, "Austin"}}),
            record({"go", "to", "Dallas", "now", "."}, {"VB", "TO", "NNP", "RB", "."},
                   {{2, 3, "Dallas"}}),
            record({"leave", "Austin", "Dallas", "fast"}, {"VB", "NNP", "NNP", "RB"},
                   {{1, 2, "Austin"}, {2, 3, "Dallas"}}),
        };
        auto store = build_feature_store(recs, opts, 1);
        auto world = oracle_ingest(recs, opts.noun_tags, false);
        REQUIRE(store.candidate_terms() == world.vocab);
        std::size_t checked = 0;
        for (const auto& [term, row] : world.counts) {
            const auto t = store.term_index(term);
            REQUIRE(t.has_value());
            for (const auto& [pattern, x] : row) {
                const auto p = store.pattern_index(pattern);
                REQUIRE(p.has_value());
                CHECK(store.count(*t, *p) == x);
                ++checked;
            }
        }
        CHECK(checked > 6);
        std::size_t stored = 0;
        for (std::size_t t = 0; t < store.vocab_size(); ++t)
            stored += store.patterns_of(static_cast<FeatureStore::TermIndex>(t)).size();
        CHECK(stored == checked);
    }
    SUBCASE("empty stream gives an empty store") {
        auto store = build_feature_store(std::vector<SentenceRecord>{}, opts, 1);
        CHECK(store.vocab_size() == 0);
        CHECK(store.pattern_count() == 0);
    }
    SUBCASE("candidate order is first-seen order") {
        std::vector<SentenceRecord> recs = {
            record({"x", "bbb", "y"}, {"X", "NN", "X"}, {{1, 2, "bbb"}}),
            record({"x", "aaa", "y"}, {"X", "NN", "X"}, {{1, 2, "aaa"}}),
            record({"x", "bbb", "y"}, {"X", "NN", "X"}, {{1, 2, "bbb"}}),
        };
        auto store = build_feature_store(recs, opts, 1);
        CHECK(store.candidate_terms() == std::vector<TermId>{"bbb", "aaa"});
    }
}

TEST_CASE("skip weight values") {
    CorpusOptions opts;
    // X(target, "pay __ tax") = 3, another term contributes 2, and eight
    // more one-occurrence terms bring |V| to 10.
    std::vector<SentenceRecord> recs;
    for (int i = 0; i < 3; ++i)
        recs.push_back(record({"pay", "alpha", "tax"}, {"VB", "NN", "NN"}, {{1, 2, "alpha"}}));
    for (int i = 0; i < 2; ++i)
        recs.push_back(record({"pay", "beta", "tax"}, {"VB", "NN", "NN"}, {{1, 2, "beta"}}));
    for (int i = 0; i < 8; ++i) {
        const std::string term = "t" + std::to_string(i);
        recs.push_back(record({"ctx" + std::to_string(i), term, "end"}, {"X", "NN", "X"},
                              {{1, 2, term}}));
    }
    auto store = build_feature_store(recs, opts, 1);
    REQUIRE(store.vocab_size() == 10);

    SUBCASE("absent pair weighs zero") {
        CHECK(skip_weight(store, "alpha", SkipPattern{{"no"}, {"where"}}) == 0.0);
        CHECK(skip_weight(store, "ghost", SkipPattern{{"pay"}, {"tax"}}) == 0.0);
    }
    SUBCASE("ln4 * ln2 for X=3, total=5, |V|=10") {
        const double got = skip_weight(store, "alpha", SkipPattern{{"pay"}, {"tax"}});
        const double expected = std::log(4.0) * (std::log(10.0) - std::log(5.0));
        CHECK(got == doctest::Approx(expected).epsilon(1e-12));
        CHECK(got == doctest::Approx(0.9609060278364028).epsilon(1e-12));
    }
    SUBCASE("negative bracket clamps to zero") {
        // shrink |V| to 4 while keeping the pattern total at 8
        std::vector<SentenceRecord> small;
        for (int i = 0; i < 6; ++i)
            small.push_back(record({"pay", "alpha", "tax"}, {"VB", "NN", "NN"}, {{1, 2, "alpha"}}));
        for (int i = 0; i < 2; ++i)
            small.push_back(record({"pay", "beta", "tax"}, {"VB", "NN", "NN"}, {{1, 2, "beta"}}));
        small.push_back(record({"c1", "gamma", "z"}, {"X", "NN", "X"}, {{1, 2, "gamma"}}));
        small.push_back(record({"c2", "delta", "z"}, {"X", "NN", "X"}, {{1, 2, "delta"}}));
        auto s = build_feature_store(small, opts, 1);
        REQUIRE(s.vocab_size() == 4);
        auto p = s.pattern_index("pay __ tax");
        REQUIRE(p.has_value());
        CHECK(s.pattern_total(*p) == 8);
        CHECK(skip_weight(s, "alpha", SkipPattern{{"pay"}, {"tax"}}) == 0.0);
    }
    SUBCASE("weight is nondecreasing in the count, totals held fixed") {
        // same total (5) but X goes 3 -> 4
        std::vector<SentenceRecord> shifted;
        for (int i = 0; i < 4; ++i)
            shifted.push_back(record({"pay", "alpha", "tax"}, {"VB", "NN", "NN"}, {{1, 2, "alpha"}}));
        shifted.push_back(record({"pay", "beta", "tax"}, {"VB", "NN", "NN"}, {{1, 2, "beta"}}));
        for (int i = 0; i < 8; ++i) {
            const std::string term = "t" + std::to_string(i);
            shifted.push_back(record({"ctx" + std::to_string(i), term, "end"}, {"X", "NN", "X"},
                                     {{1, 2, term}}));
        }
        auto s2 = build_feature_store(shifted, opts, 1);
        CHECK(skip_weight(s2, "alpha", SkipPattern{{"pay"}, {"tax"}}) >=
              skip_weight(store, "alpha", SkipPattern{{"pay"}, {"tax"}}));
    }
    SUBCASE("matches the oracle on random instances") {
        std::mt19937_64 rng(17);
        for (int trial = 0; trial < 25; ++trial) {
            auto toy = random_toy(rng);
            auto s = build_feature_store(toy.records, opts, 1);
            auto world = oracle_ingest(toy.records, opts.noun_tags, false);
            for (const auto& [term, row] : world.counts) {
                const auto t = s.term_index(term);
                REQUIRE(t.has_value());
                for (const auto& [pattern, x] : row) {
                    const auto p = s.pattern_index(pattern);
                    CHECK(close_rel(s.skip_weight(*t, *p), oracle_skip_weight(world, term, pattern)));
                }
            }
        }
    }
}

TEST_CASE("parallel chunking yields the identical store") {
    std::mt19937_64 rng(23);
    auto toy = random_toy(rng, {.terms = 12, .sentences = 300});
    CorpusOptions opts;
    IngestStats serial_stats;
    IngestStats parallel_stats;
    auto serial = build_feature_store(toy.records, opts, 1, &serial_stats);
    auto parallel = build_feature_store(toy.records, opts, 4, &parallel_stats);
    CHECK(serial == parallel);
    CHECK(serial_stats.records_kept == parallel_stats.records_kept);
    CHECK(serial_stats.occurrences_kept == parallel_stats.occurrences_kept);
    serial.check_consistency();
    parallel.check_consistency();
}

TEST_CASE("jsonl ingestion") {
    TempDir dir("jsonl");
    SUBCASE("well-formed lines are parsed") {
        write_text(R"({"tokens":["in","Texas","now"],"pos":["IN","NNP","RB"],"entities":[[1,2,"Texas"]]})"
                   "\n",
                   dir.file("corpus.jsonl"));
        IngestStats stats;
        auto store = build_feature_store_from_jsonl(dir.file("corpus.jsonl"), {}, 1, &stats);
        CHECK(store.vocab_size() == 1);
        CHECK(stats.lines_read == 1);
        CHECK(stats.lines_unparsable == 0);
    }
    SUBCASE("malformed lines are counted and skipped") {
        write_text("not json at all\n"
                   R"({"tokens":["a"],"pos":["NN"]})"
                   "\n"
                   R"({"tokens":["in","Texas","now"],"pos":["IN","NNP","RB"],"entities":[[1,2,"Texas"]]})"
                   "\n"
                   "\n",
                   dir.file("corpus.jsonl"));
        IngestStats stats;
        auto store = build_feature_store_from_jsonl(dir.file("corpus.jsonl"), {}, 2, &stats);
        CHECK(stats.lines_read == 3);
        CHECK(stats.lines_unparsable == 2);
        CHECK(store.vocab_size() == 1);
    }
    SUBCASE("missing file raises a data error") {
        CHECK_THROWS_AS(build_feature_store_from_jsonl(dir.file("absent.jsonl")), DataError);
    }
}

TEST_CASE("feature cache round-trip") {
    std::mt19937_64 rng(31);
    auto toy = random_toy(rng);
    CorpusOptions opts;
    opts.lowercase_context = true;
    auto store = build_feature_store(toy.records, opts, 1);

    TempDir dir("cache");
    save_feature_cache(store, dir.file("features.bin"), 0xabcdefull, opts);
    std::uint64_t checksum = 0;
    CorpusOptions loaded_opts;
    auto loaded = load_feature_cache(dir.file("features.bin"), &checksum, &loaded_opts);
    CHECK(checksum == 0xabcdefull);
    CHECK(loaded_opts.lowercase_context == true);
    CHECK(loaded_opts.noun_tags == opts.noun_tags);
    CHECK(store == loaded);
    loaded.check_consistency();

    SUBCASE("corrupt cache is rejected") {
        write_text("garbage", dir.file("bad.bin"));
        CHECK_THROWS_AS(load_feature_cache(dir.file("bad.bin")), DataError);
    }
}

TEST_CASE("file checksum changes with content") {
    TempDir dir("fnv");
    write_text("hello", dir.file("a"));
    write_text("hello", dir.file("b"));
    write_text("hellp", dir.file("c"));
    CHECK(file_checksum(dir.file("a")) == file_checksum(dir.file("b")));
    CHECK(file_checksum(dir.file("a")) != file_checksum(dir.file("c")));
}
