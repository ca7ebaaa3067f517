#pragma once

#include <cstdint>
#include <string>

namespace taxgrow {

// Canonical identifier of a corpus key term. Multi-gram terms are stored
// with their tokens joined by "_" (e.g. "Baja_California").
using TermId = std::string;

// A directed parent -> child edge between two terms.
struct TermPair {
    TermId parent;
    TermId child;

    friend bool operator==(const TermPair&, const TermPair&) = default;
};

// A term together with the score that ranked or admitted it.
struct ScoredTerm {
    TermId term;
    double score = 0.0;

    friend bool operator==(const ScoredTerm&, const ScoredTerm&) = default;
};

} // namespace taxgrow
