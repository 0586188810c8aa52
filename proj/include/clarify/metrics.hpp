#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace clarify {
class EmbeddingProvider;
}

namespace clarify::metrics {

// Output of the canonical tokenizer. Tokens are lowercase and never empty.
struct TokenSequence {
    std::vector<std::string> tokens;

    std::size_t size() const noexcept { return tokens.size(); }
    bool empty() const noexcept { return tokens.empty(); }
    bool operator==(const TokenSequence&) const = default;
};

// Canonical tokenizer shared by every lexical metric and by query word counts.
//
// UTF-8 input is lowercased (ASCII, Latin-1, Latin Extended-A, Greek and
// Cyrillic), punctuation and symbols act as separators, and apostrophes or
// hyphens survive only between two word characters. Typographic apostrophes
// (U+2019) and hyphens (U+2010, U+2011) are folded to their ASCII forms.
// Invalid UTF-8 bytes are treated as separators.
TokenSequence tokenize(std::string_view text);

enum class BleuSmoothing {
    None,     // any zero n-gram precision yields 0
    Epsilon,  // zero match counts replaced by epsilon (0.1)
    AddOne,   // add one to numerator and denominator for n >= 2
};

struct BleuResult {
    double score = 0.0;
    std::vector<double> precisions;  // one per order actually used
    double brevity_penalty = 0.0;
    std::size_t candidate_length = 0;
    std::size_t reference_length = 0;  // closest reference length
    bool empty_candidate = false;
};

inline constexpr double kBleuEpsilon = 0.1;

// Sentence BLEU with clipped n-gram counts against multiple references.
// Orders longer than the candidate are dropped from the geometric mean, so a
// candidate identical to a reference always scores 1. A candidate sharing no
// unigram with any reference scores 0 under every smoothing mode.
BleuResult bleu(const TokenSequence& candidate,
                std::span<const TokenSequence> references,
                std::size_t max_n = 4,
                BleuSmoothing smoothing = BleuSmoothing::Epsilon);

struct RougeL {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
    bool empty_input = false;
};

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// ROUGE-L with beta = 1.
RougeL rouge_l(const TokenSequence& candidate, const TokenSequence& reference);

// Throws std::invalid_argument on dimension mismatch and UndefinedInput on a
// zero vector. Result is clamped to [-1, 1].
double cosine(std::span<const double> a, std::span<const double> b);

double semantic_similarity(std::string_view text_a, std::string_view text_b,
                           EmbeddingProvider& embedder);

// Order-aligned batch variant; all texts are embedded in one call.
std::vector<double> semantic_similarity(
    std::span<const std::pair<std::string, std::string>> pairs, EmbeddingProvider& embedder);

// Pooled type-token ratio. Throws UndefinedInput when there are no tokens.
double ttr(std::span<const std::string> texts);

struct TokenStats {
    double mean = 0.0;
    std::size_t min = 0;
    std::size_t max = 0;
    std::vector<std::size_t> counts;
};

TokenStats token_stats(std::span<const std::string> texts);

struct MetricReport {
    std::string pair_id;
    double bleu = 0.0;
    RougeL rouge_l;
    std::optional<double> cosine;
    std::vector<std::string> notes;
};

struct TextPair {
    std::string id;
    std::string candidate;
    std::vector<std::string> references;
};

// Computes BLEU and ROUGE-L against the first reference for ROUGE, all
// references for BLEU. Cosine is filled in when an embedder is supplied.
std::vector<MetricReport> evaluate(std::span<const TextPair> pairs,
                                   EmbeddingProvider* embedder = nullptr);

// Tab-separated table: pair_id, bleu, rouge_p, rouge_r, rouge_f, cosine.
std::string to_tsv(std::span<const MetricReport> reports);

nlohmann::json to_json(const MetricReport& report);

}  // namespace clarify::metrics
