#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "clarify/corpus.hpp"
#include "clarify/metrics.hpp"
#include "clarify/provider.hpp"

namespace clarify::synth {

struct GenerationMeta {
    std::string model_tag;
    std::string template_version;
    std::string seed_batch;

    bool operator==(const GenerationMeta&) const = default;
};

struct SyntheticPair {
    std::string id;
    Characteristic characteristic = Characteristic::Verbosity;
    std::string styled_query;
    std::string clarified_paraphrase;
    std::string topic_tag;
    GenerationMeta generation_meta;

    bool operator==(const SyntheticPair&) const = default;
};

struct ExamplePair {
    std::string styled;
    std::string clarified;
};

// Dataset record: kind=synthetic_pair with characteristic, styled_query,
// rephrased_query, topic_tag and generation_meta.
nlohmann::json to_json(const SyntheticPair& p);
SyntheticPair pair_from_json(const nlohmann::json& j);

std::vector<SyntheticPair> load_pairs(const std::filesystem::path& path);
void save_pairs(const std::filesystem::path& path, std::span<const SyntheticPair> pairs);

// Strips wrapping quotes and collapses runs of whitespace.
std::string clean_generation(std::string_view text);

// Reads "QUERY: ... / PARAPHRASE: ... / TOPIC: ..." blocks separated by
// blank lines or "PAIR n" headers. Malformed blocks are counted, not kept.
struct ParsedGeneration {
    std::vector<ExamplePair> pairs;
    std::vector<std::string> topics;
    std::size_t malformed = 0;
};

ParsedGeneration parse_generation(std::string_view response);

struct GenerateOptions {
    std::size_t retry_cap = 3;       // calls allowed to come back short or malformed
    std::size_t max_per_call = 10;   // pairs requested per call
    std::string template_version = "default";
    std::string seed_batch = "0";
};

struct GenerationResult {
    std::vector<SyntheticPair> pairs;
    std::vector<std::string> warnings;
    std::size_t calls = 0;
};

// Requests pairs until count are collected or the retry cap is exhausted,
// in which case the partial batch is returned with a warning.
// Scripted key: stage "synthesize", query_id "<characteristic>#<call>".
GenerationResult generate(Characteristic characteristic, std::size_t count,
                          std::span<const ExamplePair> few_shot, ChatProvider& provider,
                          const GenerateOptions& options = {});

// Published per-characteristic sizes of the reference dataset (514 total).
std::map<Characteristic, std::size_t> reference_distribution();

// Runs generate() per characteristic concurrently, concatenating results
// in enum order.
GenerationResult generate_corpus(const std::map<Characteristic, std::size_t>& counts,
                                 const std::map<Characteristic, std::vector<ExamplePair>>& few_shot,
                                 ChatProvider& provider, const GenerateOptions& options = {});

// Greedy pass that keeps the first of any two pairs whose styled-query
// embeddings have cosine >= threshold.
std::vector<SyntheticPair> dedupe(std::span<const SyntheticPair> pairs,
                                  EmbeddingProvider& embedder, double threshold = 0.95);

struct PcaResult {
    std::vector<std::vector<double>> components;   // k unit vectors of length d
    std::vector<std::vector<double>> projections;  // n rows of length k
    std::vector<double> explained_variance;        // fraction of total, nonincreasing
    std::vector<double> eigenvalues;               // sample covariance eigenvalues
    std::vector<double> mean;
};

// Principal components of the sample covariance via cyclic Jacobi rotations.
// Each component's largest-magnitude entry is made positive.
PcaResult pca(std::span<const std::vector<double>> vectors, std::size_t k);

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

struct FidelityReport {
    std::vector<Point2> projections_real;
    std::vector<Point2> projections_synth;
    std::vector<double> explained_variance;
    double centroid_distance = 0.0;
    // centroid_distance / mean within-group distance to own centroid.
    double spread_ratio = 0.0;
};

// Two-component PCA over the pooled real + synthetic embeddings.
FidelityReport fidelity(std::span<const std::string> real_texts,
                        std::span<const std::string> synth_texts, EmbeddingProvider& embedder);

FidelityReport fidelity_from_embeddings(std::span<const std::vector<double>> real,
                                        std::span<const std::vector<double>> synth);

// Plot-ready rows: group, pc1, pc2.
std::string fidelity_points_tsv(const FidelityReport& report);

enum class ReviewVerdict { Likely, Possibly, Unlikely };

std::string_view to_string(ReviewVerdict v);
ReviewVerdict review_verdict_from_string(std::string_view s);

struct ReviewItem {
    std::size_t position = 0;
    SyntheticPair pair;
};

// Seeded uniform sample without replacement; throws std::invalid_argument
// when n exceeds the number of pairs.
std::vector<ReviewItem> sample_for_review(std::span<const SyntheticPair> pairs, std::size_t n,
                                          std::uint64_t seed);

// item, pair_id, characteristic, styled_query, verdict (blank).
std::string review_sheet_tsv(std::span<const ReviewItem> sample);

// pair_id -> verdict. Throws ParseError for a blank or unknown verdict.
std::map<std::string, ReviewVerdict> parse_review_sheet(std::string_view tsv);

// Cohen's kappa over the pair ids both sheets rated.
double review_agreement(const std::map<std::string, ReviewVerdict>& rater_a,
                        const std::map<std::string, ReviewVerdict>& rater_b);

struct LexicalReport {
    double styled_ttr = 0.0;
    double paraphrase_ttr = 0.0;
    metrics::TokenStats styled;
    metrics::TokenStats paraphrase;
};

LexicalReport lexical_report(std::span<const SyntheticPair> pairs);

}  // namespace clarify::synth
