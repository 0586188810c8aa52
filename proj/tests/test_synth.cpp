#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "clarify/synth.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace clarify;
using namespace clarify::synth;

namespace {

std::vector<ExamplePair> three_examples() {
    return {{"my phone dings all day", "How do I silence notifications?"},
            {"letters got tiny on the computer", "How do I enlarge text?"},
            {"the wedding pictures will not open", "Why won't attachments open?"}};
}

std::string generation_text(std::size_t n, const std::string& tag) {
    std::string out;
    for (std::size_t i = 1; i <= n; ++i)
        out += "PAIR " + std::to_string(i) + "\nQUERY: " + tag + " styled query number " +
               std::to_string(i) + "\nPARAPHRASE: How do I fix " + tag + " " + std::to_string(i) +
               "?\nTOPIC: email\n\n";
    return out;
}

std::vector<std::vector<double>> random_rows(std::size_t n, std::size_t d, std::uint64_t seed,
                                             double shift = 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<std::vector<double>> rows(n, std::vector<double>(d));
    for (auto& r : rows)
        for (std::size_t j = 0; j < d; ++j) r[j] = g(rng) * (1.0 + static_cast<double>(j)) + shift;
    return rows;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST(ParseGeneration, BlocksAndAliases) {
    const auto g = parse_generation(
        "Here are the pairs.\n\n"
        "PAIR 1\nQUERY: \"my tablet  freezes\"\nPARAPHRASE: Why does my tablet freeze?\nTOPIC: apps\n"
        "QUERY: email is broken\nand it shows a box\nREPHRASED QUERY: Why can't I open attachments?\n\n"
        "**Query:** lonely query with no paraphrase\n\n"
        "QUERY: third\nREWRITE: How do I do the third thing?\n");
    ASSERT_EQ(g.pairs.size(), 3u);
    EXPECT_EQ(g.pairs[0].styled, "my tablet freezes");
    EXPECT_EQ(g.topics[0], "apps");
    EXPECT_EQ(g.pairs[1].styled, "email is broken and it shows a box");
    EXPECT_EQ(g.pairs[2].clarified, "How do I do the third thing?");
    EXPECT_EQ(g.malformed, 1u);
}

TEST(CleanGeneration, QuotesAndWhitespace) {
    EXPECT_EQ(clean_generation("  \"a   b\n c\"  "), "a b c");
    EXPECT_EQ(clean_generation(""), "");
}

TEST(Generate, CollectsAcrossCalls) {
    MockScript script;
    script.add({"synthesize", "verbosity#1"}, generation_text(4, "v"));
    script.add({"synthesize", "verbosity#2"}, generation_text(4, "w"));
    MockChatProvider provider(script, fixture::fast_limits());
    GenerateOptions opts;
    opts.max_per_call = 4;
    const auto ex = three_examples();
    const auto r = generate(Characteristic::Verbosity, 6, ex, provider, opts);
    ASSERT_EQ(r.pairs.size(), 6u);
    EXPECT_EQ(r.calls, 2u);
    EXPECT_EQ(r.pairs[0].id, "verbosity-001");
    EXPECT_EQ(r.pairs[5].id, "verbosity-006");
    EXPECT_EQ(r.pairs[0].generation_meta.model_tag, "mock");
    EXPECT_EQ(r.pairs[0].topic_tag, "email");
    EXPECT_TRUE(r.warnings.empty());
}

TEST(Generate, RetryCapReturnsPartialBatch) {
    MockScript script;
    script.add({"synthesize", "*"}, generation_text(1, "x"));
    MockChatProvider provider(script, fixture::fast_limits());
    GenerateOptions opts;
    opts.retry_cap = 2;
    opts.max_per_call = 5;
    const auto ex = three_examples();
    const auto r = generate(Characteristic::Incompleteness, 5, ex, provider, opts);
    EXPECT_EQ(r.calls, 3u);
    EXPECT_EQ(r.pairs.size(), 3u);
    ASSERT_FALSE(r.warnings.empty());
    EXPECT_NE(r.warnings.back().find("retry cap"), std::string::npos);
}

TEST(Generate, MalformedResponsesCountAgainstCap) {
    MockScript script;
    script.add({"synthesize", "*"}, "I cannot produce that.");
    MockChatProvider provider(script, fixture::fast_limits());
    GenerateOptions opts;
    opts.retry_cap = 1;
    const auto ex = three_examples();
    const auto r = generate(Characteristic::Verbosity, 2, ex, provider, opts);
    EXPECT_TRUE(r.pairs.empty());
    EXPECT_EQ(r.calls, 2u);
}

TEST(Generate, RejectsBadArguments) {
    MockChatProvider provider(MockScript{}, fixture::fast_limits());
    const auto ex = three_examples();
    EXPECT_THROW(generate(Characteristic::Verbosity, 0, ex, provider), std::invalid_argument);
    EXPECT_THROW(generate(Characteristic::Verbosity, 1, std::span(ex).first(2), provider),
                 std::invalid_argument);
    EXPECT_THROW(generate(Characteristic::Verbosity, 1, ex, provider), ProviderError);
}

TEST(GenerateCorpus, ReferenceDistribution) {
    const auto dist = reference_distribution();
    std::size_t total = 0;
    for (const auto& [c, n] : dist) total += n;
    EXPECT_EQ(total, 514u);
    EXPECT_EQ(dist.at(Characteristic::UnderSpecification), 154u);

    MockScript script;
    script.add({"synthesize", "*"}, generation_text(10, "t"));
    MockChatProvider provider(script, fixture::fast_limits());
    std::map<Characteristic, std::vector<ExamplePair>> few;
    for (auto c : kAllCharacteristics) few[c] = three_examples();
    const auto r = generate_corpus(dist, few, provider);
    ASSERT_EQ(r.pairs.size(), 514u);
    std::map<Characteristic, std::size_t> seen;
    for (const auto& p : r.pairs) ++seen[p.characteristic];
    EXPECT_EQ(seen, dist);
    EXPECT_EQ(r.pairs.front().characteristic, Characteristic::Verbosity);
    EXPECT_EQ(r.pairs.back().characteristic, Characteristic::Incompleteness);
}

TEST(PairJson, RoundTripAndFile) {
    SyntheticPair p{"verbosity-001", Characteristic::Verbosity, "styled", "clear?", "apps",
                    {"mock", "default", "7"}};
    const auto j = to_json(p);
    EXPECT_EQ(j["kind"], "synthetic_pair");
    EXPECT_EQ(j["rephrased_query"], "clear?");
    EXPECT_EQ(pair_from_json(j), p);
    fixture::TempDir dir;
    const std::vector<SyntheticPair> pairs{p};
    save_pairs(dir.file("p.ndjson"), pairs);
    EXPECT_EQ(load_pairs(dir.file("p.ndjson")), pairs);
}

TEST(Dedupe, KeepsFirstOfNearDuplicates) {
    MockEmbeddingProvider embedder(3);
    embedder.set_vector("a", {1, 0, 0});
    embedder.set_vector("a2", {0.99, 0.1, 0});
    embedder.set_vector("b", {0, 1, 0});
    std::vector<SyntheticPair> pairs(3);
    pairs[0].styled_query = "a";
    pairs[1].styled_query = "a2";
    pairs[2].styled_query = "b";
    for (std::size_t i = 0; i < 3; ++i) pairs[i].id = std::to_string(i);
    const auto kept = dedupe(pairs, embedder, 0.97);
    ASSERT_EQ(kept.size(), 2u);
    EXPECT_EQ(kept[0].id, "0");
    EXPECT_EQ(kept[1].id, "2");
    EXPECT_EQ(dedupe(pairs, embedder, 1.0).size(), 3u);
    EXPECT_THROW(dedupe(pairs, embedder, 0.0), std::invalid_argument);
}

TEST(Pca, MatchesEigenOracle) {
    const auto rows = random_rows(10, 6, 42);
    const auto r = pca(rows, 6);
    const auto o = oracle::covariance_eigen(rows);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_NEAR(r.eigenvalues[i], o.values[i], 1e-8);
        EXPECT_NEAR(std::abs(dot(r.components[i], o.vectors[i])), 1.0, 1e-8);
    }
}

TEST(Pca, OrthonormalOrderedSignNormalized) {
    const auto rows = random_rows(30, 5, 7);
    const auto r = pca(rows, 3);
    ASSERT_EQ(r.components.size(), 3u);
    ASSERT_EQ(r.projections.size(), 30u);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j)
            EXPECT_NEAR(dot(r.components[i], r.components[j]), i == j ? 1.0 : 0.0, 1e-9);
        if (i > 0) {
            EXPECT_GE(r.explained_variance[i - 1], r.explained_variance[i]);
        }
        double big = 0;
        for (double x : r.components[i])
            if (std::abs(x) > std::abs(big)) big = x;
        EXPECT_GT(big, 0.0);
    }
    double sum = 0;
    for (double e : pca(rows, 5).explained_variance) sum += e;
    EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Pca, RejectsBadInput) {
    const auto rows = random_rows(4, 3, 1);
    EXPECT_THROW(pca(std::span(rows).first(1), 1), std::invalid_argument);
    EXPECT_THROW(pca(rows, 0), std::invalid_argument);
    EXPECT_THROW(pca(rows, 4), std::invalid_argument);
    auto ragged = rows;
    ragged[2].pop_back();
    EXPECT_THROW(pca(ragged, 1), std::invalid_argument);
}

TEST(Fidelity, SeparatedGroupsSpreadFurther) {
    const auto real = random_rows(40, 6, 3);
    const auto same = random_rows(40, 6, 4);
    const auto far = random_rows(40, 6, 5, 8.0);
    const auto close = fidelity_from_embeddings(real, same);
    const auto apart = fidelity_from_embeddings(real, far);
    EXPECT_LT(close.spread_ratio, 1.0);
    EXPECT_GT(apart.spread_ratio, 2.0);
    EXPECT_EQ(apart.projections_real.size(), 40u);
    const auto tsv = fidelity_points_tsv(apart);
    EXPECT_EQ(tsv.rfind("group\tpc1\tpc2\n", 0), 0u);
    EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 81);
}

TEST(Fidelity, IdenticalCorporaHaveZeroCentroidDistance) {
    const auto rows = random_rows(12, 4, 9);
    const auto r = fidelity_from_embeddings(rows, rows);
    EXPECT_NEAR(r.centroid_distance, 0.0, 1e-12);
    EXPECT_EQ(r.spread_ratio, 0.0);
}

TEST(Review, SampleSheetAndAgreement) {
    std::vector<SyntheticPair> pairs(120);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        pairs[i].id = "p" + std::to_string(i);
        pairs[i].styled_query = "query\twith tab " + std::to_string(i);
    }
    const auto a = sample_for_review(pairs, 50, 11);
    const auto b = sample_for_review(pairs, 50, 11);
    ASSERT_EQ(a.size(), 50u);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].pair.id, b[i].pair.id);
        ids.insert(a[i].pair.id);
    }
    EXPECT_EQ(ids.size(), 50u);
    EXPECT_THROW(sample_for_review(pairs, 121, 1), std::invalid_argument);

    auto sheet = review_sheet_tsv(std::span(a).first(3));
    EXPECT_EQ(std::count(sheet.begin(), sheet.end(), '\t'), 16);
    EXPECT_THROW(parse_review_sheet(sheet), ParseError);

    const std::string sheet_a = "item\tpair_id\tcharacteristic\tstyled_query\tverdict\n"
                                "1\tp1\tverbosity\tq\tlikely\n2\tp2\tverbosity\tq\tunlikely\n"
                                "3\tp3\tverbosity\tq\tpossibly\n4\tp4\tverbosity\tq\tlikely\n";
    const std::string sheet_b = "1\tp1\tverbosity\tq\tLikely\n2\tp2\tverbosity\tq\tunlikely\n"
                                "3\tp3\tverbosity\tq\tlikely\n5\tp9\tverbosity\tq\tlikely\n";
    const auto ra = parse_review_sheet(sheet_a);
    const auto rb = parse_review_sheet(sheet_b);
    EXPECT_EQ(ra.size(), 4u);
    const std::vector<std::string> la{"likely", "unlikely", "possibly"};
    const std::vector<std::string> lb{"likely", "unlikely", "likely"};
    EXPECT_NEAR(review_agreement(ra, rb), oracle::kappa_from_table(la, lb), 1e-12);
    EXPECT_THROW(parse_review_sheet("1\tp1\tverbosity\tq\tmaybe\n"), ParseError);
}

TEST(Lexical, Report) {
    std::vector<SyntheticPair> pairs(2);
    pairs[0].styled_query = "the tablet the tablet";
    pairs[0].clarified_paraphrase = "How do I fix it?";
    pairs[1].styled_query = "phone";
    pairs[1].clarified_paraphrase = "Why?";
    const auto r = lexical_report(pairs);
    EXPECT_DOUBLE_EQ(r.styled_ttr, 3.0 / 5.0);
    EXPECT_EQ(r.styled.max, 4u);
    EXPECT_EQ(r.paraphrase.min, 1u);
    EXPECT_THROW(lexical_report(std::span<const SyntheticPair>{}), std::invalid_argument);
}

TEST(DedupeProperty, NoSurvivingPairAtOrAboveThreshold) {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> g(0.0, 1.0);
    MockEmbeddingProvider embedder(3);
    std::vector<SyntheticPair> pairs(80);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        pairs[i].id = std::to_string(i);
        pairs[i].styled_query = "q" + std::to_string(i);
        embedder.set_vector(pairs[i].styled_query, {g(rng), g(rng), g(rng)});
    }
    for (double threshold : {0.8, 0.95, 0.99}) {
        const auto kept = dedupe(pairs, embedder, threshold);
        EXPECT_LT(kept.size(), pairs.size());
        for (std::size_t i = 0; i < kept.size(); ++i)
            for (std::size_t j = i + 1; j < kept.size(); ++j)
                EXPECT_LT(metrics::cosine(embedder.embed_one(kept[i].styled_query).values,
                                          embedder.embed_one(kept[j].styled_query).values),
                          threshold);
    }
}

TEST(GeneratedBatch, StyledSideIsLongerAndMoreRepetitive) {
    // Scripted stand-in for a model batch of 30 pairs.
    std::string text;
    for (int i = 1; i <= 30; ++i)
        text += "QUERY: well my phone is doing the thing again and again with the screen, the screen "
                "just goes and goes and I do not know why it does it, number " + std::to_string(i) +
                "\nPARAPHRASE: Why does screen " + std::to_string(i) + " on my phone turn off by itself?\n\n";
    MockScript script;
    script.add({"synthesize", "*"}, text);
    MockChatProvider provider(script, fixture::fast_limits());
    GenerateOptions opts;
    opts.max_per_call = 30;
    const auto ex = three_examples();
    const auto r = generate(Characteristic::Verbosity, 30, ex, provider, opts);
    ASSERT_EQ(r.pairs.size(), 30u);
    const auto lex = lexical_report(r.pairs);
    EXPECT_LT(lex.styled_ttr, lex.paraphrase_ttr);
    EXPECT_GT(lex.styled.mean, lex.paraphrase.mean);
}

TEST(PcaProperty, ExplainedVarianceSumsToAtMostOne) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto rows = random_rows(8 + seed, 5, seed);
        double sum = 0;
        for (double e : pca(rows, 4).explained_variance) sum += e;
        EXPECT_LE(sum, 1.0 + 1e-9);
    }
}
