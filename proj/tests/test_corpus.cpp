#include <gtest/gtest.h>

#include <set>

#include "clarify/corpus.hpp"
#include "clarify/metrics.hpp"
#include "support/fixtures.hpp"

using namespace clarify;

namespace {

std::string query_line(const std::string& id, const std::string& text = "my phone is slow") {
    return nlohmann::json{{"kind", "query"}, {"id", id}, {"text", text}}.dump() + "\n";
}

}  // namespace

TEST(Enums, WireNamesRoundTrip) {
    for (auto c : kAllCharacteristics) EXPECT_EQ(from_string<Characteristic>(to_string(c)), c);
    EXPECT_EQ(to_string(Characteristic::OverSpecification), "over_specification");
    EXPECT_EQ(from_string<QuestionType>("directed_informational"),
              QuestionType::DirectedInformational);
    EXPECT_EQ(to_string(Verdict::PartiallyCorrect), "partially_correct");
    EXPECT_EQ(to_string(SolutionKind::CannotBeDone), "cannot_be_done");
    EXPECT_THROW(from_string<Characteristic>("rambling"), std::invalid_argument);
    EXPECT_THROW(from_string<MessageRole>("Seeker "), std::invalid_argument);
}

TEST(MakeQuery, FillsWordCountAndRejectsBlank) {
    const auto q = make_query("q1", "My tablet, it freezes!");
    EXPECT_EQ(q.word_count, metrics::tokenize(q.text).size());
    EXPECT_EQ(q.word_count, 4u);
    EXPECT_THROW(make_query("q2", "   "), std::invalid_argument);
    EXPECT_THROW(make_query("", "text"), std::invalid_argument);
}

TEST(Timestamp, ParsesOffsetsToTheSameInstant) {
    const auto a = Timestamp::parse("2024-03-01T10:00:00Z");
    const auto b = Timestamp::parse("2024-03-01T12:00:00+02:00");
    const auto c = Timestamp::parse("2024-03-01T10:00:00.250Z");
    EXPECT_EQ(a.instant, b.instant);
    EXPECT_EQ((c.instant - a.instant).count(), 250);
    EXPECT_EQ(b.text, "2024-03-01T12:00:00+02:00");
}

TEST(Timestamp, RejectsMalformed) {
    for (const char* bad : {"2024-03-01", "2024-03-01T10:00:00", "2024-02-30T10:00:00Z",
                            "2024-03-01T25:00:00Z", "2024-03-01T10:00:00Zjunk", "yesterday"})
        EXPECT_THROW(Timestamp::parse(bad), std::invalid_argument) << bad;
}

TEST(CorpusStore, StudyCorpusHistogram) {
    const auto store = CorpusStore::parse(fixture::study_corpus_ndjson());
    EXPECT_EQ(store.queries().size(), 57u);
    const auto h = store.label_histogram();
    EXPECT_EQ(h.at(Characteristic::Verbosity), 9u);
    EXPECT_EQ(h.at(Characteristic::OverSpecification), 12u);
    EXPECT_EQ(h.at(Characteristic::UnderSpecification), 13u);
    EXPECT_EQ(h.at(Characteristic::Incompleteness), 24u);
    EXPECT_EQ(store.labels_for("q01").size(), 2u);
    std::size_t qtypes = 0;
    for (const auto& [t, n] : store.qtype_histogram()) qtypes += n;
    EXPECT_EQ(qtypes, 57u);
}

TEST(CorpusStore, ExportRoundTripIsLossless) {
    const auto a = CorpusStore::parse(fixture::study_corpus_ndjson() + fixture::batch_corpus_ndjson());
    const auto text = a.export_ndjson();
    const auto b = CorpusStore::parse(text);
    EXPECT_EQ(a, b);
    EXPECT_EQ(b.export_ndjson(), text);
    EXPECT_EQ(a.record_count(), b.record_count());
}

TEST(CorpusStore, FileRoundTrip) {
    fixture::TempDir dir;
    const auto a = CorpusStore::parse(fixture::batch_corpus_ndjson());
    a.export_ndjson(dir.file("out.ndjson"));
    EXPECT_EQ(CorpusStore::ingest(dir.file("out.ndjson")), a);
    EXPECT_THROW(CorpusStore::ingest(dir.file("missing.ndjson")), std::invalid_argument);
}

TEST(CorpusStore, DuplicateIdReportsBothLines) {
    try {
        CorpusStore::parse(query_line("q1") + "\n" + query_line("q2") + query_line("q1"));
        FAIL();
    } catch (const DuplicateIdError& e) {
        EXPECT_EQ(e.id(), "q1");
        EXPECT_EQ(e.first_line(), 1u);
        EXPECT_EQ(e.second_line(), 4u);
    }
}

TEST(CorpusStore, RejectsBadRecordsWithLineNumbers) {
    auto line_of = [](const std::string& content) -> std::size_t {
        try {
            CorpusStore::parse(content);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    EXPECT_EQ(line_of(query_line("q1") + "{not json\n"), 2u);
    EXPECT_EQ(line_of(query_line("q1") + R"({"kind":"mystery"})" "\n"), 2u);
    EXPECT_EQ(line_of(R"({"id":"q1","text":"x"})" "\n"), 1u);
    EXPECT_EQ(line_of(query_line("q1") +
                      R"({"kind":"label","query_id":"q9","characteristic":"verbosity"})" "\n"),
              2u);
    EXPECT_EQ(line_of(query_line("q1") +
                      R"({"kind":"label","query_id":"q1","characteristic":"rambling"})" "\n"),
              2u);
    EXPECT_EQ(line_of(R"({"kind":"query","id":"q1","text":"  "})" "\n"), 1u);
    EXPECT_EQ(line_of(query_line("q1") +
                      R"({"kind":"solution","id":"s1","query_id":"q1","text":"x","solution_kind":"steps","confidence":1.5})" "\n"),
              2u);
}

TEST(CorpusStore, ForwardReferencesResolve) {
    const auto store = CorpusStore::parse(
        R"({"kind":"label","query_id":"q1","characteristic":"verbosity"})" "\n" + query_line("q1"));
    EXPECT_EQ(store.labels().size(), 1u);
}

TEST(CorpusStore, ForeignKindsAreSkipped) {
    const auto store =
        CorpusStore::parse(query_line("q1") + R"({"kind":"session","id":"s1"})" "\n");
    EXPECT_EQ(store.record_count(), 1u);
}

TEST(CorpusStore, RejectsNonMonotonicConversation) {
    const std::string conv =
        R"({"kind":"conversation","query_id":"q1","messages":[)"
        R"({"role":"seeker","text":"a","timestamp":"2024-01-01T10:00:00Z"},)"
        R"({"role":"helper","text":"b","timestamp":"2024-01-01T11:30:00+02:00"}]})" "\n";
    EXPECT_THROW(CorpusStore::parse(query_line("q1") + conv), ParseError);
}

TEST(CorpusStore, PlainTextAssignsSequentialIds) {
    const auto store =
        CorpusStore::parse("first problem\r\n\n  \nsecond problem\n", CorpusFormat::PlainText);
    ASSERT_EQ(store.queries().size(), 2u);
    EXPECT_EQ(store.queries()[1].id, "q2");
    EXPECT_EQ(store.queries()[1].text, "second problem");
    EXPECT_EQ(store.queries()[0].source, QuerySource::Manual);
}

TEST(CorpusStore, ReferenceSolutionMustNotCarryConfidence) {
    CorpusStore store;
    store.add_query(make_query("q1", "text"));
    SolutionRecord s{"r1", "q1", "do this", SolutionKind::Steps, SolutionOrigin::Reference, 0.9};
    EXPECT_THROW(store.add_solution(s), std::invalid_argument);
    s.confidence.reset();
    store.add_solution(s);
    EXPECT_THROW(store.add_solution(s), DuplicateIdError);
}

TEST(FilterByDevice, SelectsMatchingQueries) {
    const auto store = CorpusStore::parse(fixture::study_corpus_ndjson());
    const auto tablets = filter_by_device(store, {"tablet"});
    EXPECT_FALSE(tablets.empty());
    for (const auto& q : tablets) EXPECT_EQ(q.device, "tablet");
    EXPECT_EQ(filter_by_device(store, {"tablet", "phone", "laptop", "smart_tv"}).size(), 57u);
    EXPECT_TRUE(filter_by_device(store, {"toaster"}).empty());
    EXPECT_THROW(filter_by_device(store, {}), std::invalid_argument);
}

TEST(LookupAnswer, ReturnsAnswerOrUnknown) {
    const auto store = CorpusStore::parse(fixture::batch_corpus_ndjson());
    const auto* conv = store.find_conversation("b01");
    ASSERT_NE(conv, nullptr);
    MockChatProvider provider(fixture::replay_script("b01"), fixture::fast_limits());
    EXPECT_EQ(lookup_answer(*conv, "Which tablet?", provider, 1), "A Samsung Galaxy Tab.");
    EXPECT_EQ(lookup_answer(*conv, "Which app?", provider, 2), std::nullopt);
    EXPECT_THROW(lookup_answer(*conv, " ", provider, 1), std::invalid_argument);

    Conversation empty{"b01", {}, false};
    EXPECT_EQ(lookup_answer(empty, "Which tablet?", provider, 1), std::nullopt);
}

TEST(CorpusProperties, LabelConservationAndWordCounts) {
    const auto store = CorpusStore::parse(fixture::study_corpus_ndjson() + fixture::batch_corpus_ndjson());
    std::size_t sum = 0;
    for (const auto& [c, n] : store.label_histogram()) sum += n;
    EXPECT_EQ(sum, store.labels().size());
    for (const auto& q : store.queries()) EXPECT_EQ(q.word_count, metrics::tokenize(q.text).size());
}

TEST(CorpusProperties, FilterDistributesOverUnion) {
    const auto store = CorpusStore::parse(fixture::study_corpus_ndjson());
    auto ids = [](const std::vector<TechQuery>& qs) {
        std::set<std::string> out;
        for (const auto& q : qs) out.insert(q.id);
        return out;
    };
    const std::vector<std::set<std::string>> sets{{"phone"}, {"tablet", "laptop"}, {"smart_tv", "phone"}, {"toaster"}};
    for (const auto& a : sets)
        for (const auto& b : sets) {
            std::set<std::string> both = a;
            both.insert(b.begin(), b.end());
            auto expected = ids(filter_by_device(store, a));
            const auto right = ids(filter_by_device(store, b));
            expected.insert(right.begin(), right.end());
            EXPECT_EQ(ids(filter_by_device(store, both)), expected);
        }
}
