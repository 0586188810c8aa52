#include <gtest/gtest.h>

#include "clarify/chain.hpp"
#include "support/fixtures.hpp"
#include "support/fuzz.hpp"

using namespace clarify;
using namespace clarify::chain;

namespace {

// Counts calls and remembers every request it saw.
class CountingProvider final : public ChatProvider {
public:
    explicit CountingProvider(MockScript script)
        : ChatProvider(fixture::fast_limits(1)), mock_(std::move(script), fixture::fast_limits(1)) {}
    std::string name() const override { return "counting"; }
    std::vector<ChatRequest> seen;

protected:
    std::string do_complete(const ChatRequest& r) override {
        seen.push_back(r);
        return mock_.complete(r);
    }

private:
    MockChatProvider mock_;
};

MockScript script_with(const std::string& qid, const std::string& questions,
                       const std::string& solution) {
    MockScript s;
    s.add({"questions", qid}, questions);
    s.add({"paraphrase", qid}, "PARAPHRASE:\n1. How do I share photos from my tablet?");
    s.add({"solution", qid}, solution);
    return s;
}

const TechQuery& verbosity_query() {
    static const auto q = make_query("v1", fixture::kVerbosityQuery, "tablet");
    return q;
}

}  // namespace

TEST(ParseQuestions, NumberedWithPreamble) {
    const auto p = parse_questions("Sure.\nQUESTIONS:\n1. Which device?\n2) Which app?\n");
    ASSERT_TRUE(p.ok);
    EXPECT_FALSE(p.none_needed);
    EXPECT_EQ(p.questions, (std::vector<std::string>{"Which device?", "Which app?"}));
}

TEST(ParseQuestions, BulletsAndPlainLines) {
    EXPECT_EQ(parse_questions("QUESTIONS:\n- a?\n* b?\n• c?").questions.size(), 3u);
    EXPECT_EQ(parse_questions("QUESTIONS: Which one?").questions,
              std::vector<std::string>{"Which one?"});
}

TEST(ParseQuestions, NoneNeeded) {
    for (const char* r : {"QUESTIONS: NONE", "QUESTIONS: none.", "No further context needed.",
                          "QUESTIONS: NO FURTHER CONTEXT NEEDED"}) {
        const auto p = parse_questions(r);
        EXPECT_TRUE(p.ok) << r;
        EXPECT_TRUE(p.none_needed) << r;
        EXPECT_TRUE(p.questions.empty()) << r;
    }
}

TEST(ParseQuestions, UnparsableIsNotOk) {
    EXPECT_FALSE(parse_questions("I would ask about the device.").ok);
    EXPECT_FALSE(parse_questions("QUESTIONS:").ok);
}

TEST(ParseParaphrase, ListItems) {
    EXPECT_EQ(parse_paraphrase("PARAPHRASE:\n1. a?\n2. b?"), (std::vector<std::string>{"a?", "b?"}));
    EXPECT_TRUE(parse_paraphrase("nothing here").empty());
}

TEST(ParseConfidence, Forms) {
    EXPECT_DOUBLE_EQ(*parse_confidence("0.95"), 0.95);
    EXPECT_DOUBLE_EQ(*parse_confidence("95%"), 0.95);
    EXPECT_DOUBLE_EQ(*parse_confidence("95"), 0.95);
    EXPECT_DOUBLE_EQ(*parse_confidence("1"), 1.0);
    EXPECT_DOUBLE_EQ(*parse_confidence(" 0 "), 0.0);
    EXPECT_FALSE(parse_confidence("high"));
    EXPECT_FALSE(parse_confidence(""));
    EXPECT_FALSE(parse_confidence("150"));
    EXPECT_FALSE(parse_confidence("-0.2"));
}

TEST(ParseSolutionKind, Aliases) {
    EXPECT_EQ(parse_solution_kind("Steps"), SolutionKind::Steps);
    EXPECT_EQ(parse_solution_kind("step-by-step"), SolutionKind::Steps);
    EXPECT_EQ(parse_solution_kind("Cannot be done."), SolutionKind::CannotBeDone);
    EXPECT_EQ(parse_solution_kind("conceptual"), SolutionKind::Conceptual);
    EXPECT_FALSE(parse_solution_kind("maybe"));
}

TEST(RenderSolution, RenumbersSteps) {
    SolutionRecord s;
    s.text = "- Open it.\n\n3) Close it.";
    EXPECT_EQ(render_solution(s), "1. Open it.\n2. Close it.");
    s.kind = SolutionKind::Conceptual;
    EXPECT_EQ(render_solution(s), s.text);
}

TEST(ChainConfig, Validation) {
    ChainConfig c;
    EXPECT_NO_THROW(c.validate());
    c.max_questions = 4;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.confidence_threshold = 1.2;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.params.temperature = -1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Stages, HappyPathWithReplayScript) {
    MockChatProvider provider(fixture::replay_script("v1"), fixture::fast_limits());
    ChainConfig config;
    auto s = start_session(verbosity_query(), config, provider);
    ASSERT_EQ(s.state, State::QuestionsPending);
    ASSERT_EQ(s.questions.size(), 2u);
    EXPECT_EQ(s.questions[1].index, 2);

    const std::vector<std::optional<std::string>> answers{"A Samsung tablet", std::nullopt};
    submit_answers(s, answers);
    EXPECT_EQ(s.state, State::AnswersCollected);
    EXPECT_TRUE(s.answers[1].is_unknown);
    EXPECT_EQ(s.answers[1].text, "I do not know");

    paraphrase(s, config, provider);
    ASSERT_EQ(s.state, State::Paraphrased);
    EXPECT_EQ(s.paraphrase->questions, std::vector<std::string>{fixture::kVerbosityParaphrase});

    solve(s, config, provider);
    ASSERT_EQ(s.state, State::Solved);
    EXPECT_EQ(s.solution->kind, SolutionKind::Steps);
    EXPECT_DOUBLE_EQ(*s.solution->confidence, 0.93);
    EXPECT_EQ(s.solution->id, s.id + "/solution");
    EXPECT_EQ(s.transcript.size(), 3u);
    EXPECT_TRUE(invariant_violations(s, config).empty());
    EXPECT_EQ(s.user_facing_text(), render_solution(*s.solution));
}

TEST(Stages, QuestionCapTruncates) {
    MockChatProvider provider(
        script_with("v1", "QUESTIONS:\n1. a?\n2. b?\n3. c?\n4. d?", "CONFIDENCE: 1\nSOLUTION: x"),
        fixture::fast_limits());
    ChainConfig config;
    config.max_questions = 2;
    const auto s = start_session(verbosity_query(), config, provider);
    EXPECT_EQ(s.questions.size(), 2u);
    EXPECT_TRUE(invariant_violations(s, config).empty());
}

TEST(Stages, PromptsCarryQueryAndAnswers) {
    CountingProvider provider(fixture::replay_script("v1"));
    ChainConfig config;
    auto s = start_session(verbosity_query(), config, provider);
    EXPECT_NE(provider.seen[0].user_text.find("freezes up"), std::string::npos);
    EXPECT_NE(provider.seen[0].user_text.find("tablet"), std::string::npos);
    const std::vector<std::optional<std::string>> answers{"Galaxy Tab", "the app"};
    submit_answers(s, answers);
    paraphrase(s, config, provider);
    EXPECT_NE(provider.seen[1].user_text.find("Galaxy Tab"), std::string::npos);
    EXPECT_NE(provider.seen[1].user_text.find(s.questions[0].text), std::string::npos);
    solve(s, config, provider);
    EXPECT_NE(provider.seen[2].user_text.find(fixture::kVerbosityParaphrase), std::string::npos);
    EXPECT_EQ(provider.seen[2].params.temperature, 0.0);
}

TEST(Stages, ZeroQuestionsSkipsCollection) {
    MockChatProvider provider(script_with("v1", "QUESTIONS: NONE", "CONFIDENCE: 0.99\nSOLUTION: x"),
                              fixture::fast_limits());
    ChainConfig config;
    auto s = start_session(verbosity_query(), config, provider);
    EXPECT_EQ(s.state, State::AnswersCollected);
    EXPECT_TRUE(s.questions.empty());
    paraphrase(s, config, provider);
    EXPECT_EQ(s.state, State::Paraphrased);
}

TEST(Stages, OutOfOrderCallsThrowAndLeaveSessionUnchanged) {
    MockChatProvider provider(fixture::replay_script("v1"), fixture::fast_limits());
    ChainConfig config;
    auto s = start_session(verbosity_query(), config, provider);
    const auto before = s;
    EXPECT_THROW(solve(s, config, provider), StateViolation);
    EXPECT_THROW(paraphrase(s, config, provider), StateViolation);
    EXPECT_EQ(s, before);
    const std::vector<std::optional<std::string>> one{"x"};
    EXPECT_THROW(submit_answers(s, one), std::invalid_argument);
    EXPECT_EQ(s, before);
    const std::vector<std::optional<std::string>> two{"x", "y"};
    submit_answers(s, two);
    EXPECT_THROW(submit_answers(s, two), StateViolation);
}

TEST(Stages, ThresholdIsInclusive) {
    ChainConfig config;
    config.confidence_threshold = 0.9;
    for (const auto& [conf, expected] : std::vector<std::pair<std::string, State>>{
             {"0.90", State::Solved}, {"90%", State::Solved}, {"0.89", State::Abstained}}) {
        MockChatProvider provider(
            script_with("v1", "QUESTIONS: NONE", "CONFIDENCE: " + conf + "\nSOLUTION: Restart it."),
            fixture::fast_limits());
        auto s = start_session(verbosity_query(), config, provider);
        paraphrase(s, config, provider);
        solve(s, config, provider);
        EXPECT_EQ(s.state, expected) << conf;
        EXPECT_TRUE(invariant_violations(s, config).empty());
    }
}

TEST(Stages, AbstainsWithoutConfidenceOrSolution) {
    ChainConfig config;
    for (const char* reply : {"SOLUTION: Restart it.", "CONFIDENCE: 0.99", "CONFIDENCE: high\nSOLUTION: x"}) {
        MockChatProvider provider(script_with("v1", "QUESTIONS: NONE", reply), fixture::fast_limits());
        auto s = start_session(verbosity_query(), config, provider);
        paraphrase(s, config, provider);
        solve(s, config, provider);
        EXPECT_EQ(s.state, State::Abstained) << reply;
        EXPECT_EQ(s.user_facing_text(), "I do not know");
        EXPECT_FALSE(s.note.empty());
    }
}

TEST(Stages, KindInferredFromShape) {
    ChainConfig config;
    auto run = [&](const std::string& reply) {
        MockChatProvider provider(script_with("v1", "QUESTIONS: NONE", reply), fixture::fast_limits());
        auto s = start_session(verbosity_query(), config, provider);
        paraphrase(s, config, provider);
        solve(s, config, provider);
        return s.solution->kind;
    };
    EXPECT_EQ(run("CONFIDENCE: 1\nSOLUTION:\n1. a\n2. b"), SolutionKind::Steps);
    EXPECT_EQ(run("CONFIDENCE: 1\nSOLUTION: It syncs over wifi."), SolutionKind::Conceptual);
    EXPECT_EQ(run("CONFIDENCE: 1\nSOLUTION_KIND: cannot be done\nSOLUTION: No."),
              SolutionKind::CannotBeDone);
}

TEST(Stages, UnparsableOutputFailsWithRawText) {
    MockChatProvider provider(script_with("v1", "Let me think about it.", "x"), fixture::fast_limits());
    const auto s = start_session(verbosity_query(), ChainConfig{}, provider);
    EXPECT_EQ(s.state, State::Failed);
    EXPECT_NE(s.note.find("Let me think about it."), std::string::npos);
    EXPECT_EQ(s.user_facing_text(), std::nullopt);
}

TEST(Stages, RetriableErrorRethrownWithStateUnchanged) {
    auto script = script_with("v1", "QUESTIONS: NONE", "x");
    script.add_error({"paraphrase", "v1"}, ProviderErrorKind::RateLimit);
    MockChatProvider provider(script, fixture::fast_limits(2));
    ChainConfig config;
    auto s = start_session(verbosity_query(), config, provider);
    EXPECT_THROW(paraphrase(s, config, provider), ProviderError);
    EXPECT_EQ(s.state, State::AnswersCollected);
    ASSERT_EQ(s.transcript.size(), 2u);
    EXPECT_FALSE(s.transcript.back().succeeded());
    EXPECT_NE(s.transcript.back().error.find("rate_limit"), std::string::npos);
}

TEST(Stages, FailOnlyFromNonTerminal) {
    MockChatProvider provider(script_with("v1", "QUESTIONS: NONE", "x"), fixture::fast_limits());
    auto s = start_session(verbosity_query(), ChainConfig{}, provider);
    fail(s, "operator cancelled");
    EXPECT_EQ(s.state, State::Failed);
    EXPECT_THROW(fail(s, "again"), StateViolation);
}

TEST(Pipeline, CorpusAnswersRecordEveryCall) {
    const auto store = CorpusStore::parse(fixture::batch_corpus_ndjson());
    const auto* conv = store.find_conversation("b01");
    CountingProvider provider(fixture::replay_script("b01"));
    AnswerSourceSpec spec{AnswerSource::Corpus, conv, {}};
    const auto s = run_pipeline(*store.find_query("b01"), spec, ChainConfig{}, provider);
    EXPECT_EQ(s.state, State::Solved);
    EXPECT_EQ(s.answers[0].text, "A Samsung Galaxy Tab.");
    EXPECT_TRUE(s.answers[1].is_unknown);
    ASSERT_EQ(s.transcript.size(), provider.seen.size());
    for (std::size_t i = 0; i < s.transcript.size(); ++i) {
        EXPECT_EQ(s.transcript[i].key, provider.seen[i].key);
        EXPECT_EQ(s.transcript[i].user_text, provider.seen[i].user_text);
        EXPECT_TRUE(s.transcript[i].succeeded());
    }
    EXPECT_EQ(s.transcript.size(), 5u);
}

TEST(Pipeline, InteractiveAndNoneSources) {
    ChainConfig config;
    MockChatProvider provider(fixture::replay_script("v1"), fixture::fast_limits());
    int asked = 0;
    AnswerSourceSpec interactive{AnswerSource::Interactive, nullptr,
                                 [&](const FollowUpQuestion& q) -> std::optional<std::string> {
                                     ++asked;
                                     if (q.index == 1) return "Galaxy";
                                     return std::nullopt;
                                 }};
    const auto a = run_pipeline(verbosity_query(), interactive, config, provider);
    EXPECT_EQ(asked, 2);
    EXPECT_EQ(a.answers[0].text, "Galaxy");
    EXPECT_TRUE(a.answers[1].is_unknown);

    const auto b = run_pipeline(verbosity_query(), AnswerSourceSpec{}, config, provider);
    EXPECT_EQ(b.state, State::Solved);
    for (const auto& ans : b.answers) EXPECT_TRUE(ans.is_unknown);
}

TEST(Pipeline, PreconditionsThrow) {
    MockChatProvider provider(fixture::replay_script("v1"), fixture::fast_limits());
    EXPECT_THROW(run_pipeline(verbosity_query(), {AnswerSource::Corpus, nullptr, {}}, ChainConfig{},
                              provider),
                 std::invalid_argument);
    EXPECT_THROW(run_pipeline(verbosity_query(), {AnswerSource::Interactive, nullptr, {}},
                              ChainConfig{}, provider),
                 std::invalid_argument);
    Conversation other{"zz", {}, false};
    EXPECT_THROW(run_pipeline(verbosity_query(), {AnswerSource::Corpus, &other, {}}, ChainConfig{},
                              provider),
                 std::invalid_argument);
}

TEST(Pipeline, ProviderFailureEndsFailed) {
    MockScript script;
    script.add_error({"questions", "v1"}, ProviderErrorKind::Auth);
    MockChatProvider provider(script, fixture::fast_limits());
    const auto s = run_pipeline(verbosity_query(), AnswerSourceSpec{}, ChainConfig{}, provider);
    EXPECT_EQ(s.state, State::Failed);
    EXPECT_NE(s.note.find("auth"), std::string::npos);
    EXPECT_EQ(s.transcript.size(), 1u);
}

TEST(Pipeline, ScriptMissEndsFailed) {
    MockChatProvider provider(MockScript{}, fixture::fast_limits());
    const auto s = run_pipeline(verbosity_query(), AnswerSourceSpec{}, ChainConfig{}, provider);
    EXPECT_EQ(s.state, State::Failed);
    EXPECT_NE(s.note.find("script_miss"), std::string::npos);
}

TEST(SessionJson, RoundTrip) {
    MockChatProvider provider(fixture::replay_script("v1"), fixture::fast_limits());
    const auto s = run_pipeline(verbosity_query(), AnswerSourceSpec{}, ChainConfig{}, provider, "s9");
    const auto j = to_json(s);
    EXPECT_EQ(j["kind"], "session");
    EXPECT_EQ(session_from_json(j), s);
    EXPECT_EQ(session_from_json(nlohmann::json::parse(j.dump())), s);
}

TEST(SessionInvariants, DetectsBrokenSessions) {
    Session s;
    s.state = State::Solved;
    EXPECT_FALSE(invariant_violations(s, ChainConfig{}).empty());
    Session t;
    t.state = State::QuestionsPending;
    t.questions = {{2, "a?"}};
    EXPECT_FALSE(invariant_violations(t, ChainConfig{}).empty());
}

TEST(SessionFuzz, NoInvariantViolations) {
    const auto report = fixture::fuzz_sessions(20240601, 1500);
    EXPECT_EQ(report.sequences, 1500u);
    EXPECT_GT(report.rejected, 0u);
    EXPECT_TRUE(report.violations.empty())
        << report.violations.size() << " violations, first: " << report.violations.front();
}

TEST(Pipeline, DeterministicUnderMock) {
    const auto store = CorpusStore::parse(fixture::batch_corpus_ndjson());
    const auto script = MockScript::parse(fixture::batch_script_ndjson());
    for (const auto& q : store.queries()) {
        AnswerSourceSpec spec{AnswerSource::Corpus, store.find_conversation(q.id), {}};
        MockChatProvider p1(script, fixture::fast_limits()), p2(script, fixture::fast_limits());
        const auto a = run_pipeline(q, spec, ChainConfig{}, p1);
        const auto b = run_pipeline(q, spec, ChainConfig{}, p2);
        EXPECT_EQ(to_json(a).dump(), to_json(b).dump()) << q.id;
        EXPECT_LE(a.questions.size(), 3u);
    }
}
