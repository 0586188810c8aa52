#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "clarify/corpus.hpp"
#include "clarify/prompts.hpp"
#include "clarify/provider.hpp"

namespace clarify::chain {

enum class State {
    Received,
    QuestionsPending,
    AnswersCollected,
    Paraphrased,
    Solved,
    Abstained,
    Failed,
};

std::string_view to_string(State s);
State state_from_string(std::string_view s);
bool is_terminal(State s);

struct FollowUpQuestion {
    int index = 1;  // 1-based, contiguous
    std::string text;

    bool operator==(const FollowUpQuestion&) const = default;
};

struct Answer {
    int question_index = 1;
    std::string text;
    bool is_unknown = false;  // true iff text == "I do not know"

    bool operator==(const Answer&) const = default;
};

struct Paraphrase {
    std::vector<std::string> questions;
    std::string raw_model_text;

    bool operator==(const Paraphrase&) const = default;
};

inline constexpr int kMaxQuestions = 3;

struct ChainConfig {
    double confidence_threshold = 0.90;
    int max_questions = kMaxQuestions;
    std::string prompt_template_set = "default";
    ChatParams params;  // temperature 0 unless configured otherwise

    // Throws std::invalid_argument when a field is out of range.
    void validate() const;
};

struct Session {
    std::string id;
    TechQuery query;
    State state = State::Received;
    std::vector<FollowUpQuestion> questions;
    std::vector<Answer> answers;
    std::optional<Paraphrase> paraphrase;
    std::optional<SolutionRecord> solution;
    std::vector<ChatExchange> transcript;
    // Last parsed self-reported confidence, solved or not.
    std::optional<double> confidence;
    // Why the session failed or abstained; raw model text when unparsable.
    std::string note;

    // "I do not know" for abstentions, the rendered solution when solved.
    std::optional<std::string> user_facing_text() const;

    bool operator==(const Session&) const = default;
};

// Every broken invariant, described; empty for a consistent session.
std::vector<std::string> invariant_violations(const Session& s, const ChainConfig& config);

// --- structured-output parsing --------------------------------------------

// Outcome of reading the QUESTIONS block.
struct ParsedQuestions {
    bool ok = false;
    bool none_needed = false;  // model said no further context is needed
    std::vector<std::string> questions;
};

ParsedQuestions parse_questions(std::string_view response);

// Numbered or bulleted lines of a PARAPHRASE block; empty when absent.
std::vector<std::string> parse_paraphrase(std::string_view response);

// Accepts "0.95", "95%" and "95" (values above 1 are read as percentages).
std::optional<double> parse_confidence(std::string_view value);
std::optional<SolutionKind> parse_solution_kind(std::string_view value);

// Numbered list for step solutions, plain text otherwise.
std::string render_solution(const SolutionRecord& solution);

// --- stages ----------------------------------------------------------------

// Stage calls record every provider exchange in the transcript. Retriable
// provider errors leave the session state untouched and are rethrown;
// unusable responses move the session to Failed.

Session start_session(const TechQuery& query, const ChainConfig& config, ChatProvider& provider,
                      std::string session_id = {});

// Missing (nullopt or blank) answers become "I do not know".
void submit_answers(Session& session, std::span<const std::optional<std::string>> answers);

void paraphrase(Session& session, const ChainConfig& config, ChatProvider& provider);

void solve(Session& session, const ChainConfig& config, ChatProvider& provider);

// Moves any non-terminal session to Failed.
void fail(Session& session, std::string reason);

enum class AnswerSource { Interactive, Corpus, None };

struct AnswerSourceSpec {
    AnswerSource kind = AnswerSource::None;
    const Conversation* conversation = nullptr;  // required for Corpus
    // Interactive: returns nullopt for "I do not know".
    std::function<std::optional<std::string>(const FollowUpQuestion&)> ask;
};

// Drives all four stages. Stage errors end in a Failed session; only a
// violated precondition (missing conversation or callback) throws.
Session run_pipeline(const TechQuery& query, const AnswerSourceSpec& answers,
                     const ChainConfig& config, ChatProvider& provider,
                     std::string session_id = {});

nlohmann::json to_json(const Session& s);
Session session_from_json(const nlohmann::json& j);

}  // namespace clarify::chain
