#include "clarify/chain.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

#include "clarify/error.hpp"

namespace clarify::chain {
namespace {

constexpr std::array<std::pair<State, std::string_view>, 7> kStateNames{{
    {State::Received, "received"},
    {State::QuestionsPending, "questions_pending"},
    {State::AnswersCollected, "answers_collected"},
    {State::Paraphrased, "paraphrased"},
    {State::Solved, "solved"},
    {State::Abstained, "abstained"},
    {State::Failed, "failed"},
}};

// Position along the happy path; Failed has no rank.
int rank(State s) {
    switch (s) {
        case State::Received: return 0;
        case State::QuestionsPending: return 1;
        case State::AnswersCollected: return 2;
        case State::Paraphrased: return 3;
        case State::Solved:
        case State::Abstained: return 4;
        case State::Failed: return -1;
    }
    return -1;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

bool is_blank(std::string_view s) { return trim(s).empty(); }

// Strips "1.", "2)", "-", "*" or "•" list markers. Returns false when the
// line carries no marker.
bool strip_list_marker(std::string_view& line) {
    auto s = trim(line);
    if (s.empty()) return false;
    if (s.front() == '-' || s.front() == '*') {
        s.remove_prefix(1);
        line = trim(s);
        return true;
    }
    if (s.substr(0, 3) == "\xE2\x80\xA2") {  // bullet
        s.remove_prefix(3);
        line = trim(s);
        return true;
    }
    std::size_t i = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) {
        s.remove_prefix(i + 1);
        line = trim(s);
        return true;
    }
    return false;
}

// List items of a block value; plain non-empty lines when no line is marked.
std::vector<std::string> list_items(std::string_view value) {
    std::vector<std::string> marked, plain;
    std::istringstream in{std::string(value)};
    std::string line;
    while (std::getline(in, line)) {
        std::string_view v = line;
        if (strip_list_marker(v)) {
            if (!v.empty()) marked.emplace_back(v);
        } else if (!is_blank(v)) {
            plain.emplace_back(trim(v));
        }
    }
    return marked.empty() ? plain : marked;
}

std::string qa_pairs_text(const Session& s) {
    if (s.questions.empty()) return "(no follow-up questions were asked)";
    std::string out;
    for (std::size_t i = 0; i < s.questions.size(); ++i) {
        out += "Q: " + s.questions[i].text + " A: ";
        out += i < s.answers.size() ? s.answers[i].text : std::string(kUnknownAnswer);
        if (i + 1 < s.questions.size()) out.push_back('\n');
    }
    return out;
}

std::string optional_text(const std::optional<std::string>& v) { return v ? *v : "unknown"; }

// Calls the provider and appends the exchange to the transcript. Malformed
// responses fail the session and yield nullopt; other provider errors are
// rethrown after being recorded.
std::optional<std::string> call(Session& session, const ChatRequest& request,
                                ChatProvider& provider) {
    ChatExchange ex;
    ex.key = request.key;
    ex.system_text = request.system_text;
    ex.user_text = request.user_text;
    ex.params = request.params;
    try {
        ex.response_text = provider.complete(request);
        ex.response_fields = parse_key_value_block(*ex.response_text);
        session.transcript.push_back(ex);
        return ex.response_text;
    } catch (const ProviderError& e) {
        ex.error = std::string(to_string(e.kind())) + ": " + e.what();
        session.transcript.push_back(ex);
        if (e.kind() == ProviderErrorKind::Malformed) {
            fail(session, ex.error + "; raw: " + e.raw());
            return std::nullopt;
        }
        throw;
    }
}

ChatRequest make_request(const Session& s, const ChainConfig& config, std::string stage,
                         const PromptTemplate& tmpl, const std::map<std::string, std::string>& slots) {
    ChatRequest req;
    req.key = {std::move(stage), s.query.id};
    req.system_text = tmpl.system;
    req.user_text = render(tmpl.user, slots);
    req.params = config.params;
    return req;
}

void require_state(const Session& s, State expected, std::string_view op) {
    if (s.state != expected)
        throw StateViolation(std::string(op) + " requires state " + std::string(to_string(expected)) +
                             ", session " + s.id + " is " + std::string(to_string(s.state)));
}

void do_start(Session& s, const ChainConfig& config, ChatProvider& provider) {
    const auto prompts = load_prompt_set(config.prompt_template_set);
    auto req = make_request(s, config, "questions", prompts.questions,
                            {{"query", s.query.text},
                             {"device", s.query.device},
                             {"app", optional_text(s.query.app)},
                             {"max_questions", std::to_string(config.max_questions)}});
    const auto text = call(s, req, provider);
    if (!text) return;

    auto parsed = parse_questions(*text);
    if (!parsed.ok) {
        fail(s, "could not parse follow-up questions; raw: " + *text);
        return;
    }
    if (parsed.questions.size() > static_cast<std::size_t>(config.max_questions))
        parsed.questions.resize(static_cast<std::size_t>(config.max_questions));
    for (std::size_t i = 0; i < parsed.questions.size(); ++i)
        s.questions.push_back({static_cast<int>(i + 1), parsed.questions[i]});
    s.state = s.questions.empty() ? State::AnswersCollected : State::QuestionsPending;
}

// ChatProvider that forwards to another provider and records every call in
// a session transcript. Retries and limits belong to the inner provider.
class RecordingProvider final : public ChatProvider {
public:
    RecordingProvider(ChatProvider& inner, Session& session)
        : ChatProvider(passthrough_limits(inner)), inner_(inner), session_(session) {}

    std::string name() const override { return inner_.name(); }

protected:
    std::string do_complete(const ChatRequest& request) override {
        ChatExchange ex;
        ex.key = request.key;
        ex.system_text = request.system_text;
        ex.user_text = request.user_text;
        ex.params = request.params;
        try {
            ex.response_text = inner_.complete(request);
            ex.response_fields = parse_key_value_block(*ex.response_text);
            session_.transcript.push_back(ex);
            return *ex.response_text;
        } catch (const ProviderError& e) {
            ex.error = std::string(to_string(e.kind())) + ": " + e.what();
            session_.transcript.push_back(ex);
            throw;
        }
    }

private:
    static ProviderLimits passthrough_limits(const ChatProvider& inner) {
        ProviderLimits l;
        l.max_output_tokens = inner.limits().max_output_tokens;
        l.parallelism = 1;
        l.retry.max_attempts = 1;
        l.sleep = nullptr;
        return l;
    }

    ChatProvider& inner_;
    Session& session_;
};

}  // namespace

std::string_view to_string(State s) {
    for (const auto& [st, name] : kStateNames)
        if (st == s) return name;
    return "?";
}

State state_from_string(std::string_view s) {
    for (const auto& [st, name] : kStateNames)
        if (name == s) return st;
    throw std::invalid_argument("unknown session state '" + std::string(s) + "'");
}

bool is_terminal(State s) {
    return s == State::Solved || s == State::Abstained || s == State::Failed;
}

void ChainConfig::validate() const {
    if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0))
        throw std::invalid_argument("confidence_threshold must be within [0, 1]");
    if (max_questions < 1 || max_questions > kMaxQuestions)
        throw std::invalid_argument("max_questions must be within [1, 3]");
    if (prompt_template_set.empty())
        throw std::invalid_argument("prompt_template_set must not be empty");
    if (params.temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
    if (params.max_output_tokens < 1)
        throw std::invalid_argument("max_output_tokens must be positive");
}

std::optional<std::string> Session::user_facing_text() const {
    if (state == State::Solved && solution) return render_solution(*solution);
    if (state == State::Abstained) return std::string(kUnknownAnswer);
    return std::nullopt;
}

std::vector<std::string> invariant_violations(const Session& s, const ChainConfig& config) {
    std::vector<std::string> v;
    const int r = rank(s.state);
    const auto cap = static_cast<std::size_t>(std::min(config.max_questions, kMaxQuestions));

    if (s.questions.size() > cap) v.push_back("more questions than the cap");
    for (std::size_t i = 0; i < s.questions.size(); ++i) {
        if (s.questions[i].index != static_cast<int>(i + 1))
            v.push_back("question indices not contiguous from 1");
        if (is_blank(s.questions[i].text)) v.push_back("empty question text");
    }
    if (s.answers.size() > s.questions.size()) v.push_back("more answers than questions");
    if (r >= 2 && s.answers.size() != s.questions.size())
        v.push_back("answer count differs from question count");
    if (r >= 0 && r < 2 && !s.answers.empty()) v.push_back("answers before collection");
    for (std::size_t i = 0; i < s.answers.size(); ++i) {
        const auto& a = s.answers[i];
        if (a.question_index != static_cast<int>(i + 1))
            v.push_back("answer not aligned to its question");
        if (a.is_unknown != (a.text == kUnknownAnswer))
            v.push_back("is_unknown disagrees with answer text");
    }
    if (r >= 0 && (r >= 3) != s.paraphrase.has_value())
        v.push_back("paraphrase presence disagrees with state");
    if (s.paraphrase) {
        if (s.paraphrase->questions.empty()) v.push_back("paraphrase without questions");
        for (const auto& q : s.paraphrase->questions)
            if (is_blank(q)) v.push_back("empty paraphrase question");
    }
    if ((s.state == State::Solved) != s.solution.has_value())
        v.push_back("solution presence disagrees with state");
    if (s.solution) {
        if (!s.solution->confidence)
            v.push_back("solution without confidence");
        else if (*s.solution->confidence < config.confidence_threshold)
            v.push_back("solution below confidence threshold");
        if (s.solution->origin != SolutionOrigin::Model) v.push_back("solution not model-origin");
    }
    return v;
}

ParsedQuestions parse_questions(std::string_view response) {
    ParsedQuestions out;
    const auto block = parse_key_value_block(response);
    const auto it = block.find("QUESTIONS");
    const bool marker = upper(response).find("NO FURTHER CONTEXT NEEDED") != std::string::npos;
    if (it == block.end()) {
        if (marker) {
            out.ok = true;
            out.none_needed = true;
        }
        return out;
    }
    const auto value = upper(trim(it->second));
    if (value == "NONE" || value == "NONE." || value.starts_with("NO FURTHER CONTEXT NEEDED")) {
        out.ok = true;
        out.none_needed = true;
        return out;
    }
    out.questions = list_items(it->second);
    out.ok = !out.questions.empty();
    return out;
}

std::vector<std::string> parse_paraphrase(std::string_view response) {
    const auto block = parse_key_value_block(response);
    const auto it = block.find("PARAPHRASE");
    if (it == block.end()) return {};
    return list_items(it->second);
}

std::optional<double> parse_confidence(std::string_view value) {
    auto s = std::string(trim(value));
    if (s.empty()) return std::nullopt;
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) return std::nullopt;
    const bool percent = std::string_view(end).find('%') != std::string_view::npos;
    double c = v;
    if (percent || v > 1.0) c = v / 100.0;
    if (!(c >= 0.0 && c <= 1.0)) return std::nullopt;
    return c;
}

std::optional<SolutionKind> parse_solution_kind(std::string_view value) {
    std::string s;
    for (char c : trim(value)) {
        if (c == ' ' || c == '-') c = '_';
        s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    while (!s.empty() && (s.back() == '.' || s.back() == '_')) s.pop_back();
    if (s == "steps" || s == "step" || s == "step_by_step") return SolutionKind::Steps;
    if (s == "conceptual" || s == "explanation" || s == "concept") return SolutionKind::Conceptual;
    if (s == "cannot_be_done" || s == "impossible" || s == "not_possible" || s == "cannot")
        return SolutionKind::CannotBeDone;
    return std::nullopt;
}

std::string render_solution(const SolutionRecord& solution) {
    if (solution.kind != SolutionKind::Steps) return solution.text;
    std::vector<std::string> steps;
    std::istringstream in(solution.text);
    std::string line;
    while (std::getline(in, line)) {
        std::string_view v = line;
        strip_list_marker(v);
        v = trim(v);
        if (!v.empty()) steps.emplace_back(v);
    }
    std::string out;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        out += std::to_string(i + 1) + ". " + steps[i];
        if (i + 1 < steps.size()) out.push_back('\n');
    }
    return out;
}

Session start_session(const TechQuery& query, const ChainConfig& config, ChatProvider& provider,
                      std::string session_id) {
    config.validate();
    if (is_blank(query.text)) throw std::invalid_argument("start_session: empty query text");
    Session s;
    s.id = session_id.empty() ? "session-" + query.id : std::move(session_id);
    s.query = query;
    do_start(s, config, provider);
    return s;
}

void submit_answers(Session& session, std::span<const std::optional<std::string>> answers) {
    require_state(session, State::QuestionsPending, "submit_answers");
    if (answers.size() != session.questions.size())
        throw std::invalid_argument("submit_answers: expected " +
                                    std::to_string(session.questions.size()) + " answers, got " +
                                    std::to_string(answers.size()));
    std::vector<Answer> collected;
    for (std::size_t i = 0; i < answers.size(); ++i) {
        Answer a;
        a.question_index = session.questions[i].index;
        if (answers[i] && !is_blank(*answers[i]))
            a.text = std::string(trim(*answers[i]));
        else
            a.text = std::string(kUnknownAnswer);
        a.is_unknown = a.text == kUnknownAnswer;
        collected.push_back(std::move(a));
    }
    session.answers = std::move(collected);
    session.state = State::AnswersCollected;
}

void paraphrase(Session& session, const ChainConfig& config, ChatProvider& provider) {
    require_state(session, State::AnswersCollected, "paraphrase");
    config.validate();
    const auto prompts = load_prompt_set(config.prompt_template_set);
    auto req = make_request(session, config, "paraphrase", prompts.paraphrase,
                            {{"query", session.query.text}, {"qa_pairs", qa_pairs_text(session)}});
    const auto text = call(session, req, provider);
    if (!text) return;
    auto questions = parse_paraphrase(*text);
    if (questions.empty()) {
        fail(session, "could not parse paraphrase; raw: " + *text);
        return;
    }
    session.paraphrase = Paraphrase{std::move(questions), *text};
    session.state = State::Paraphrased;
}

void solve(Session& session, const ChainConfig& config, ChatProvider& provider) {
    require_state(session, State::Paraphrased, "solve");
    config.validate();
    const auto prompts = load_prompt_set(config.prompt_template_set);
    std::string para;
    for (std::size_t i = 0; i < session.paraphrase->questions.size(); ++i) {
        para += std::to_string(i + 1) + ". " + session.paraphrase->questions[i];
        if (i + 1 < session.paraphrase->questions.size()) para.push_back('\n');
    }
    auto req = make_request(session, config, "solution", prompts.solution,
                            {{"query", session.query.text},
                             {"qa_pairs", qa_pairs_text(session)},
                             {"paraphrase", para}});
    const auto text = call(session, req, provider);
    if (!text) return;

    const auto block = parse_key_value_block(*text);
    auto field = [&](const char* key) -> std::string {
        auto it = block.find(key);
        return it == block.end() ? std::string() : std::string(trim(it->second));
    };
    const auto confidence = parse_confidence(field("CONFIDENCE"));
    session.confidence = confidence;
    const auto solution_text = field("SOLUTION");

    auto abstain = [&](std::string why) {
        session.state = State::Abstained;
        session.note = std::move(why);
    };
    if (!confidence) return abstain("confidence missing or unparsable; raw: " + *text);
    if (*confidence < config.confidence_threshold)
        return abstain("confidence " + std::to_string(*confidence) + " below threshold " +
                       std::to_string(config.confidence_threshold));
    if (solution_text.empty()) return abstain("solution text missing; raw: " + *text);

    auto kind = parse_solution_kind(field("SOLUTION_KIND"));
    if (!kind) {
        // Infer from shape: a numbered list reads as steps.
        std::string_view first = solution_text;
        kind = strip_list_marker(first) ? SolutionKind::Steps : SolutionKind::Conceptual;
    }
    SolutionRecord rec;
    rec.id = session.id + "/solution";
    rec.query_id = session.query.id;
    rec.text = solution_text;
    rec.kind = *kind;
    rec.origin = SolutionOrigin::Model;
    rec.confidence = confidence;
    session.solution = std::move(rec);
    session.state = State::Solved;
}

void fail(Session& session, std::string reason) {
    if (is_terminal(session.state))
        throw StateViolation("cannot fail session " + session.id + " in terminal state " +
                             std::string(to_string(session.state)));
    session.state = State::Failed;
    session.note = std::move(reason);
}

Session run_pipeline(const TechQuery& query, const AnswerSourceSpec& answers,
                     const ChainConfig& config, ChatProvider& provider, std::string session_id) {
    config.validate();
    if (is_blank(query.text)) throw std::invalid_argument("run_pipeline: empty query text");
    if (answers.kind == AnswerSource::Corpus) {
        if (!answers.conversation)
            throw std::invalid_argument("run_pipeline: corpus answers need a conversation for " +
                                        query.id);
        if (answers.conversation->query_id != query.id)
            throw std::invalid_argument("run_pipeline: conversation belongs to " +
                                        answers.conversation->query_id + ", not " + query.id);
    }
    if (answers.kind == AnswerSource::Interactive && !answers.ask)
        throw std::invalid_argument("run_pipeline: interactive answers need a callback");

    Session s;
    s.id = session_id.empty() ? "session-" + query.id : std::move(session_id);
    s.query = query;
    try {
        do_start(s, config, provider);
        if (s.state == State::QuestionsPending) {
            std::vector<std::optional<std::string>> collected;
            switch (answers.kind) {
                case AnswerSource::None:
                    collected.assign(s.questions.size(), std::nullopt);
                    break;
                case AnswerSource::Interactive:
                    for (const auto& q : s.questions) collected.push_back(answers.ask(q));
                    break;
                case AnswerSource::Corpus: {
                    RecordingProvider recorder(provider, s);
                    for (const auto& q : s.questions)
                        collected.push_back(
                            lookup_answer(*answers.conversation, q.text, recorder, q.index));
                    break;
                }
            }
            submit_answers(s, collected);
        }
        if (s.state == State::AnswersCollected) paraphrase(s, config, provider);
        if (s.state == State::Paraphrased) solve(s, config, provider);
    } catch (const ProviderError& e) {
        if (!is_terminal(s.state))
            fail(s, std::string("provider error (") + to_string(e.kind()) + "): " + e.what() +
                        (e.raw().empty() ? "" : "; raw: " + e.raw()));
    } catch (const std::exception& e) {
        if (!is_terminal(s.state)) fail(s, std::string("stage error: ") + e.what());
    }
    return s;
}

nlohmann::json to_json(const Session& s) {
    nlohmann::json questions = nlohmann::json::array();
    for (const auto& q : s.questions) questions.push_back({{"index", q.index}, {"text", q.text}});
    nlohmann::json answers = nlohmann::json::array();
    for (const auto& a : s.answers)
        answers.push_back(
            {{"question_index", a.question_index}, {"text", a.text}, {"is_unknown", a.is_unknown}});
    nlohmann::json transcript = nlohmann::json::array();
    for (const auto& e : s.transcript) transcript.push_back(clarify::to_json(e));

    nlohmann::json j{{"kind", "session"},          {"id", s.id},
                     {"query", clarify::to_json(s.query)},
                     {"state", to_string(s.state)}, {"questions", questions},
                     {"answers", answers},          {"transcript", transcript},
                     {"note", s.note}};
    j["paraphrase"] = s.paraphrase ? nlohmann::json{{"questions", s.paraphrase->questions},
                                                    {"raw_model_text", s.paraphrase->raw_model_text}}
                                   : nlohmann::json();
    j["solution"] = s.solution ? clarify::to_json(*s.solution) : nlohmann::json();
    j["confidence"] = s.confidence ? nlohmann::json(*s.confidence) : nlohmann::json();
    return j;
}

Session session_from_json(const nlohmann::json& j) {
    Session s;
    s.id = j.at("id").get<std::string>();
    s.query = query_from_json(j.at("query"));
    s.state = state_from_string(j.at("state").get<std::string>());
    for (const auto& q : j.value("questions", nlohmann::json::array()))
        s.questions.push_back({q.at("index").get<int>(), q.at("text").get<std::string>()});
    for (const auto& a : j.value("answers", nlohmann::json::array()))
        s.answers.push_back({a.at("question_index").get<int>(), a.at("text").get<std::string>(),
                             a.at("is_unknown").get<bool>()});
    if (j.contains("paraphrase") && !j["paraphrase"].is_null())
        s.paraphrase = Paraphrase{j["paraphrase"].at("questions").get<std::vector<std::string>>(),
                                  j["paraphrase"].value("raw_model_text", "")};
    if (j.contains("solution") && !j["solution"].is_null())
        s.solution = solution_from_json(j["solution"]);
    for (const auto& e : j.value("transcript", nlohmann::json::array()))
        s.transcript.push_back(chat_exchange_from_json(e));
    if (j.contains("confidence") && !j["confidence"].is_null())
        s.confidence = j["confidence"].get<double>();
    s.note = j.value("note", "");
    return s;
}

}  // namespace clarify::chain
