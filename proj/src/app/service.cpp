#include <fstream>
#include <stdexcept>

#include "clarify/app.hpp"
#include "clarify/error.hpp"

namespace clarify::app {
namespace {

using Response = SessionService::Response;

Response error(int status, const std::string& message) {
    return {status, {{"error", message}}};
}

Response provider_failure(const ProviderError& e) {
    return {502,
            {{"error", e.what()}, {"kind", to_string(e.kind())}, {"retriable", e.retriable()}}};
}

// Runs a session operation and maps failures to status codes.
template <typename Fn>
Response guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const ProviderError& e) {
        return provider_failure(e);
    } catch (const StateViolation& e) {
        return error(409, e.what());
    } catch (const std::invalid_argument& e) {
        return error(400, e.what());
    } catch (const std::exception& e) {
        return error(500, e.what());
    }
}

}  // namespace

nlohmann::json session_envelope(const chain::Session& s) {
    nlohmann::json questions = nlohmann::json::array();
    for (const auto& q : s.questions) questions.push_back({{"index", q.index}, {"text", q.text}});
    nlohmann::json answers = nlohmann::json::array();
    for (const auto& a : s.answers)
        answers.push_back(
            {{"question_index", a.question_index}, {"text", a.text}, {"is_unknown", a.is_unknown}});

    nlohmann::json env{{"id", s.id},
                       {"state", chain::to_string(s.state)},
                       {"terminal", chain::is_terminal(s.state)},
                       {"query", s.query.text},
                       {"questions", questions},
                       {"pending_questions",
                        s.state == chain::State::QuestionsPending ? questions
                                                                  : nlohmann::json::array()},
                       {"answers", answers},
                       {"abstained", s.state == chain::State::Abstained}};
    env["paraphrase"] = s.paraphrase ? nlohmann::json(s.paraphrase->questions) : nlohmann::json();
    env["solution"] = s.solution ? nlohmann::json{{"text", chain::render_solution(*s.solution)},
                                                  {"kind", to_string(s.solution->kind)}}
                                 : nlohmann::json();
    env["confidence"] = s.confidence ? nlohmann::json(*s.confidence) : nlohmann::json();
    const auto text = s.user_facing_text();
    env["message"] = text ? nlohmann::json(*text) : nlohmann::json();
    env["note"] = s.note;
    return env;
}

SessionService::SessionService(chain::ChainConfig config, ChatProvider& provider,
                               std::optional<std::filesystem::path> persist_path)
    : config_(std::move(config)), provider_(provider), persist_path_(std::move(persist_path)) {
    config_.validate();
    if (!persist_path_ || !std::filesystem::exists(*persist_path_)) return;

    std::ifstream in(*persist_path_);
    std::string line;
    std::size_t line_no = 0;
    std::uint64_t max_id = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            auto s = chain::session_from_json(nlohmann::json::parse(line));
            if (s.id.size() > 1 && s.id[0] == 's') {
                try {
                    max_id = std::max<std::uint64_t>(max_id, std::stoull(s.id.substr(1)));
                } catch (const std::exception&) {
                }
            }
            auto entry = std::make_shared<Entry>();
            persisted_[s.id] = line;
            entry->session = std::move(s);
            sessions_[entry->session.id] = std::move(entry);
        } catch (const std::exception& e) {
            throw ParseError(std::string("persisted session: ") + e.what(), line_no);
        }
    }
    next_id_ = max_id + 1;
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

void SessionService::persist(const chain::Session& s) {
    if (!persist_path_) return;
    std::lock_guard lock(persist_mu_);
    persisted_[s.id] = chain::to_json(s).dump();
    const auto tmp = persist_path_->string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        for (const auto& [id, line] : persisted_) out << line << '\n';
    }
    std::filesystem::rename(tmp, *persist_path_);
}

Response SessionService::create(const nlohmann::json& body) {
    return guarded([&]() -> Response {
        if (!body.is_object() || !body.contains("query") || !body["query"].is_string())
            return error(400, "body must be an object with a string 'query'");
        const auto id = "s" + std::to_string(next_id_++);
        auto query = make_query(id, body["query"].get<std::string>(),
                                body.value("device", std::string("unknown")));
        if (body.contains("app") && body["app"].is_string()) query.app = body["app"];

        auto entry = std::make_shared<Entry>();
        entry->session = chain::start_session(query, config_, provider_, id);
        auto& s = entry->session;
        std::optional<ProviderError> late;
        if (s.state == chain::State::AnswersCollected) {
            try {
                chain::paraphrase(s, config_, provider_);
            } catch (const ProviderError& e) {
                late = e;
            }
        }
        const auto env = session_envelope(s);
        {
            std::lock_guard lock(mu_);
            sessions_[id] = entry;
        }
        persist(s);
        if (late) return provider_failure(*late);
        return {201, env};
    });
}

Response SessionService::answers(const std::string& id, const nlohmann::json& body) {
    auto entry = find(id);
    if (!entry) return error(404, "unknown session " + id);
    std::lock_guard lock(entry->mu);
    auto& s = entry->session;
    return guarded([&]() -> Response {
        if (!body.is_object() || !body.contains("answers") || !body["answers"].is_array())
            return error(400, "body must be an object with an 'answers' array");
        if (s.state != chain::State::QuestionsPending)
            return error(409, "session " + id + " is " + std::string(chain::to_string(s.state)));
        std::vector<std::optional<std::string>> answers;
        for (const auto& a : body["answers"]) {
            if (a.is_null()) answers.emplace_back();
            else if (a.is_string()) answers.emplace_back(a.get<std::string>());
            else return error(400, "answers must be strings or null");
        }
        if (answers.size() != s.questions.size())
            return error(409, "expected " + std::to_string(s.questions.size()) + " answers, got " +
                                  std::to_string(answers.size()));
        chain::submit_answers(s, answers);
        try {
            chain::paraphrase(s, config_, provider_);
        } catch (const ProviderError& e) {
            persist(s);
            return provider_failure(e);
        }
        persist(s);
        return {200, session_envelope(s)};
    });
}

Response SessionService::solve(const std::string& id) {
    auto entry = find(id);
    if (!entry) return error(404, "unknown session " + id);
    std::lock_guard lock(entry->mu);
    auto& s = entry->session;
    return guarded([&]() -> Response {
        if (s.state != chain::State::AnswersCollected && s.state != chain::State::Paraphrased)
            return error(409, "session " + id + " is " + std::string(chain::to_string(s.state)));
        try {
            if (s.state == chain::State::AnswersCollected) chain::paraphrase(s, config_, provider_);
            if (s.state == chain::State::Paraphrased) chain::solve(s, config_, provider_);
        } catch (const ProviderError& e) {
            persist(s);
            return provider_failure(e);
        }
        persist(s);
        return {200, session_envelope(s)};
    });
}

Response SessionService::get(const std::string& id) const {
    auto entry = find(id);
    if (!entry) return error(404, "unknown session " + id);
    std::lock_guard lock(entry->mu);
    return {200, session_envelope(entry->session)};
}

Response SessionService::health() const {
    return {200,
            {{"status", "ok"},
             {"version", std::string(kVersion)},
             {"provider", provider_.name()},
             {"sessions", session_count()}}};
}

std::size_t SessionService::session_count() const {
    std::lock_guard lock(mu_);
    return sessions_.size();
}

}  // namespace clarify::app
