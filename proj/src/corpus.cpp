#include "clarify/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "clarify/error.hpp"
#include "clarify/metrics.hpp"
#include "clarify/prompts.hpp"
#include "clarify/provider.hpp"

namespace clarify {
namespace {

template <typename E, std::size_t N>
struct EnumNames {
    std::array<std::pair<E, std::string_view>, N> entries;

    std::string_view name(E v) const {
        for (const auto& [e, n] : entries)
            if (e == v) return n;
        return "?";
    }
    E value(std::string_view s, std::string_view what) const {
        for (const auto& [e, n] : entries)
            if (n == s) return e;
        throw std::invalid_argument("unknown " + std::string(what) + " '" + std::string(s) + "'");
    }
};

constexpr EnumNames<QuerySource, 3> kSources{{{{QuerySource::Diary, "diary"},
                                               {QuerySource::Synthetic, "synthetic"},
                                               {QuerySource::Manual, "manual"}}}};
constexpr EnumNames<Characteristic, 4> kCharacteristics{
    {{{Characteristic::Verbosity, "verbosity"},
      {Characteristic::OverSpecification, "over_specification"},
      {Characteristic::UnderSpecification, "under_specification"},
      {Characteristic::Incompleteness, "incompleteness"}}}};
constexpr EnumNames<QuestionType, 5> kQuestionTypes{
    {{{QuestionType::Validation, "validation"},
      {QuestionType::DirectedInformational, "directed_informational"},
      {QuestionType::UndirectedInformational, "undirected_informational"},
      {QuestionType::Navigational, "navigational"},
      {QuestionType::Conceptual, "conceptual"}}}};
constexpr EnumNames<SolutionKind, 3> kSolutionKinds{{{{SolutionKind::Steps, "steps"},
                                                      {SolutionKind::Conceptual, "conceptual"},
                                                      {SolutionKind::CannotBeDone,
                                                       "cannot_be_done"}}}};
constexpr EnumNames<SolutionOrigin, 2> kOrigins{
    {{{SolutionOrigin::Model, "model"}, {SolutionOrigin::Reference, "reference"}}}};
constexpr EnumNames<Verdict, 3> kVerdicts{{{{Verdict::Correct, "correct"},
                                            {Verdict::PartiallyCorrect, "partially_correct"},
                                            {Verdict::Incorrect, "incorrect"}}}};
constexpr EnumNames<RatingTarget, 2> kTargets{
    {{{RatingTarget::Paraphrase, "paraphrase"}, {RatingTarget::Solution, "solution"}}}};
constexpr EnumNames<MessageRole, 2> kRoles{
    {{{MessageRole::Seeker, "seeker"}, {MessageRole::Helper, "helper"}}}};

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

int read_digits(std::string_view s, std::size_t pos, std::size_t count) {
    if (pos + count > s.size()) throw std::invalid_argument("truncated timestamp");
    int v = 0;
    for (std::size_t i = pos; i < pos + count; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i])))
            throw std::invalid_argument("timestamp digit expected");
        v = v * 10 + (s[i] - '0');
    }
    return v;
}

void expect_char(std::string_view s, std::size_t pos, std::string_view allowed) {
    if (pos >= s.size() || allowed.find(s[pos]) == std::string_view::npos)
        throw std::invalid_argument("malformed timestamp");
}

template <typename T>
std::optional<T> optional_field(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<T>();
}

std::string required_string(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string())
        throw std::invalid_argument(std::string("missing string field '") + key + "'");
    return j[key].get<std::string>();
}

}  // namespace

std::string_view to_string(QuerySource v) { return kSources.name(v); }
std::string_view to_string(Characteristic v) { return kCharacteristics.name(v); }
std::string_view to_string(QuestionType v) { return kQuestionTypes.name(v); }
std::string_view to_string(SolutionKind v) { return kSolutionKinds.name(v); }
std::string_view to_string(SolutionOrigin v) { return kOrigins.name(v); }
std::string_view to_string(Verdict v) { return kVerdicts.name(v); }
std::string_view to_string(RatingTarget v) { return kTargets.name(v); }
std::string_view to_string(MessageRole v) { return kRoles.name(v); }

template <>
QuerySource from_string<QuerySource>(std::string_view s) { return kSources.value(s, "source"); }
template <>
Characteristic from_string<Characteristic>(std::string_view s) {
    return kCharacteristics.value(s, "characteristic");
}
template <>
QuestionType from_string<QuestionType>(std::string_view s) {
    return kQuestionTypes.value(s, "question type");
}
template <>
SolutionKind from_string<SolutionKind>(std::string_view s) {
    return kSolutionKinds.value(s, "solution kind");
}
template <>
SolutionOrigin from_string<SolutionOrigin>(std::string_view s) {
    return kOrigins.value(s, "origin");
}
template <>
Verdict from_string<Verdict>(std::string_view s) { return kVerdicts.value(s, "verdict"); }
template <>
RatingTarget from_string<RatingTarget>(std::string_view s) {
    return kTargets.value(s, "target kind");
}
template <>
MessageRole from_string<MessageRole>(std::string_view s) { return kRoles.value(s, "role"); }

TechQuery make_query(std::string id, std::string text, std::string device, QuerySource source) {
    if (id.empty()) throw std::invalid_argument("query id must not be empty");
    if (blank(text)) throw std::invalid_argument("query text must not be empty");
    TechQuery q;
    q.id = std::move(id);
    q.word_count = metrics::tokenize(text).size();
    q.text = std::move(text);
    q.device = device.empty() ? "unknown" : std::move(device);
    q.source = source;
    return q;
}

Timestamp Timestamp::parse(std::string_view s) {
    using namespace std::chrono;
    // YYYY-MM-DDTHH:MM:SS[.fff]Z|+HH:MM
    const int year = read_digits(s, 0, 4);
    expect_char(s, 4, "-");
    const int month = read_digits(s, 5, 2);
    expect_char(s, 7, "-");
    const int day = read_digits(s, 8, 2);
    expect_char(s, 10, "Tt ");
    const int hour = read_digits(s, 11, 2);
    expect_char(s, 13, ":");
    const int minute = read_digits(s, 14, 2);
    expect_char(s, 16, ":");
    const int second = read_digits(s, 17, 2);
    std::size_t pos = 19;
    long long millis = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        int digits = 0;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
            if (digits < 3) millis = millis * 10 + (s[pos] - '0');
            ++digits;
            ++pos;
        }
        if (digits == 0) throw std::invalid_argument("malformed timestamp fraction");
        for (int d = digits; d < 3; ++d) millis *= 10;
    }
    int offset_minutes = 0;
    if (pos < s.size() && (s[pos] == 'Z' || s[pos] == 'z')) {
        ++pos;
    } else if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
        const int sign = s[pos] == '-' ? -1 : 1;
        const int oh = read_digits(s, pos + 1, 2);
        expect_char(s, pos + 3, ":");
        const int om = read_digits(s, pos + 4, 2);
        offset_minutes = sign * (oh * 60 + om);
        pos += 6;
    } else {
        throw std::invalid_argument("timestamp needs a Z or numeric offset");
    }
    if (pos != s.size()) throw std::invalid_argument("trailing characters in timestamp");

    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                             std::chrono::day{static_cast<unsigned>(day)}};
    if (!ymd.ok() || hour > 23 || minute > 59 || second > 60)
        throw std::invalid_argument("timestamp out of range");

    Timestamp t;
    t.text = std::string(s);
    t.instant = sys_days{ymd} + hours{hour} + minutes{minute} + seconds{second} +
                milliseconds{millis} - minutes{offset_minutes};
    return t;
}

nlohmann::json to_json(const TechQuery& q) {
    nlohmann::json j{{"kind", "query"},       {"id", q.id},
                     {"text", q.text},        {"device", q.device},
                     {"has_screenshot", q.has_screenshot},
                     {"word_count", q.word_count},
                     {"source", to_string(q.source)}};
    j["app"] = q.app ? nlohmann::json(*q.app) : nlohmann::json();
    j["author_age"] = q.author_age ? nlohmann::json(*q.author_age) : nlohmann::json();
    j["author_gender"] = q.author_gender ? nlohmann::json(*q.author_gender) : nlohmann::json();
    return j;
}

nlohmann::json to_json(const CharacteristicLabel& l) {
    return {{"kind", "label"},
            {"query_id", l.query_id},
            {"characteristic", to_string(l.characteristic)}};
}

nlohmann::json to_json(const QuestionTypeLabel& l) {
    return {{"kind", "qtype"},
            {"query_id", l.query_id},
            {"qtype", to_string(l.qtype)},
            {"rater_id", l.rater_id}};
}

nlohmann::json to_json(const Conversation& c) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : c.messages)
        messages.push_back(
            {{"role", to_string(m.role)}, {"text", m.text}, {"timestamp", m.timestamp.text}});
    return {{"kind", "conversation"},
            {"query_id", c.query_id},
            {"messages", messages},
            {"resolved", c.resolved}};
}

nlohmann::json to_json(const SolutionRecord& s) {
    nlohmann::json j{{"kind", "solution"},
                     {"id", s.id},
                     {"query_id", s.query_id},
                     {"text", s.text},
                     {"solution_kind", to_string(s.kind)},
                     {"origin", to_string(s.origin)}};
    j["confidence"] = s.confidence ? nlohmann::json(*s.confidence) : nlohmann::json();
    return j;
}

nlohmann::json to_json(const RatingRecord& r) {
    return {{"kind", "rating"},
            {"rater_id", r.rater_id},
            {"target_id", r.target_id},
            {"target_kind", to_string(r.target_kind)},
            {"verdict", to_string(r.verdict)}};
}

TechQuery query_from_json(const nlohmann::json& j) {
    auto q = make_query(required_string(j, "id"), required_string(j, "text"),
                        j.value("device", std::string("unknown")),
                        from_string<QuerySource>(j.value("source", std::string("manual"))));
    q.app = optional_field<std::string>(j, "app");
    q.has_screenshot = j.value("has_screenshot", false);
    q.author_age = optional_field<int>(j, "author_age");
    q.author_gender = optional_field<std::string>(j, "author_gender");
    return q;
}

SolutionRecord solution_from_json(const nlohmann::json& j) {
    SolutionRecord s;
    s.id = required_string(j, "id");
    s.query_id = required_string(j, "query_id");
    s.text = required_string(j, "text");
    s.kind = from_string<SolutionKind>(required_string(j, "solution_kind"));
    s.origin = from_string<SolutionOrigin>(j.value("origin", std::string("model")));
    s.confidence = optional_field<double>(j, "confidence");
    if (s.id.empty()) throw std::invalid_argument("solution id must not be empty");
    if (s.origin == SolutionOrigin::Reference && s.confidence)
        throw std::invalid_argument("reference solutions carry no confidence");
    if (s.confidence && !(*s.confidence >= 0.0 && *s.confidence <= 1.0))
        throw std::invalid_argument("confidence outside [0, 1]");
    return s;
}

namespace {

Conversation conversation_from_json(const nlohmann::json& j) {
    Conversation c;
    c.query_id = required_string(j, "query_id");
    c.resolved = j.value("resolved", false);
    for (const auto& m : j.value("messages", nlohmann::json::array())) {
        Message msg{from_string<MessageRole>(required_string(m, "role")),
                    required_string(m, "text"),
                    Timestamp::parse(required_string(m, "timestamp"))};
        if (!c.messages.empty() && msg.timestamp.instant < c.messages.back().timestamp.instant)
            throw std::invalid_argument("conversation timestamps must be nondecreasing");
        c.messages.push_back(std::move(msg));
    }
    return c;
}

bool is_foreign_kind(std::string_view kind) {
    return kind == "session" || kind == "metric_report" || kind == "test_result" ||
           kind == "synthetic_pair" || kind == "pair";
}

}  // namespace

void CorpusStore::add_query(TechQuery q) {
    if (q.id.empty()) throw std::invalid_argument("query id must not be empty");
    if (blank(q.text)) throw std::invalid_argument("query text must not be empty");
    if (query_index_.count(q.id)) throw DuplicateIdError(q.id, 0, 0);
    q.word_count = metrics::tokenize(q.text).size();
    query_index_.emplace(q.id, queries_.size());
    queries_.push_back(std::move(q));
}

void CorpusStore::add_label(CharacteristicLabel l) {
    if (std::find(labels_.begin(), labels_.end(), l) != labels_.end())
        throw std::invalid_argument("duplicate label " + std::string(to_string(l.characteristic)) +
                                    " for query '" + l.query_id + "'");
    labels_.push_back(std::move(l));
}

void CorpusStore::add_qtype(QuestionTypeLabel l) { qtypes_.push_back(std::move(l)); }

void CorpusStore::add_conversation(Conversation c) {
    for (std::size_t i = 1; i < c.messages.size(); ++i)
        if (c.messages[i].timestamp.instant < c.messages[i - 1].timestamp.instant)
            throw std::invalid_argument("conversation timestamps must be nondecreasing");
    if (conversation_index_.count(c.query_id))
        throw DuplicateIdError("conversation:" + c.query_id, 0, 0);
    conversation_index_.emplace(c.query_id, conversations_.size());
    conversations_.push_back(std::move(c));
}

void CorpusStore::add_solution(SolutionRecord s) {
    if (s.origin == SolutionOrigin::Reference && s.confidence)
        throw std::invalid_argument("reference solutions carry no confidence");
    for (const auto& existing : solutions_)
        if (existing.id == s.id) throw DuplicateIdError(s.id, 0, 0);
    solutions_.push_back(std::move(s));
}

void CorpusStore::add_rating(RatingRecord r) { ratings_.push_back(std::move(r)); }

const TechQuery* CorpusStore::find_query(std::string_view id) const {
    auto it = query_index_.find(id);
    return it == query_index_.end() ? nullptr : &queries_[it->second];
}

const Conversation* CorpusStore::find_conversation(std::string_view query_id) const {
    auto it = conversation_index_.find(query_id);
    return it == conversation_index_.end() ? nullptr : &conversations_[it->second];
}

std::vector<Characteristic> CorpusStore::labels_for(std::string_view query_id) const {
    std::vector<Characteristic> out;
    for (const auto& l : labels_)
        if (l.query_id == query_id) out.push_back(l.characteristic);
    return out;
}

std::size_t CorpusStore::record_count() const noexcept {
    return queries_.size() + labels_.size() + qtypes_.size() + conversations_.size() +
           solutions_.size() + ratings_.size();
}

std::map<Characteristic, std::size_t> CorpusStore::label_histogram() const {
    std::map<Characteristic, std::size_t> h;
    for (auto c : kAllCharacteristics) h[c] = 0;
    for (const auto& l : labels_) ++h[l.characteristic];
    return h;
}

std::map<QuestionType, std::size_t> CorpusStore::qtype_histogram() const {
    std::map<QuestionType, std::size_t> h;
    for (const auto& l : qtypes_) ++h[l.qtype];
    return h;
}

std::string CorpusStore::export_ndjson() const {
    std::string out;
    auto emit = [&](const nlohmann::json& j) {
        out += j.dump();
        out.push_back('\n');
    };
    for (const auto& r : queries_) emit(to_json(r));
    for (const auto& r : labels_) emit(to_json(r));
    for (const auto& r : qtypes_) emit(to_json(r));
    for (const auto& r : conversations_) emit(to_json(r));
    for (const auto& r : solutions_) emit(to_json(r));
    for (const auto& r : ratings_) emit(to_json(r));
    return out;
}

void CorpusStore::export_ndjson(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << export_ndjson();
}

CorpusStore CorpusStore::parse(std::string_view content, CorpusFormat format) {
    CorpusStore store;
    std::istringstream in{std::string(content)};
    std::string line;
    std::size_t line_no = 0;

    if (format == CorpusFormat::PlainText) {
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (blank(line)) continue;
            store.add_query(make_query("q" + std::to_string(++n), line));
        }
        return store;
    }

    std::map<std::string, std::size_t> query_lines, solution_lines, conversation_lines;
    std::vector<std::pair<std::string, std::size_t>> references;  // query ids to resolve

    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
        }
        if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
            throw ParseError("record has no string field 'kind'", line_no);
        const auto kind = j["kind"].get<std::string>();
        try {
            if (kind == "query") {
                auto q = query_from_json(j);
                if (auto [it, fresh] = query_lines.emplace(q.id, line_no); !fresh)
                    throw DuplicateIdError(q.id, it->second, line_no);
                store.add_query(std::move(q));
            } else if (kind == "label") {
                CharacteristicLabel l{required_string(j, "query_id"),
                                      from_string<Characteristic>(required_string(j, "characteristic"))};
                references.emplace_back(l.query_id, line_no);
                store.add_label(std::move(l));
            } else if (kind == "qtype") {
                QuestionTypeLabel l{required_string(j, "query_id"),
                                    from_string<QuestionType>(required_string(j, "qtype")),
                                    j.value("rater_id", std::string())};
                references.emplace_back(l.query_id, line_no);
                store.add_qtype(std::move(l));
            } else if (kind == "conversation") {
                auto c = conversation_from_json(j);
                if (auto [it, fresh] = conversation_lines.emplace(c.query_id, line_no); !fresh)
                    throw DuplicateIdError("conversation:" + c.query_id, it->second, line_no);
                references.emplace_back(c.query_id, line_no);
                store.add_conversation(std::move(c));
            } else if (kind == "solution") {
                auto s = solution_from_json(j);
                if (auto [it, fresh] = solution_lines.emplace(s.id, line_no); !fresh)
                    throw DuplicateIdError(s.id, it->second, line_no);
                references.emplace_back(s.query_id, line_no);
                store.add_solution(std::move(s));
            } else if (kind == "rating") {
                store.add_rating(RatingRecord{
                    required_string(j, "rater_id"), required_string(j, "target_id"),
                    from_string<RatingTarget>(required_string(j, "target_kind")),
                    from_string<Verdict>(required_string(j, "verdict"))});
            } else if (!is_foreign_kind(kind)) {
                throw ParseError("unknown record kind '" + kind + "'", line_no);
            }
        } catch (const DuplicateIdError&) {
            throw;
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(e.what(), line_no);
        }
    }

    for (const auto& [qid, ln] : references)
        if (!store.find_query(qid)) throw ParseError("unknown query id '" + qid + "'", ln);
    return store;
}

CorpusStore CorpusStore::ingest(const std::filesystem::path& path, CorpusFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), format);
}

std::vector<TechQuery> filter_by_device(const CorpusStore& store,
                                        const std::set<std::string>& devices) {
    if (devices.empty()) throw std::invalid_argument("filter_by_device: empty device set");
    std::vector<TechQuery> out;
    for (const auto& q : store.queries())
        if (devices.count(q.device)) out.push_back(q);
    return out;
}

std::optional<std::string> lookup_answer(const Conversation& conversation,
                                         std::string_view question, ChatProvider& provider,
                                         int question_index) {
    if (blank(question)) throw std::invalid_argument("lookup_answer: empty question");
    if (conversation.messages.empty()) return std::nullopt;

    std::string transcript;
    for (const auto& m : conversation.messages) {
        transcript += "[" + std::string(to_string(m.role)) + "] " + m.text + "\n";
    }
    const auto& tmpl = default_prompt_set().lookup;
    ChatRequest req;
    req.key = {"lookup", conversation.query_id + "#" + std::to_string(question_index)};
    req.system_text = tmpl.system;
    req.user_text = render(tmpl.user, {{"transcript", transcript}, {"question", std::string(question)}});
    req.required_keys = {"ANSWER"};

    const auto block = parse_key_value_block(provider.complete(req));
    std::string answer = block.at("ANSWER");
    std::string upper;
    for (char c : answer)
        if (std::isalpha(static_cast<unsigned char>(c)))
            upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (upper == "UNKNOWN" || answer == kUnknownAnswer) return std::nullopt;
    return answer;
}

}  // namespace clarify
