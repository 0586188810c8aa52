#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace clarify {

class ChatProvider;

enum class QuerySource { Diary, Synthetic, Manual };

enum class Characteristic { Verbosity, OverSpecification, UnderSpecification, Incompleteness };

inline constexpr std::array<Characteristic, 4> kAllCharacteristics = {
    Characteristic::Verbosity, Characteristic::OverSpecification,
    Characteristic::UnderSpecification, Characteristic::Incompleteness};

enum class QuestionType {
    Validation,
    DirectedInformational,
    UndirectedInformational,
    Navigational,
    Conceptual,
};

enum class SolutionKind { Steps, Conceptual, CannotBeDone };
enum class SolutionOrigin { Model, Reference };
enum class Verdict { Correct, PartiallyCorrect, Incorrect };
enum class RatingTarget { Paraphrase, Solution };
enum class MessageRole { Seeker, Helper };

// Wire names ("verbosity", "over_specification", ...). from_string throws
// std::invalid_argument for anything outside the enum.
std::string_view to_string(QuerySource v);
std::string_view to_string(Characteristic v);
std::string_view to_string(QuestionType v);
std::string_view to_string(SolutionKind v);
std::string_view to_string(SolutionOrigin v);
std::string_view to_string(Verdict v);
std::string_view to_string(RatingTarget v);
std::string_view to_string(MessageRole v);

template <typename E>
E from_string(std::string_view s);
template <>
QuerySource from_string<QuerySource>(std::string_view s);
template <>
Characteristic from_string<Characteristic>(std::string_view s);
template <>
QuestionType from_string<QuestionType>(std::string_view s);
template <>
SolutionKind from_string<SolutionKind>(std::string_view s);
template <>
SolutionOrigin from_string<SolutionOrigin>(std::string_view s);
template <>
Verdict from_string<Verdict>(std::string_view s);
template <>
RatingTarget from_string<RatingTarget>(std::string_view s);
template <>
MessageRole from_string<MessageRole>(std::string_view s);

struct TechQuery {
    std::string id;
    std::string text;
    std::string device = "unknown";
    std::optional<std::string> app;
    bool has_screenshot = false;
    std::optional<int> author_age;
    std::optional<std::string> author_gender;
    std::size_t word_count = 0;  // derived: tokenize(text).size()
    QuerySource source = QuerySource::Manual;

    bool operator==(const TechQuery&) const = default;
};

// Builds a query with word_count filled in. Throws on empty text.
TechQuery make_query(std::string id, std::string text, std::string device = "unknown",
                     QuerySource source = QuerySource::Manual);

struct CharacteristicLabel {
    std::string query_id;
    Characteristic characteristic;

    bool operator==(const CharacteristicLabel&) const = default;
};

struct QuestionTypeLabel {
    std::string query_id;
    QuestionType qtype;
    std::string rater_id;

    bool operator==(const QuestionTypeLabel&) const = default;
};

// RFC 3339 timestamp; the original text is kept for lossless export.
struct Timestamp {
    std::string text;
    std::chrono::sys_time<std::chrono::milliseconds> instant;

    static Timestamp parse(std::string_view text);
    bool operator==(const Timestamp& o) const { return instant == o.instant && text == o.text; }
};

struct Message {
    MessageRole role;
    std::string text;
    Timestamp timestamp;

    bool operator==(const Message&) const = default;
};

struct Conversation {
    std::string query_id;
    std::vector<Message> messages;  // timestamps nondecreasing
    bool resolved = false;

    bool operator==(const Conversation&) const = default;
};

struct SolutionRecord {
    std::string id;
    std::string query_id;
    std::string text;
    SolutionKind kind = SolutionKind::Steps;
    SolutionOrigin origin = SolutionOrigin::Model;
    std::optional<double> confidence;  // absent for references

    bool operator==(const SolutionRecord&) const = default;
};

struct RatingRecord {
    std::string rater_id;
    std::string target_id;
    RatingTarget target_kind;
    Verdict verdict;

    bool operator==(const RatingRecord&) const = default;
};

nlohmann::json to_json(const TechQuery& q);
nlohmann::json to_json(const CharacteristicLabel& l);
nlohmann::json to_json(const QuestionTypeLabel& l);
nlohmann::json to_json(const Conversation& c);
nlohmann::json to_json(const SolutionRecord& s);
nlohmann::json to_json(const RatingRecord& r);

TechQuery query_from_json(const nlohmann::json& j);
SolutionRecord solution_from_json(const nlohmann::json& j);

enum class CorpusFormat {
    Ndjson,     // one record per line, discriminated by "kind"
    PlainText,  // one query per non-empty line, ids q1, q2, ...
};

// In-memory record store. Reads are safe to share across threads once
// loading is done; append/ingest need exclusive access.
class CorpusStore {
public:
    static CorpusStore ingest(const std::filesystem::path& path,
                              CorpusFormat format = CorpusFormat::Ndjson);
    static CorpusStore parse(std::string_view content,
                             CorpusFormat format = CorpusFormat::Ndjson);

    void add_query(TechQuery q);
    void add_label(CharacteristicLabel l);
    void add_qtype(QuestionTypeLabel l);
    void add_conversation(Conversation c);
    void add_solution(SolutionRecord s);
    void add_rating(RatingRecord r);

    const std::vector<TechQuery>& queries() const noexcept { return queries_; }
    const std::vector<CharacteristicLabel>& labels() const noexcept { return labels_; }
    const std::vector<QuestionTypeLabel>& qtypes() const noexcept { return qtypes_; }
    const std::vector<Conversation>& conversations() const noexcept { return conversations_; }
    const std::vector<SolutionRecord>& solutions() const noexcept { return solutions_; }
    const std::vector<RatingRecord>& ratings() const noexcept { return ratings_; }

    const TechQuery* find_query(std::string_view id) const;
    const Conversation* find_conversation(std::string_view query_id) const;
    std::vector<Characteristic> labels_for(std::string_view query_id) const;

    std::size_t record_count() const noexcept;
    std::map<Characteristic, std::size_t> label_histogram() const;
    std::map<QuestionType, std::size_t> qtype_histogram() const;

    // Newline-delimited export, queries first then labels, qtypes,
    // conversations, solutions, ratings.
    std::string export_ndjson() const;
    void export_ndjson(const std::filesystem::path& path) const;

    bool operator==(const CorpusStore&) const = default;

private:
    std::vector<TechQuery> queries_;
    std::vector<CharacteristicLabel> labels_;
    std::vector<QuestionTypeLabel> qtypes_;
    std::vector<Conversation> conversations_;
    std::vector<SolutionRecord> solutions_;
    std::vector<RatingRecord> ratings_;
    std::map<std::string, std::size_t, std::less<>> query_index_;
    std::map<std::string, std::size_t, std::less<>> conversation_index_;
};

// Queries whose device tag is in devices; throws std::invalid_argument when
// devices is empty.
std::vector<TechQuery> filter_by_device(const CorpusStore& store,
                                        const std::set<std::string>& devices);

inline constexpr std::string_view kUnknownAnswer = "I do not know";

// Selects the transcript content answering question via the provider.
// Returns nullopt (Unknown) when the transcript is empty or the provider
// reports no relevant content. question_index only disambiguates the
// scripted request key ("<query_id>#<index>").
std::optional<std::string> lookup_answer(const Conversation& conversation,
                                         std::string_view question, ChatProvider& provider,
                                         int question_index = 1);

}  // namespace clarify
