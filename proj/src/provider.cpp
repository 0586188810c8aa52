#include "clarify/provider.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace clarify {

const char* to_string(ProviderErrorKind kind) {
    switch (kind) {
        case ProviderErrorKind::Auth: return "auth";
        case ProviderErrorKind::RateLimit: return "rate_limit";
        case ProviderErrorKind::Transport: return "transport";
        case ProviderErrorKind::Malformed: return "malformed";
        case ProviderErrorKind::InvalidRequest: return "invalid_request";
        case ProviderErrorKind::ScriptMiss: return "script_miss";
    }
    return "transport";
}

namespace {

ProviderErrorKind error_kind_from_string(std::string_view s) {
    for (auto k : {ProviderErrorKind::Auth, ProviderErrorKind::RateLimit,
                   ProviderErrorKind::Transport, ProviderErrorKind::Malformed,
                   ProviderErrorKind::InvalidRequest, ProviderErrorKind::ScriptMiss}) {
        if (s == to_string(k)) return k;
    }
    throw std::invalid_argument("unknown provider error kind '" + std::string(s) + "'");
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Returns the key when line looks like "KEY: value" (markdown emphasis and
// heading marks tolerated) and stores the remainder in value.
std::optional<std::string> match_key_line(std::string_view line, std::string& value) {
    auto s = trim(line);
    while (!s.empty() && (s.front() == '*' || s.front() == '#')) s.remove_prefix(1);
    s = trim(s);
    std::size_t i = 0;
    while (i < s.size() && (std::isupper(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
    if (i < 3) return std::nullopt;
    std::string key(s.substr(0, i));
    auto rest = s.substr(i);
    while (!rest.empty() && rest.front() == '*') rest.remove_prefix(1);
    rest = trim(rest);
    if (rest.empty() || rest.front() != ':') return std::nullopt;
    rest.remove_prefix(1);
    while (!rest.empty() && (rest.front() == '*' || rest.front() == ' ')) rest.remove_prefix(1);
    value = std::string(trim(rest));
    return key;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct LimiterGuard {
    explicit LimiterGuard(detail::CallLimiter& l) : limiter(l) { limiter.acquire(); }
    ~LimiterGuard() { limiter.release(); }
    LimiterGuard(const LimiterGuard&) = delete;
    LimiterGuard& operator=(const LimiterGuard&) = delete;
    detail::CallLimiter& limiter;
};

}  // namespace

KeyValueBlock parse_key_value_block(std::string_view text) {
    KeyValueBlock block;
    std::optional<std::string> current;
    std::string value;
    std::istringstream in{std::string(text)};
    std::string line;
    auto commit = [&] {
        if (current) block[*current] = std::string(trim(value));
    };
    while (std::getline(in, line)) {
        std::string first;
        if (auto key = match_key_line(line, first)) {
            commit();
            current = std::move(key);
            value = std::move(first);
        } else if (current) {
            if (!value.empty()) value.push_back('\n');
            value += line;
        }
    }
    commit();
    return block;
}

nlohmann::json to_json(const ChatExchange& e) {
    nlohmann::json j{{"stage", e.key.stage},
                     {"query_id", e.key.query_id},
                     {"system_text", e.system_text},
                     {"user_text", e.user_text},
                     {"temperature", e.params.temperature},
                     {"max_output_tokens", e.params.max_output_tokens}};
    j["response_text"] = e.response_text ? nlohmann::json(*e.response_text) : nlohmann::json();
    if (e.response_fields) j["response_fields"] = *e.response_fields;
    if (!e.error.empty()) j["error"] = e.error;
    return j;
}

ChatExchange chat_exchange_from_json(const nlohmann::json& j) {
    ChatExchange e;
    e.key.stage = j.at("stage").get<std::string>();
    e.key.query_id = j.at("query_id").get<std::string>();
    e.system_text = j.value("system_text", "");
    e.user_text = j.value("user_text", "");
    e.params.temperature = j.value("temperature", 0.0);
    e.params.max_output_tokens = j.value("max_output_tokens", 1024);
    if (j.contains("response_text") && !j["response_text"].is_null())
        e.response_text = j["response_text"].get<std::string>();
    if (j.contains("response_fields")) e.response_fields = j["response_fields"].get<KeyValueBlock>();
    e.error = j.value("error", "");
    return e;
}

namespace detail {

void CallLimiter::acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < limit_; });
    ++in_flight_;
}

void CallLimiter::release() {
    {
        std::lock_guard lock(mu_);
        --in_flight_;
    }
    cv_.notify_one();
}

}  // namespace detail

ChatProvider::ChatProvider(ProviderLimits limits)
    : limits_(std::move(limits)), limiter_(limits_.parallelism) {}

std::string ChatProvider::complete(const ChatRequest& request) {
    if (trim(request.user_text).empty())
        throw std::invalid_argument("complete: user_text must not be empty");
    if (request.params.max_output_tokens < 1 ||
        request.params.max_output_tokens > limits_.max_output_tokens)
        throw std::invalid_argument("complete: max_output_tokens " +
                                    std::to_string(request.params.max_output_tokens) +
                                    " outside [1, " + std::to_string(limits_.max_output_tokens) +
                                    "]");
    if (!(request.params.temperature >= 0.0))
        throw std::invalid_argument("complete: temperature must be >= 0");

    std::string text = detail::with_retry(limits_, [&] {
        LimiterGuard guard(limiter_);
        return do_complete(request);
    });

    if (!request.required_keys.empty()) {
        const auto block = parse_key_value_block(text);
        for (const auto& key : request.required_keys) {
            auto it = block.find(key);
            if (it == block.end() || trim(it->second).empty())
                throw ProviderError(ProviderErrorKind::Malformed,
                                    "response is missing required field " + key, text);
        }
    }
    return text;
}

EmbeddingProvider::EmbeddingProvider(ProviderLimits limits)
    : limits_(std::move(limits)), limiter_(limits_.parallelism) {}

std::vector<EmbeddingVector> EmbeddingProvider::embed(std::span<const std::string> texts) {
    if (texts.empty()) throw std::invalid_argument("embed: no texts");
    for (const auto& t : texts)
        if (t.empty()) throw std::invalid_argument("embed: empty text");

    auto vecs = detail::with_retry(limits_, [&] {
        LimiterGuard guard(limiter_);
        return do_embed(texts);
    });

    if (vecs.size() != texts.size())
        throw ProviderError(ProviderErrorKind::Malformed,
                            "embed: expected " + std::to_string(texts.size()) + " vectors, got " +
                                std::to_string(vecs.size()));
    for (const auto& v : vecs) {
        if (v.dim() == 0 || v.dim() != vecs.front().dim())
            throw ProviderError(ProviderErrorKind::Malformed, "embed: inconsistent dimensions");
    }
    return vecs;
}

EmbeddingVector EmbeddingProvider::embed_one(const std::string& text) {
    return embed(std::span(&text, 1)).front();
}

// --- mock ----------------------------------------------------------------

void MockScript::add(RequestKey key, std::string response) {
    MockScriptEntry e{key, std::move(response), std::nullopt};
    entries_[std::move(key)] = std::move(e);
}

void MockScript::add_error(RequestKey key, ProviderErrorKind kind) {
    MockScriptEntry e{key, std::nullopt, kind};
    entries_[std::move(key)] = std::move(e);
}

const MockScriptEntry* MockScript::find(const RequestKey& key) const {
    if (auto it = entries_.find(key); it != entries_.end()) return &it->second;
    if (auto it = entries_.find(RequestKey{key.stage, "*"}); it != entries_.end())
        return &it->second;
    return nullptr;
}

MockScript MockScript::parse(std::string_view ndjson) {
    MockScript script;
    std::istringstream in{std::string(ndjson)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            RequestKey key{j.at("stage").get<std::string>(), j.at("query_id").get<std::string>()};
            if (j.contains("error"))
                script.add_error(std::move(key),
                                 error_kind_from_string(j["error"].get<std::string>()));
            else
                script.add(std::move(key), j.at("response").get<std::string>());
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(std::string("mock script: ") + e.what(), line_no);
        }
    }
    return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open mock script " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

MockChatProvider::MockChatProvider(MockScript script, ProviderLimits limits)
    : ChatProvider(std::move(limits)), script_(std::move(script)) {}

std::string MockChatProvider::do_complete(const ChatRequest& request) {
    const auto* entry = script_.find(request.key);
    if (!entry)
        throw ProviderError(ProviderErrorKind::ScriptMiss,
                            "mock script has no entry for stage '" + request.key.stage +
                                "', query_id '" + request.key.query_id + "'");
    if (entry->error)
        throw ProviderError(*entry->error,
                            std::string("scripted ") + to_string(*entry->error) + " failure");
    return *entry->response;
}

MockEmbeddingProvider::MockEmbeddingProvider(std::size_t dim, std::uint64_t seed,
                                             ProviderLimits limits)
    : EmbeddingProvider(std::move(limits)), dim_(dim), seed_(seed) {
    if (dim_ == 0) throw std::invalid_argument("mock embedder: dim must be positive");
}

void MockEmbeddingProvider::set_vector(const std::string& text, std::vector<double> values) {
    if (values.size() != dim_)
        throw std::invalid_argument("mock embedder: override has wrong dimension");
    overrides_[text] = std::move(values);
}

std::vector<EmbeddingVector> MockEmbeddingProvider::do_embed(std::span<const std::string> texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        EmbeddingVector v;
        v.model_tag = name();
        if (auto it = overrides_.find(t); it != overrides_.end()) {
            v.values = it->second;
        } else {
            std::uint64_t state = fnv1a(t) ^ (seed_ * 0xD1B54A32D192ED03ULL);
            v.values.resize(dim_);
            double norm = 0.0;
            for (auto& x : v.values) {
                // Uniform in [-1, 1) from the top 53 bits.
                x = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
                norm += x * x;
            }
            norm = std::sqrt(norm);
            if (norm == 0.0) {
                v.values[0] = 1.0;
            } else {
                for (auto& x : v.values) x /= norm;
            }
        }
        out.push_back(std::move(v));
    }
    return out;
}

void HttpBackendConfig::apply_environment() {
    if (const char* url = std::getenv("PROVIDER_BASE_URL"); url && *url) base_url = url;
    if (const char* key = std::getenv("PROVIDER_API_KEY"); key && *key) api_key = key;
}

}  // namespace clarify
