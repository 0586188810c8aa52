#pragma once

#include <chrono>
#include <cstdint>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "clarify/error.hpp"

namespace clarify {

// Identifies a request for scripted replay. Live backends ignore it.
struct RequestKey {
    std::string stage;
    std::string query_id;

    bool operator==(const RequestKey&) const = default;
    auto operator<=>(const RequestKey&) const = default;
};

struct ChatParams {
    double temperature = 0.0;
    int max_output_tokens = 1024;

    bool operator==(const ChatParams&) const = default;
};

struct ChatRequest {
    RequestKey key;
    std::string system_text;
    std::string user_text;
    ChatParams params;
    // Keys the response block must contain, e.g. "QUESTIONS".
    std::vector<std::string> required_keys;
};

// KEY: value block parsed from a model response. Keys are upper case.
using KeyValueBlock = std::map<std::string, std::string>;

// Extracts "KEY: value" lines. Text before the first key is ignored; a value
// runs until the next key line. Keys are upper-case words with underscores.
KeyValueBlock parse_key_value_block(std::string_view text);

// One request/response pair as recorded in a session transcript.
struct ChatExchange {
    RequestKey key;
    std::string system_text;
    std::string user_text;
    ChatParams params;
    std::optional<std::string> response_text;  // present iff the call succeeded
    std::optional<KeyValueBlock> response_fields;
    std::string error;

    bool succeeded() const noexcept { return response_text.has_value(); }
    bool operator==(const ChatExchange&) const = default;
};

nlohmann::json to_json(const ChatExchange& exchange);
ChatExchange chat_exchange_from_json(const nlohmann::json& j);

struct EmbeddingVector {
    std::vector<double> values;
    std::string model_tag;

    std::size_t dim() const noexcept { return values.size(); }
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{250};
    double multiplier = 2.0;
};

struct ProviderLimits {
    int max_output_tokens = 4096;
    std::size_t parallelism = 4;
    RetryPolicy retry;
    // Injected so tests can observe backoff without sleeping.
    std::function<void(std::chrono::milliseconds)> sleep =
        [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
};

namespace detail {

// Bounds the number of in-flight calls.
class CallLimiter {
public:
    explicit CallLimiter(std::size_t limit) : limit_(limit == 0 ? 1 : limit) {}

    void acquire();
    void release();
    std::size_t limit() const noexcept { return limit_; }

private:
    std::size_t limit_;
    std::size_t in_flight_ = 0;
    std::mutex mu_;
    std::condition_variable cv_;
};

// Runs fn with retry on retriable ProviderErrors. Returns after success or
// rethrows the last error.
template <typename Fn>
auto with_retry(const ProviderLimits& limits, Fn&& fn) -> decltype(fn()) {
    auto backoff = limits.retry.initial_backoff;
    const int attempts = limits.retry.max_attempts < 1 ? 1 : limits.retry.max_attempts;
    for (int attempt = 1;; ++attempt) {
        try {
            return fn();
        } catch (const ProviderError& e) {
            if (!e.retriable() || attempt >= attempts) throw;
        }
        if (limits.sleep) limits.sleep(backoff);
        backoff = std::chrono::milliseconds(
            static_cast<long long>(static_cast<double>(backoff.count()) * limits.retry.multiplier));
    }
}

}  // namespace detail

// Chat-completion backend. complete() validates the request, bounds
// concurrency, retries transient failures and checks required response keys;
// subclasses only implement the transport in do_complete().
class ChatProvider {
public:
    explicit ChatProvider(ProviderLimits limits = {});
    virtual ~ChatProvider() = default;

    ChatProvider(const ChatProvider&) = delete;
    ChatProvider& operator=(const ChatProvider&) = delete;

    // Throws std::invalid_argument for a bad request before any backend
    // call, and ProviderError for backend failures. A response missing a
    // required key is a Malformed error carrying the raw text.
    std::string complete(const ChatRequest& request);

    const ProviderLimits& limits() const noexcept { return limits_; }
    virtual std::string name() const = 0;

protected:
    virtual std::string do_complete(const ChatRequest& request) = 0;

private:
    ProviderLimits limits_;
    detail::CallLimiter limiter_;
};

class EmbeddingProvider {
public:
    explicit EmbeddingProvider(ProviderLimits limits = {});
    virtual ~EmbeddingProvider() = default;

    EmbeddingProvider(const EmbeddingProvider&) = delete;
    EmbeddingProvider& operator=(const EmbeddingProvider&) = delete;

    // One vector per text, order-preserving, all of the same dimension.
    std::vector<EmbeddingVector> embed(std::span<const std::string> texts);
    EmbeddingVector embed_one(const std::string& text);

    virtual std::string name() const = 0;

protected:
    virtual std::vector<EmbeddingVector> do_embed(std::span<const std::string> texts) = 0;

private:
    ProviderLimits limits_;
    detail::CallLimiter limiter_;
};

// --- scripted mock -------------------------------------------------------

struct MockScriptEntry {
    RequestKey key;
    std::optional<std::string> response;
    // Simulated failure instead of a response.
    std::optional<ProviderErrorKind> error;
};

// Mock responses keyed on (stage, query_id). A query_id of "*" matches any
// request of that stage when no exact entry exists.
class MockScript {
public:
    MockScript() = default;

    void add(RequestKey key, std::string response);
    void add_error(RequestKey key, ProviderErrorKind kind);
    const MockScriptEntry* find(const RequestKey& key) const;
    std::size_t size() const noexcept { return entries_.size(); }

    // One record per line: {"stage", "query_id", "response"} or
    // {"stage", "query_id", "error": "rate_limit"}.
    static MockScript load(const std::filesystem::path& path);
    static MockScript parse(std::string_view ndjson);

private:
    std::map<RequestKey, MockScriptEntry> entries_;
};

class MockChatProvider final : public ChatProvider {
public:
    explicit MockChatProvider(MockScript script, ProviderLimits limits = {});

    std::string name() const override { return "mock"; }
    const MockScript& script() const noexcept { return script_; }

protected:
    std::string do_complete(const ChatRequest& request) override;

private:
    MockScript script_;
};

// Deterministic embedder: each text maps to a unit vector derived from a
// seeded hash of its bytes. Explicit overrides take precedence.
class MockEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit MockEmbeddingProvider(std::size_t dim = 8, std::uint64_t seed = 0,
                                   ProviderLimits limits = {});

    void set_vector(const std::string& text, std::vector<double> values);
    std::string name() const override { return "mock-hash"; }
    std::size_t dim() const noexcept { return dim_; }

protected:
    std::vector<EmbeddingVector> do_embed(std::span<const std::string> texts) override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
    std::map<std::string, std::vector<double>> overrides_;
};

// --- HTTP backends (OpenAI-compatible wire format) -------------------------

struct HttpBackendConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string chat_model = "gpt-4o";
    std::string embedding_model = "text-embedding-3-small";
    std::string api_key;
    std::chrono::seconds timeout{60};

    // Reads PROVIDER_BASE_URL and PROVIDER_API_KEY when set.
    void apply_environment();
};

class HttpChatProvider final : public ChatProvider {
public:
    HttpChatProvider(HttpBackendConfig config, ProviderLimits limits = {});

    std::string name() const override { return "http:" + config_.chat_model; }

protected:
    std::string do_complete(const ChatRequest& request) override;

private:
    HttpBackendConfig config_;
};

class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(HttpBackendConfig config, ProviderLimits limits = {});

    std::string name() const override { return "http:" + config_.embedding_model; }

protected:
    std::vector<EmbeddingVector> do_embed(std::span<const std::string> texts) override;

private:
    HttpBackendConfig config_;
};

}  // namespace clarify
