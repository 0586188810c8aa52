#pragma once

#include <atomic>
#include <functional>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "clarify/chain.hpp"
#include "clarify/provider.hpp"

namespace clarify::app {

inline constexpr std::string_view kVersion = "0.3.0";

struct ProviderSettings {
    std::string kind = "http";  // "http" or "mock"
    HttpBackendConfig http;
    std::filesystem::path mock_script;
    std::size_t mock_embedding_dim = 8;
    ProviderLimits limits;
};

struct AppConfig {
    ProviderSettings provider;
    chain::ChainConfig chain;
    std::filesystem::path data_dir = ".";
    std::string bind_address = "127.0.0.1";
    int port = 8080;
    std::size_t parallelism = 4;
    std::uint64_t seed = 0;

    // Throws std::invalid_argument when a threshold or path is unusable.
    void validate() const;

    // Reads a JSON config file; absent keys keep their defaults. Provider
    // credentials come from the environment, never from the file.
    static AppConfig from_json(const nlohmann::json& j);
    static AppConfig load(const std::filesystem::path& path);
};

struct Providers {
    std::unique_ptr<ChatProvider> chat;
    std::unique_ptr<EmbeddingProvider> embedder;
};

Providers make_providers(const AppConfig& config);

// What clients of the service see of a session. Never carries credentials.
nlohmann::json session_envelope(const chain::Session& s);

// HTTP-independent core of the service: owns sessions, serializes work per
// session id, and maps failures to status codes.
class SessionService {
public:
    struct Response {
        int status = 200;
        nlohmann::json body;
    };

    // With a persist path, sessions already in that file are restored and
    // every change is written back.
    SessionService(chain::ChainConfig config, ChatProvider& provider,
                   std::optional<std::filesystem::path> persist_path = std::nullopt);

    Response create(const nlohmann::json& body);
    Response answers(const std::string& id, const nlohmann::json& body);
    Response solve(const std::string& id);
    Response get(const std::string& id) const;
    Response health() const;

    std::size_t session_count() const;

private:
    struct Entry {
        std::mutex mu;
        chain::Session session;
    };

    std::shared_ptr<Entry> find(const std::string& id) const;
    void persist(const chain::Session& s);

    chain::ChainConfig config_;
    ChatProvider& provider_;
    std::optional<std::filesystem::path> persist_path_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::atomic<std::uint64_t> next_id_{1};
    std::mutex persist_mu_;
    std::map<std::string, std::string> persisted_;  // id -> NDJSON line
};

// Binds the service to HTTP and blocks until stop_flag is set (or forever
// when null). on_ready receives the bound port.
int serve(SessionService& service, const std::string& address, int port,
          const std::function<void(int)>& on_ready = {},
          const std::atomic<bool>* stop_flag = nullptr);

// Entry point of the command-line tool. Returns 0 on success, 1 on a domain
// error and 2 on a usage error.
int cli_run(std::span<const std::string> argv, std::istream& in, std::ostream& out,
            std::ostream& err);

}  // namespace clarify::app
