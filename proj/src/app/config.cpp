#include <fstream>
#include <stdexcept>

#include "clarify/app.hpp"

namespace clarify::app {

void AppConfig::validate() const {
    chain.validate();
    if (provider.kind != "http" && provider.kind != "mock")
        throw std::invalid_argument("provider.kind must be 'http' or 'mock'");
    if (provider.kind == "mock" && !provider.mock_script.empty() &&
        !std::filesystem::is_regular_file(provider.mock_script))
        throw std::invalid_argument("mock script not readable: " + provider.mock_script.string());
    if (provider.mock_embedding_dim == 0)
        throw std::invalid_argument("provider.mock_embedding_dim must be positive");
    if (chain.params.max_output_tokens > provider.limits.max_output_tokens)
        throw std::invalid_argument("chain.max_output_tokens exceeds the provider limit");
    if (!std::filesystem::is_directory(data_dir))
        throw std::invalid_argument("data_dir is not a directory: " + data_dir.string());
    if (port < 0 || port > 65535) throw std::invalid_argument("port must be within [0, 65535]");
    if (parallelism == 0) throw std::invalid_argument("parallelism must be at least 1");
}

AppConfig AppConfig::from_json(const nlohmann::json& j) {
    AppConfig c;
    if (j.contains("provider")) {
        const auto& p = j["provider"];
        if (p.contains("api_key"))
            throw std::invalid_argument(
                "provider.api_key is not read from config files; set PROVIDER_API_KEY");
        c.provider.kind = p.value("kind", c.provider.kind);
        c.provider.http.base_url = p.value("base_url", c.provider.http.base_url);
        c.provider.http.chat_model = p.value("chat_model", c.provider.http.chat_model);
        c.provider.http.embedding_model =
            p.value("embedding_model", c.provider.http.embedding_model);
        c.provider.http.timeout =
            std::chrono::seconds(p.value("timeout_seconds", c.provider.http.timeout.count()));
        c.provider.mock_script = p.value("mock_script", std::string());
        c.provider.mock_embedding_dim = p.value("mock_embedding_dim", c.provider.mock_embedding_dim);
        c.provider.limits.max_output_tokens =
            p.value("max_output_tokens", c.provider.limits.max_output_tokens);
        c.provider.limits.retry.max_attempts =
            p.value("retry_attempts", c.provider.limits.retry.max_attempts);
        c.provider.limits.retry.initial_backoff = std::chrono::milliseconds(
            p.value("retry_backoff_ms", c.provider.limits.retry.initial_backoff.count()));
    }
    if (j.contains("chain")) {
        const auto& ch = j["chain"];
        c.chain.confidence_threshold = ch.value("confidence_threshold", c.chain.confidence_threshold);
        c.chain.max_questions = ch.value("max_questions", c.chain.max_questions);
        c.chain.prompt_template_set = ch.value("prompt_template_set", c.chain.prompt_template_set);
        c.chain.params.temperature = ch.value("temperature", c.chain.params.temperature);
        c.chain.params.max_output_tokens =
            ch.value("max_output_tokens", c.chain.params.max_output_tokens);
    }
    c.data_dir = j.value("data_dir", c.data_dir.string());
    c.bind_address = j.value("bind_address", c.bind_address);
    c.port = j.value("port", c.port);
    c.parallelism = j.value("parallelism", c.parallelism);
    c.seed = j.value("seed", c.seed);
    c.provider.limits.parallelism = c.parallelism;
    c.provider.http.apply_environment();
    return c;
}

AppConfig AppConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config " + path.string() + ": " + e.what());
    }
    auto c = from_json(j);
    // Relative paths in a config file are relative to the file.
    const auto base = path.parent_path();
    if (!c.provider.mock_script.empty() && c.provider.mock_script.is_relative())
        c.provider.mock_script = base / c.provider.mock_script;
    if (c.data_dir.is_relative()) c.data_dir = base / c.data_dir;
    c.validate();
    return c;
}

Providers make_providers(const AppConfig& config) {
    Providers p;
    if (config.provider.kind == "mock") {
        auto script = config.provider.mock_script.empty()
                          ? MockScript()
                          : MockScript::load(config.provider.mock_script);
        p.chat = std::make_unique<MockChatProvider>(std::move(script), config.provider.limits);
        p.embedder = std::make_unique<MockEmbeddingProvider>(config.provider.mock_embedding_dim,
                                                             config.seed, config.provider.limits);
    } else {
        auto http = config.provider.http;
        http.apply_environment();
        p.chat = std::make_unique<HttpChatProvider>(http, config.provider.limits);
        p.embedder = std::make_unique<HttpEmbeddingProvider>(http, config.provider.limits);
    }
    return p;
}

}  // namespace clarify::app
