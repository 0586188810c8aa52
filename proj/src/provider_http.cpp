#include <httplib.h>

#include <stdexcept>

#include "clarify/provider.hpp"

namespace clarify {
namespace {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path without trailing slash
};

Endpoint split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw std::invalid_argument("base URL must include a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    Endpoint ep;
    ep.origin = url.substr(0, path_start);
    if (path_start != std::string::npos) ep.prefix = url.substr(path_start);
    while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
    return ep;
}

ProviderError status_error(int status, const std::string& body) {
    const std::string what = "backend returned HTTP " + std::to_string(status);
    if (status == 401 || status == 403) return {ProviderErrorKind::Auth, what, body};
    if (status == 429) return {ProviderErrorKind::RateLimit, what, body};
    if (status >= 500) return {ProviderErrorKind::Transport, what, body};
    return {ProviderErrorKind::InvalidRequest, what, body};
}

nlohmann::json post_json(const HttpBackendConfig& config, const std::string& path,
                         const nlohmann::json& payload) {
    const auto ep = split_url(config.base_url);
    httplib::Client client(ep.origin);
    client.set_connection_timeout(config.timeout);
    client.set_read_timeout(config.timeout);
    client.set_write_timeout(config.timeout);

    httplib::Headers headers;
    if (!config.api_key.empty()) headers.emplace("Authorization", "Bearer " + config.api_key);

    auto res = client.Post(ep.prefix + path, headers, payload.dump(), "application/json");
    if (!res)
        throw ProviderError(ProviderErrorKind::Transport,
                            "request to " + ep.origin + " failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) throw status_error(res->status, res->body);

    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error&) {
        throw ProviderError(ProviderErrorKind::Malformed, "response is not valid JSON", res->body);
    }
}

}  // namespace

HttpChatProvider::HttpChatProvider(HttpBackendConfig config, ProviderLimits limits)
    : ChatProvider(std::move(limits)), config_(std::move(config)) {
    split_url(config_.base_url);
}

std::string HttpChatProvider::do_complete(const ChatRequest& request) {
    nlohmann::json messages = nlohmann::json::array();
    if (!request.system_text.empty())
        messages.push_back({{"role", "system"}, {"content", request.system_text}});
    messages.push_back({{"role", "user"}, {"content", request.user_text}});
    const nlohmann::json payload{{"model", config_.chat_model},
                                 {"messages", messages},
                                 {"temperature", request.params.temperature},
                                 {"max_tokens", request.params.max_output_tokens}};

    const auto body = post_json(config_, "/chat/completions", payload);
    try {
        const auto& content = body.at("choices").at(0).at("message").at("content");
        if (!content.is_string()) throw std::runtime_error("content is not a string");
        return content.get<std::string>();
    } catch (const std::exception& e) {
        throw ProviderError(ProviderErrorKind::Malformed,
                            std::string("unexpected chat response shape: ") + e.what(), body.dump());
    }
}

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpBackendConfig config, ProviderLimits limits)
    : EmbeddingProvider(std::move(limits)), config_(std::move(config)) {
    split_url(config_.base_url);
}

std::vector<EmbeddingVector> HttpEmbeddingProvider::do_embed(std::span<const std::string> texts) {
    const nlohmann::json payload{{"model", config_.embedding_model},
                                 {"input", std::vector<std::string>(texts.begin(), texts.end())}};
    const auto body = post_json(config_, "/embeddings", payload);
    try {
        const auto& data = body.at("data");
        std::vector<EmbeddingVector> out(data.size());
        std::vector<bool> seen(data.size(), false);
        for (std::size_t i = 0; i < data.size(); ++i) {
            // Backends may reorder; "index" restores input order.
            const auto idx = data[i].value("index", i);
            if (idx >= out.size() || seen[idx]) throw std::runtime_error("bad index");
            seen[idx] = true;
            out[idx].values = data[i].at("embedding").get<std::vector<double>>();
            out[idx].model_tag = body.value("model", config_.embedding_model);
        }
        return out;
    } catch (const std::exception& e) {
        throw ProviderError(ProviderErrorKind::Malformed,
                            std::string("unexpected embedding response shape: ") + e.what(),
                            body.dump());
    }
}

}  // namespace clarify
