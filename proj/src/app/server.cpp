#include <httplib.h>

#include <chrono>
#include <thread>

#include "clarify/app.hpp"

namespace clarify::app {
namespace {

void reply(httplib::Response& res, const SessionService::Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
}

// nullopt (after writing a 400) when the body is not JSON.
std::optional<nlohmann::json> json_body(const httplib::Request& req, httplib::Response& res) {
    if (req.body.empty()) return nlohmann::json::object();
    try {
        return nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::parse_error& e) {
        reply(res, {400, {{"error", std::string("body is not valid JSON: ") + e.what()}}});
        return std::nullopt;
    }
}

}  // namespace

int serve(SessionService& service, const std::string& address, int port,
          const std::function<void(int)>& on_ready, const std::atomic<bool>* stop_flag) {
    httplib::Server server;

    server.Get("/healthz", [&](const httplib::Request&, httplib::Response& res) {
        reply(res, service.health());
    });
    server.Post("/sessions", [&](const httplib::Request& req, httplib::Response& res) {
        if (auto body = json_body(req, res)) reply(res, service.create(*body));
    });
    server.Post(R"(/sessions/([^/]+)/answers)",
                [&](const httplib::Request& req, httplib::Response& res) {
                    if (auto body = json_body(req, res))
                        reply(res, service.answers(req.matches[1], *body));
                });
    server.Post(R"(/sessions/([^/]+)/solve)",
                [&](const httplib::Request& req, httplib::Response& res) {
                    reply(res, service.solve(req.matches[1]));
                });
    server.Get(R"(/sessions/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.get(req.matches[1]));
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty())
            res.set_content(nlohmann::json{{"error", "not found"}}.dump(), "application/json");
    });

    const int bound = port == 0 ? server.bind_to_any_port(address)
                                : (server.bind_to_port(address, port) ? port : -1);
    if (bound < 0) return 1;
    if (on_ready) on_ready(bound);

    std::atomic<bool> done{false};
    std::thread watcher;
    if (stop_flag) {
        watcher = std::thread([&] {
            while (!stop_flag->load() && !done.load())
                std::this_thread::sleep_for(std::chrono::milliseconds(20));
            // stop() is a no-op until the accept loop runs, so repeat it.
            while (!done.load()) {
                server.stop();
                std::this_thread::sleep_for(std::chrono::milliseconds(10));
            }
        });
    }
    const bool ok = server.listen_after_bind();
    done = true;
    if (watcher.joinable()) watcher.join();
    return ok ? 0 : 1;
}

}  // namespace clarify::app
