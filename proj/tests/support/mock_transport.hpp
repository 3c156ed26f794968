#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "refaug/gateway.hpp"

namespace refaug::testing {

struct MockReply {
    int status = 200;
    std::string content;
    std::string finish_reason = "stop";
};

/// Scripted chat-completions server. The handler sees the parsed request
/// body and a zero-based global call index; instrumentation tracks call
/// counts and the maximum number of concurrent in-flight calls.
class MockTransport : public Transport {
public:
    using Handler = std::function<MockReply(const ojson& body, int call_index)>;

    explicit MockTransport(Handler handler) : handler_(std::move(handler)) {}

    HttpResponse post(const std::string&, const std::string&,
                      const std::vector<std::pair<std::string, std::string>>&,
                      const std::string& body) override {
        int index = calls_.fetch_add(1);
        int now = in_flight_.fetch_add(1) + 1;
        int seen = max_in_flight_.load();
        while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
        }
        ojson parsed = ojson::parse(body);
        {
            std::lock_guard lock(mu_);
            bodies_.push_back(parsed);
        }
        MockReply reply = handler_(parsed, index);
        in_flight_.fetch_sub(1);
        if (reply.status != 200) {
            return {reply.status, R"({"error":"scripted failure"})"};
        }
        ojson response{
            {"choices",
             ojson::array({ojson{{"message", ojson{{"role", "assistant"}, {"content", reply.content}}},
                                 {"finish_reason", reply.finish_reason}}})},
            {"usage", ojson{{"prompt_tokens", 7}, {"completion_tokens", 11}}}};
        return {200, response.dump()};
    }

    int calls() const { return calls_.load(); }
    int max_in_flight() const { return max_in_flight_.load(); }
    std::vector<ojson> bodies() const {
        std::lock_guard lock(mu_);
        return bodies_;
    }

private:
    Handler handler_;
    std::atomic<int> calls_{0};
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_{0};
    mutable std::mutex mu_;
    mutable std::vector<ojson> bodies_;
};

/// Transport that must never be reached (replay-mode assertions).
class FailTransport : public Transport {
public:
    HttpResponse post(const std::string&, const std::string&,
                      const std::vector<std::pair<std::string, std::string>>&,
                      const std::string&) override {
        throw Error("network transport used where none was expected");
    }
};

struct GatewayFixtureOptions {
    int parallelism = 4;
    CacheMode cache_mode = CacheMode::off;
    std::filesystem::path cache_dir;
};

/// Gateway wired to the standard test endpoints (annotator, model, judge,
/// expert), zero backoff delay, no real sleeping.
inline Gateway make_gateway(std::shared_ptr<Transport> transport,
                            GatewayFixtureOptions options = {}) {
    GatewayConfig config;
    for (const char* id : {"annotator", "model", "judge", "expert"}) {
        EndpointConfig ep;
        ep.id = id;
        ep.base_url = "http://mock.local";
        ep.model = std::string("mock-") + id;
        ep.retry.base_delay_ms = 0;
        config.endpoints.push_back(ep);
    }
    config.parallelism = options.parallelism;
    config.cache_mode = options.cache_mode;
    config.cache_dir = options.cache_dir;
    Gateway gateway(std::move(config), std::move(transport));
    gateway.set_sleeper([](std::chrono::milliseconds) {});
    return gateway;
}

inline ChatRequest user_request(std::string endpoint, std::string content) {
    ChatRequest request;
    request.endpoint = std::move(endpoint);
    request.messages = {{Role::user, std::move(content)}};
    return request;
}

/// Unique scratch directory under the system temp root.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("refaug-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace refaug::testing
