#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "refaug/records.hpp"

namespace refaug {

enum class Role { system, user, assistant };
std::string to_string(Role v);
Role role_from_string(std::string_view s);

struct ChatMessage {
    Role role = Role::user;
    std::string content;
    bool operator==(const ChatMessage&) const = default;
};

struct Decoding {
    double temperature = 0.0;
    double top_p = 1.0;
    int max_tokens = 2048;
    std::vector<std::string> stop;
    bool operator==(const Decoding&) const = default;
};

struct ChatRequest {
    std::string endpoint;
    std::vector<ChatMessage> messages;
    Decoding decoding;
    // Distinguishes deliberate re-samples of an otherwise identical request
    // (cache entries must not shadow each other). Not sent over the wire.
    int sample_index = 0;

    bool operator==(const ChatRequest&) const = default;

    /// Throws unless messages are non-empty, the first non-system role is
    /// user, and roles alternate user/assistant thereafter.
    void validate() const;
};

enum class FinishReason { stop_string, natural_end, length };
std::string to_string(FinishReason v);
FinishReason finish_reason_from_string(std::string_view s);

struct TokenUsage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
    bool operator==(const TokenUsage&) const = default;
};

struct ChatResponse {
    std::string text;
    FinishReason finish_reason = FinishReason::natural_end;
    std::optional<TokenUsage> usage;
    bool operator==(const ChatResponse&) const = default;
};

void to_json(ojson& j, const ChatMessage& m);
void from_json(const ojson& j, ChatMessage& m);
void to_json(ojson& j, const ChatRequest& r);
void from_json(const ojson& j, ChatRequest& r);
void to_json(ojson& j, const ChatResponse& r);
void from_json(const ojson& j, ChatResponse& r);

/// Deterministic digest over endpoint id, messages, decoding parameters and
/// sample index. Equal requests map to equal keys.
std::string cache_key(const ChatRequest& request);

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Connection-level failure (DNS, refused, timeout). Always transient.
class TransportError : public Error {
public:
    using Error::Error;
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post(const std::string& base_url, const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& headers,
                              const std::string& body) = 0;
};

/// Real HTTP transport over cpp-httplib (https when the URL asks for it).
class HttpTransport final : public Transport {
public:
    explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(120))
        : timeout_(timeout) {}
    HttpResponse post(const std::string& base_url, const std::string& path,
                      const std::vector<std::pair<std::string, std::string>>& headers,
                      const std::string& body) override;

private:
    std::chrono::seconds timeout_;
};

struct RetryPolicy {
    int max_attempts = 5;
    int base_delay_ms = 1000;
    double factor = 2.0;
    bool full_jitter = true;
};

struct EndpointConfig {
    std::string id;
    std::string base_url;
    std::string model;
    std::string api_key_env = "OPENAI_API_KEY";
    RetryPolicy retry;
    double rate_limit_per_s = 0.0;  // 0 = unlimited
};

enum class CacheMode { off, readwrite, replay };
CacheMode cache_mode_from_string(std::string_view s);

struct GatewayConfig {
    std::vector<EndpointConfig> endpoints;
    int parallelism = 4;
    CacheMode cache_mode = CacheMode::off;
    std::filesystem::path cache_dir;
};

class CacheMissError : public Error {
public:
    using Error::Error;
};

class GatewayError : public Error {
public:
    using Error::Error;
};

/// Shared client for every chat-completion endpoint the toolkit talks to.
/// Thread-safe; enforces a global in-flight bound, per-endpoint rate limits,
/// retry with exponential backoff and full jitter, client-side stop-string
/// truncation, and a record/replay cache (one file per request digest).
class Gateway {
public:
    Gateway(GatewayConfig config, std::shared_ptr<Transport> transport);

    ChatResponse chat(const ChatRequest& request);

    struct Outcome {
        std::optional<ChatResponse> response;
        std::string error;
        bool ok() const { return response.has_value(); }
    };

    /// Bounded-parallel map over requests; outcome i corresponds to
    /// requests[i] regardless of completion order.
    std::vector<Outcome> chat_many(const std::vector<ChatRequest>& requests);

    const EndpointConfig& endpoint(const std::string& id) const;
    int parallelism() const { return config_.parallelism; }
    CacheMode cache_mode() const { return config_.cache_mode; }

    /// Test hook; replaces the backoff/rate-limit sleep.
    void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper);

private:
    ChatResponse perform(const EndpointConfig& ep, const ChatRequest& request);
    ChatResponse parse_body(const std::string& body) const;
    static ChatResponse apply_stop_strings(ChatResponse response, const std::vector<std::string>& stop);
    std::optional<ChatResponse> cache_lookup(const std::string& key) const;
    void cache_store(const std::string& key, const ChatRequest& request,
                     const ChatResponse& response) const;
    void rate_limit_wait(const EndpointConfig& ep);
    void sleep_ms(std::chrono::milliseconds ms);

    GatewayConfig config_;
    std::shared_ptr<Transport> transport_;
    std::function<void(std::chrono::milliseconds)> sleeper_;

    // Heap-allocated so the gateway stays movable.
    struct SyncState {
        std::mutex mu;
        std::condition_variable slot_free;
        int in_flight = 0;
        std::map<std::string, std::chrono::steady_clock::time_point> next_allowed;
    };
    std::unique_ptr<SyncState> sync_;
};

}  // namespace refaug
