#include "refaug/gateway.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include "refaug/util.hpp"

namespace refaug {
namespace {

constexpr std::array<std::string_view, 3> kRoleNames{"system", "user", "assistant"};
constexpr std::array<std::string_view, 3> kFinishNames{"stop_string", "natural_end", "length"};

bool transient_status(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int attempt) {
    double delay = policy.base_delay_ms * std::pow(policy.factor, attempt - 1);
    if (policy.full_jitter) {
        thread_local std::mt19937_64 rng(std::random_device{}());
        delay = std::uniform_real_distribution<double>(0.0, delay)(rng);
    }
    return std::chrono::milliseconds(static_cast<long>(delay));
}

/// RAII slot against the global in-flight bound.
class InFlightSlot {
public:
    InFlightSlot(std::mutex& mu, std::condition_variable& cv, int& count, int bound)
        : mu_(mu), cv_(cv), count_(count) {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return count_ < bound; });
        ++count_;
    }
    ~InFlightSlot() {
        {
            std::lock_guard lock(mu_);
            --count_;
        }
        cv_.notify_one();
    }

private:
    std::mutex& mu_;
    std::condition_variable& cv_;
    int& count_;
};

}  // namespace

std::string to_string(Role v) { return std::string(kRoleNames[static_cast<std::size_t>(v)]); }

Role role_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kRoleNames.size(); ++i) {
        if (kRoleNames[i] == s) return static_cast<Role>(i);
    }
    throw Error("unknown role: '" + std::string(s) + "'");
}

std::string to_string(FinishReason v) {
    return std::string(kFinishNames[static_cast<std::size_t>(v)]);
}

FinishReason finish_reason_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kFinishNames.size(); ++i) {
        if (kFinishNames[i] == s) return static_cast<FinishReason>(i);
    }
    throw Error("unknown finish_reason: '" + std::string(s) + "'");
}

CacheMode cache_mode_from_string(std::string_view s) {
    if (s == "off") return CacheMode::off;
    if (s == "readwrite") return CacheMode::readwrite;
    if (s == "replay") return CacheMode::replay;
    throw Error("unknown cache mode: '" + std::string(s) + "'");
}

void ChatRequest::validate() const {
    if (messages.empty()) throw Error("chat request has no messages");
    std::size_t i = 0;
    while (i < messages.size() && messages[i].role == Role::system) ++i;
    if (i == messages.size()) throw Error("chat request has only system messages");
    Role expected = Role::user;
    for (; i < messages.size(); ++i) {
        if (messages[i].role == Role::system) {
            throw Error("system message after the conversation started");
        }
        if (messages[i].role != expected) {
            throw Error("roles must alternate user/assistant");
        }
        expected = expected == Role::user ? Role::assistant : Role::user;
    }
}

void to_json(ojson& j, const ChatMessage& m) {
    j = ojson{{"role", to_string(m.role)}, {"content", m.content}};
}

void from_json(const ojson& j, ChatMessage& m) {
    m.role = role_from_string(j.at("role").get<std::string>());
    m.content = j.at("content").get<std::string>();
}

void to_json(ojson& j, const ChatRequest& r) {
    j = ojson{{"endpoint", r.endpoint},
              {"messages", r.messages},
              {"decoding",
               ojson{{"temperature", r.decoding.temperature},
                     {"top_p", r.decoding.top_p},
                     {"max_tokens", r.decoding.max_tokens},
                     {"stop", r.decoding.stop}}},
              {"sample_index", r.sample_index}};
}

void from_json(const ojson& j, ChatRequest& r) {
    r.endpoint = j.at("endpoint").get<std::string>();
    r.messages = j.at("messages").get<std::vector<ChatMessage>>();
    const auto& d = j.at("decoding");
    r.decoding.temperature = d.at("temperature").get<double>();
    r.decoding.top_p = d.at("top_p").get<double>();
    r.decoding.max_tokens = d.at("max_tokens").get<int>();
    r.decoding.stop = d.at("stop").get<std::vector<std::string>>();
    r.sample_index = j.value("sample_index", 0);
}

void to_json(ojson& j, const ChatResponse& r) {
    j = ojson{{"text", r.text}, {"finish_reason", to_string(r.finish_reason)}};
    if (r.usage) {
        j["usage"] = ojson{{"prompt_tokens", r.usage->prompt_tokens},
                           {"completion_tokens", r.usage->completion_tokens}};
    } else {
        j["usage"] = nullptr;
    }
}

void from_json(const ojson& j, ChatResponse& r) {
    r.text = j.at("text").get<std::string>();
    r.finish_reason = finish_reason_from_string(j.at("finish_reason").get<std::string>());
    r.usage.reset();
    if (j.contains("usage") && !j.at("usage").is_null()) {
        r.usage = TokenUsage{j.at("usage").at("prompt_tokens").get<int>(),
                             j.at("usage").at("completion_tokens").get<int>()};
    }
}

std::string cache_key(const ChatRequest& request) {
    ojson j = request;
    return sha256_hex(j.dump());
}

HttpResponse HttpTransport::post(const std::string& base_url, const std::string& path,
                                 const std::vector<std::pair<std::string, std::string>>& headers,
                                 const std::string& body) {
    httplib::Client client(base_url);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers hh;
    for (const auto& [k, v] : headers) hh.emplace(k, v);
    auto result = client.Post(path, hh, body, "application/json");
    if (!result) {
        throw TransportError("http transport failure: " + httplib::to_string(result.error()));
    }
    return {result->status, result->body};
}

Gateway::Gateway(GatewayConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      sync_(std::make_unique<SyncState>()) {
    if (config_.parallelism < 1) throw Error("gateway parallelism must be >= 1");
    if (config_.cache_mode != CacheMode::off && config_.cache_dir.empty()) {
        throw Error("cache mode requires a cache directory");
    }
    if (config_.cache_mode == CacheMode::readwrite) {
        std::filesystem::create_directories(config_.cache_dir);
    }
}

const EndpointConfig& Gateway::endpoint(const std::string& id) const {
    for (const auto& ep : config_.endpoints) {
        if (ep.id == id) return ep;
    }
    throw Error("unknown endpoint: '" + id + "'");
}

void Gateway::set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) {
    sleeper_ = std::move(sleeper);
}

void Gateway::sleep_ms(std::chrono::milliseconds ms) {
    if (ms.count() <= 0) return;
    if (sleeper_) {
        sleeper_(ms);
    } else {
        std::this_thread::sleep_for(ms);
    }
}

std::optional<ChatResponse> Gateway::cache_lookup(const std::string& key) const {
    auto path = config_.cache_dir / (key + ".json");
    if (!std::filesystem::exists(path)) return std::nullopt;
    ojson entry = ojson::parse(read_text_file(path));
    return entry.at("response").get<ChatResponse>();
}

void Gateway::cache_store(const std::string& key, const ChatRequest& request,
                          const ChatResponse& response) const {
    ojson entry{{"request", request}, {"response", response}};
    auto path = config_.cache_dir / (key + ".json");
    auto tmp = config_.cache_dir / (key + ".tmp");
    write_text_file(tmp, entry.dump(2) + "\n");
    std::filesystem::rename(tmp, path);
}

void Gateway::rate_limit_wait(const EndpointConfig& ep) {
    if (ep.rate_limit_per_s <= 0) return;
    auto interval = std::chrono::milliseconds(static_cast<long>(1000.0 / ep.rate_limit_per_s));
    std::chrono::milliseconds wait{0};
    {
        std::lock_guard lock(sync_->mu);
        auto now = std::chrono::steady_clock::now();
        auto& next = sync_->next_allowed[ep.id];
        if (next < now) next = now;
        wait = std::chrono::duration_cast<std::chrono::milliseconds>(next - now);
        next += interval;
    }
    sleep_ms(wait);
}

ChatResponse Gateway::apply_stop_strings(ChatResponse response,
                                         const std::vector<std::string>& stop) {
    std::size_t cut = std::string::npos;
    for (const auto& s : stop) {
        if (s.empty()) continue;
        auto pos = response.text.find(s);
        if (pos != std::string::npos && (cut == std::string::npos || pos < cut)) cut = pos;
    }
    if (cut != std::string::npos) {
        response.text.resize(cut);
        response.finish_reason = FinishReason::stop_string;
    }
    return response;
}

ChatResponse Gateway::parse_body(const std::string& body) const {
    ojson j;
    try {
        j = ojson::parse(body);
    } catch (const std::exception& e) {
        throw GatewayError(std::string("malformed response body: ") + e.what());
    }
    if (!j.contains("choices") || !j.at("choices").is_array() || j.at("choices").empty()) {
        throw GatewayError("malformed response body: no choices");
    }
    const auto& choice = j.at("choices").at(0);
    ChatResponse response;
    try {
        response.text = choice.at("message").at("content").get<std::string>();
    } catch (const std::exception&) {
        throw GatewayError("malformed response body: no message content");
    }
    std::string finish = choice.value("finish_reason", "stop");
    response.finish_reason =
        finish == "length" ? FinishReason::length : FinishReason::natural_end;
    if (j.contains("usage") && j.at("usage").is_object()) {
        const auto& u = j.at("usage");
        response.usage = TokenUsage{u.value("prompt_tokens", 0), u.value("completion_tokens", 0)};
    }
    return response;
}

ChatResponse Gateway::perform(const EndpointConfig& ep, const ChatRequest& request) {
    ojson body{{"model", ep.model}, {"messages", request.messages},
               {"temperature", request.decoding.temperature},
               {"top_p", request.decoding.top_p},
               {"max_tokens", request.decoding.max_tokens}};
    if (!request.decoding.stop.empty()) body["stop"] = request.decoding.stop;

    std::vector<std::pair<std::string, std::string>> headers;
    if (const char* key = std::getenv(ep.api_key_env.c_str()); key && *key) {
        headers.emplace_back("Authorization", std::string("Bearer ") + key);
    }

    std::string base = ep.base_url;
    while (!base.empty() && base.back() == '/') base.pop_back();

    const RetryPolicy& retry = ep.retry;
    std::string last_error;
    for (int attempt = 1; attempt <= retry.max_attempts; ++attempt) {
        if (attempt > 1) sleep_ms(backoff_delay(retry, attempt - 1));
        rate_limit_wait(ep);
        try {
            HttpResponse http = transport_->post(base, "/v1/chat/completions", headers, body.dump());
            if (http.status == 200) {
                return apply_stop_strings(parse_body(http.body), request.decoding.stop);
            }
            if (!transient_status(http.status)) {
                throw GatewayError("endpoint '" + ep.id + "' returned HTTP " +
                                   std::to_string(http.status) + ": " + http.body);
            }
            last_error = "HTTP " + std::to_string(http.status);
        } catch (const TransportError& e) {
            last_error = e.what();
        }
    }
    throw GatewayError("endpoint '" + ep.id + "' failed after " +
                       std::to_string(retry.max_attempts) + " attempts: " + last_error);
}

ChatResponse Gateway::chat(const ChatRequest& request) {
    request.validate();
    const EndpointConfig& ep = endpoint(request.endpoint);

    std::string key;
    if (config_.cache_mode != CacheMode::off) {
        key = cache_key(request);
        if (auto cached = cache_lookup(key)) return *cached;
        if (config_.cache_mode == CacheMode::replay) {
            throw CacheMissError("replay cache miss for endpoint '" + request.endpoint +
                                 "' (key " + key + ")");
        }
    }

    ChatResponse response;
    {
        InFlightSlot slot(sync_->mu, sync_->slot_free, sync_->in_flight, config_.parallelism);
        response = perform(ep, request);
    }
    if (config_.cache_mode == CacheMode::readwrite) cache_store(key, request, response);
    return response;
}

std::vector<Gateway::Outcome> Gateway::chat_many(const std::vector<ChatRequest>& requests) {
    std::vector<Outcome> outcomes(requests.size());
    parallel_for(requests.size(), static_cast<std::size_t>(config_.parallelism),
                 [&](std::size_t i) {
                     try {
                         outcomes[i].response = chat(requests[i]);
                     } catch (const std::exception& e) {
                         outcomes[i].error = e.what();
                     }
                 });
    return outcomes;
}

}  // namespace refaug
