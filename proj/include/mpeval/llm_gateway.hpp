#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "mpeval/errors.hpp"
#include "mpeval/promptkit.hpp"

namespace mpeval::gateway {

enum class Mode { Live, Record, Replay };

std::string_view to_string(Mode mode);
std::optional<Mode> mode_from_string(std::string_view name);

struct CompletionRequest {
    std::string model_name;
    std::vector<promptkit::Message> messages;
    double temperature = 0.0;
    int max_tokens = 1024;
    std::string tag;  // audit only, excluded from the cache key
};

enum class FinishReason { Stop, Length, Error };

std::string_view to_string(FinishReason reason);
FinishReason finish_reason_from_string(std::string_view name);

struct Usage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

struct CompletionResult {
    std::string text;
    FinishReason finish_reason = FinishReason::Stop;
    Usage usage;
    std::chrono::milliseconds latency{0};
};

struct CacheKey {
    std::string digest;

    bool operator==(const CacheKey&) const = default;
    auto operator<=>(const CacheKey&) const = default;
};

class GatewayError : public Error {
public:
    enum class Kind { CassetteMiss, Provider, Timeout, Config };

    GatewayError(Kind kind, std::string message, int status = 0, bool transient = false)
        : Error(std::move(message)), kind(kind), status(status), transient(transient) {}

    Kind kind;
    int status;
    bool transient;
};

/// Transport behind the gateway. Implementations throw GatewayError on
/// failure, marking retryable conditions as transient.
class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual CompletionResult send(const CompletionRequest& req) = 0;
};

struct GatewayConfig {
    Mode mode = Mode::Replay;
    std::filesystem::path cassette_path;

    std::string api_base;  // e.g. http://localhost:8080/v1
    std::string api_key;

    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{250};
    std::chrono::milliseconds max_total_backoff{10000};
    std::chrono::seconds request_timeout{120};

    double requests_per_minute = 0.0;  // <= 0 disables rate limiting
    std::size_t max_in_flight = 4;

    /// Fills api_base / api_key from MPEVAL_API_BASE / MPEVAL_API_KEY.
    void load_env();
};

/// Content-hash key over (model, messages, temperature, max_tokens) after
/// canonical serialization. Stable across processes and platforms.
CacheKey cache_key(const CompletionRequest& req);

/// Provider-agnostic completion access with retries, rate limiting and a
/// content-addressed cassette for deterministic replay. Shareable across
/// threads; cassette writes are serialized, reads are concurrent.
class LlmGateway {
public:
    explicit LlmGateway(GatewayConfig config, std::shared_ptr<ChatProvider> provider = nullptr);
    ~LlmGateway();

    LlmGateway(const LlmGateway&) = delete;
    LlmGateway& operator=(const LlmGateway&) = delete;

    /// Replay: cassette lookup only, never touches the provider.
    /// Record: cassette hit is returned as-is; on miss the provider is called
    /// and the result appended atomically.
    /// Live: provider call with bounded exponential backoff on transient
    /// failures.
    CompletionResult complete(const CompletionRequest& req);

    Mode mode() const;
    std::size_t cassette_size() const;

private:
    CompletionResult live_call(const CompletionRequest& req);
    void rate_limit_acquire();

    GatewayConfig config_;
    std::shared_ptr<ChatProvider> provider_;

    mutable std::shared_mutex cassette_mutex_;
    std::map<std::string, CompletionResult> cassette_;
    std::mutex append_mutex_;

    std::mutex bucket_mutex_;
    double bucket_tokens_ = 0.0;
    std::chrono::steady_clock::time_point bucket_refill_time_;

    std::mutex inflight_mutex_;
    std::condition_variable_any inflight_cv_;
    std::size_t inflight_ = 0;
};

/// OpenAI-compatible chat-completions provider over HTTP.
std::shared_ptr<ChatProvider> make_http_provider(const GatewayConfig& config);

}  // namespace mpeval::gateway
