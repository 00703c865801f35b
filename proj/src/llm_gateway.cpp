#include "mpeval/llm_gateway.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "mpeval/sha256.hpp"

namespace mpeval::gateway {

using nlohmann::json;

namespace {

json canonical_request(const CompletionRequest& req) {
    json messages = json::array();
    for (const auto& msg : req.messages) {
        messages.push_back({{"content", msg.content}, {"role", promptkit::to_string(msg.role)}});
    }
    // json objects keep keys sorted, so dump() is canonical.
    return json{{"max_tokens", req.max_tokens},
                {"messages", std::move(messages)},
                {"model", req.model_name},
                {"temperature", req.temperature}};
}

json result_to_json(const CompletionResult& result) {
    return json{{"finish_reason", to_string(result.finish_reason)},
                {"latency_ms", result.latency.count()},
                {"text", result.text},
                {"usage",
                 {{"completion_tokens", result.usage.completion_tokens},
                  {"prompt_tokens", result.usage.prompt_tokens}}}};
}

CompletionResult result_from_json(const json& j) {
    CompletionResult result;
    result.text = j.at("text").get<std::string>();
    result.finish_reason = finish_reason_from_string(j.at("finish_reason").get<std::string>());
    result.latency = std::chrono::milliseconds(j.value("latency_ms", 0));
    if (j.contains("usage")) {
        result.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
        result.usage.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
    }
    return result;
}

// Appends one complete line with a single write syscall, so a killed run can
// tear at most the final line, which the loader skips.
void append_line(const std::filesystem::path& path, const std::string& line) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) {
        throw GatewayError(GatewayError::Kind::Config, "cannot open cassette: " + path.string());
    }
    std::size_t written = 0;
    while (written < line.size()) {
        const ssize_t n = ::write(fd, line.data() + written, line.size() - written);
        if (n < 0) {
            ::close(fd);
            throw GatewayError(GatewayError::Kind::Config,
                               "cassette write failed: " + path.string());
        }
        written += static_cast<std::size_t>(n);
    }
    ::close(fd);
}

class InflightGuard {
public:
    InflightGuard(std::mutex& mutex, std::condition_variable_any& cv, std::size_t& count,
                  std::size_t limit)
        : mutex_(mutex), cv_(cv), count_(count) {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return count_ < limit; });
        ++count_;
    }

    ~InflightGuard() {
        {
            std::lock_guard lock(mutex_);
            --count_;
        }
        cv_.notify_one();
    }

private:
    std::mutex& mutex_;
    std::condition_variable_any& cv_;
    std::size_t& count_;
};

}  // namespace

std::string_view to_string(Mode mode) {
    switch (mode) {
        case Mode::Live: return "live";
        case Mode::Record: return "record";
        case Mode::Replay: return "replay";
    }
    return {};
}

std::optional<Mode> mode_from_string(std::string_view name) {
    if (name == "live") return Mode::Live;
    if (name == "record") return Mode::Record;
    if (name == "replay") return Mode::Replay;
    return std::nullopt;
}

std::string_view to_string(FinishReason reason) {
    switch (reason) {
        case FinishReason::Stop: return "stop";
        case FinishReason::Length: return "length";
        case FinishReason::Error: return "error";
    }
    return {};
}

FinishReason finish_reason_from_string(std::string_view name) {
    if (name == "stop") return FinishReason::Stop;
    if (name == "length") return FinishReason::Length;
    return FinishReason::Error;
}

void GatewayConfig::load_env() {
    if (const char* base = std::getenv("MPEVAL_API_BASE")) api_base = base;
    if (const char* key = std::getenv("MPEVAL_API_KEY")) api_key = key;
}

CacheKey cache_key(const CompletionRequest& req) {
    return CacheKey{sha256_hex(canonical_request(req).dump())};
}

LlmGateway::LlmGateway(GatewayConfig config, std::shared_ptr<ChatProvider> provider)
    : config_(std::move(config)), provider_(std::move(provider)) {
    bucket_tokens_ = 1.0;
    bucket_refill_time_ = std::chrono::steady_clock::now();

    if (config_.mode != Mode::Live && !config_.cassette_path.empty() &&
        std::filesystem::exists(config_.cassette_path)) {
        std::ifstream in(config_.cassette_path, std::ios::binary);
        std::string contents((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
        std::size_t start = 0;
        while (start < contents.size()) {
            const std::size_t nl = contents.find('\n', start);
            if (nl == std::string::npos) break;  // torn final line from an interrupted writer
            const std::string line = contents.substr(start, nl - start);
            start = nl + 1;
            if (line.empty()) continue;
            json j;
            try {
                j = json::parse(line);
                cassette_[j.at("digest").get<std::string>()] = result_from_json(j.at("result"));
            } catch (const json::exception& e) {
                throw GatewayError(GatewayError::Kind::Config,
                                   "corrupt cassette entry in " + config_.cassette_path.string() +
                                       ": " + e.what());
            }
        }
    }
    if (config_.mode == Mode::Replay && config_.cassette_path.empty()) {
        throw GatewayError(GatewayError::Kind::Config, "replay mode requires a cassette path");
    }
}

LlmGateway::~LlmGateway() = default;

Mode LlmGateway::mode() const { return config_.mode; }

std::size_t LlmGateway::cassette_size() const {
    std::shared_lock lock(cassette_mutex_);
    return cassette_.size();
}

CompletionResult LlmGateway::complete(const CompletionRequest& req) {
    const CacheKey key = cache_key(req);

    if (config_.mode != Mode::Live) {
        std::shared_lock lock(cassette_mutex_);
        if (auto it = cassette_.find(key.digest); it != cassette_.end()) {
            return it->second;
        }
    }
    if (config_.mode == Mode::Replay) {
        throw GatewayError(GatewayError::Kind::CassetteMiss,
                           "no cassette entry for request digest " + key.digest +
                               " (tag: " + req.tag + ")");
    }

    CompletionResult result = live_call(req);

    if (config_.mode == Mode::Record) {
        std::lock_guard append_lock(append_mutex_);
        bool fresh = false;
        {
            std::unique_lock lock(cassette_mutex_);
            fresh = cassette_.emplace(key.digest, result).second;
        }
        if (fresh) {
            json record{{"digest", key.digest},
                        {"request", canonical_request(req)},
                        {"result", result_to_json(result)}};
            append_line(config_.cassette_path, record.dump() + "\n");
        }
    }
    return result;
}

CompletionResult LlmGateway::live_call(const CompletionRequest& req) {
    if (!provider_) {
        throw GatewayError(GatewayError::Kind::Config,
                           "no provider configured for live/record mode");
    }

    InflightGuard guard(inflight_mutex_, inflight_cv_, inflight_, config_.max_in_flight);

    const auto backoff_deadline = std::chrono::steady_clock::now() + config_.max_total_backoff;
    auto delay = config_.initial_backoff;
    for (int attempt = 0;; ++attempt) {
        rate_limit_acquire();
        try {
            return provider_->send(req);
        } catch (const GatewayError& e) {
            if (!e.transient || attempt >= config_.max_retries) throw;
            const auto remaining = backoff_deadline - std::chrono::steady_clock::now();
            if (remaining <= std::chrono::milliseconds::zero()) throw;
            std::this_thread::sleep_for(
                std::min(std::chrono::duration_cast<std::chrono::milliseconds>(remaining), delay));
            delay *= 2;
        }
    }
}

void LlmGateway::rate_limit_acquire() {
    if (config_.requests_per_minute <= 0.0) return;
    const double per_second = config_.requests_per_minute / 60.0;
    const double capacity = std::max(1.0, per_second);
    for (;;) {
        std::chrono::milliseconds wait{0};
        {
            std::lock_guard lock(bucket_mutex_);
            const auto now = std::chrono::steady_clock::now();
            const double elapsed = std::chrono::duration<double>(now - bucket_refill_time_).count();
            bucket_tokens_ = std::min(capacity, bucket_tokens_ + elapsed * per_second);
            bucket_refill_time_ = now;
            if (bucket_tokens_ >= 1.0) {
                bucket_tokens_ -= 1.0;
                return;
            }
            wait = std::chrono::milliseconds(
                static_cast<long>((1.0 - bucket_tokens_) / per_second * 1000.0) + 1);
        }
        std::this_thread::sleep_for(wait);
    }
}

}  // namespace mpeval::gateway
