#include <chrono>

#include <httplib.h>
#include <json.hpp>

#include "mpeval/llm_gateway.hpp"

namespace mpeval::gateway {

using nlohmann::json;

namespace {

class HttpChatProvider : public ChatProvider {
public:
    explicit HttpChatProvider(GatewayConfig config) : config_(std::move(config)) {
        if (config_.api_base.empty()) {
            throw GatewayError(GatewayError::Kind::Config,
                               "api base not set (MPEVAL_API_BASE or --api-base)");
        }
        // Split "scheme://host:port/prefix" into client target and path prefix.
        const std::size_t scheme_end = config_.api_base.find("://");
        const std::size_t path_start =
            config_.api_base.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
        if (path_start == std::string::npos) {
            base_ = config_.api_base;
        } else {
            base_ = config_.api_base.substr(0, path_start);
            path_prefix_ = config_.api_base.substr(path_start);
            while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
        }
    }

    CompletionResult send(const CompletionRequest& req) override {
        httplib::Client client(base_);
        client.set_connection_timeout(config_.request_timeout);
        client.set_read_timeout(config_.request_timeout);
        client.set_write_timeout(config_.request_timeout);

        json body{{"model", req.model_name},
                  {"temperature", req.temperature},
                  {"max_tokens", req.max_tokens},
                  {"messages", json::array()}};
        for (const auto& msg : req.messages) {
            body["messages"].push_back(
                {{"role", promptkit::to_string(msg.role)}, {"content", msg.content}});
        }

        httplib::Headers headers;
        if (!config_.api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + config_.api_key);
        }

        const auto start = std::chrono::steady_clock::now();
        httplib::Result res =
            client.Post(path_prefix_ + "/chat/completions", headers, body.dump(),
                        "application/json");
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - start);

        if (!res) {
            const auto err = res.error();
            const bool timeout = err == httplib::Error::ConnectionTimeout ||
                                 err == httplib::Error::Read || err == httplib::Error::Write;
            throw GatewayError(timeout ? GatewayError::Kind::Timeout
                                       : GatewayError::Kind::Provider,
                               "transport failure: " + httplib::to_string(err), 0,
                               /*transient=*/true);
        }
        if (res->status != 200) {
            const bool transient =
                res->status == 408 || res->status == 429 || res->status >= 500;
            throw GatewayError(GatewayError::Kind::Provider,
                               "provider returned status " + std::to_string(res->status) + ": " +
                                   res->body,
                               res->status, transient);
        }

        try {
            const json reply = json::parse(res->body);
            const json& choice = reply.at("choices").at(0);
            CompletionResult result;
            result.text = choice.at("message").at("content").get<std::string>();
            result.finish_reason =
                finish_reason_from_string(choice.value("finish_reason", "stop"));
            if (reply.contains("usage")) {
                result.usage.prompt_tokens = reply["usage"].value("prompt_tokens", std::int64_t{0});
                result.usage.completion_tokens =
                    reply["usage"].value("completion_tokens", std::int64_t{0});
            }
            result.latency = elapsed;
            return result;
        } catch (const json::exception& e) {
            throw GatewayError(GatewayError::Kind::Provider,
                               std::string("malformed provider response: ") + e.what(), 200,
                               /*transient=*/false);
        }
    }

private:
    GatewayConfig config_;
    std::string base_;
    std::string path_prefix_;
};

}  // namespace

std::shared_ptr<ChatProvider> make_http_provider(const GatewayConfig& config) {
    return std::make_shared<HttpChatProvider>(config);
}

}  // namespace mpeval::gateway
