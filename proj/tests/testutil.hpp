#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mpeval/llm_gateway.hpp"
#include "mpeval/util.hpp"

namespace mpeval::testutil {

inline std::filesystem::path data_dir() { return MPEVAL_TEST_DATA_DIR; }

/// Self-cleaning scratch directory for a test.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        std::string pattern =
            (std::filesystem::temp_directory_path() / "mpeval-test-XXXXXX").string();
        path = ::mkdtemp(pattern.data());
    }

    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }

    std::filesystem::path file(const std::string& name) const { return path / name; }
};

/// Provider that replies from a callback; counts calls.
class ScriptedProvider : public gateway::ChatProvider {
public:
    using Script = std::function<gateway::CompletionResult(const gateway::CompletionRequest&)>;

    explicit ScriptedProvider(Script script) : script_(std::move(script)) {}

    static std::shared_ptr<ScriptedProvider> fixed(std::string text) {
        return std::make_shared<ScriptedProvider>([text = std::move(text)](const auto&) {
            gateway::CompletionResult result;
            result.text = text;
            return result;
        });
    }

    gateway::CompletionResult send(const gateway::CompletionRequest& req) override {
        ++calls_;
        return script_(req);
    }

    int calls() const { return calls_; }

private:
    Script script_;
    int calls_ = 0;
};

/// Provider that must never be reached (replay-isolation checks).
class PanicProvider : public gateway::ChatProvider {
public:
    gateway::CompletionResult send(const gateway::CompletionRequest&) override {
        reached_ = true;
        throw gateway::GatewayError(gateway::GatewayError::Kind::Provider,
                                    "network touched in replay mode");
    }

    bool reached() const { return reached_; }

private:
    bool reached_ = false;
};

}  // namespace mpeval::testutil
