#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mpeval/corpus.hpp"
#include "mpeval/exec_eval.hpp"
#include "mpeval/judge.hpp"
#include "mpeval/llm_gateway.hpp"

namespace mpeval::run {

/// Process exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 2;  // some samples failed to parse
inline constexpr int kExitAborted = 3;

struct JudgeRunConfig {
    std::filesystem::path corpus_path;
    std::filesystem::path answers_path;
    std::filesystem::path out_dir;
    corpus::SubsetSpec subset;
    std::vector<judge::JudgeParameter> params;
    judge::EvaluateOptions eval;
    gateway::GatewayConfig gw;
    std::size_t max_in_flight = 4;
};

/// Judges every selected problem for every requested parameter and writes a
/// reproducible run directory: config snapshot, verdict log, raw replies,
/// scorecard and reports. Returns a process exit code.
int run_judge(const JudgeRunConfig& config, std::shared_ptr<gateway::ChatProvider> provider,
              std::ostream& log);

struct ExecRunConfig {
    std::filesystem::path corpus_path;
    std::filesystem::path answers_path;
    std::filesystem::path out_dir;
    corpus::SubsetSpec subset;
    int n = 1;
    std::vector<int> ks = {1};
    exec_eval::Limits limits;
    std::size_t jobs = 2;
};

/// Extracts, executes and scores every sampled reply, then writes the outcome
/// log, pass@k summary and reports. Returns a process exit code.
int run_exec(const ExecRunConfig& config, std::ostream& log);

struct ReportOptions {
    std::string format = "md";               // md|csv|json
    std::optional<std::string> subject;      // annotate scorecard leads for this model
    std::optional<std::string> task_id;      // render one problem sheet instead
};

/// Rebuilds reports from a run directory's logs and prints the chosen format.
int regenerate_reports(const std::filesystem::path& run_dir, const ReportOptions& options,
                       std::ostream& out, std::ostream& log);

/// Reads back a verdict log written by run_judge.
std::vector<judge::ProblemVerdict> load_verdict_log(const std::filesystem::path& path);

}  // namespace mpeval::run
