#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mpeval/corpus.hpp"
#include "mpeval/errors.hpp"

namespace mpeval::exec_eval {

enum class ExecStatus { Pass, Fail, Timeout, ExtractFail, HarnessError };

std::string_view to_string(ExecStatus status);
std::optional<ExecStatus> exec_status_from_string(std::string_view name);

struct ExecOutcome {
    std::string task_id;
    std::string model_id;
    int sample_index = 0;
    ExecStatus status = ExecStatus::HarnessError;
    double duration_sec = 0.0;
    std::string stderr_excerpt;
};

struct Limits {
    double timeout_sec = 10.0;
    double grace_sec = 1.0;
    std::uint64_t memory_bytes = 512ull << 20;
    std::vector<std::string> interpreter = {"python3"};
};

class ExecError : public Error {
public:
    enum class Kind { InvalidArgs, InconsistentSampleCounts, HarnessAbort };

    ExecError(Kind kind, std::string message) : Error(std::move(message)), kind(kind) {}

    Kind kind;
};

/// Pulls runnable source out of a conversational reply: the concatenation of
/// all fenced code blocks if any block defines the entry point, else the bare
/// reply when it defines the entry point itself. Returns nullopt when no
/// candidate defines it.
std::optional<std::string> extract_code(std::string_view answer, std::string_view entry_point);

/// True when `code` contains a Python-style definition of `entry_point`.
bool defines_entry_point(std::string_view code, std::string_view entry_point);

/// Builds the script to execute: prompt context (or the full prompt when the
/// candidate is a bare body completion), the candidate, the test block and an
/// invocation of the check routine on the entry point.
std::string assemble_script(const corpus::ProblemRecord& problem, std::string_view code);

/// Runs the assembled script in an isolated child process group with wall
/// clock, CPU and memory limits; the child is reliably killed on timeout.
ExecOutcome run_candidate(const corpus::ProblemRecord& problem, std::string_view code,
                          const Limits& limits);

/// Unbiased estimator 1 - C(n-c,k)/C(n,k), computed as a stable product.
/// pass@1 reduces to c/n exactly.
double pass_at_k(int n, int c, int k);

struct PassAtKStat {
    std::string task_id;
    int n = 0;
    int c = 0;
    std::map<int, double> estimates;
};

struct ModelPassAtK {
    std::string model_id;
    std::vector<PassAtKStat> per_task;
    std::map<int, double> aggregate;  // mean of per-task estimates, as a fraction
};

/// Per-task and aggregate pass@k for every model in `outcomes`. Timeout,
/// ExtractFail and Fail all count as not passing; any HarnessError aborts.
std::vector<ModelPassAtK> summarize(const std::vector<ExecOutcome>& outcomes,
                                    const std::vector<int>& ks);

struct CandidateJob {
    const corpus::ProblemRecord* problem = nullptr;
    std::string model_id;
    int sample_index = 0;
    std::optional<std::string> code;  // nullopt -> ExtractFail outcome
};

/// Executes jobs on a fixed-width worker pool; outcome order matches jobs.
std::vector<ExecOutcome> run_pool(const std::vector<CandidateJob>& jobs, const Limits& limits,
                                  std::size_t workers);

struct ExecAnswers {
    std::string task_id;
    std::string model_id;
    std::vector<std::string> samples;
};

/// Sample file: one JSON object per line with task_id, model_id and the list
/// of sampled replies.
std::vector<ExecAnswers> load_exec_answers(const std::filesystem::path& path);

}  // namespace mpeval::exec_eval
