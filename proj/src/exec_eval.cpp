#include "mpeval/exec_eval.hpp"

#include <fcntl.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>
#include <thread>

#include <json.hpp>

#include "mpeval/util.hpp"

namespace mpeval::exec_eval {

using nlohmann::json;

namespace {

std::string escape_regex(std::string_view text) {
    std::string out;
    for (char c : text) {
        if (std::strchr("\\^$.|?*+()[]{}", c)) out += '\\';
        out += c;
    }
    return out;
}

std::string stderr_tail(const std::filesystem::path& path, std::size_t max_bytes = 2000) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return {};
    std::string contents;
    try {
        contents = read_file(path);
    } catch (const Error&) {
        return {};
    }
    if (contents.size() > max_bytes) {
        contents.erase(0, contents.size() - max_bytes);
    }
    return contents;
}

std::filesystem::path make_scratch_dir() {
    std::string pattern =
        (std::filesystem::temp_directory_path() / "mpeval-exec-XXXXXX").string();
    if (!::mkdtemp(pattern.data())) {
        throw ExecError(ExecError::Kind::HarnessAbort,
                        std::string("mkdtemp failed: ") + std::strerror(errno));
    }
    return pattern;
}

// Kills the whole process group and reaps the direct child. Peeking with
// WNOWAIT first keeps the pid valid while the group sweep runs.
struct ChildReaper {
    pid_t pid = -1;
    bool reaped = false;

    void sweep_and_reap() {
        if (pid <= 0 || reaped) return;
        ::kill(-pid, SIGKILL);
        int status = 0;
        while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
        }
        reaped = true;
    }

    ~ChildReaper() { sweep_and_reap(); }
};

}  // namespace

std::string_view to_string(ExecStatus status) {
    switch (status) {
        case ExecStatus::Pass: return "pass";
        case ExecStatus::Fail: return "fail";
        case ExecStatus::Timeout: return "timeout";
        case ExecStatus::ExtractFail: return "extract_fail";
        case ExecStatus::HarnessError: return "harness_error";
    }
    return {};
}

std::optional<ExecStatus> exec_status_from_string(std::string_view name) {
    for (ExecStatus status : {ExecStatus::Pass, ExecStatus::Fail, ExecStatus::Timeout,
                              ExecStatus::ExtractFail, ExecStatus::HarnessError}) {
        if (to_string(status) == name) return status;
    }
    return std::nullopt;
}

bool defines_entry_point(std::string_view code, std::string_view entry_point) {
    const std::regex def_re(R"((^|\n)\s*(?:async\s+)?def\s+)" + escape_regex(entry_point) +
                            R"(\s*\()");
    return std::regex_search(code.begin(), code.end(), def_re);
}

std::optional<std::string> extract_code(std::string_view answer, std::string_view entry_point) {
    std::vector<std::string> blocks;
    std::size_t pos = 0;
    const std::string text(answer);
    while (true) {
        std::size_t open = text.find("```", pos);
        if (open == std::string::npos) break;
        std::size_t body_start = text.find('\n', open + 3);  // skips the info string
        if (body_start == std::string::npos) break;
        ++body_start;
        std::size_t close = text.find("```", body_start);
        std::string body;
        if (close == std::string::npos) {
            body = text.substr(body_start);  // truncated reply, take what is there
            pos = text.size();
        } else {
            body = text.substr(body_start, close - body_start);
            pos = close + 3;
        }
        blocks.push_back(std::move(body));
        if (close == std::string::npos) break;
    }

    if (!blocks.empty()) {
        bool any_defines = false;
        for (const auto& block : blocks) {
            any_defines = any_defines || defines_entry_point(block, entry_point);
        }
        if (any_defines) {
            // Earlier blocks may hold imports or helpers; example-call blocks
            // are harmless under the test's own invocation.
            std::string joined;
            for (const auto& block : blocks) {
                joined += block;
                if (!joined.empty() && joined.back() != '\n') joined += '\n';
            }
            return joined;
        }
    }
    if (defines_entry_point(answer, entry_point)) {
        return std::string(answer);
    }
    return std::nullopt;
}

std::string assemble_script(const corpus::ProblemRecord& problem, std::string_view code) {
    std::string script;
    if (defines_entry_point(code, problem.entry_point)) {
        // Full-definition candidate: keep imports and helpers from the prompt
        // but drop the dangling signature the candidate re-defines.
        const std::regex def_line(R"((^|\n)(?:async\s+)?def\s+)" +
                                  escape_regex(problem.entry_point) + R"(\s*\()");
        std::cmatch m;
        if (std::regex_search(problem.prompt.c_str(),
                              problem.prompt.c_str() + problem.prompt.size(), m, def_line)) {
            const std::size_t cut =
                static_cast<std::size_t>(m.position(0)) + (m[1].length() > 0 ? 1 : 0);
            script += problem.prompt.substr(0, cut);
        }
        script += code;
    } else {
        // Bare body completion in the reference-harness style.
        script += problem.prompt;
        script += code;
    }
    if (!script.empty() && script.back() != '\n') script += '\n';
    script += problem.test;
    if (!script.empty() && script.back() != '\n') script += '\n';
    script += "check(" + problem.entry_point + ")\n";
    return script;
}

ExecOutcome run_candidate(const corpus::ProblemRecord& problem, std::string_view code,
                          const Limits& limits) {
    ExecOutcome outcome;
    outcome.task_id = problem.task_id;

    const std::filesystem::path dir = make_scratch_dir();
    const std::filesystem::path script_path = dir / "candidate.py";
    const std::filesystem::path stdout_path = dir / "out.txt";
    const std::filesystem::path stderr_path = dir / "err.txt";
    write_file(script_path, assemble_script(problem, code));

    int exec_errno_pipe[2];
    if (::pipe2(exec_errno_pipe, O_CLOEXEC) != 0) {
        outcome.status = ExecStatus::HarnessError;
        outcome.stderr_excerpt = "pipe2 failed";
        return outcome;
    }

    // argv is prepared before fork; the child must not allocate between
    // fork and exec while sibling pool threads are running.
    std::vector<char*> argv;
    argv.reserve(limits.interpreter.size() + 2);
    for (const auto& part : limits.interpreter) argv.push_back(const_cast<char*>(part.c_str()));
    argv.push_back(const_cast<char*>("candidate.py"));
    argv.push_back(nullptr);

    const auto start = std::chrono::steady_clock::now();
    const pid_t pid = ::fork();
    if (pid < 0) {
        ::close(exec_errno_pipe[0]);
        ::close(exec_errno_pipe[1]);
        outcome.status = ExecStatus::HarnessError;
        outcome.stderr_excerpt = "fork failed";
        std::filesystem::remove_all(dir);
        return outcome;
    }

    if (pid == 0) {
        ::setsid();
        if (::chdir(dir.c_str()) != 0) ::_exit(126);

        const int devnull = ::open("/dev/null", O_RDONLY);
        if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
        const int out_fd = ::open(stdout_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        const int err_fd = ::open(stderr_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (out_fd >= 0) ::dup2(out_fd, STDOUT_FILENO);
        if (err_fd >= 0) ::dup2(err_fd, STDERR_FILENO);

        const rlim_t cpu_sec =
            static_cast<rlim_t>(std::ceil(limits.timeout_sec + limits.grace_sec)) + 1;
        rlimit cpu_limit{cpu_sec, cpu_sec};
        ::setrlimit(RLIMIT_CPU, &cpu_limit);
        rlimit mem_limit{limits.memory_bytes, limits.memory_bytes};
        ::setrlimit(RLIMIT_AS, &mem_limit);
        rlimit core_limit{0, 0};
        ::setrlimit(RLIMIT_CORE, &core_limit);

        // Network isolation where the platform permits it; untrusted code
        // still runs if the namespaces are unavailable.
        (void)::unshare(CLONE_NEWUSER | CLONE_NEWNET);

        ::execvp(argv[0], argv.data());

        const int exec_errno = errno;
        (void)!::write(exec_errno_pipe[1], &exec_errno, sizeof(exec_errno));
        ::_exit(127);
    }

    ::close(exec_errno_pipe[1]);
    ChildReaper reaper;
    reaper.pid = pid;

    const auto deadline =
        start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                    std::chrono::duration<double>(limits.timeout_sec));
    bool timed_out = false;
    siginfo_t info{};
    for (;;) {
        info.si_pid = 0;
        const int rc = ::waitid(P_PID, static_cast<id_t>(pid), &info,
                                WEXITED | WNOHANG | WNOWAIT);
        if (rc == 0 && info.si_pid == pid) break;  // exited, not yet reaped
        if (rc < 0 && errno != EINTR) break;
        if (std::chrono::steady_clock::now() >= deadline) {
            timed_out = true;
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    reaper.sweep_and_reap();
    outcome.duration_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    int exec_errno = 0;
    const ssize_t got = ::read(exec_errno_pipe[0], &exec_errno, sizeof(exec_errno));
    ::close(exec_errno_pipe[0]);

    if (got > 0) {
        outcome.status = ExecStatus::HarnessError;
        outcome.stderr_excerpt =
            std::string("interpreter failed to start: ") + std::strerror(exec_errno);
    } else if (timed_out) {
        outcome.status = ExecStatus::Timeout;
        outcome.stderr_excerpt = stderr_tail(stderr_path);
    } else if (info.si_code == CLD_EXITED && info.si_status == 0) {
        outcome.status = ExecStatus::Pass;
    } else {
        outcome.status = ExecStatus::Fail;
        outcome.stderr_excerpt = stderr_tail(stderr_path);
    }

    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
    return outcome;
}

double pass_at_k(int n, int c, int k) {
    if (n < 1 || c < 0 || c > n || k < 1 || k > n) {
        throw ExecError(ExecError::Kind::InvalidArgs,
                        "pass_at_k requires 0 <= c <= n and 1 <= k <= n (n=" + std::to_string(n) +
                            " c=" + std::to_string(c) + " k=" + std::to_string(k) + ")");
    }
    if (k == 1) return static_cast<double>(c) / static_cast<double>(n);
    if (n - c < k) return 1.0;
    double miss_all = 1.0;
    for (int j = 0; j < k; ++j) {
        miss_all *= static_cast<double>(n - c - j) / static_cast<double>(n - j);
    }
    return 1.0 - miss_all;
}

std::vector<ModelPassAtK> summarize(const std::vector<ExecOutcome>& outcomes,
                                    const std::vector<int>& ks) {
    for (const auto& outcome : outcomes) {
        if (outcome.status == ExecStatus::HarnessError) {
            throw ExecError(ExecError::Kind::HarnessAbort,
                            "harness error for " + outcome.task_id + "/" + outcome.model_id +
                                " sample " + std::to_string(outcome.sample_index) + ": " +
                                outcome.stderr_excerpt);
        }
    }

    // model -> task -> sample -> passed
    std::map<std::string, std::map<std::string, std::map<int, bool>>> grouped;
    for (const auto& outcome : outcomes) {
        auto& samples = grouped[outcome.model_id][outcome.task_id];
        if (!samples.emplace(outcome.sample_index, outcome.status == ExecStatus::Pass).second) {
            throw ExecError(ExecError::Kind::InconsistentSampleCounts,
                            "duplicate outcome for " + outcome.task_id + "/" + outcome.model_id +
                                " sample " + std::to_string(outcome.sample_index));
        }
    }

    std::vector<ModelPassAtK> result;
    for (const auto& [model, tasks] : grouped) {
        ModelPassAtK summary;
        summary.model_id = model;
        std::size_t expected_n = 0;
        for (const auto& [task, samples] : tasks) {
            if (expected_n == 0) expected_n = samples.size();
            if (samples.size() != expected_n) {
                throw ExecError(ExecError::Kind::InconsistentSampleCounts,
                                "task " + task + " has " + std::to_string(samples.size()) +
                                    " samples for " + model + ", expected " +
                                    std::to_string(expected_n));
            }
            PassAtKStat stat;
            stat.task_id = task;
            stat.n = static_cast<int>(samples.size());
            for (const auto& [_, passed] : samples) stat.c += passed ? 1 : 0;
            for (int k : ks) stat.estimates[k] = pass_at_k(stat.n, stat.c, k);
            summary.per_task.push_back(std::move(stat));
        }
        for (int k : ks) {
            double sum = 0.0;
            for (const auto& stat : summary.per_task) sum += stat.estimates.at(k);
            summary.aggregate[k] = sum / static_cast<double>(summary.per_task.size());
        }
        result.push_back(std::move(summary));
    }
    return result;
}

std::vector<ExecOutcome> run_pool(const std::vector<CandidateJob>& jobs, const Limits& limits,
                                  std::size_t workers) {
    std::vector<ExecOutcome> outcomes(jobs.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (;;) {
            const std::size_t index = next.fetch_add(1);
            if (index >= jobs.size()) return;
            const CandidateJob& job = jobs[index];
            ExecOutcome outcome;
            if (!job.code) {
                outcome.task_id = job.problem->task_id;
                outcome.status = ExecStatus::ExtractFail;
            } else {
                outcome = run_candidate(*job.problem, *job.code, limits);
            }
            outcome.model_id = job.model_id;
            outcome.sample_index = job.sample_index;
            outcomes[index] = std::move(outcome);
        }
    };

    std::vector<std::thread> pool;
    const std::size_t width = std::max<std::size_t>(1, std::min(workers, jobs.size()));
    pool.reserve(width);
    for (std::size_t i = 0; i < width; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return outcomes;
}

std::vector<ExecAnswers> load_exec_answers(const std::filesystem::path& path) {
    const std::string contents = read_file(path);
    std::vector<ExecAnswers> answers;
    std::size_t line_no = 0;
    for (const std::string& line : split(contents, '\n')) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const json j = json::parse(line);
            ExecAnswers entry;
            entry.task_id = j.at("task_id").get<std::string>();
            entry.model_id = j.at("model_id").get<std::string>();
            for (const auto& sample : j.at("samples")) {
                entry.samples.push_back(sample.get<std::string>());
            }
            answers.push_back(std::move(entry));
        } catch (const json::exception& e) {
            throw ExecError(ExecError::Kind::InvalidArgs,
                            "malformed sample record at line " + std::to_string(line_no) + ": " +
                                e.what());
        }
    }
    return answers;
}

}  // namespace mpeval::exec_eval
