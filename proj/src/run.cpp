#include "mpeval/run.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "mpeval/report.hpp"
#include "mpeval/sha256.hpp"
#include "mpeval/util.hpp"

namespace mpeval::run {

using nlohmann::json;

namespace {

std::size_t parameter_index(judge::JudgeParameter param) {
    for (std::size_t i = 0; i < promptkit::kAllJudgeParameters.size(); ++i) {
        if (promptkit::kAllJudgeParameters[i] == param) return i;
    }
    return 0;
}

std::string judge_config_snapshot(const JudgeRunConfig& config) {
    json params = json::array();
    for (auto param : config.params) params.push_back(promptkit::to_string(param));
    // The out dir and credentials stay out of the snapshot so identical runs
    // into different directories hash identically.
    const json j{{"answers", config.answers_path.string()},
                 {"cassette", config.gw.cassette_path.string()},
                 {"corpus", config.corpus_path.string()},
                 {"eval",
                  {{"judge_model", config.eval.judge_model},
                   {"max_tokens", config.eval.max_tokens},
                   {"samples", config.eval.samples},
                   {"seed", config.eval.seed},
                   {"shuffle", config.eval.shuffle},
                   {"temperature", config.eval.temperature}}},
                 {"max_in_flight", config.max_in_flight},
                 {"mode", gateway::to_string(config.gw.mode)},
                 {"params", std::move(params)},
                 {"subset", config.subset.describe()}};
    return j.dump(2) + "\n";
}

std::string exec_config_snapshot(const ExecRunConfig& config) {
    const json j{{"answers", config.answers_path.string()},
                 {"corpus", config.corpus_path.string()},
                 {"grace_sec", config.limits.grace_sec},
                 {"interpreter", config.limits.interpreter},
                 {"jobs", config.jobs},
                 {"ks", config.ks},
                 {"memory_bytes", config.limits.memory_bytes},
                 {"n", config.n},
                 {"subset", config.subset.describe()},
                 {"timeout_sec", config.limits.timeout_sec}};
    return j.dump(2) + "\n";
}

void write_scorecard_files(const std::filesystem::path& out_dir, const judge::Scorecard& card) {
    json cells;
    for (const auto& [model, by_param] : card.cells) {
        for (const auto& [param, cell] : by_param) {
            cells[model][std::string(promptkit::to_string(param))] = {
                {"mean", cell.mean}, {"stdev", cell.stdev}, {"count", cell.count}};
        }
    }
    const json j{{"run_config_digest", card.run_config_digest}, {"cells", std::move(cells)}};
    write_file(out_dir / "scorecard.json", j.dump(2) + "\n");

    const report::Report rendered = report::render_scorecard(card);
    write_file(out_dir / "reports" / "scorecard.md", rendered.markdown());
    write_file(out_dir / "reports" / "scorecard.csv", rendered.csv());
    write_file(out_dir / "reports" / "scorecard.json", rendered.structured());
}

}  // namespace

int run_judge(const JudgeRunConfig& config, std::shared_ptr<gateway::ChatProvider> provider,
              std::ostream& log) {
    try {
        const corpus::ProblemSet problems =
            corpus::load_problems(config.corpus_path, config.subset);
        const std::vector<judge::AnswerSet> answer_sets =
            judge::load_answer_sets(config.answers_path);
        std::map<std::string, const judge::AnswerSet*> answers_by_task;
        for (const auto& set : answer_sets) answers_by_task[set.task_id] = &set;

        for (const auto& problem : problems.problems) {
            if (!answers_by_task.contains(problem.task_id)) {
                log << "error: no answers for " << problem.task_id << "\n";
                return kExitAborted;
            }
        }

        const std::string snapshot = judge_config_snapshot(config);
        const std::string digest = sha256_hex(snapshot);

        gateway::LlmGateway gw(config.gw, std::move(provider));

        struct Task {
            const corpus::ProblemRecord* problem;
            judge::JudgeParameter param;
        };
        std::vector<Task> tasks;
        for (const auto& problem : problems.problems) {
            for (auto param : config.params) tasks.push_back({&problem, param});
        }

        std::vector<judge::ProblemVerdict> verdicts;
        std::vector<judge::SampleFailure> failures;
        std::mutex collect_mutex;
        std::atomic<std::size_t> next{0};
        std::atomic<bool> aborted{false};
        std::string abort_message;

        auto worker = [&] {
            for (;;) {
                const std::size_t index = next.fetch_add(1);
                if (index >= tasks.size() || aborted.load()) return;
                const Task& task = tasks[index];
                const judge::AnswerSet& set = *answers_by_task.at(task.problem->task_id);
                try {
                    std::vector<judge::SampleFailure> local_failures;
                    std::vector<judge::ProblemVerdict> local = judge::evaluate_problem(
                        *task.problem, set, task.param, gw, config.eval, &local_failures);
                    std::lock_guard lock(collect_mutex);
                    for (auto& v : local) verdicts.push_back(std::move(v));
                    for (auto& f : local_failures) failures.push_back(std::move(f));
                } catch (const judge::JudgeError& e) {
                    if (e.kind == judge::JudgeError::Kind::AllSamplesFailed) {
                        std::lock_guard lock(collect_mutex);
                        failures.push_back({task.problem->task_id, task.param, -1, e.what(), ""});
                    } else {
                        std::lock_guard lock(collect_mutex);
                        abort_message = e.what();
                        aborted.store(true);
                    }
                } catch (const std::exception& e) {
                    std::lock_guard lock(collect_mutex);
                    abort_message = e.what();
                    aborted.store(true);
                }
            }
        };

        const std::size_t width =
            std::max<std::size_t>(1, std::min(config.max_in_flight, tasks.size()));
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < width; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();

        if (aborted.load()) {
            log << "error: run aborted: " << abort_message << "\n";
            return kExitAborted;
        }
        if (verdicts.empty()) {
            log << "error: run produced no verdicts\n";
            return kExitAborted;
        }

        auto order_key = [](const auto& entry) {
            return std::make_tuple(entry.task_id, parameter_index(entry.parameter),
                                   entry.sample_index);
        };
        std::sort(verdicts.begin(), verdicts.end(),
                  [&](const auto& a, const auto& b) { return order_key(a) < order_key(b); });
        std::sort(failures.begin(), failures.end(),
                  [&](const auto& a, const auto& b) { return order_key(a) < order_key(b); });

        write_file(config.out_dir / "config.json", snapshot);

        std::string verdict_log;
        for (const auto& verdict : verdicts) {
            const std::string raw_name = sha256_hex(verdict.raw_text) + ".txt";
            write_file(config.out_dir / "raw" / raw_name, verdict.raw_text);
            json j{{"task_id", verdict.task_id},
                   {"parameter", promptkit::to_string(verdict.parameter)},
                   {"sample", verdict.sample_index},
                   {"ratings", verdict.ratings},
                   {"explanations", verdict.explanations},
                   {"permutation",
                    {{"mapping", verdict.permutation.mapping},
                     {"seed", verdict.permutation.seed}}},
                   {"raw", "raw/" + raw_name}};
            verdict_log += j.dump();
            verdict_log += '\n';
        }
        write_file(config.out_dir / "verdicts.jsonl", verdict_log);

        if (!failures.empty()) {
            std::string diag_log;
            for (const auto& failure : failures) {
                json j{{"task_id", failure.task_id},
                       {"parameter", promptkit::to_string(failure.parameter)},
                       {"sample", failure.sample_index},
                       {"reason", failure.reason}};
                if (!failure.raw_text.empty()) {
                    const std::string raw_name = sha256_hex(failure.raw_text) + ".txt";
                    write_file(config.out_dir / "raw" / raw_name, failure.raw_text);
                    j["raw"] = "raw/" + raw_name;
                }
                diag_log += j.dump();
                diag_log += '\n';
            }
            write_file(config.out_dir / "diagnostics.jsonl", diag_log);
        }

        const judge::Scorecard card = judge::aggregate(verdicts, digest);
        write_scorecard_files(config.out_dir, card);

        log << "judged " << problems.size() << " problems x " << config.params.size()
            << " parameters (" << verdicts.size() << " verdicts, " << failures.size()
            << " failed samples)\n";
        return failures.empty() ? kExitOk : kExitPartial;
    } catch (const Error& e) {
        log << "error: " << e.what() << "\n";
        return kExitAborted;
    }
}

int run_exec(const ExecRunConfig& config, std::ostream& log) {
    try {
        const corpus::ProblemSet problems =
            corpus::load_problems(config.corpus_path, config.subset);
        const std::vector<exec_eval::ExecAnswers> answers =
            exec_eval::load_exec_answers(config.answers_path);

        std::map<std::pair<std::string, std::string>, const exec_eval::ExecAnswers*> by_key;
        std::vector<std::string> models;
        for (const auto& entry : answers) {
            by_key[{entry.task_id, entry.model_id}] = &entry;
            if (std::find(models.begin(), models.end(), entry.model_id) == models.end()) {
                models.push_back(entry.model_id);
            }
        }
        std::sort(models.begin(), models.end());

        std::vector<exec_eval::CandidateJob> jobs;
        for (const auto& problem : problems.problems) {
            for (const auto& model : models) {
                const auto it = by_key.find({problem.task_id, model});
                if (it == by_key.end()) {
                    log << "error: no samples for " << problem.task_id << " / " << model << "\n";
                    return kExitAborted;
                }
                if (it->second->samples.size() != static_cast<std::size_t>(config.n)) {
                    log << "error: " << problem.task_id << " / " << model << " has "
                        << it->second->samples.size() << " samples, expected " << config.n
                        << "\n";
                    return kExitAborted;
                }
                for (int s = 0; s < config.n; ++s) {
                    jobs.push_back({&problem, model, s,
                                    exec_eval::extract_code(it->second->samples[s],
                                                            problem.entry_point)});
                }
            }
        }

        const std::vector<exec_eval::ExecOutcome> outcomes =
            exec_eval::run_pool(jobs, config.limits, config.jobs);

        write_file(config.out_dir / "config.json", exec_config_snapshot(config));

        std::string outcome_log;
        for (const auto& outcome : outcomes) {
            json j{{"task_id", outcome.task_id},
                   {"model_id", outcome.model_id},
                   {"sample", outcome.sample_index},
                   {"status", exec_eval::to_string(outcome.status)},
                   {"duration", outcome.duration_sec}};
            if (!outcome.stderr_excerpt.empty()) j["stderr"] = outcome.stderr_excerpt;
            outcome_log += j.dump();
            outcome_log += '\n';
        }
        write_file(config.out_dir / "outcomes.jsonl", outcome_log);

        const std::vector<exec_eval::ModelPassAtK> stats =
            exec_eval::summarize(outcomes, config.ks);

        json summary;
        for (const auto& model : stats) {
            json aggregate;
            for (const auto& [k, value] : model.aggregate) {
                aggregate["pass@" + std::to_string(k)] = value;
            }
            summary[model.model_id] = std::move(aggregate);
        }
        write_file(config.out_dir / "summary.json", summary.dump(2) + "\n");

        const report::Report rendered = report::render_pass_at_k(stats, config.ks);
        write_file(config.out_dir / "reports" / "passatk.md", rendered.markdown());
        write_file(config.out_dir / "reports" / "passatk.csv", rendered.csv());
        write_file(config.out_dir / "reports" / "passatk.json", rendered.structured());
        write_file(config.out_dir / "reports" / "passatk_per_task.csv",
                   report::pass_at_k_per_task_csv(stats));

        log << rendered.markdown();
        return kExitOk;
    } catch (const Error& e) {
        log << "error: " << e.what() << "\n";
        return kExitAborted;
    }
}

std::vector<judge::ProblemVerdict> load_verdict_log(const std::filesystem::path& path) {
    const std::string contents = read_file(path);
    std::vector<judge::ProblemVerdict> verdicts;
    for (const std::string& line : split(contents, '\n')) {
        if (trim(line).empty()) continue;
        const json j = json::parse(line);
        judge::ProblemVerdict verdict;
        verdict.task_id = j.at("task_id").get<std::string>();
        const auto param =
            promptkit::judge_parameter_from_string(j.at("parameter").get<std::string>());
        if (!param) throw Error("unknown parameter in verdict log: " + line);
        verdict.parameter = *param;
        verdict.sample_index = j.at("sample").get<int>();
        for (const auto& [model, rating] : j.at("ratings").items()) {
            verdict.ratings[model] = rating.get<int>();
        }
        if (j.contains("explanations")) {
            for (const auto& [model, text] : j["explanations"].items()) {
                verdict.explanations[model] = text.get<std::string>();
            }
        }
        if (j.contains("permutation")) {
            verdict.permutation.mapping =
                j["permutation"].at("mapping").get<std::vector<std::size_t>>();
            verdict.permutation.seed = j["permutation"].at("seed").get<std::uint64_t>();
        }
        verdicts.push_back(std::move(verdict));
    }
    return verdicts;
}

int regenerate_reports(const std::filesystem::path& run_dir, const ReportOptions& options,
                       std::ostream& out, std::ostream& log) {
    try {
        bool found = false;
        auto print = [&](const report::Report& rendered) {
            if (options.format == "csv") {
                out << rendered.csv();
            } else if (options.format == "json") {
                out << rendered.structured();
            } else {
                out << rendered.markdown();
            }
        };

        if (std::filesystem::exists(run_dir / "verdicts.jsonl")) {
            const auto verdicts = load_verdict_log(run_dir / "verdicts.jsonl");
            if (options.task_id) {
                print(report::render_problem_sheet(verdicts, *options.task_id));
                return kExitOk;
            }
            std::string digest;
            if (std::filesystem::exists(run_dir / "scorecard.json")) {
                const json j = json::parse(read_file(run_dir / "scorecard.json"));
                digest = j.value("run_config_digest", "");
            }
            const judge::Scorecard card = judge::aggregate(verdicts, digest);
            write_scorecard_files(run_dir, card);
            print(report::render_scorecard(card, options.subject));
            found = true;
        }

        if (std::filesystem::exists(run_dir / "outcomes.jsonl")) {
            const json config = json::parse(read_file(run_dir / "config.json"));
            const std::vector<int> ks = config.at("ks").get<std::vector<int>>();
            std::vector<exec_eval::ExecOutcome> outcomes;
            for (const std::string& line : split(read_file(run_dir / "outcomes.jsonl"), '\n')) {
                if (trim(line).empty()) continue;
                const json j = json::parse(line);
                exec_eval::ExecOutcome outcome;
                outcome.task_id = j.at("task_id").get<std::string>();
                outcome.model_id = j.at("model_id").get<std::string>();
                outcome.sample_index = j.at("sample").get<int>();
                outcome.status =
                    exec_eval::exec_status_from_string(j.at("status").get<std::string>())
                        .value_or(exec_eval::ExecStatus::HarnessError);
                outcome.duration_sec = j.at("duration").get<double>();
                outcomes.push_back(std::move(outcome));
            }
            print(report::render_pass_at_k(exec_eval::summarize(outcomes, ks), ks));
            found = true;
        }

        if (!found) {
            log << "error: no verdict or outcome log under " << run_dir << "\n";
            return kExitAborted;
        }
        return kExitOk;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return kExitAborted;
    }
}

}  // namespace mpeval::run
