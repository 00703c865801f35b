#include <algorithm>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mpeval/forge.hpp"
#include "mpeval/run.hpp"
#include "mpeval/util.hpp"

namespace {

using namespace mpeval;

std::vector<judge::JudgeParameter> parse_params(const std::string& arg) {
    if (arg == "all") {
        return {promptkit::kAllJudgeParameters.begin(), promptkit::kAllJudgeParameters.end()};
    }
    std::vector<judge::JudgeParameter> params;
    for (const std::string& name : split(arg, ',')) {
        const auto param = promptkit::judge_parameter_from_string(trim(name));
        if (!param) throw CLI::ValidationError("--params", "unknown parameter '" + name + "'");
        if (std::find(params.begin(), params.end(), *param) == params.end()) {
            params.push_back(*param);
        }
    }
    if (params.empty()) throw CLI::ValidationError("--params", "no parameters given");
    return params;
}

std::vector<int> parse_ks(const std::string& arg) {
    std::vector<int> ks;
    for (const std::string& item : split(arg, ',')) {
        ks.push_back(std::stoi(trim(item)));
    }
    return ks;
}

gateway::Mode parse_mode(const std::string& arg) {
    const auto mode = gateway::mode_from_string(arg);
    if (!mode) throw CLI::ValidationError("--mode", "unknown mode '" + arg + "'");
    return *mode;
}

int cmd_judge(const std::string& corpus_path, const std::string& answers_path,
              const std::string& out_dir, const std::string& subset, const std::string& params,
              const std::string& mode, const std::string& cassette, std::size_t samples,
              std::uint64_t seed, bool no_shuffle, const std::string& judge_model,
              double temperature, int max_tokens, std::size_t max_in_flight, double rpm) {
    run::JudgeRunConfig config;
    config.corpus_path = corpus_path;
    config.answers_path = answers_path;
    config.out_dir = out_dir;
    config.subset = corpus::SubsetSpec::parse(subset);
    config.params = parse_params(params);
    config.eval.samples = samples;
    config.eval.seed = seed;
    config.eval.shuffle = !no_shuffle;
    config.eval.judge_model = judge_model;
    config.eval.temperature = temperature;
    config.eval.max_tokens = max_tokens;
    config.max_in_flight = max_in_flight;

    config.gw.mode = parse_mode(mode);
    config.gw.cassette_path = cassette;
    if (cassette.empty() && config.gw.mode == gateway::Mode::Record) {
        config.gw.cassette_path = config.out_dir / "cassette.jsonl";
    }
    config.gw.requests_per_minute = rpm;
    config.gw.max_in_flight = max_in_flight;
    config.gw.load_env();

    std::shared_ptr<gateway::ChatProvider> provider;
    if (config.gw.mode != gateway::Mode::Replay) {
        provider = gateway::make_http_provider(config.gw);
    }
    return run::run_judge(config, std::move(provider), std::cerr);
}

int cmd_exec(const std::string& corpus_path, const std::string& answers_path,
             const std::string& out_dir, const std::string& subset, int n, const std::string& ks,
             double timeout, double grace, std::size_t memory_mb, std::size_t jobs,
             const std::vector<std::string>& interpreter) {
    run::ExecRunConfig config;
    config.corpus_path = corpus_path;
    config.answers_path = answers_path;
    config.out_dir = out_dir;
    config.subset = corpus::SubsetSpec::parse(subset);
    config.n = n;
    config.ks = parse_ks(ks);
    config.limits.timeout_sec = timeout;
    config.limits.grace_sec = grace;
    config.limits.memory_bytes = memory_mb << 20;
    if (!interpreter.empty()) config.limits.interpreter = interpreter;
    config.jobs = jobs;
    return run::run_exec(config, std::cerr);
}

int cmd_prompts_dump(const std::string& out_dir) {
    for (const auto& info : promptkit::all_templates()) {
        write_file(std::filesystem::path(out_dir) / (info.id + ".txt"), info.text);
    }
    std::cout << "wrote " << promptkit::all_templates().size() << " templates to " << out_dir
              << "\n";
    return run::kExitOk;
}

int cmd_forge_transform(const std::string& input, const std::string& output,
                        const std::string& kind_name, const std::string& mode,
                        const std::string& cassette, const std::string& model, double temperature,
                        int max_tokens, double rpm, std::size_t jobs) {
    const auto kind = promptkit::transform_kind_from_string(kind_name);
    if (!kind) throw CLI::ValidationError("--kind", "unknown transform kind '" + kind_name + "'");

    gateway::GatewayConfig gw_config;
    gw_config.mode = parse_mode(mode);
    gw_config.cassette_path = cassette;
    gw_config.requests_per_minute = rpm;
    gw_config.max_in_flight = jobs;
    gw_config.load_env();
    std::shared_ptr<gateway::ChatProvider> provider;
    if (gw_config.mode != gateway::Mode::Replay) {
        provider = gateway::make_http_provider(gw_config);
    }
    gateway::LlmGateway gw(gw_config, std::move(provider));

    forge::TransformOptions options;
    options.model = model;
    options.temperature = temperature;
    options.max_tokens = max_tokens;

    const auto augmented =
        forge::transform_rows(corpus::load_instruction_rows(input), *kind, gw, options, jobs);
    forge::save_augmented_rows(output, augmented);
    std::cerr << "transformed " << augmented.size() << " rows\n";
    return run::kExitOk;
}

int cmd_forge_filter(const std::string& input, const std::string& output,
                     const std::string& dropped_path, const std::string& drop) {
    forge::FilterPolicy policy;
    for (const std::string& name : split(drop, ',')) {
        if (trim(name).empty()) continue;
        const auto flag = forge::row_flag_from_string(trim(name));
        if (!flag) throw CLI::ValidationError("--drop", "unknown flag '" + name + "'");
        policy.drop_flags.insert(*flag);
    }

    forge::FilterResult result = forge::filter_rows(forge::load_augmented_rows(input), policy);
    forge::save_augmented_rows(output, result.kept);
    if (!dropped_path.empty()) {
        std::vector<forge::AugmentedRow> dropped;
        for (auto& [row, _] : result.dropped) dropped.push_back(std::move(row));
        forge::save_augmented_rows(dropped_path, dropped);
    }
    std::cerr << "kept " << result.kept.size() << ", dropped " << result.dropped.size() << "\n";
    return run::kExitOk;
}

int cmd_forge_mix(const std::string& spec_path, const std::string& output) {
    const nlohmann::json spec_json = nlohmann::json::parse(read_file(spec_path));
    forge::MixtureSpec spec;
    spec.seed = spec_json.value("seed", std::uint64_t{0});
    std::map<std::string, std::vector<corpus::InstructionRow>> datasets;
    for (const auto& part : spec_json.at("parts")) {
        const std::string id = part.at("dataset_id").get<std::string>();
        spec.parts.push_back({id, part.at("target_count").get<std::size_t>()});
        datasets[id] = corpus::load_instruction_rows(part.at("path").get<std::string>());
    }
    const auto mixed = forge::compose_mixture(datasets, spec);
    corpus::save_instruction_rows(output, mixed);
    std::cerr << "mixed " << mixed.size() << " rows\n";
    return run::kExitOk;
}

int cmd_forge_bundle(const std::string& input, const std::string& out_dir,
                     const std::string& preamble, bool no_preamble) {
    const auto rows = corpus::load_instruction_rows(input);
    std::optional<std::string> system_preamble;
    if (!no_preamble) system_preamble = preamble;
    const forge::FinetuneManifest manifest =
        forge::emit_finetune_bundle(rows, system_preamble, out_dir);
    std::cerr << "bundled " << rows.size() << " rows, dataset digest " << manifest.dataset_digest
              << "\n";
    return run::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Comparative LLM judging, sandboxed pass@k evaluation and "
                 "instruction-dataset tooling"};
    app.require_subcommand(1);

    // judge
    std::string corpus_path, answers_path, out_dir, subset = "all", params = "all";
    std::string mode = "replay", cassette, judge_model = "gpt-4";
    std::size_t samples = 1, max_in_flight = 4;
    std::uint64_t seed = 0;
    bool no_shuffle = false;
    double temperature = 0.0, rpm = 60.0;
    int max_tokens = 2048;

    auto* judge_cmd = app.add_subcommand("judge", "Comparative multi-parameter judging");
    judge_cmd->add_option("--corpus", corpus_path, "Problem file (JSONL)")->required();
    judge_cmd->add_option("--answers", answers_path, "Answer sets (JSONL)")->required();
    judge_cmd->add_option("--out", out_dir, "Run directory")->required();
    judge_cmd->add_option("--subset", subset, "all|first:N|sample:N:SEED");
    judge_cmd->add_option("--params", params, "all|overall|comma list");
    judge_cmd->add_option("--samples", samples, "Samples per problem/parameter");
    judge_cmd->add_option("--seed", seed, "Shuffle seed");
    judge_cmd->add_flag("--no-shuffle", no_shuffle, "Present answers in file order");
    judge_cmd->add_option("--mode", mode, "live|record|replay");
    judge_cmd->add_option("--cassette", cassette, "Cassette file for record/replay");
    judge_cmd->add_option("--judge-model", judge_model, "Judge model name");
    judge_cmd->add_option("--temperature", temperature, "Judge temperature");
    judge_cmd->add_option("--max-tokens", max_tokens, "Completion token cap");
    judge_cmd->add_option("--max-in-flight", max_in_flight, "Concurrent request bound");
    judge_cmd->add_option("--rpm", rpm, "Requests per minute (live calls)");

    // exec
    std::string exec_corpus, exec_answers, exec_out, exec_subset = "all", ks = "1";
    int n = 1;
    double timeout = 10.0, grace = 1.0;
    std::size_t memory_mb = 512, jobs = 2;
    std::vector<std::string> interpreter;

    auto* exec_cmd = app.add_subcommand("exec", "Sandboxed functional-correctness evaluation");
    exec_cmd->add_option("--corpus", exec_corpus, "Problem file (JSONL)")->required();
    exec_cmd->add_option("--answers", exec_answers, "Sampled replies (JSONL)")->required();
    exec_cmd->add_option("--out", exec_out, "Run directory")->required();
    exec_cmd->add_option("--subset", exec_subset, "all|first:N|sample:N:SEED");
    exec_cmd->add_option("--n", n, "Samples per task and model")->required();
    exec_cmd->add_option("--k", ks, "Comma list of k values");
    exec_cmd->add_option("--timeout", timeout, "Wall-clock limit per candidate (s)");
    exec_cmd->add_option("--grace", grace, "Grace period beyond the timeout (s)");
    exec_cmd->add_option("--memory-mb", memory_mb, "Address-space limit (MiB)");
    exec_cmd->add_option("--jobs", jobs, "Worker pool width");
    exec_cmd->add_option("--interpreter", interpreter, "Interpreter command");

    // report
    std::string report_from, report_format = "md", report_subject, report_task;
    auto* report_cmd = app.add_subcommand("report", "Rebuild reports from a run directory");
    report_cmd->add_option("--from", report_from, "Run directory")->required();
    report_cmd->add_option("--format", report_format, "md|csv|json");
    report_cmd->add_option("--subject", report_subject, "Annotate columns this model leads");
    report_cmd->add_option("--task", report_task, "Render one problem's verdict sheet");

    // prompts
    auto* prompts_cmd = app.add_subcommand("prompts", "Prompt template utilities");
    std::string prompts_out = "prompts";
    auto* dump_cmd = prompts_cmd->add_subcommand("dump", "Write each template to a UTF-8 file");
    dump_cmd->add_option("--out", prompts_out, "Output directory");

    // forge
    auto* forge_cmd = app.add_subcommand("forge", "Instruction-dataset pipeline");
    std::string forge_input, forge_output, forge_kind, forge_mode = "replay", forge_cassette;
    std::string forge_model = "gpt-3.5-turbo";
    double forge_temperature = 0.7, forge_rpm = 60.0;
    int forge_max_tokens = 2048;
    std::size_t forge_jobs = 4;

    auto* transform_cmd = forge_cmd->add_subcommand("transform", "Rewrite rows through an LLM");
    transform_cmd->add_option("--input", forge_input, "Instruction rows (JSONL)")->required();
    transform_cmd->add_option("--out", forge_output, "Augmented rows (JSONL)")->required();
    transform_cmd->add_option("--kind", forge_kind, "tot_code|cot_code|teacher_code|cot_logic")
        ->required();
    transform_cmd->add_option("--mode", forge_mode, "live|record|replay");
    transform_cmd->add_option("--cassette", forge_cassette, "Cassette file");
    transform_cmd->add_option("--model", forge_model, "Transform model name");
    transform_cmd->add_option("--temperature", forge_temperature, "Sampling temperature");
    transform_cmd->add_option("--max-tokens", forge_max_tokens, "Completion token cap");
    transform_cmd->add_option("--rpm", forge_rpm, "Requests per minute");
    transform_cmd->add_option("--jobs", forge_jobs, "Concurrent transform requests");

    std::string filter_input, filter_output, filter_dropped, filter_drop = "truncated,empty";
    auto* filter_cmd = forge_cmd->add_subcommand("filter", "Drop flagged rows");
    filter_cmd->add_option("--input", filter_input, "Augmented rows (JSONL)")->required();
    filter_cmd->add_option("--out", filter_output, "Kept rows (JSONL)")->required();
    filter_cmd->add_option("--dropped", filter_dropped, "Dropped rows (JSONL)");
    filter_cmd->add_option("--drop", filter_drop, "Comma list of flags to drop");

    std::string mix_spec, mix_output;
    auto* mix_cmd = forge_cmd->add_subcommand("mix", "Compose a mixture from parts");
    mix_cmd->add_option("--spec", mix_spec, "Mixture spec (JSON)")->required();
    mix_cmd->add_option("--out", mix_output, "Mixed rows (JSONL)")->required();

    std::string bundle_input, bundle_out_dir;
    std::string bundle_preamble{promptkit::kDefaultSystemPreamble};
    bool bundle_no_preamble = false;
    auto* bundle_cmd = forge_cmd->add_subcommand("bundle", "Emit dialogue bundle and manifest");
    bundle_cmd->add_option("--input", bundle_input, "Instruction rows (JSONL)")->required();
    bundle_cmd->add_option("--out-dir", bundle_out_dir, "Bundle directory")->required();
    bundle_cmd->add_option("--preamble", bundle_preamble, "System preamble text");
    bundle_cmd->add_flag("--no-preamble", bundle_no_preamble, "Omit the system block");

    CLI11_PARSE(app, argc, argv);

    try {
        if (judge_cmd->parsed()) {
            return cmd_judge(corpus_path, answers_path, out_dir, subset, params, mode, cassette,
                             samples, seed, no_shuffle, judge_model, temperature, max_tokens,
                             max_in_flight, rpm);
        }
        if (exec_cmd->parsed()) {
            return cmd_exec(exec_corpus, exec_answers, exec_out, exec_subset, n, ks, timeout,
                            grace, memory_mb, jobs, interpreter);
        }
        if (report_cmd->parsed()) {
            run::ReportOptions options;
            options.format = report_format;
            if (!report_subject.empty()) options.subject = report_subject;
            if (!report_task.empty()) options.task_id = report_task;
            return run::regenerate_reports(report_from, options, std::cout, std::cerr);
        }
        if (dump_cmd->parsed()) {
            return cmd_prompts_dump(prompts_out);
        }
        if (transform_cmd->parsed()) {
            return cmd_forge_transform(forge_input, forge_output, forge_kind, forge_mode,
                                       forge_cassette, forge_model, forge_temperature,
                                       forge_max_tokens, forge_rpm, forge_jobs);
        }
        if (filter_cmd->parsed()) {
            return cmd_forge_filter(filter_input, filter_output, filter_dropped, filter_drop);
        }
        if (mix_cmd->parsed()) {
            return cmd_forge_mix(mix_spec, mix_output);
        }
        if (bundle_cmd->parsed()) {
            return cmd_forge_bundle(bundle_input, bundle_out_dir, bundle_preamble,
                                    bundle_no_preamble);
        }
        std::cerr << app.help();
        return run::kExitAborted;
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return run::kExitAborted;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return run::kExitAborted;
    }
}
