#include "mpeval/forge.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "mpeval/sha256.hpp"
#include "mpeval/util.hpp"

namespace mpeval::forge {

using nlohmann::json;

namespace {

std::size_t count_fence_markers(std::string_view text) {
    std::size_t count = 0;
    std::size_t pos = 0;
    while ((pos = text.find("```", pos)) != std::string_view::npos) {
        ++count;
        pos += 3;
    }
    return count;
}

}  // namespace

std::string_view to_string(RowFlag flag) {
    switch (flag) {
        case RowFlag::Truncated: return "truncated";
        case RowFlag::Empty: return "empty";
        case RowFlag::Refused: return "refused";
    }
    return {};
}

std::optional<RowFlag> row_flag_from_string(std::string_view name) {
    for (RowFlag flag : {RowFlag::Truncated, RowFlag::Empty, RowFlag::Refused}) {
        if (to_string(flag) == name) return flag;
    }
    return std::nullopt;
}

std::vector<std::string> default_refusal_phrases() {
    return {"i'm sorry, but i can't", "i cannot help with", "i can't assist with",
            "as an ai language model, i cannot"};
}

std::set<RowFlag> flag_output(std::string_view text, gateway::FinishReason reason,
                              const std::vector<std::string>& refusal_phrases) {
    std::set<RowFlag> flags;
    if (reason == gateway::FinishReason::Length) flags.insert(RowFlag::Truncated);
    if (count_fence_markers(text) % 2 != 0) flags.insert(RowFlag::Truncated);
    if (trim(text).empty()) flags.insert(RowFlag::Empty);
    const std::string lower = to_lower(text);
    for (const auto& phrase : refusal_phrases) {
        if (lower.find(to_lower(phrase)) != std::string::npos) {
            flags.insert(RowFlag::Refused);
            break;
        }
    }
    return flags;
}

AugmentedRow transform_row(const corpus::InstructionRow& row, promptkit::TransformKind kind,
                           gateway::LlmGateway& gw, const TransformOptions& options) {
    const promptkit::PromptText prompt = promptkit::render_transform_prompt(kind, row);

    gateway::CompletionRequest request;
    request.model_name = options.model;
    request.messages = {{promptkit::Role::User, prompt.text}};
    request.temperature = options.temperature;
    request.max_tokens = options.max_tokens;
    request.tag = std::string(promptkit::to_string(kind));

    const gateway::CompletionResult result = gw.complete(request);

    AugmentedRow augmented;
    augmented.source = row;
    augmented.kind = kind;
    augmented.augmented_output = result.text;
    augmented.finish_reason = result.finish_reason;
    augmented.flags = flag_output(result.text, result.finish_reason, options.refusal_phrases);
    return augmented;
}

std::vector<AugmentedRow> transform_rows(const std::vector<corpus::InstructionRow>& rows,
                                         promptkit::TransformKind kind, gateway::LlmGateway& gw,
                                         const TransformOptions& options, std::size_t workers) {
    std::vector<AugmentedRow> augmented(rows.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;

    auto worker = [&] {
        for (;;) {
            const std::size_t index = next.fetch_add(1);
            if (index >= rows.size()) return;
            {
                std::lock_guard lock(error_mutex);
                if (first_error) return;
            }
            try {
                augmented[index] = transform_row(rows[index], kind, gw, options);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    const std::size_t width = std::max<std::size_t>(1, std::min(workers, rows.size()));
    pool.reserve(width);
    for (std::size_t i = 0; i < width; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return augmented;
}

FilterResult filter_rows(std::vector<AugmentedRow> rows, const FilterPolicy& policy) {
    FilterResult result;
    for (auto& row : rows) {
        std::set<RowFlag> hits;
        std::set_intersection(row.flags.begin(), row.flags.end(), policy.drop_flags.begin(),
                              policy.drop_flags.end(), std::inserter(hits, hits.begin()));
        if (hits.empty()) {
            result.kept.push_back(std::move(row));
        } else {
            result.dropped.emplace_back(std::move(row), std::move(hits));
        }
    }
    return result;
}

std::vector<corpus::InstructionRow> compose_mixture(
    const std::map<std::string, std::vector<corpus::InstructionRow>>& datasets,
    const MixtureSpec& spec) {
    std::vector<corpus::InstructionRow> mixed;
    for (std::size_t part_index = 0; part_index < spec.parts.size(); ++part_index) {
        const MixturePart& part = spec.parts[part_index];
        const auto it = datasets.find(part.dataset_id);
        const std::size_t available = it == datasets.end() ? 0 : it->second.size();
        if (available < part.target_count) {
            throw ForgeError(ForgeError::Kind::PartTooSmall,
                             "part '" + part.dataset_id + "' has " + std::to_string(available) +
                                 " rows, needs " + std::to_string(part.target_count));
        }
        SeededRng rng(SeededRng::mix(spec.seed, part_index + 1));
        for (std::size_t idx : rng.sample_indices(available, part.target_count)) {
            mixed.push_back(it->second[idx]);
        }
    }
    SeededRng shuffler(SeededRng::mix(spec.seed, 0));
    shuffler.shuffle(mixed);
    return mixed;
}

std::string escape_line(std::string_view serialized) {
    std::string out;
    out.reserve(serialized.size());
    for (char c : serialized) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            default: out += c;
        }
    }
    return out;
}

std::string unescape_line(std::string_view line) {
    std::string out;
    out.reserve(line.size());
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] != '\\' || i + 1 == line.size()) {
            out += line[i];
            continue;
        }
        switch (line[++i]) {
            case 'n': out += '\n'; break;
            case 'r': out += '\r'; break;
            case '\\': out += '\\'; break;
            default: out += line[i];
        }
    }
    return out;
}

FinetuneManifest emit_finetune_bundle(const std::vector<corpus::InstructionRow>& rows,
                                      const std::optional<std::string>& system_preamble,
                                      const std::filesystem::path& out_dir) {
    std::string bundle;
    for (const auto& row : rows) {
        promptkit::DialogueRecord dialogue;
        dialogue.messages = {{promptkit::Role::User, row.instruction},
                             {promptkit::Role::Assistant, row.output}};
        bundle += escape_line(promptkit::format_dialogue(dialogue, system_preamble));
        bundle += '\n';
    }
    write_file(out_dir / "dialogues.txt", bundle);

    FinetuneManifest manifest;
    manifest.dataset_digest = sha256_hex(bundle);
    const json j{{"batch_size", manifest.batch_size},
                 {"learning_rate", manifest.learning_rate},
                 {"epochs", manifest.epochs},
                 {"max_length", manifest.max_length},
                 {"warmup_steps", manifest.warmup_steps},
                 {"lr_scheduler", manifest.lr_scheduler},
                 {"dataset_digest", manifest.dataset_digest}};
    write_file(out_dir / "manifest.json", j.dump(2) + "\n");
    return manifest;
}

void save_augmented_rows(const std::filesystem::path& path,
                         const std::vector<AugmentedRow>& rows) {
    std::string out;
    for (const auto& row : rows) {
        json flags = json::array();
        for (RowFlag flag : row.flags) flags.push_back(to_string(flag));
        json meta(row.source.meta);
        json j{{"instruction", row.source.instruction},
               {"output", row.source.output},
               {"meta", std::move(meta)},
               {"kind", promptkit::to_string(row.kind)},
               {"augmented_output", row.augmented_output},
               {"finish_reason", gateway::to_string(row.finish_reason)},
               {"flags", std::move(flags)}};
        out += j.dump();
        out += '\n';
    }
    write_file(path, out);
}

std::vector<AugmentedRow> load_augmented_rows(const std::filesystem::path& path) {
    const std::string contents = read_file(path);
    std::vector<AugmentedRow> rows;
    std::size_t line_no = 0;
    for (const std::string& line : split(contents, '\n')) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const json j = json::parse(line);
            AugmentedRow row;
            row.source.instruction = j.at("instruction").get<std::string>();
            row.source.output = j.at("output").get<std::string>();
            if (j.contains("meta")) {
                for (const auto& [key, value] : j["meta"].items()) {
                    row.source.meta[key] = value.get<std::string>();
                }
            }
            const auto kind =
                promptkit::transform_kind_from_string(j.at("kind").get<std::string>());
            if (!kind) throw ForgeError(ForgeError::Kind::Io, "unknown transform kind");
            row.kind = *kind;
            row.augmented_output = j.at("augmented_output").get<std::string>();
            row.finish_reason =
                gateway::finish_reason_from_string(j.at("finish_reason").get<std::string>());
            for (const auto& flag : j.at("flags")) {
                if (auto parsed = row_flag_from_string(flag.get<std::string>())) {
                    row.flags.insert(*parsed);
                }
            }
            rows.push_back(std::move(row));
        } catch (const json::exception& e) {
            throw ForgeError(ForgeError::Kind::Io, "malformed augmented row at line " +
                                                       std::to_string(line_no) + ": " + e.what());
        }
    }
    return rows;
}

}  // namespace mpeval::forge
