#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "mpeval/forge.hpp"
#include "testutil.hpp"

using namespace mpeval;
using forge::AugmentedRow;
using forge::ForgeError;
using forge::MixtureSpec;
using forge::RowFlag;
using gateway::FinishReason;
using promptkit::TransformKind;
using testutil::ScriptedProvider;

namespace {

corpus::InstructionRow loop_row() {
    corpus::InstructionRow row;
    row.instruction =
        "Write a JavaScript code to loop over all elements in the given array. Input: "
        "numbersArray = [45, 6, 23, 12, 35]";
    row.output = "for(let i = 0; i < numbersArray.length; i++) { console.log(numbersArray[i]); }";
    return row;
}

std::vector<corpus::InstructionRow> synthetic_rows(const std::string& prefix, std::size_t count) {
    std::vector<corpus::InstructionRow> rows;
    for (std::size_t i = 0; i < count; ++i) {
        rows.push_back({prefix + "#" + std::to_string(i), "out-" + std::to_string(i), {}});
    }
    return rows;
}

gateway::LlmGateway live_gateway(std::shared_ptr<gateway::ChatProvider> provider) {
    gateway::GatewayConfig config;
    config.mode = gateway::Mode::Live;
    return gateway::LlmGateway(std::move(config), std::move(provider));
}

}  // namespace

TEST_CASE("flag_output marks truncation, emptiness and refusals") {
    const auto phrases = forge::default_refusal_phrases();
    CHECK(forge::flag_output("fine answer", FinishReason::Stop, phrases).empty());
    CHECK(forge::flag_output("cut off", FinishReason::Length, phrases) ==
          std::set<RowFlag>{RowFlag::Truncated});
    CHECK(forge::flag_output("```python\nunclosed fence", FinishReason::Stop, phrases) ==
          std::set<RowFlag>{RowFlag::Truncated});
    CHECK(forge::flag_output("```a``` ```b```", FinishReason::Stop, phrases).empty());
    CHECK(forge::flag_output("  \n ", FinishReason::Stop, phrases) ==
          std::set<RowFlag>{RowFlag::Empty});
    CHECK(forge::flag_output("I'm sorry, but I can't share that.", FinishReason::Stop, phrases) ==
          std::set<RowFlag>{RowFlag::Refused});
}

TEST_CASE("transform_row carries the completion through untouched") {
    const std::string augmented_text =
        "Sure, I'd be happy to help! 1. Start by declaring the array variable:\n"
        "```js\nconst numbersArray = [45, 6, 23, 12, 35]\n```\n"
        "2. Loop with a for statement.\n"
        "```js\nfor (let i = 0; i < numbersArray.length; i++) { console.log(numbersArray[i]); }\n"
        "```\nThis code will loop over all elements in the array.";

    auto provider = std::make_shared<ScriptedProvider>(
        [&](const gateway::CompletionRequest& req) -> gateway::CompletionResult {
            // The rendered CoT prompt must carry the row's fields.
            REQUIRE(req.messages.size() == 1);
            CHECK(req.messages[0].content.find(loop_row().instruction) != std::string::npos);
            CHECK(req.messages[0].content.find("Could you help create a step-by-step plan") !=
                  std::string::npos);
            gateway::CompletionResult result;
            result.text = augmented_text;
            return result;
        });
    auto gw = live_gateway(provider);

    const AugmentedRow row = forge::transform_row(loop_row(), TransformKind::CoTCode, gw);
    CHECK(row.augmented_output == augmented_text);
    CHECK(row.flags.empty());
    CHECK(row.kind == TransformKind::CoTCode);
    CHECK(row.source == loop_row());
}

TEST_CASE("transform_row replays exactly what was recorded") {
    testutil::TempDir dir;
    const std::string recorded = "Step 1. Declare the array.\nStep 2. Loop over it.";
    {
        gateway::GatewayConfig config;
        config.mode = gateway::Mode::Record;
        config.cassette_path = dir.file("cassette.jsonl");
        gateway::LlmGateway gw(config, ScriptedProvider::fixed(recorded));
        forge::transform_row(loop_row(), TransformKind::CoTCode, gw);
    }
    gateway::GatewayConfig config;
    config.mode = gateway::Mode::Replay;
    config.cassette_path = dir.file("cassette.jsonl");
    gateway::LlmGateway gw(config);
    const AugmentedRow row = forge::transform_row(loop_row(), TransformKind::CoTCode, gw);
    CHECK(row.augmented_output == recorded);
    CHECK(row.flags.empty());
}

TEST_CASE("transform_row flags truncated completions") {
    auto provider = std::make_shared<ScriptedProvider>([](const gateway::CompletionRequest&) {
        gateway::CompletionResult result;
        result.text = "list the steps but the reply stops mid";
        result.finish_reason = FinishReason::Length;
        return result;
    });
    auto gw = live_gateway(provider);
    const AugmentedRow row = forge::transform_row(loop_row(), TransformKind::ToTCode, gw);
    CHECK(row.flags.contains(RowFlag::Truncated));
    CHECK(row.finish_reason == FinishReason::Length);
}

TEST_CASE("transform_row flags empty completions") {
    auto gw = live_gateway(ScriptedProvider::fixed(""));
    const AugmentedRow row = forge::transform_row(loop_row(), TransformKind::TeacherCode, gw);
    CHECK(row.flags.contains(RowFlag::Empty));
}

TEST_CASE("transform_rows runs the batch concurrently in input order") {
    std::vector<corpus::InstructionRow> rows;
    for (int i = 0; i < 12; ++i) {
        rows.push_back({"task " + std::to_string(i), "answer " + std::to_string(i), {}});
    }
    auto provider = std::make_shared<ScriptedProvider>(
        [](const gateway::CompletionRequest& req) {
            gateway::CompletionResult result;
            // Echo the embedded task marker back so the pairing is observable.
            const auto& content = req.messages[0].content;
            const auto pos = content.find("task ");
            result.text = "augmented " + content.substr(pos, content.find('\n', pos) - pos);
            return result;
        });
    auto gw = live_gateway(provider);

    const auto augmented = forge::transform_rows(rows, TransformKind::CoTCode, gw, {}, 4);
    REQUIRE(augmented.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(augmented[i].source == rows[i]);
        CHECK(augmented[i].augmented_output == "augmented task " + std::to_string(i));
    }
    CHECK(provider->calls() == 12);

    SUBCASE("a row invalid for the kind aborts the batch") {
        rows[5].output.clear();
        auto gw2 = live_gateway(provider);
        CHECK_THROWS_AS(forge::transform_rows(rows, TransformKind::CoTCode, gw2, {}, 4),
                        promptkit::PromptError);
    }
}

TEST_CASE("filter_rows applies the drop policy in order") {
    std::vector<AugmentedRow> rows(3);
    rows[0].source.instruction = "keep-1";
    rows[1].source.instruction = "drop-me";
    rows[1].flags = {RowFlag::Truncated};
    rows[2].source.instruction = "keep-2";

    SUBCASE("drop truncated") {
        const auto result = forge::filter_rows(rows, {{RowFlag::Truncated}});
        REQUIRE(result.kept.size() == 2);
        CHECK(result.kept[0].source.instruction == "keep-1");
        CHECK(result.kept[1].source.instruction == "keep-2");
        REQUIRE(result.dropped.size() == 1);
        CHECK(result.dropped[0].second == std::set<RowFlag>{RowFlag::Truncated});
    }

    SUBCASE("empty policy keeps everything") {
        const auto result = forge::filter_rows(rows, {});
        CHECK(result.kept.size() == 3);
        CHECK(result.dropped.empty());
    }

    SUBCASE("synthetic 17-of-100 flagged fixture") {
        std::vector<AugmentedRow> many(100);
        for (std::size_t i = 0; i < many.size(); ++i) {
            many[i].source.instruction = "row" + std::to_string(i);
            if (i % 6 == 0) many[i].flags = {RowFlag::Refused};  // 17 of 100
        }
        const auto result = forge::filter_rows(many, {{RowFlag::Refused}});
        CHECK(result.kept.size() == 83);
        CHECK(result.dropped.size() == 17);
    }
}

TEST_CASE("compose_mixture draws exact part counts without duplicates") {
    std::map<std::string, std::vector<corpus::InstructionRow>> datasets;
    datasets["a"] = synthetic_rows("a", 50);
    datasets["b"] = synthetic_rows("b", 80);

    MixtureSpec spec;
    spec.parts = {{"a", 30}, {"b", 45}};
    spec.seed = 12;

    const auto mixed = forge::compose_mixture(datasets, spec);
    CHECK(mixed.size() == 75);

    std::map<char, int> per_part;
    std::set<std::string> unique;
    for (const auto& row : mixed) {
        ++per_part[row.instruction[0]];
        unique.insert(row.instruction);
    }
    CHECK(per_part['a'] == 30);
    CHECK(per_part['b'] == 45);
    CHECK(unique.size() == 75);

    SUBCASE("same spec and seed reproduce the same sequence") {
        CHECK(forge::compose_mixture(datasets, spec) == mixed);
    }

    SUBCASE("different seed shuffles differently") {
        MixtureSpec other = spec;
        other.seed = 13;
        CHECK(forge::compose_mixture(datasets, other) != mixed);
    }
}

TEST_CASE("compose_mixture with a full-size single part is a permutation") {
    std::map<std::string, std::vector<corpus::InstructionRow>> datasets;
    datasets["only"] = synthetic_rows("x", 40);
    MixtureSpec spec;
    spec.parts = {{"only", 40}};
    spec.seed = 5;

    const auto mixed = forge::compose_mixture(datasets, spec);
    CHECK(mixed.size() == 40);
    std::set<std::string> in, out;
    for (const auto& row : datasets["only"]) in.insert(row.instruction);
    for (const auto& row : mixed) out.insert(row.instruction);
    CHECK(in == out);
    CHECK(mixed != datasets["only"]);  // the seeded shuffle actually moved rows
}

TEST_CASE("compose_mixture rejects undersized parts") {
    std::map<std::string, std::vector<corpus::InstructionRow>> datasets;
    datasets["small"] = synthetic_rows("s", 5);
    MixtureSpec spec;
    spec.parts = {{"small", 6}};
    try {
        forge::compose_mixture(datasets, spec);
        FAIL("expected ForgeError");
    } catch (const ForgeError& e) {
        CHECK(e.kind == ForgeError::Kind::PartTooSmall);
        CHECK(std::string(e.what()).find("small") != std::string::npos);
    }

    spec.parts = {{"missing", 1}};
    CHECK_THROWS_AS(forge::compose_mixture(datasets, spec), ForgeError);
}

TEST_CASE("escape_line round trips control characters") {
    for (const std::string text :
         {std::string("plain"), std::string("a\nb"), std::string("back\\slash"),
          std::string("\r\n mixed \\n literal"), std::string()}) {
        CHECK(forge::unescape_line(forge::escape_line(text)) == text);
        CHECK(forge::escape_line(text).find('\n') == std::string::npos);
    }
}

TEST_CASE("emit_finetune_bundle writes dialogues and the manifest") {
    testutil::TempDir dir;
    std::vector<corpus::InstructionRow> rows = {{"hi", "hello", {}}};

    const auto manifest = forge::emit_finetune_bundle(
        rows, std::string(promptkit::kDefaultSystemPreamble), dir.path / "bundle");

    const std::string dialogues = read_file(dir.path / "bundle" / "dialogues.txt");
    CHECK(dialogues.find("<|user|>\\nhi<|end|>\\n<|assistant|>\\nhello<|end|>\\n") !=
          std::string::npos);
    CHECK(dialogues.find('\n') == dialogues.size() - 1);  // one line, escaped

    CHECK(manifest.batch_size == 512);
    CHECK(manifest.learning_rate == 2e-5);
    CHECK(manifest.epochs == 3);
    CHECK(manifest.max_length == 2048);
    CHECK(manifest.warmup_steps == 30);
    CHECK(manifest.lr_scheduler == "cosine");
    CHECK_FALSE(manifest.dataset_digest.empty());

    const std::string manifest_text = read_file(dir.path / "bundle" / "manifest.json");
    CHECK(manifest_text.find("\"batch_size\": 512") != std::string::npos);
    CHECK(manifest_text.find("\"lr_scheduler\": \"cosine\"") != std::string::npos);

    SUBCASE("same rows give the same digest") {
        const auto again = forge::emit_finetune_bundle(
            rows, std::string(promptkit::kDefaultSystemPreamble), dir.path / "bundle2");
        CHECK(again.dataset_digest == manifest.dataset_digest);
    }

    SUBCASE("different rows change the digest") {
        rows.push_back({"more", "rows", {}});
        const auto changed = forge::emit_finetune_bundle(
            rows, std::string(promptkit::kDefaultSystemPreamble), dir.path / "bundle3");
        CHECK(changed.dataset_digest != manifest.dataset_digest);
    }
}

TEST_CASE("bundle lines parse back into dialogues") {
    testutil::TempDir dir;
    std::vector<corpus::InstructionRow> rows = {
        {"Explain recursion.", "A function calling itself.\nBase case required.", {}},
        {"Sum 1..n?", "n * (n + 1) // 2", {}},
    };
    forge::emit_finetune_bundle(rows, std::string(promptkit::kDefaultSystemPreamble),
                                dir.path / "bundle");

    std::size_t parsed_lines = 0;
    for (const std::string& line :
         split(read_file(dir.path / "bundle" / "dialogues.txt"), '\n')) {
        if (line.empty()) continue;
        const auto dialogue = promptkit::parse_dialogue(forge::unescape_line(line));
        REQUIRE(dialogue.messages.size() == 3);
        CHECK(dialogue.messages[0].role == promptkit::Role::System);
        CHECK(dialogue.messages[1].content == rows[parsed_lines].instruction);
        CHECK(dialogue.messages[2].content == rows[parsed_lines].output);
        ++parsed_lines;
    }
    CHECK(parsed_lines == rows.size());
}

TEST_CASE("augmented rows survive a save/load cycle") {
    testutil::TempDir dir;
    std::vector<AugmentedRow> rows(2);
    rows[0].source = loop_row();
    rows[0].kind = TransformKind::CoTCode;
    rows[0].augmented_output = "step 1\nstep 2";
    rows[0].finish_reason = FinishReason::Stop;
    rows[1].source = {"q", "a", {{"origin", "synthetic"}}};
    rows[1].kind = TransformKind::TeacherCode;
    rows[1].augmented_output = "lesson";
    rows[1].flags = {RowFlag::Refused, RowFlag::Truncated};
    rows[1].finish_reason = FinishReason::Length;

    forge::save_augmented_rows(dir.file("rows.jsonl"), rows);
    const auto loaded = forge::load_augmented_rows(dir.file("rows.jsonl"));
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].source == rows[0].source);
    CHECK(loaded[0].augmented_output == rows[0].augmented_output);
    CHECK(loaded[1].flags == rows[1].flags);
    CHECK(loaded[1].finish_reason == FinishReason::Length);
    CHECK(loaded[1].source.meta.at("origin") == "synthetic");
}
