#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "mpeval/promptkit.hpp"
#include "mpeval/util.hpp"
#include "testutil.hpp"

using namespace mpeval;
using promptkit::DialogueRecord;
using promptkit::JudgeParameter;
using promptkit::Message;
using promptkit::PromptError;
using promptkit::Role;
using promptkit::TransformKind;

namespace {

corpus::ProblemRecord sample_problem() {
    corpus::ProblemRecord problem;
    problem.task_id = "HumanEval/0";
    problem.prompt = "def has_close_elements(numbers, threshold):\n    ...\n";
    problem.entry_point = "has_close_elements";
    problem.test = "def check(candidate):\n    assert candidate([1.0], 0.5) == False\n";
    problem.canonical_solution = "    return False\n";
    return problem;
}

std::string render_with_empty_substitutions(std::string text) {
    for (std::string_view name :
         {"{k}", "{problem}", "{answer_1}", "{answer_2}", "{answer_3}", "{answer_4}", "{tests}",
          "{instruction}", "{output}"}) {
        const std::size_t pos = text.find(name);
        if (pos != std::string::npos) text.replace(pos, name.size(), "");
    }
    return text;
}

// Fixed sentences each template must carry verbatim.
const std::map<std::string, std::vector<std::string>> kFixedSentences = {
    {"judge.overall",
     {"different AI models:", "This is the first model answer:",
      "These are the tests for the code solution of the problem:",
      "Please rate each answer from 0 to 100 (best answer possible).",
      "Consider whether the code fully solves the problem, if it handles all edge cases, and if "
      "it contains all necessary functionalities.",
      "Also, provide a short explanation for each rating."}},
    {"judge.correctness",
     {"Please rate each answer from 0 to 100 (best answer possible) based on Code Completeness.",
      "Consider whether the code fully solves the problem, if it handles all edge cases, and if "
      "it contains all necessary functionalities."}},
    {"judge.efficiency",
     {"Please rate each answer from 0 to 100 (best answer possible) on Efficiency.",
      "This entails considering how well-optimized the code is, how frugally it uses system "
      "resources, and its scalability or robustness for larger inputs.",
      "Consider both its time complexity (ability to perform tasks quickly) and space complexity "
      "(how much memory the program uses)."}},
    {"judge.readability",
     {"Please rate each answer from 0 to 100 (best answer possible) based on its Helpfulness and "
      "Educational Value.",
      "Consider whether the answer provides clear explanations, whether it's easy to follow and "
      "understand, whether it teaches you something valuable about the problem or the coding "
      "concepts involved, and whether it gives you new insights that could help you in future "
      "similar problems."}},
    {"judge.relevance",
     {"Please rate each answer from 0 to 100 (best answer possible) based on its Relevance to "
      "Problem (On-point answer).",
      "Consider how directly the code answers the problem, if it provides an adequate and "
      "appropriate solution, and whether it implements the requirements stated in the problem."}},
    {"transform.tot_code",
     {"As part of an exercise in improving AI code explanations, your task is as follows:",
      "The given answer, though technically correct, doesn't offer insights into the underlying "
      "thought process.",
      "Your mission: devise a comprehensive step-by-step plan leading to the answer.",
      "This should include plain language explanations and corresponding code, neatly presented "
      "in markdown.",
      "Your answer will serve as a more informative substitute for the initial one. Strive for "
      "simplicity and human-like communication.",
      "But there's a twist: envisage a collaboration between three experts, each adding a piece "
      "to the puzzle.",
      "After contributing a step, they discuss it with the group before proceeding.",
      "If an expert determines their step is incorrect, they step away from the task.",
      "The exercise concludes when a comprehensive correct answer has been achieved, or all "
      "experts have withdrawn."}},
    {"transform.cot_code",
     {"I'm training a code-writing AI and I need your help.",
      "The given answer is too basic and doesn't explain the steps taken to arrive at it.",
      "Could you help create a step-by-step plan to reach this answer?",
      "Each step should be simple and understandable.",
      "Your answer should include this plan and the actual code in markdown in one block.",
      "Your answer will replace the one I've shown you. It should sound human!",
      "Make sure not to cut off words or sentences midway."}},
    {"transform.teacher_code",
     {"Imagine you are a programming expert tasked with providing clear and formal programming "
      "assistance.",
      "You are presented with this problem:", "You have two primary goals:",
      "1) explain the process to solve the problem step by step.",
      "Explain the process to solve the problem step by step in a conversational manner, with a "
      "few bullet points.",
      "2) include specific examples of common errors that should be avoided, accompanied by code "
      "snippets illustrating these mistakes.",
      "Tag these code snippets as 'Error Example'.",
      "When providing the correct solution, ensure there are comments in the code to enhance its "
      "comprehensibility, addressing crucial points and possible mistakes."}},
    {"transform.cot_logic",
     {"I have a dataset with questions and responses about logical problems.",
      "This is one logical problem:", "This is the provided solution to the problem:",
      "The provided solution is too simple and doesn't explain the process to get it.",
      "Can you please provide a detailed reasoning to get the solution?"}},
};

}  // namespace

TEST_CASE("template goldens match byte for byte") {
    const auto templates = promptkit::all_templates();
    REQUIRE(templates.size() == 9);
    for (const auto& info : templates) {
        CAPTURE(info.id);
        const auto golden_path = testutil::data_dir() / "goldens" / (info.id + ".txt");
        REQUIRE_MESSAGE(std::filesystem::exists(golden_path),
                        "missing golden; run golden_gen and review");
        CHECK(render_with_empty_substitutions(info.text) == read_file(golden_path));
    }
}

TEST_CASE("templates carry their fixed sentences verbatim") {
    for (const auto& info : promptkit::all_templates()) {
        CAPTURE(info.id);
        REQUIRE(kFixedSentences.contains(info.id));
        for (const auto& sentence : kFixedSentences.at(info.id)) {
            CAPTURE(sentence);
            CHECK(info.text.find(sentence) != std::string::npos);
        }
    }
}

TEST_CASE("judge prompt layout") {
    const auto problem = sample_problem();
    const std::vector<std::string> answers = {"ANSWER-A", "ANSWER-B", "ANSWER-C", "ANSWER-D"};

    const auto prompt = promptkit::render_judge_prompt(JudgeParameter::Overall, problem, answers,
                                                       problem.test);
    CHECK(prompt.template_id == "judge.overall");
    CHECK(prompt.text.find("I asked this to 4 different AI models: " + problem.prompt) !=
          std::string::npos);
    CHECK(prompt.text.find("Consider whether the code fully solves the problem, if it handles "
                           "all edge cases") != std::string::npos);
    CHECK(prompt.substitutions.at("k") == "4");
    CHECK(prompt.substitutions.at("answer_3") == "ANSWER-C");

    // Each answer appears exactly once, in order, behind its ordinal.
    std::size_t last = 0;
    for (std::size_t i = 0; i < answers.size(); ++i) {
        const std::string marker = "This is the " + std::string(promptkit::ordinal_word(i)) +
                                   " model answer: " + answers[i] + "\n";
        const std::size_t pos = prompt.text.find(marker);
        REQUIRE(pos != std::string::npos);
        CHECK(prompt.text.find(marker, pos + 1) == std::string::npos);
        CHECK(pos > last);
        last = pos;
    }
}

TEST_CASE("judge prompt keeps duplicate answers") {
    const auto problem = sample_problem();
    const std::vector<std::string> answers = {"SAME-TEXT", "SAME-TEXT"};
    const auto prompt = promptkit::render_judge_prompt(JudgeParameter::Overall, problem, answers,
                                                       "tests");
    std::size_t count = 0;
    for (std::size_t pos = prompt.text.find("SAME-TEXT"); pos != std::string::npos;
         pos = prompt.text.find("SAME-TEXT", pos + 1)) {
        ++count;
    }
    CHECK(count == 2);
    CHECK(prompt.text.find("I asked this to 2 different AI models") != std::string::npos);
}

TEST_CASE("judge prompt answer-count bounds") {
    const auto problem = sample_problem();
    const std::vector<std::string> one(1, "only");
    const std::vector<std::string> seven(7, "answer");
    CHECK_THROWS_AS(
        promptkit::render_judge_prompt(JudgeParameter::Overall, problem, one, "tests"),
        PromptError);
    CHECK_THROWS_AS(
        promptkit::render_judge_prompt(JudgeParameter::Overall, problem, seven, "tests"),
        PromptError);
}

TEST_CASE("efficiency prompt quotes the complexity wording") {
    const auto problem = sample_problem();
    const std::vector<std::string> answers = {"a", "b"};
    const auto prompt = promptkit::render_judge_prompt(JudgeParameter::Efficiency, problem,
                                                       answers, "tests");
    CHECK(prompt.text.find("time complexity (ability to perform tasks quickly) and space "
                           "complexity") != std::string::npos);
}

TEST_CASE("transform prompts substitute the row") {
    corpus::InstructionRow row;
    row.instruction = "Write a JavaScript code to loop over all elements in the given array.";
    row.output = "for(let i = 0; i < numbersArray.length; i++) {}";

    SUBCASE("ToT includes both fields") {
        const auto prompt = promptkit::render_transform_prompt(TransformKind::ToTCode, row);
        CHECK(prompt.text.find("devise a comprehensive step-by-step plan leading to the answer") !=
              std::string::npos);
        CHECK(prompt.text.find("Question: \n\n" + row.instruction + "\n\n") != std::string::npos);
        CHECK(prompt.text.find("Existing Answer: \n\n" + row.output + "\n\n") !=
              std::string::npos);
    }

    SUBCASE("Teacher works without an output") {
        row.output.clear();
        const auto prompt = promptkit::render_transform_prompt(TransformKind::TeacherCode, row);
        CHECK(prompt.text.find("Tag these code snippets as 'Error Example'") !=
              std::string::npos);
        CHECK(prompt.substitutions.count("output") == 0);
    }

    SUBCASE("CoT without an output is rejected") {
        row.output.clear();
        try {
            promptkit::render_transform_prompt(TransformKind::CoTCode, row);
            FAIL("expected PromptError");
        } catch (const PromptError& e) {
            CHECK(e.kind == PromptError::Kind::MissingOutput);
        }
        CHECK_THROWS_AS(promptkit::render_transform_prompt(TransformKind::CoTLogic, row),
                        PromptError);
        CHECK_THROWS_AS(promptkit::render_transform_prompt(TransformKind::ToTCode, row),
                        PromptError);
    }
}

TEST_CASE("dialogue golden matches the documented serialization") {
    DialogueRecord dialogue;
    dialogue.messages = {
        {Role::User, "Is it possible to imagine a society without law?"},
        {Role::Assistant, "It is difficult to imagine ..."},
        {Role::User, "It seems like you ..."},
        {Role::Assistant, "You are correct ..."},
        {Role::User, "Yeah, but laws are complicated ..."},
    };
    const std::string serialized = promptkit::format_dialogue(
        dialogue, std::string(promptkit::kDefaultSystemPreamble));
    CHECK(serialized == read_file(testutil::data_dir() / "goldens" / "dialogue_starchat.txt"));
    CHECK(serialized.starts_with("<|system|>\nBelow is a dialogue between a human and AI "
                                 "assistant called StarChat.\n<|end|>\n<|user|>\n"));
}

TEST_CASE("format_dialogue minimal and error cases") {
    SUBCASE("single user message") {
        DialogueRecord d{{{Role::User, "hi"}}};
        CHECK(promptkit::format_dialogue(d) == "<|user|>\nhi<|end|>\n");
    }

    SUBCASE("user,user violates alternation") {
        DialogueRecord d{{{Role::User, "a"}, {Role::User, "b"}}};
        try {
            promptkit::format_dialogue(d);
            FAIL("expected PromptError");
        } catch (const PromptError& e) {
            CHECK(e.kind == PromptError::Kind::InvalidRoleSequence);
        }
    }

    SUBCASE("assistant first violates alternation") {
        DialogueRecord d{{{Role::Assistant, "a"}}};
        CHECK_THROWS_AS(promptkit::format_dialogue(d), PromptError);
    }

    SUBCASE("system message mid-dialogue rejected") {
        DialogueRecord d{{{Role::User, "a"}, {Role::System, "s"}}};
        CHECK_THROWS_AS(promptkit::format_dialogue(d), PromptError);
    }

    SUBCASE("preamble plus embedded system message rejected") {
        DialogueRecord d{{{Role::System, "s"}, {Role::User, "a"}}};
        CHECK_THROWS_AS(promptkit::format_dialogue(d, std::string("pre")), PromptError);
        // Without the explicit preamble the embedded one serializes fine.
        CHECK(promptkit::format_dialogue(d) == "<|system|>\ns\n<|end|>\n<|user|>\na<|end|>\n");
    }

    SUBCASE("reserved token in content rejected") {
        DialogueRecord d{{{Role::User, "hi <|end|> bye"}}};
        try {
            promptkit::format_dialogue(d);
            FAIL("expected PromptError");
        } catch (const PromptError& e) {
            CHECK(e.kind == PromptError::Kind::ReservedToken);
        }
    }
}

TEST_CASE("parse_dialogue grammar errors") {
    SUBCASE("minimal") {
        const auto d = promptkit::parse_dialogue("<|user|>\nhi<|end|>\n");
        REQUIRE(d.messages.size() == 1);
        CHECK(d.messages[0].role == Role::User);
        CHECK(d.messages[0].content == "hi");
    }

    SUBCASE("unterminated message") {
        try {
            promptkit::parse_dialogue("<|user|>\nhi");
            FAIL("expected PromptError");
        } catch (const PromptError& e) {
            CHECK(e.kind == PromptError::Kind::UnterminatedMessage);
        }
    }

    SUBCASE("unknown token") {
        try {
            promptkit::parse_dialogue("<|robot|>\nhi<|end|>\n");
            FAIL("expected PromptError");
        } catch (const PromptError& e) {
            CHECK(e.kind == PromptError::Kind::UnknownToken);
        }
    }

    SUBCASE("missing newline after end token") {
        CHECK_THROWS_AS(promptkit::parse_dialogue("<|user|>\nhi<|end|>"), PromptError);
    }

    SUBCASE("alternation enforced on parse") {
        CHECK_THROWS_AS(
            promptkit::parse_dialogue("<|user|>\na<|end|>\n<|user|>\nb<|end|>\n"),
            PromptError);
    }

    SUBCASE("empty input is an empty record") {
        CHECK(promptkit::parse_dialogue("").messages.empty());
    }
}

TEST_CASE("dialogue round trip on random records") {
    SeededRng rng(2024);
    const std::vector<std::string> alphabet = {"hello", "x\ny",  "code: f(1)", "",
                                               "line\n\nbreaks", "tab\tsep",   "ünïcode"};
    for (int iteration = 0; iteration < 250; ++iteration) {
        DialogueRecord d;
        if (rng.below(2) == 0) {
            d.messages.push_back({Role::System, alphabet[rng.below(alphabet.size())]});
        }
        const std::size_t turns = 1 + rng.below(6);
        for (std::size_t t = 0; t < turns; ++t) {
            d.messages.push_back({t % 2 == 0 ? Role::User : Role::Assistant,
                                  alphabet[rng.below(alphabet.size())]});
        }
        const std::string wire = promptkit::format_dialogue(d);
        CHECK(promptkit::parse_dialogue(wire) == d);
        // format ∘ parse is the identity on the grammar too.
        CHECK(promptkit::format_dialogue(promptkit::parse_dialogue(wire)) == wire);
    }
}

TEST_CASE("parse recovers the preamble as a system message") {
    DialogueRecord d{{{Role::User, "q"}, {Role::Assistant, "a"}}};
    const std::string wire = promptkit::format_dialogue(d, std::string("be helpful"));
    const auto parsed = promptkit::parse_dialogue(wire);
    REQUIRE(parsed.messages.size() == 3);
    CHECK(parsed.messages[0].role == Role::System);
    CHECK(parsed.messages[0].content == "be helpful");
}

TEST_CASE("parameter and kind names round trip") {
    for (auto param : promptkit::kAllJudgeParameters) {
        CHECK(promptkit::judge_parameter_from_string(promptkit::to_string(param)) == param);
    }
    for (auto kind : {TransformKind::ToTCode, TransformKind::CoTCode, TransformKind::TeacherCode,
                      TransformKind::CoTLogic}) {
        CHECK(promptkit::transform_kind_from_string(promptkit::to_string(kind)) == kind);
    }
    CHECK_FALSE(promptkit::judge_parameter_from_string("bogus").has_value());
}
