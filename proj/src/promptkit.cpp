#include "mpeval/promptkit.hpp"

#include <cassert>

namespace mpeval::promptkit {

namespace {

constexpr std::string_view kSystemToken = "<|system|>";
constexpr std::string_view kUserToken = "<|user|>";
constexpr std::string_view kAssistantToken = "<|assistant|>";
constexpr std::string_view kEndToken = "<|end|>";

constexpr std::array<std::string_view, 6> kOrdinals = {"first", "second", "third",
                                                       "fourth", "fifth",  "sixth"};

// Final rating instruction, one per parameter. The surrounding prompt body is
// shared; only this sentence changes.
std::string_view judge_instruction(JudgeParameter param) {
    switch (param) {
        case JudgeParameter::Overall:
            return "Please rate each answer from 0 to 100 (best answer possible). Consider whether "
                   "the code fully solves the problem, if it handles all edge cases, and if it "
                   "contains all necessary functionalities. Also, provide a short explanation for "
                   "each rating.";
        case JudgeParameter::Correctness:
            return "Please rate each answer from 0 to 100 (best answer possible) based on Code "
                   "Completeness. Consider whether the code fully solves the problem, if it handles "
                   "all edge cases, and if it contains all necessary functionalities. Also, provide "
                   "a short explanation for each rating.";
        case JudgeParameter::Efficiency:
            return "Please rate each answer from 0 to 100 (best answer possible) on Efficiency. "
                   "This entails considering how well-optimized the code is, how frugally it uses "
                   "system resources, and its scalability or robustness for larger inputs. Consider "
                   "both its time complexity (ability to perform tasks quickly) and space "
                   "complexity (how much memory the program uses). Also, provide a short "
                   "explanation for each rating.";
        case JudgeParameter::Readability:
            return "Please rate each answer from 0 to 100 (best answer possible) based on its "
                   "Helpfulness and Educational Value. Consider whether the answer provides clear "
                   "explanations, whether it's easy to follow and understand, whether it teaches "
                   "you something valuable about the problem or the coding concepts involved, and "
                   "whether it gives you new insights that could help you in future similar "
                   "problems. Also, provide a short explanation for each rating.";
        case JudgeParameter::Relevance:
            return "Please rate each answer from 0 to 100 (best answer possible) based on its "
                   "Relevance to Problem (On-point answer). Consider how directly the code answers "
                   "the problem, if it provides an adequate and appropriate solution, and whether "
                   "it implements the requirements stated in the problem. Also, provide a short "
                   "explanation for each rating.";
    }
    return {};
}

std::string judge_template_text(JudgeParameter param, std::size_t k) {
    std::string text = "I asked this to {k} different AI models: {problem}\n";
    for (std::size_t i = 0; i < k; ++i) {
        text += "This is the ";
        text += kOrdinals[i];
        text += " model answer: {answer_";
        text += std::to_string(i + 1);
        text += "}\n";
    }
    text += "These are the tests for the code solution of the problem: {tests}\n";
    text += judge_instruction(param);
    return text;
}

std::string transform_template_text(TransformKind kind) {
    switch (kind) {
        case TransformKind::ToTCode:
            return "As part of an exercise in improving AI code explanations, your task is as "
                   "follows:\n"
                   "Question: \n\n{instruction}\n\n"
                   "Existing Answer: \n\n{output}\n\n"
                   "The given answer, though technically correct, doesn't offer insights into the "
                   "underlying thought process.\n"
                   "Your mission: devise a comprehensive step-by-step plan leading to the answer. \n"
                   "This should include plain language explanations and corresponding code, neatly "
                   "presented in markdown. "
                   "Your answer will serve as a more informative substitute for the initial one. "
                   "Strive for simplicity and human-like communication.\n\n"
                   "But there's a twist: envisage a collaboration between three experts, each "
                   "adding a piece to the puzzle. "
                   "After contributing a step, they discuss it with the group before proceeding. "
                   "If an expert determines their step is incorrect, they step away from the task. "
                   "The exercise concludes when a comprehensive correct answer has been achieved, "
                   "or all experts have withdrawn.";
        case TransformKind::CoTCode:
            return "I'm training a code-writing AI and I need your help. \n"
                   "Here's a sample question: \n\n{instruction}\n\n"
                   "And here's an answer: \n\n{output}\n\n"
                   "The given answer is too basic and doesn't explain the steps taken to arrive at "
                   "it.\n"
                   "Could you help create a step-by-step plan to reach this answer? \n"
                   "Each step should be simple and understandable. \n"
                   "Your answer should include this plan and the actual code in markdown in one "
                   "block."
                   "Your answer will replace the one I've shown you. It should sound human!"
                   "Make sure not to cut off words or sentences midway.";
        case TransformKind::TeacherCode:
            return "Imagine you are a programming expert tasked with providing clear and formal "
                   "programming assistance. "
                   "You are presented with this problem: \n\n{instruction}\n\n"
                   "You have two primary goals: "
                   "1) explain the process to solve the problem step by step. Explain the process "
                   "to solve the problem step by step in a conversational manner, with a few "
                   "bullet points."
                   "2) include specific examples of common errors that should be avoided, "
                   "accompanied by code snippets illustrating these mistakes. Tag these code "
                   "snippets as 'Error Example'. "
                   "When providing the correct solution, ensure there are comments in the code to "
                   "enhance its comprehensibility, addressing crucial points and possible "
                   "mistakes. ";
        case TransformKind::CoTLogic:
            return "I have a dataset with questions and responses about logical problems. \n"
                   "This is one logical problem: \n\n{instruction}\n\n"
                   "This is the provided solution to the problem: \n\n{output}\n\n"
                   "The provided solution is too simple and doesn't explain the process to get "
                   "it.\n"
                   "Can you please provide a detailed reasoning to get the solution? \n";
    }
    return {};
}

// Replaces "{name}" exactly once and records the substitution for audit.
void substitute(std::string& text, const std::string& name, const std::string& value,
                std::map<std::string, std::string>& audit) {
    const std::string placeholder = "{" + name + "}";
    const std::size_t pos = text.find(placeholder);
    if (pos == std::string::npos || text.find(placeholder, pos + 1) != std::string::npos) {
        throw std::logic_error("template placeholder " + placeholder +
                               " must occur exactly once");
    }
    text.replace(pos, placeholder.size(), value);
    audit[name] = value;
}

void reject_reserved_tokens(std::string_view content) {
    for (std::string_view token : {kSystemToken, kUserToken, kAssistantToken, kEndToken}) {
        if (content.find(token) != std::string_view::npos) {
            throw PromptError(PromptError::Kind::ReservedToken,
                              "message content contains reserved token " + std::string(token));
        }
    }
}

}  // namespace

std::string_view to_string(JudgeParameter param) {
    switch (param) {
        case JudgeParameter::Overall: return "overall";
        case JudgeParameter::Correctness: return "correctness";
        case JudgeParameter::Efficiency: return "efficiency";
        case JudgeParameter::Readability: return "readability";
        case JudgeParameter::Relevance: return "relevance";
    }
    return {};
}

std::string_view display_name(JudgeParameter param) {
    switch (param) {
        case JudgeParameter::Overall: return "Overall";
        case JudgeParameter::Correctness: return "Code Correctness";
        case JudgeParameter::Efficiency: return "Code Efficiency";
        case JudgeParameter::Readability: return "Code Readability";
        case JudgeParameter::Relevance: return "Question Relevance";
    }
    return {};
}

std::optional<JudgeParameter> judge_parameter_from_string(std::string_view name) {
    for (JudgeParameter param : kAllJudgeParameters) {
        if (to_string(param) == name) return param;
    }
    return std::nullopt;
}

std::string_view to_string(TransformKind kind) {
    switch (kind) {
        case TransformKind::ToTCode: return "tot_code";
        case TransformKind::CoTCode: return "cot_code";
        case TransformKind::TeacherCode: return "teacher_code";
        case TransformKind::CoTLogic: return "cot_logic";
    }
    return {};
}

std::optional<TransformKind> transform_kind_from_string(std::string_view name) {
    for (TransformKind kind : {TransformKind::ToTCode, TransformKind::CoTCode,
                               TransformKind::TeacherCode, TransformKind::CoTLogic}) {
        if (to_string(kind) == name) return kind;
    }
    return std::nullopt;
}

std::string_view template_id(JudgeParameter param) {
    switch (param) {
        case JudgeParameter::Overall: return "judge.overall";
        case JudgeParameter::Correctness: return "judge.correctness";
        case JudgeParameter::Efficiency: return "judge.efficiency";
        case JudgeParameter::Readability: return "judge.readability";
        case JudgeParameter::Relevance: return "judge.relevance";
    }
    return {};
}

std::string_view template_id(TransformKind kind) {
    switch (kind) {
        case TransformKind::ToTCode: return "transform.tot_code";
        case TransformKind::CoTCode: return "transform.cot_code";
        case TransformKind::TeacherCode: return "transform.teacher_code";
        case TransformKind::CoTLogic: return "transform.cot_logic";
    }
    return {};
}

std::string_view to_string(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return {};
}

std::string_view ordinal_word(std::size_t index) {
    assert(index < kOrdinals.size());
    return kOrdinals[index];
}

void DialogueRecord::validate() const {
    for (std::size_t i = 0; i < messages.size(); ++i) {
        const Role role = messages[i].role;
        if (role == Role::System && i != 0) {
            throw PromptError(PromptError::Kind::InvalidRoleSequence,
                              "system message only allowed at position 0");
        }
    }
    const std::size_t start = !messages.empty() && messages[0].role == Role::System ? 1 : 0;
    for (std::size_t i = start; i < messages.size(); ++i) {
        const Role expected = (i - start) % 2 == 0 ? Role::User : Role::Assistant;
        if (messages[i].role != expected) {
            throw PromptError(PromptError::Kind::InvalidRoleSequence,
                              "roles must alternate user/assistant starting with user (position " +
                                  std::to_string(i) + ")");
        }
    }
}

PromptText render_judge_prompt(JudgeParameter param, const corpus::ProblemRecord& problem,
                               std::span<const std::string> answers, std::string_view tests) {
    const std::size_t k = answers.size();
    if (k < 2) {
        throw PromptError(PromptError::Kind::TooFewAnswers,
                          "judge prompt needs at least 2 answers, got " + std::to_string(k));
    }
    if (k > kOrdinals.size()) {
        throw PromptError(PromptError::Kind::TooManyAnswers,
                          "judge prompt supports at most " + std::to_string(kOrdinals.size()) +
                              " answers, got " + std::to_string(k));
    }

    PromptText out;
    out.template_id = std::string(template_id(param));
    out.text = judge_template_text(param, k);
    substitute(out.text, "k", std::to_string(k), out.substitutions);
    substitute(out.text, "problem", problem.prompt, out.substitutions);
    for (std::size_t i = 0; i < k; ++i) {
        substitute(out.text, "answer_" + std::to_string(i + 1), answers[i], out.substitutions);
    }
    substitute(out.text, "tests", std::string(tests), out.substitutions);
    return out;
}

PromptText render_transform_prompt(TransformKind kind, const corpus::InstructionRow& row) {
    const bool needs_output = kind != TransformKind::TeacherCode;
    if (needs_output && row.output.empty()) {
        throw PromptError(PromptError::Kind::MissingOutput,
                          std::string(to_string(kind)) + " prompt requires a non-empty output");
    }

    PromptText out;
    out.template_id = std::string(template_id(kind));
    out.text = transform_template_text(kind);
    substitute(out.text, "instruction", row.instruction, out.substitutions);
    if (needs_output) {
        substitute(out.text, "output", row.output, out.substitutions);
    }
    return out;
}

std::string format_dialogue(const DialogueRecord& d,
                            const std::optional<std::string>& system_preamble) {
    d.validate();

    std::optional<std::string> system;
    std::size_t start = 0;
    if (system_preamble) {
        if (!d.messages.empty() && d.messages[0].role == Role::System) {
            throw PromptError(PromptError::Kind::InvalidRoleSequence,
                              "record already carries a system message; preamble not allowed");
        }
        system = *system_preamble;
    } else if (!d.messages.empty() && d.messages[0].role == Role::System) {
        system = d.messages[0].content;
        start = 1;
    }

    std::string out;
    if (system) {
        reject_reserved_tokens(*system);
        out += kSystemToken;
        out += '\n';
        out += *system;
        out += '\n';
        out += kEndToken;
        out += '\n';
    }
    for (std::size_t i = start; i < d.messages.size(); ++i) {
        const Message& msg = d.messages[i];
        reject_reserved_tokens(msg.content);
        out += msg.role == Role::User ? kUserToken : kAssistantToken;
        out += '\n';
        out += msg.content;
        out += kEndToken;
        out += '\n';
    }
    return out;
}

DialogueRecord parse_dialogue(std::string_view text) {
    DialogueRecord d;
    std::size_t pos = 0;
    while (pos < text.size()) {
        Role role;
        if (text.substr(pos).starts_with(kSystemToken)) {
            role = Role::System;
            pos += kSystemToken.size();
        } else if (text.substr(pos).starts_with(kUserToken)) {
            role = Role::User;
            pos += kUserToken.size();
        } else if (text.substr(pos).starts_with(kAssistantToken)) {
            role = Role::Assistant;
            pos += kAssistantToken.size();
        } else {
            throw PromptError(PromptError::Kind::UnknownToken,
                              "expected role token at offset " + std::to_string(pos));
        }
        if (pos >= text.size() || text[pos] != '\n') {
            throw PromptError(PromptError::Kind::UnknownToken,
                              "expected newline after role token at offset " + std::to_string(pos));
        }
        ++pos;

        const std::size_t end = text.find(kEndToken, pos);
        if (end == std::string_view::npos) {
            throw PromptError(PromptError::Kind::UnterminatedMessage,
                              "message starting at offset " + std::to_string(pos) +
                                  " has no end token");
        }
        std::string content(text.substr(pos, end - pos));
        if (role == Role::System) {
            if (content.empty() || content.back() != '\n') {
                throw PromptError(PromptError::Kind::UnknownToken,
                                  "system block must end with a newline before the end token");
            }
            content.pop_back();
        }
        pos = end + kEndToken.size();
        if (pos >= text.size() || text[pos] != '\n') {
            throw PromptError(PromptError::Kind::UnterminatedMessage,
                              "missing newline after end token at offset " + std::to_string(pos));
        }
        ++pos;
        d.messages.push_back({role, std::move(content)});
    }
    d.validate();
    return d;
}

std::vector<TemplateInfo> all_templates() {
    std::vector<TemplateInfo> out;
    for (JudgeParameter param : kAllJudgeParameters) {
        out.push_back({std::string(template_id(param)), judge_template_text(param, 4)});
    }
    for (TransformKind kind : {TransformKind::ToTCode, TransformKind::CoTCode,
                               TransformKind::TeacherCode, TransformKind::CoTLogic}) {
        out.push_back({std::string(template_id(kind)), transform_template_text(kind)});
    }
    return out;
}

}  // namespace mpeval::promptkit
