#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mpeval/corpus.hpp"
#include "mpeval/errors.hpp"

namespace mpeval::promptkit {

enum class JudgeParameter { Overall, Correctness, Efficiency, Readability, Relevance };
enum class TransformKind { ToTCode, CoTCode, TeacherCode, CoTLogic };

inline constexpr std::array<JudgeParameter, 5> kAllJudgeParameters = {
    JudgeParameter::Overall, JudgeParameter::Correctness, JudgeParameter::Efficiency,
    JudgeParameter::Readability, JudgeParameter::Relevance};

std::string_view to_string(JudgeParameter param);
std::string_view display_name(JudgeParameter param);
std::optional<JudgeParameter> judge_parameter_from_string(std::string_view name);

std::string_view to_string(TransformKind kind);
std::optional<TransformKind> transform_kind_from_string(std::string_view name);

std::string_view template_id(JudgeParameter param);
std::string_view template_id(TransformKind kind);

enum class Role { System, User, Assistant };

std::string_view to_string(Role role);

struct Message {
    Role role;
    std::string content;

    bool operator==(const Message&) const = default;
};

struct DialogueRecord {
    std::vector<Message> messages;

    /// Throws on invariant violation: at most one system message and only at
    /// position 0; thereafter roles strictly alternate user/assistant,
    /// starting with user.
    void validate() const;

    bool operator==(const DialogueRecord&) const = default;
};

/// A rendered prompt plus its audit trail: which template produced it and
/// what was substituted for each placeholder.
struct PromptText {
    std::string text;
    std::string template_id;
    std::map<std::string, std::string> substitutions;
};

class PromptError : public Error {
public:
    enum class Kind {
        TooFewAnswers,
        TooManyAnswers,
        MissingOutput,
        InvalidRoleSequence,
        UnterminatedMessage,
        UnknownToken,
        ReservedToken,
    };

    PromptError(Kind kind, std::string message) : Error(std::move(message)), kind(kind) {}

    Kind kind;
};

/// English ordinal word for a zero-based position; defined up to "sixth".
std::string_view ordinal_word(std::size_t index);

/// Renders the comparative judge prompt for 2..6 answers, already in
/// presentation order. The tests block is passed separately so callers can
/// withhold hidden tests if they want to.
PromptText render_judge_prompt(JudgeParameter param, const corpus::ProblemRecord& problem,
                               std::span<const std::string> answers, std::string_view tests);

/// Renders one of the four dataset-transformation prompts for a Q&A row.
PromptText render_transform_prompt(TransformKind kind, const corpus::InstructionRow& row);

inline constexpr std::string_view kDefaultSystemPreamble =
    "Below is a dialogue between a human and AI assistant called StarChat.";

/// Special-token wire format. A system block is emitted from the preamble if
/// given, otherwise from a leading system message in the record. Passing a
/// preamble alongside a record that already carries a system message is an
/// error.
std::string format_dialogue(const DialogueRecord& d,
                            const std::optional<std::string>& system_preamble = std::nullopt);

/// Inverse of format_dialogue on the token grammar; a leading system block
/// becomes a system message at position 0.
DialogueRecord parse_dialogue(std::string_view text);

struct TemplateInfo {
    std::string id;
    std::string text;  // with {placeholder} markers; judge templates in their 4-answer form
};

/// All nine shipped templates, for dump and golden tests.
std::vector<TemplateInfo> all_templates();

}  // namespace mpeval::promptkit
