#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "mpeval/corpus.hpp"
#include "mpeval/errors.hpp"
#include "mpeval/llm_gateway.hpp"
#include "mpeval/promptkit.hpp"

namespace mpeval::judge {

using promptkit::JudgeParameter;

struct ModelAnswer {
    std::string model_id;
    std::string text;

    bool operator==(const ModelAnswer&) const = default;
};

/// The answers to one problem that get judged comparatively in one prompt.
struct AnswerSet {
    std::string task_id;
    std::vector<ModelAnswer> answers;

    /// Throws JudgeError on 2..6 bounds or duplicate model ids.
    void validate() const;
};

/// Records how answers were shuffled for presentation: mapping[position] is
/// the index into AnswerSet.answers shown at that position.
struct Permutation {
    std::vector<std::size_t> mapping;
    std::uint64_t seed = 0;

    bool is_identity() const;
    static Permutation identity(std::size_t size, std::uint64_t seed = 0);
};

struct ProblemVerdict {
    std::string task_id;
    JudgeParameter parameter = JudgeParameter::Overall;
    std::map<std::string, int> ratings;              // model_id -> 0..100
    std::map<std::string, std::string> explanations; // model_id -> prose
    std::string raw_text;
    Permutation permutation;
    int sample_index = 0;
};

struct ScoreCell {
    double mean = 0.0;
    double stdev = 0.0;  // population standard deviation
    std::size_t count = 0;
};

struct Scorecard {
    // model -> parameter -> cell; std::map keeps report iteration stable.
    std::map<std::string, std::map<JudgeParameter, ScoreCell>> cells;
    std::string run_config_digest;

    std::vector<std::string> models() const;
    std::vector<JudgeParameter> parameters() const;
};

struct ParsedVerdict {
    std::vector<int> ratings;               // by presentation position
    std::vector<std::string> explanations;  // by presentation position
};

struct ParseFailure {
    enum class Reason { MissingRatings, AmbiguousRatings, OutOfRange };

    Reason reason;
    int found = 0;  // ratings located (MissingRatings)
    int value = 0;  // offending value (OutOfRange)
    std::string detail;
};

using ParseOutcome = std::variant<ParsedVerdict, ParseFailure>;

class JudgeError : public Error {
public:
    enum class Kind { JudgeUnavailable, AllSamplesFailed, EmptyRun, UnknownModel, BadAnswerSet };

    JudgeError(Kind kind, std::string message) : Error(std::move(message)), kind(kind) {}

    Kind kind;
};

/// Seeded uniform shuffle of the answers; returns the texts in presentation
/// order plus the permutation needed to undo it.
std::pair<std::vector<std::string>, Permutation> anonymize(const AnswerSet& set,
                                                           std::uint64_t seed);

/// Tolerant line-oriented scan of a judge reply for k ratings with their
/// explanation prose. Recognized rating shapes, anchored at line start:
///   "Rating: N"                         (assigned to the open answer block,
///                                        or to the next position in order)
///   "Answer i: N/100"
///   "Rating for the <ordinal> model: N"
///   "<ordinal> model answer rating: N"  (also "model's", "/100", same-line prose)
/// plus bare block headers like "First model answer:". Ratings must be
/// integers in [0,100]; out-of-range or surplus ratings fail the parse rather
/// than being clamped or dropped.
ParseOutcome parse_verdict(std::string_view raw, std::size_t k);

/// De-anonymizes a positional parse back to model ids using the permutation
/// that produced the presentation order.
ProblemVerdict assemble_verdict(const AnswerSet& set, JudgeParameter parameter,
                                const ParsedVerdict& parsed, const Permutation& permutation,
                                std::string raw_text, int sample_index);

struct EvaluateOptions {
    std::size_t samples = 1;
    std::uint64_t seed = 0;
    bool shuffle = true;  // seeded answer-order shuffling with recorded permutation
    std::string judge_model = "gpt-4";
    double temperature = 0.0;
    int max_tokens = 2048;
};

inline constexpr std::string_view kFormatReminder = "Reply with 'Rating: N' per answer";

struct SampleFailure {
    std::string task_id;
    JudgeParameter parameter;
    int sample_index = 0;
    std::string reason;
    std::string raw_text;
};

/// Judges one problem for one parameter: per sample, shuffle -> render ->
/// complete -> parse -> de-anonymize. A sample whose reply fails to parse is
/// re-asked once with a format reminder appended to the conversation; if that
/// also fails the sample is dropped and reported through `failures`.
std::vector<ProblemVerdict> evaluate_problem(const corpus::ProblemRecord& problem,
                                             const AnswerSet& set, JudgeParameter parameter,
                                             gateway::LlmGateway& gw,
                                             const EvaluateOptions& options,
                                             std::vector<SampleFailure>* failures = nullptr);

/// Mean / population stdev / count per (model, parameter) over all verdicts.
Scorecard aggregate(const std::vector<ProblemVerdict>& verdicts,
                    std::string run_config_digest = {});

/// Signed mean difference of `subject` against every other model for one
/// parameter, in percentage points rounded to two decimals.
std::map<std::string, double> compute_delta(const Scorecard& card, const std::string& subject,
                                            JudgeParameter parameter);

/// Answer file: one JSON object per line with task_id and answers
/// [{model_id, text}, ...].
std::vector<AnswerSet> load_answer_sets(const std::filesystem::path& path);

}  // namespace mpeval::judge
