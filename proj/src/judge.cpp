#include "mpeval/judge.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <regex>
#include <set>

#include <json.hpp>

#include "mpeval/util.hpp"

namespace mpeval::judge {

using nlohmann::json;

namespace {

constexpr std::string_view kOrdinalAlternation = "first|second|third|fourth|fifth|sixth";

std::size_t ordinal_index(std::string_view word) {
    static constexpr std::string_view kWords[] = {"first", "second", "third",
                                                  "fourth", "fifth",  "sixth"};
    const std::string lower = to_lower(word);
    for (std::size_t i = 0; i < std::size(kWords); ++i) {
        if (lower == kWords[i]) return i;
    }
    return std::size(kWords);
}

// Integer rating token: digits followed by a separator (so "90.5" never
// half-matches as 90 or 9), optional "/100", optional trailing period,
// optional same-line prose.
const std::string kRatingTail =
    R"((-?\d+)(?=$|[\s/]|\.(?:[^0-9]|$))(?:\s*/\s*100)?\s*\.?\s*(.*)$)";

const std::regex& header_rating_re() {
    static const std::regex re(
        R"(^\s*()" + std::string(kOrdinalAlternation) +
            R"()\s+model(?:'s)?\s+answer\s+rating\s*:\s*)" + kRatingTail,
        std::regex::icase);
    return re;
}

const std::regex& rating_for_re() {
    static const std::regex re(
        R"(^\s*rating\s+for\s+the\s+()" + std::string(kOrdinalAlternation) +
            R"()\s+model(?:'s)?(?:\s+answer)?\s*:\s*)" + kRatingTail,
        std::regex::icase);
    return re;
}

const std::regex& answer_index_re() {
    static const std::regex re(
        R"(^\s*answer\s+(\d+)\s*:\s*(-?\d+)(?=[\s/])\s*/\s*100\s*\.?\s*(.*)$)",
        std::regex::icase);
    return re;
}

const std::regex& bare_rating_re() {
    static const std::regex re(R"(^\s*rating\s*:\s*)" + kRatingTail, std::regex::icase);
    return re;
}

const std::regex& block_header_re() {
    static const std::regex re(
        R"(^\s*()" + std::string(kOrdinalAlternation) + R"()\s+model(?:'s)?\s+answer\s*:?\s*$)",
        std::regex::icase);
    return re;
}

const std::regex& explanation_label_re() {
    static const std::regex re(R"(^\s*explanation\s*:\s*(.*)$)", std::regex::icase);
    return re;
}

std::string describe(const ParseFailure& failure) {
    switch (failure.reason) {
        case ParseFailure::Reason::MissingRatings:
            return "missing ratings (found " + std::to_string(failure.found) + ")";
        case ParseFailure::Reason::AmbiguousRatings:
            return "ambiguous ratings: " + failure.detail;
        case ParseFailure::Reason::OutOfRange:
            return "rating out of range: " + std::to_string(failure.value);
    }
    return "parse failure";
}

std::size_t parameter_index(JudgeParameter param) {
    for (std::size_t i = 0; i < promptkit::kAllJudgeParameters.size(); ++i) {
        if (promptkit::kAllJudgeParameters[i] == param) return i;
    }
    return 0;
}

}  // namespace

void AnswerSet::validate() const {
    if (answers.size() < 2 || answers.size() > 6) {
        throw JudgeError(JudgeError::Kind::BadAnswerSet,
                         "answer set for '" + task_id + "' must hold 2..6 answers, has " +
                             std::to_string(answers.size()));
    }
    std::set<std::string> ids;
    for (const auto& answer : answers) {
        if (!ids.insert(answer.model_id).second) {
            throw JudgeError(JudgeError::Kind::BadAnswerSet,
                             "duplicate model_id '" + answer.model_id + "' in answer set for '" +
                                 task_id + "'");
        }
    }
}

bool Permutation::is_identity() const {
    for (std::size_t i = 0; i < mapping.size(); ++i) {
        if (mapping[i] != i) return false;
    }
    return true;
}

Permutation Permutation::identity(std::size_t size, std::uint64_t seed) {
    Permutation perm;
    perm.seed = seed;
    perm.mapping.resize(size);
    std::iota(perm.mapping.begin(), perm.mapping.end(), std::size_t{0});
    return perm;
}

std::vector<std::string> Scorecard::models() const {
    std::vector<std::string> out;
    for (const auto& [model, _] : cells) out.push_back(model);
    return out;
}

std::vector<JudgeParameter> Scorecard::parameters() const {
    std::vector<JudgeParameter> out;
    for (JudgeParameter param : promptkit::kAllJudgeParameters) {
        for (const auto& [_, row] : cells) {
            if (row.contains(param)) {
                out.push_back(param);
                break;
            }
        }
    }
    return out;
}

std::pair<std::vector<std::string>, Permutation> anonymize(const AnswerSet& set,
                                                           std::uint64_t seed) {
    set.validate();
    Permutation perm = Permutation::identity(set.answers.size(), seed);
    SeededRng rng(seed);
    rng.shuffle(perm.mapping);

    std::vector<std::string> texts;
    texts.reserve(set.answers.size());
    for (std::size_t index : perm.mapping) texts.push_back(set.answers[index].text);
    return {std::move(texts), std::move(perm)};
}

ParseOutcome parse_verdict(std::string_view raw, std::size_t k) {
    assert(k >= 2);

    std::vector<std::optional<int>> ratings(k);
    std::vector<std::vector<std::string>> prose(k);
    std::optional<std::size_t> current;

    auto out_of_range = [](int value) {
        return ParseFailure{ParseFailure::Reason::OutOfRange, 0, value, {}};
    };

    // Assigns a rating to a position; surplus or repeated ratings fail.
    auto assign = [&](std::optional<std::size_t> position, int value,
                      const std::string& rest) -> std::optional<ParseFailure> {
        std::size_t pos;
        if (position) {
            pos = *position;
            if (pos >= k) {
                return ParseFailure{ParseFailure::Reason::AmbiguousRatings, 0, 0,
                                    "rating addresses answer " + std::to_string(pos + 1) +
                                        " but only " + std::to_string(k) + " were shown"};
            }
            if (ratings[pos]) {
                return ParseFailure{ParseFailure::Reason::AmbiguousRatings, 0, 0,
                                    "answer " + std::to_string(pos + 1) + " rated twice"};
            }
        } else {
            // Bare "Rating: N": the open block if unrated, else next in order.
            if (current && !ratings[*current]) {
                pos = *current;
            } else {
                std::size_t next = 0;
                while (next < k && ratings[next]) ++next;
                if (next == k) {
                    return ParseFailure{ParseFailure::Reason::AmbiguousRatings, 0, 0,
                                        "more ratings than answers"};
                }
                pos = next;
            }
        }
        ratings[pos] = value;
        current = pos;
        if (!trim(rest).empty()) prose[pos].push_back(trim(rest));
        return std::nullopt;
    };

    std::size_t start = 0;
    const std::string text(raw);
    while (start <= text.size()) {
        const std::size_t nl = text.find('\n', start);
        std::string line = text.substr(start, nl == std::string::npos ? std::string::npos
                                                                      : nl - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        start = nl == std::string::npos ? text.size() + 1 : nl + 1;

        std::smatch m;
        std::optional<ParseFailure> failure;
        if (std::regex_match(line, m, header_rating_re()) ||
            std::regex_match(line, m, rating_for_re())) {
            const int value = std::stoi(m[2]);
            if (value < 0 || value > 100) return out_of_range(value);
            failure = assign(ordinal_index(m[1].str()), value, m[3]);
        } else if (std::regex_match(line, m, answer_index_re())) {
            const std::size_t pos = std::stoul(m[1]);
            const int value = std::stoi(m[2]);
            if (value < 0 || value > 100) return out_of_range(value);
            if (pos == 0) {
                return ParseFailure{ParseFailure::Reason::AmbiguousRatings, 0, 0,
                                    "answer indices are 1-based"};
            }
            failure = assign(pos - 1, value, m[3]);
        } else if (std::regex_match(line, m, bare_rating_re())) {
            const int value = std::stoi(m[1]);
            if (value < 0 || value > 100) return out_of_range(value);
            failure = assign(std::nullopt, value, m[2]);
        } else if (std::regex_match(line, m, block_header_re())) {
            const std::size_t pos = ordinal_index(m[1].str());
            if (pos < k) current = pos;
        } else if (current) {
            std::string body = line;
            if (std::regex_match(line, m, explanation_label_re())) body = m[1];
            body = trim(body);
            if (!body.empty()) prose[*current].push_back(body);
        }
        if (failure) return *failure;
    }

    int found = 0;
    for (const auto& rating : ratings) {
        if (rating) ++found;
    }
    if (found < static_cast<int>(k)) {
        return ParseFailure{ParseFailure::Reason::MissingRatings, found, 0, {}};
    }

    ParsedVerdict parsed;
    for (std::size_t i = 0; i < k; ++i) {
        parsed.ratings.push_back(*ratings[i]);
        std::string joined;
        for (const auto& piece : prose[i]) {
            if (!joined.empty()) joined += '\n';
            joined += piece;
        }
        parsed.explanations.push_back(std::move(joined));
    }
    return parsed;
}

ProblemVerdict assemble_verdict(const AnswerSet& set, JudgeParameter parameter,
                                const ParsedVerdict& parsed, const Permutation& permutation,
                                std::string raw_text, int sample_index) {
    assert(parsed.ratings.size() == set.answers.size());
    assert(permutation.mapping.size() == set.answers.size());

    ProblemVerdict verdict;
    verdict.task_id = set.task_id;
    verdict.parameter = parameter;
    verdict.raw_text = std::move(raw_text);
    verdict.permutation = permutation;
    verdict.sample_index = sample_index;
    for (std::size_t position = 0; position < parsed.ratings.size(); ++position) {
        const ModelAnswer& shown = set.answers[permutation.mapping[position]];
        verdict.ratings[shown.model_id] = parsed.ratings[position];
        verdict.explanations[shown.model_id] = parsed.explanations[position];
    }
    return verdict;
}

std::vector<ProblemVerdict> evaluate_problem(const corpus::ProblemRecord& problem,
                                             const AnswerSet& set, JudgeParameter parameter,
                                             gateway::LlmGateway& gw,
                                             const EvaluateOptions& options,
                                             std::vector<SampleFailure>* failures) {
    set.validate();
    if (options.samples < 1) {
        throw JudgeError(JudgeError::Kind::BadAnswerSet, "samples must be at least 1");
    }
    const std::size_t k = set.answers.size();
    const std::uint64_t base = SeededRng::mix(options.seed, fnv1a64(problem.task_id));

    std::vector<ProblemVerdict> verdicts;
    for (std::size_t sample = 0; sample < options.samples; ++sample) {
        const std::uint64_t sample_seed = SeededRng::mix(
            base, (static_cast<std::uint64_t>(parameter_index(parameter)) << 32) | sample);

        std::vector<std::string> texts;
        Permutation permutation = Permutation::identity(k, sample_seed);
        if (options.shuffle) {
            std::tie(texts, permutation) = anonymize(set, sample_seed);
        } else {
            for (const auto& answer : set.answers) texts.push_back(answer.text);
        }

        const promptkit::PromptText prompt =
            promptkit::render_judge_prompt(parameter, problem, texts, problem.test);

        gateway::CompletionRequest request;
        request.model_name = options.judge_model;
        request.messages = {{promptkit::Role::User, prompt.text}};
        request.temperature = options.temperature;
        request.max_tokens = options.max_tokens;
        request.tag = problem.task_id + "/" + std::string(promptkit::to_string(parameter)) +
                      "/s" + std::to_string(sample);

        auto ask = [&](const gateway::CompletionRequest& req) {
            try {
                return gw.complete(req);
            } catch (const gateway::GatewayError& e) {
                throw JudgeError(JudgeError::Kind::JudgeUnavailable,
                                 "gateway exhausted for " + req.tag + ": " + e.what());
            }
        };

        gateway::CompletionResult reply = ask(request);
        ParseOutcome outcome = parse_verdict(reply.text, k);

        if (std::holds_alternative<ParseFailure>(outcome)) {
            gateway::CompletionRequest reask = request;
            reask.messages.push_back({promptkit::Role::Assistant, reply.text});
            reask.messages.push_back({promptkit::Role::User, std::string(kFormatReminder)});
            reask.tag += "/reask";
            reply = ask(reask);
            outcome = parse_verdict(reply.text, k);
        }

        if (const auto* failure = std::get_if<ParseFailure>(&outcome)) {
            if (failures) {
                failures->push_back({problem.task_id, parameter, static_cast<int>(sample),
                                     describe(*failure), reply.text});
            }
            continue;
        }

        verdicts.push_back(assemble_verdict(set, parameter, std::get<ParsedVerdict>(outcome),
                                            permutation, reply.text,
                                            static_cast<int>(sample)));
    }

    if (verdicts.empty()) {
        throw JudgeError(JudgeError::Kind::AllSamplesFailed,
                         "all " + std::to_string(options.samples) + " samples failed for " +
                             problem.task_id + "/" +
                             std::string(promptkit::to_string(parameter)));
    }
    return verdicts;
}

Scorecard aggregate(const std::vector<ProblemVerdict>& verdicts, std::string run_config_digest) {
    if (verdicts.empty()) {
        throw JudgeError(JudgeError::Kind::EmptyRun, "no verdicts to aggregate");
    }

    std::map<std::string, std::map<JudgeParameter, std::vector<int>>> samples;
    for (const auto& verdict : verdicts) {
        for (const auto& [model, rating] : verdict.ratings) {
            samples[model][verdict.parameter].push_back(rating);
        }
    }

    Scorecard card;
    card.run_config_digest = std::move(run_config_digest);
    for (const auto& [model, by_param] : samples) {
        for (const auto& [param, values] : by_param) {
            ScoreCell cell;
            cell.count = values.size();
            cell.mean = std::accumulate(values.begin(), values.end(), 0.0) /
                        static_cast<double>(values.size());
            double sq = 0.0;
            for (int v : values) sq += (v - cell.mean) * (v - cell.mean);
            cell.stdev = std::sqrt(sq / static_cast<double>(values.size()));
            card.cells[model][param] = cell;
        }
    }
    return card;
}

std::map<std::string, double> compute_delta(const Scorecard& card, const std::string& subject,
                                            JudgeParameter parameter) {
    const auto subject_it = card.cells.find(subject);
    if (subject_it == card.cells.end() || !subject_it->second.contains(parameter)) {
        throw JudgeError(JudgeError::Kind::UnknownModel,
                         "model '" + subject + "' has no scores for parameter '" +
                             std::string(promptkit::to_string(parameter)) + "'");
    }
    const double subject_mean = subject_it->second.at(parameter).mean;

    std::map<std::string, double> deltas;
    for (const auto& [model, by_param] : card.cells) {
        const auto it = by_param.find(parameter);
        if (it == by_param.end()) continue;
        deltas[model] = round2(subject_mean - it->second.mean);
    }
    return deltas;
}

std::vector<AnswerSet> load_answer_sets(const std::filesystem::path& path) {
    const std::string contents = read_file(path);
    std::vector<AnswerSet> sets;
    std::size_t line_no = 0;
    for (const std::string& line : split(contents, '\n')) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
            AnswerSet set;
            set.task_id = j.at("task_id").get<std::string>();
            for (const auto& answer : j.at("answers")) {
                set.answers.push_back({answer.at("model_id").get<std::string>(),
                                       answer.at("text").get<std::string>()});
            }
            set.validate();
            sets.push_back(std::move(set));
        } catch (const json::exception& e) {
            throw JudgeError(JudgeError::Kind::BadAnswerSet,
                             "malformed answer record at line " + std::to_string(line_no) + ": " +
                                 e.what());
        }
    }
    return sets;
}

}  // namespace mpeval::judge
