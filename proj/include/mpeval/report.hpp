#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mpeval/exec_eval.hpp"
#include "mpeval/judge.hpp"

namespace mpeval::report {

enum class ReportKind { Scorecard, PassAtK, ProblemSheet };

std::string_view to_string(ReportKind kind);

/// A table with formatted cells. The markdown, csv and structured renderings
/// all serialize this one body; nothing is recomputed per format.
struct Report {
    ReportKind kind = ReportKind::Scorecard;
    std::string title;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::string markdown() const;
    std::string csv() const;
    std::string structured() const;  // JSON
};

/// One row per model, one column per parameter, means to two decimals. With a
/// subject given, each column the subject strictly wins is annotated with its
/// lead over the runner-up.
Report render_scorecard(const judge::Scorecard& card,
                        const std::optional<std::string>& subject = std::nullopt);

/// Aggregate pass@k per model per requested k, as percent to two decimals.
Report render_pass_at_k(const std::vector<exec_eval::ModelPassAtK>& stats,
                        const std::vector<int>& ks);

/// Per-task breakdown, csv only.
std::string pass_at_k_per_task_csv(const std::vector<exec_eval::ModelPassAtK>& stats);

/// Raw ratings of one problem across models and parameters.
Report render_problem_sheet(const std::vector<judge::ProblemVerdict>& verdicts,
                            const std::string& task_id);

}  // namespace mpeval::report
