#include "mpeval/report.hpp"

#include <limits>

#include <json.hpp>

#include "mpeval/util.hpp"

namespace mpeval::report {

using nlohmann::json;

namespace {

std::string csv_cell(const std::string& cell) {
    if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
    std::string quoted = "\"";
    for (char c : cell) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

}  // namespace

std::string_view to_string(ReportKind kind) {
    switch (kind) {
        case ReportKind::Scorecard: return "scorecard";
        case ReportKind::PassAtK: return "pass_at_k";
        case ReportKind::ProblemSheet: return "problem_sheet";
    }
    return {};
}

std::string Report::markdown() const {
    std::string out;
    if (!title.empty()) {
        out += "# " + title + "\n\n";
    }
    auto emit_row = [&out](const std::vector<std::string>& cells) {
        out += '|';
        for (const auto& cell : cells) {
            out += ' ';
            out += cell;
            out += " |";
        }
        out += '\n';
    };
    emit_row(columns);
    out += '|';
    for (std::size_t i = 0; i < columns.size(); ++i) out += " --- |";
    out += '\n';
    for (const auto& row : rows) emit_row(row);
    return out;
}

std::string Report::csv() const {
    std::string out;
    auto emit_row = [&out](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += csv_cell(cells[i]);
        }
        out += '\n';
    };
    emit_row(columns);
    for (const auto& row : rows) emit_row(row);
    return out;
}

std::string Report::structured() const {
    json j{{"kind", to_string(kind)}, {"title", title}, {"columns", columns}, {"rows", rows}};
    return j.dump(2) + "\n";
}

Report render_scorecard(const judge::Scorecard& card, const std::optional<std::string>& subject) {
    if (card.cells.empty()) {
        throw judge::JudgeError(judge::JudgeError::Kind::EmptyRun, "empty scorecard");
    }

    const std::vector<judge::JudgeParameter> params = card.parameters();

    Report report;
    report.kind = ReportKind::Scorecard;
    report.title = "Scorecard";
    report.columns.push_back("Model");
    for (auto param : params) report.columns.emplace_back(promptkit::display_name(param));

    // Lead over the runner-up for every column the subject strictly wins.
    std::map<judge::JudgeParameter, double> leads;
    if (subject) {
        const auto subject_it = card.cells.find(*subject);
        if (subject_it == card.cells.end()) {
            throw judge::JudgeError(judge::JudgeError::Kind::UnknownModel,
                                    "subject '" + *subject + "' is not in the scorecard");
        }
        for (auto param : params) {
            const auto& subject_cells = subject_it->second;
            if (!subject_cells.contains(param)) continue;
            double smallest = std::numeric_limits<double>::infinity();
            bool has_other = false;
            for (const auto& [model, delta] : judge::compute_delta(card, *subject, param)) {
                if (model == *subject) continue;
                has_other = true;
                smallest = std::min(smallest, delta);
            }
            if (has_other && smallest > 0.0) leads[param] = smallest;
        }
    }

    for (const auto& [model, by_param] : card.cells) {
        std::vector<std::string> row{model};
        for (auto param : params) {
            const auto it = by_param.find(param);
            if (it == by_param.end()) {
                row.emplace_back("-");
                continue;
            }
            std::string cell = format_fixed2(it->second.mean);
            if (subject && model == *subject && leads.contains(param)) {
                cell += " (+" + format_fixed2(leads.at(param)) + ")";
            }
            row.push_back(std::move(cell));
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

Report render_pass_at_k(const std::vector<exec_eval::ModelPassAtK>& stats,
                        const std::vector<int>& ks) {
    Report report;
    report.kind = ReportKind::PassAtK;
    report.title = "pass@k (%)";
    report.columns.push_back("Model");
    for (int k : ks) report.columns.push_back("pass@" + std::to_string(k));

    for (const auto& model : stats) {
        std::vector<std::string> row{model.model_id};
        for (int k : ks) {
            const auto it = model.aggregate.find(k);
            row.push_back(it == model.aggregate.end() ? "-"
                                                      : format_fixed2(it->second * 100.0));
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string pass_at_k_per_task_csv(const std::vector<exec_eval::ModelPassAtK>& stats) {
    std::string out = "model,task_id,n,c";
    std::vector<int> ks;
    if (!stats.empty() && !stats.front().per_task.empty()) {
        for (const auto& [k, _] : stats.front().per_task.front().estimates) {
            ks.push_back(k);
            out += ",pass@" + std::to_string(k);
        }
    }
    out += '\n';
    for (const auto& model : stats) {
        for (const auto& stat : model.per_task) {
            out += csv_cell(model.model_id) + ',' + csv_cell(stat.task_id) + ',' +
                   std::to_string(stat.n) + ',' + std::to_string(stat.c);
            for (int k : ks) out += ',' + format_fixed2(stat.estimates.at(k) * 100.0);
            out += '\n';
        }
    }
    return out;
}

Report render_problem_sheet(const std::vector<judge::ProblemVerdict>& verdicts,
                            const std::string& task_id) {
    // model -> parameter -> ratings across samples
    std::map<std::string, std::map<judge::JudgeParameter, std::vector<int>>> sheet;
    for (const auto& verdict : verdicts) {
        if (verdict.task_id != task_id) continue;
        for (const auto& [model, rating] : verdict.ratings) {
            sheet[model][verdict.parameter].push_back(rating);
        }
    }
    if (sheet.empty()) {
        throw judge::JudgeError(judge::JudgeError::Kind::EmptyRun,
                                "no verdicts for task " + task_id);
    }

    std::vector<judge::JudgeParameter> params;
    for (auto param : promptkit::kAllJudgeParameters) {
        for (const auto& [_, by_param] : sheet) {
            if (by_param.contains(param)) {
                params.push_back(param);
                break;
            }
        }
    }

    Report report;
    report.kind = ReportKind::ProblemSheet;
    report.title = "Problem " + task_id;
    report.columns.push_back("Model");
    for (auto param : params) report.columns.emplace_back(promptkit::display_name(param));

    for (const auto& [model, by_param] : sheet) {
        std::vector<std::string> row{model};
        for (auto param : params) {
            const auto it = by_param.find(param);
            if (it == by_param.end()) {
                row.emplace_back("-");
            } else if (it->second.size() == 1) {
                row.push_back(std::to_string(it->second.front()));
            } else {
                double sum = 0.0;
                for (int v : it->second) sum += v;
                row.push_back(format_fixed2(sum / static_cast<double>(it->second.size())));
            }
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace mpeval::report
