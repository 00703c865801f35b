#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mpeval/report.hpp"
#include "testutil.hpp"

using namespace mpeval;
using judge::JudgeParameter;
using judge::Scorecard;

namespace {

Scorecard table3_card() {
    Scorecard card;
    const auto fill = [&](const std::string& model, double correctness, double efficiency,
                          double readability, double relevance) {
        card.cells[model][JudgeParameter::Correctness] = {correctness, 0.0, 40};
        card.cells[model][JudgeParameter::Efficiency] = {efficiency, 0.0, 40};
        card.cells[model][JudgeParameter::Readability] = {readability, 0.0, 40};
        card.cells[model][JudgeParameter::Relevance] = {relevance, 0.0, 40};
    };
    fill("GPT-3.5-turbo", 81.53, 80.33, 84.30, 82.25);
    fill("GPT-4", 89.50, 89.38, 84.10, 90.93);
    fill("WizardCoder", 60.7, 68.25, 67.1, 67.88);
    fill("Safurai-001", 74.25, 75.45, 85.88, 82.00);
    return card;
}

// Minimal csv reader for the agreement check; understands quoted cells.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(cell));
            cell.clear();
        } else if (c == '\n') {
            row.push_back(std::move(cell));
            cell.clear();
            rows.push_back(std::move(row));
            row.clear();
        } else {
            cell += c;
        }
    }
    return rows;
}

std::vector<std::vector<std::string>> parse_markdown_table(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    for (const std::string& line : split(text, '\n')) {
        if (line.empty() || line[0] != '|') continue;
        if (line.find("---") != std::string::npos) continue;
        std::vector<std::string> cells;
        for (const std::string& piece : split(line.substr(1), '|')) cells.push_back(trim(piece));
        if (!cells.empty() && cells.back().empty()) cells.pop_back();  // trailing pipe
        rows.push_back(std::move(cells));
    }
    return rows;
}

}  // namespace

TEST_CASE("scorecard renders the four-parameter table with the lead annotated") {
    const auto report = report::render_scorecard(table3_card(), std::string("Safurai-001"));

    REQUIRE(report.columns.size() == 5);
    CHECK(report.columns[0] == "Model");
    CHECK(report.columns[3] == "Code Readability");

    const auto* safurai_row = [&]() -> const std::vector<std::string>* {
        for (const auto& row : report.rows) {
            if (row[0] == "Safurai-001") return &row;
        }
        return nullptr;
    }();
    REQUIRE(safurai_row != nullptr);
    CHECK((*safurai_row)[1] == "74.25");
    CHECK((*safurai_row)[2] == "75.45");
    CHECK((*safurai_row)[3] == "85.88 (+1.58)");
    CHECK((*safurai_row)[4] == "82.00");

    // Only strictly-won columns are annotated (relevance ties GPT-4's 90.93 loss).
    for (const auto& row : report.rows) {
        if (row[0] != "Safurai-001") {
            for (const auto& cell : row) CHECK(cell.find('+') == std::string::npos);
        }
    }
}

TEST_CASE("scorecard single cell") {
    Scorecard card;
    card.cells["m"][JudgeParameter::Overall] = {100.0, 0.0, 1};
    const auto report = report::render_scorecard(card);
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0][1] == "100.00");
}

TEST_CASE("empty scorecard is rejected") {
    CHECK_THROWS_AS(report::render_scorecard(Scorecard{}), judge::JudgeError);
}

TEST_CASE("unknown subject is rejected") {
    CHECK_THROWS_AS(report::render_scorecard(table3_card(), std::string("misspelled")),
                    judge::JudgeError);
}

TEST_CASE("problem sheet shows raw ratings per model") {
    std::vector<judge::ProblemVerdict> verdicts;
    const std::map<std::string, std::array<int, 4>> data = {
        {"Safurai-001", {95, 90, 95, 95}},
        {"ChatGPT", {85, 90, 80, 85}},
    };
    const std::array<JudgeParameter, 4> params = {
        JudgeParameter::Correctness, JudgeParameter::Efficiency, JudgeParameter::Readability,
        JudgeParameter::Relevance};
    for (std::size_t i = 0; i < params.size(); ++i) {
        judge::ProblemVerdict verdict;
        verdict.task_id = "HumanEval/0";
        verdict.parameter = params[i];
        for (const auto& [model, ratings] : data) verdict.ratings[model] = ratings[i];
        verdicts.push_back(std::move(verdict));
    }

    const auto report = report::render_problem_sheet(verdicts, "HumanEval/0");
    REQUIRE(report.rows.size() == 2);
    for (const auto& row : report.rows) {
        if (row[0] == "Safurai-001") {
            CHECK(row == std::vector<std::string>{"Safurai-001", "95", "90", "95", "95"});
        } else {
            CHECK(row == std::vector<std::string>{"ChatGPT", "85", "90", "80", "85"});
        }
    }
    CHECK_THROWS_AS(report::render_problem_sheet(verdicts, "HumanEval/999"),
                    judge::JudgeError);
}

TEST_CASE("pass@k table formats aggregates as percent") {
    std::vector<exec_eval::ModelPassAtK> stats(1);
    stats[0].model_id = "Safurai001";
    stats[0].aggregate[1] = 1660.0 / 3280.0;

    const auto report = report::render_pass_at_k(stats, {1});
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0] == std::vector<std::string>{"Safurai001", "50.61"});

    SUBCASE("all-pass renders 100.00") {
        stats[0].aggregate[1] = 1.0;
        const auto full = report::render_pass_at_k(stats, {1});
        CHECK(full.rows[0][1] == "100.00");
    }

    SUBCASE("two k values give two columns") {
        stats[0].aggregate[10] = 0.75;
        const auto two = report::render_pass_at_k(stats, {1, 10});
        CHECK(two.columns == std::vector<std::string>{"Model", "pass@1", "pass@10"});
        CHECK(two.rows[0].size() == 3);
    }
}

TEST_CASE("per-task csv carries the breakdown") {
    std::vector<exec_eval::ModelPassAtK> stats(1);
    stats[0].model_id = "m";
    exec_eval::PassAtKStat stat;
    stat.task_id = "T/0";
    stat.n = 4;
    stat.c = 2;
    stat.estimates[1] = 0.5;
    stats[0].per_task.push_back(stat);
    stats[0].aggregate[1] = 0.5;

    const std::string csv = report::pass_at_k_per_task_csv(stats);
    CHECK(csv.find("model,task_id,n,c,pass@1") != std::string::npos);
    CHECK(csv.find("m,T/0,4,2,50.00") != std::string::npos);
}

TEST_CASE("csv and markdown renderings agree cell for cell") {
    const auto report = report::render_scorecard(table3_card(), std::string("Safurai-001"));
    const auto csv_rows = parse_csv(report.csv());
    const auto md_rows = parse_markdown_table(report.markdown());
    REQUIRE(csv_rows.size() == md_rows.size());
    for (std::size_t r = 0; r < csv_rows.size(); ++r) {
        REQUIRE(csv_rows[r].size() == md_rows[r].size());
        for (std::size_t c = 0; c < csv_rows[r].size(); ++c) {
            CHECK(csv_rows[r][c] == md_rows[r][c]);
        }
    }
}

TEST_CASE("csv quoting handles commas and quotes") {
    report::Report report;
    report.kind = report::ReportKind::Scorecard;
    report.columns = {"Model", "Note"};
    report.rows = {{"weird, inc.", "said \"hi\""}};
    const auto parsed = parse_csv(report.csv());
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[1][0] == "weird, inc.");
    CHECK(parsed[1][1] == "said \"hi\"");
}

TEST_CASE("structured rendering carries the same body") {
    const auto report = report::render_pass_at_k({}, {1});
    const std::string json_text = report.structured();
    CHECK(json_text.find("\"kind\": \"pass_at_k\"") != std::string::npos);
    CHECK(json_text.find("\"columns\"") != std::string::npos);
}
