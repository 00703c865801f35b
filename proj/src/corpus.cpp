#include "mpeval/corpus.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mpeval/util.hpp"

namespace mpeval::corpus {

using nlohmann::json;

namespace {

constexpr const char* kProblemKeys[] = {"task_id", "prompt", "canonical_solution", "test",
                                        "entry_point"};

[[noreturn]] void malformed(std::size_t line_no, const std::string& why) {
    throw CorpusError(CorpusError::Kind::MalformedRecord,
                      "malformed record at line " + std::to_string(line_no) + ": " + why, line_no);
}

ProblemRecord parse_problem_line(const std::string& line, std::size_t line_no) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        malformed(line_no, e.what());
    }
    if (!j.is_object()) malformed(line_no, "not a JSON object");
    for (const char* key : kProblemKeys) {
        if (!j.contains(key)) malformed(line_no, std::string("missing key '") + key + "'");
        if (!j[key].is_string()) malformed(line_no, std::string("key '") + key + "' is not a string");
    }
    if (j.size() != std::size(kProblemKeys)) {
        for (const auto& [key, _] : j.items()) {
            bool known = false;
            for (const char* k : kProblemKeys) known = known || key == k;
            if (!known) malformed(line_no, "unexpected key '" + key + "'");
        }
    }

    ProblemRecord rec{j["task_id"], j["prompt"], j["canonical_solution"], j["test"],
                      j["entry_point"]};
    if (rec.task_id.empty()) malformed(line_no, "empty task_id");
    if (rec.prompt.empty()) malformed(line_no, "empty prompt");
    if (rec.test.empty()) malformed(line_no, "empty test");
    if (rec.entry_point.empty()) malformed(line_no, "empty entry_point");
    if (rec.prompt.find(rec.entry_point) == std::string::npos) {
        malformed(line_no, "entry_point '" + rec.entry_point + "' does not occur in prompt");
    }
    return rec;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CorpusError(CorpusError::Kind::Io, "cannot open corpus file: " + path.string());
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

}  // namespace

SubsetSpec SubsetSpec::parse(std::string_view text) {
    const auto parts = split(text, ':');
    if (parts[0] == "all" && parts.size() == 1) return all();
    if (parts[0] == "first" && parts.size() == 2) return first_n(std::stoull(parts[1]));
    if (parts[0] == "sample" && parts.size() == 3) {
        return seeded_sample(std::stoull(parts[1]), std::stoull(parts[2]));
    }
    throw CorpusError(CorpusError::Kind::Io,
                      "bad subset spec '" + std::string(text) + "' (want all|first:N|sample:N:SEED)");
}

std::string SubsetSpec::describe() const {
    switch (mode) {
        case Mode::All:
            return "all";
        case Mode::FirstN:
            return "first:" + std::to_string(n);
        case Mode::SeededSample:
            return "sample:" + std::to_string(n) + ":" + std::to_string(seed);
    }
    return "all";
}

const ProblemRecord* ProblemSet::find(std::string_view task_id) const {
    for (const auto& p : problems) {
        if (p.task_id == task_id) return &p;
    }
    return nullptr;
}

ProblemSet load_problems(const std::filesystem::path& path, const SubsetSpec& spec) {
    ProblemSet set;
    set.provenance.corpus_name = path.filename().string();

    std::vector<std::string> lines = read_lines(path);
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        ProblemRecord rec = parse_problem_line(lines[i], i + 1);
        auto [it, inserted] = seen.emplace(rec.task_id, i + 1);
        if (!inserted) {
            throw CorpusError(CorpusError::Kind::DuplicateTaskId,
                              "duplicate task_id '" + rec.task_id + "' at line " +
                                  std::to_string(i + 1) + " (first seen at line " +
                                  std::to_string(it->second) + ")",
                              i + 1);
        }
        set.problems.push_back(std::move(rec));
    }
    return select_subset(set, spec);
}

ProblemSet select_subset(const ProblemSet& set, const SubsetSpec& spec) {
    if (spec.mode != SubsetSpec::Mode::All && spec.n > set.size()) {
        throw CorpusError(CorpusError::Kind::SubsetTooLarge,
                          "subset of " + std::to_string(spec.n) + " exceeds corpus size " +
                              std::to_string(set.size()));
    }

    ProblemSet out;
    out.provenance = set.provenance;
    out.provenance.selection = spec;
    out.provenance.seed = spec.mode == SubsetSpec::Mode::SeededSample ? spec.seed : 0;

    switch (spec.mode) {
        case SubsetSpec::Mode::All:
            out.problems = set.problems;
            break;
        case SubsetSpec::Mode::FirstN:
            out.problems.assign(set.problems.begin(),
                                set.problems.begin() + static_cast<std::ptrdiff_t>(spec.n));
            break;
        case SubsetSpec::Mode::SeededSample: {
            SeededRng rng(spec.seed);
            for (std::size_t idx : rng.sample_indices(set.size(), spec.n)) {
                out.problems.push_back(set.problems[idx]);
            }
            break;
        }
    }
    return out;
}

std::vector<InstructionRow> load_instruction_rows(const std::filesystem::path& path) {
    std::vector<InstructionRow> rows;
    std::vector<std::string> lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const std::size_t line_no = i + 1;
        json j;
        try {
            j = json::parse(lines[i]);
        } catch (const json::exception& e) {
            malformed(line_no, e.what());
        }
        if (!j.is_object()) malformed(line_no, "not a JSON object");
        for (const char* key : {"instruction", "output"}) {
            if (!j.contains(key) || !j[key].is_string()) {
                malformed(line_no, std::string("missing string key '") + key + "'");
            }
        }
        InstructionRow row;
        row.instruction = j["instruction"];
        row.output = j["output"];
        if (row.instruction.empty()) {
            throw CorpusError(CorpusError::Kind::EmptyInstruction,
                              "empty instruction at line " + std::to_string(line_no), line_no);
        }
        for (const auto& [key, value] : j.items()) {
            if (key == "instruction" || key == "output") continue;
            row.meta[key] = value.is_string() ? value.get<std::string>() : value.dump();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void save_instruction_rows(const std::filesystem::path& path,
                           const std::vector<InstructionRow>& rows) {
    std::string out;
    for (const auto& row : rows) {
        json j{{"instruction", row.instruction}, {"output", row.output}};
        for (const auto& [key, value] : row.meta) j[key] = value;
        out += j.dump();
        out += '\n';
    }
    write_file(path, out);
}

std::string serialize(const ProblemSet& set) {
    std::ostringstream out;
    json prov{{"corpus_name", set.provenance.corpus_name},
              {"selection", set.provenance.selection.describe()},
              {"seed", set.provenance.seed}};
    out << prov.dump() << '\n';
    for (const auto& p : set.problems) {
        json j{{"task_id", p.task_id},
               {"prompt", p.prompt},
               {"canonical_solution", p.canonical_solution},
               {"test", p.test},
               {"entry_point", p.entry_point}};
        out << j.dump() << '\n';
    }
    return out.str();
}

}  // namespace mpeval::corpus
