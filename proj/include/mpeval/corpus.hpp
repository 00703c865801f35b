#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mpeval/errors.hpp"

namespace mpeval::corpus {

/// One benchmark task in the HumanEval record shape: a prompt holding the
/// signature and docstring, the reference solution, a test block defining a
/// check routine, and the entry-point identifier the tests invoke.
struct ProblemRecord {
    std::string task_id;
    std::string prompt;
    std::string canonical_solution;
    std::string test;
    std::string entry_point;

    bool operator==(const ProblemRecord&) const = default;
};

struct SubsetSpec {
    enum class Mode { All, FirstN, SeededSample };

    Mode mode = Mode::All;
    std::size_t n = 0;
    std::uint64_t seed = 0;

    static SubsetSpec all() { return {}; }
    static SubsetSpec first_n(std::size_t n) { return {Mode::FirstN, n, 0}; }
    static SubsetSpec seeded_sample(std::size_t n, std::uint64_t seed) {
        return {Mode::SeededSample, n, seed};
    }

    /// Accepts "all", "first:N" or "sample:N:SEED" (the CLI flag syntax).
    static SubsetSpec parse(std::string_view text);
    std::string describe() const;

    bool operator==(const SubsetSpec&) const = default;
};

struct Provenance {
    std::string corpus_name;
    SubsetSpec selection;
    std::uint64_t seed = 0;

    bool operator==(const Provenance&) const = default;
};

struct ProblemSet {
    std::vector<ProblemRecord> problems;
    Provenance provenance;

    std::size_t size() const { return problems.size(); }
    const ProblemRecord* find(std::string_view task_id) const;

    bool operator==(const ProblemSet&) const = default;
};

/// One Q&A training pair. Keys beyond instruction/output are preserved
/// verbatim in meta.
struct InstructionRow {
    std::string instruction;
    std::string output;
    std::map<std::string, std::string> meta;

    bool operator==(const InstructionRow&) const = default;
};

class CorpusError : public Error {
public:
    enum class Kind { Io, MalformedRecord, DuplicateTaskId, SubsetTooLarge, EmptyInstruction };

    CorpusError(Kind kind, std::string message, std::size_t line_no = 0)
        : Error(std::move(message)), kind(kind), line_no(line_no) {}

    Kind kind;
    std::size_t line_no;
};

/// Loads a line-delimited problem file, validates every record (strict fail
/// on the first malformed one), then applies the selection.
ProblemSet load_problems(const std::filesystem::path& path, const SubsetSpec& spec = SubsetSpec::all());

/// Returns a new set whose provenance.selection = spec. SeededSample is a
/// uniform draw without replacement, reported in draw order.
ProblemSet select_subset(const ProblemSet& set, const SubsetSpec& spec);

std::vector<InstructionRow> load_instruction_rows(const std::filesystem::path& path);
void save_instruction_rows(const std::filesystem::path& path, const std::vector<InstructionRow>& rows);

/// Canonical line-delimited serialization; equal sets serialize byte-equal.
std::string serialize(const ProblemSet& set);

}  // namespace mpeval::corpus
