#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mpeval/corpus.hpp"
#include "mpeval/errors.hpp"
#include "mpeval/llm_gateway.hpp"
#include "mpeval/promptkit.hpp"

namespace mpeval::forge {

enum class RowFlag { Truncated, Empty, Refused };

std::string_view to_string(RowFlag flag);
std::optional<RowFlag> row_flag_from_string(std::string_view name);

struct AugmentedRow {
    corpus::InstructionRow source;
    promptkit::TransformKind kind = promptkit::TransformKind::CoTCode;
    std::string augmented_output;  // raw completion text, untrimmed
    std::set<RowFlag> flags;
    gateway::FinishReason finish_reason = gateway::FinishReason::Stop;
};

class ForgeError : public Error {
public:
    enum class Kind { PartTooSmall, Io };

    ForgeError(Kind kind, std::string message) : Error(std::move(message)), kind(kind) {}

    Kind kind;
};

std::vector<std::string> default_refusal_phrases();

/// Flags derived from a completion: Truncated on finish_reason=length or an
/// odd number of fence markers, Empty on whitespace-only text, Refused on a
/// refusal-phrase match.
std::set<RowFlag> flag_output(std::string_view text, gateway::FinishReason reason,
                              const std::vector<std::string>& refusal_phrases);

struct TransformOptions {
    std::string model = "gpt-3.5-turbo";
    double temperature = 0.7;  // augmentation wants diversity; judging wants 0
    int max_tokens = 2048;
    std::vector<std::string> refusal_phrases = default_refusal_phrases();
};

/// Renders the transformation prompt for the row, completes it through the
/// gateway and attaches quality flags.
AugmentedRow transform_row(const corpus::InstructionRow& row, promptkit::TransformKind kind,
                           gateway::LlmGateway& gw, const TransformOptions& options = {});

/// Transforms rows concurrently (the gateway bounds requests in flight);
/// output order matches input order. The first error aborts the batch.
std::vector<AugmentedRow> transform_rows(const std::vector<corpus::InstructionRow>& rows,
                                         promptkit::TransformKind kind, gateway::LlmGateway& gw,
                                         const TransformOptions& options = {},
                                         std::size_t workers = 4);

struct FilterPolicy {
    std::set<RowFlag> drop_flags;
};

struct FilterResult {
    std::vector<AugmentedRow> kept;  // original order preserved
    std::vector<std::pair<AugmentedRow, std::set<RowFlag>>> dropped;
};

FilterResult filter_rows(std::vector<AugmentedRow> rows, const FilterPolicy& policy);

struct MixturePart {
    std::string dataset_id;
    std::size_t target_count = 0;
};

struct MixtureSpec {
    std::vector<MixturePart> parts;
    std::uint64_t seed = 0;
};

/// Draws target_count rows per part without replacement, then interleaves
/// them with a seeded global shuffle. Output length is the sum of the part
/// targets, exactly.
std::vector<corpus::InstructionRow> compose_mixture(
    const std::map<std::string, std::vector<corpus::InstructionRow>>& datasets,
    const MixtureSpec& spec);

/// Training hyperparameters emitted next to a bundle. Inert metadata: this
/// artifact never consumes them.
struct FinetuneManifest {
    int batch_size = 512;
    double learning_rate = 2e-5;
    int epochs = 3;
    int max_length = 2048;
    int warmup_steps = 30;
    std::string lr_scheduler = "cosine";
    std::string dataset_digest;
};

std::string escape_line(std::string_view serialized);
std::string unescape_line(std::string_view line);

/// Writes dialogues.txt (one escaped special-token dialogue per line, each
/// row as a user/assistant turn under the system preamble) plus
/// manifest.json, and returns the manifest.
FinetuneManifest emit_finetune_bundle(const std::vector<corpus::InstructionRow>& rows,
                                      const std::optional<std::string>& system_preamble,
                                      const std::filesystem::path& out_dir);

void save_augmented_rows(const std::filesystem::path& path,
                         const std::vector<AugmentedRow>& rows);
std::vector<AugmentedRow> load_augmented_rows(const std::filesystem::path& path);

}  // namespace mpeval::forge
