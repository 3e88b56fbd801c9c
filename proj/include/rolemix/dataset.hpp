#pragma once

#include "json.hpp"

#include "rolemix/identity.hpp"
#include "rolemix/tokenizer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rolemix {

struct DialogueTurn {
    std::string speaker;  // "A" (identity-bearing) or "B" (interlocutor)
    std::string text;
};

// One JSONL row of the dialogue dataset. Field names are part of the file
// format: id, active_identities, turns (speaker/text), source, annotation.
struct DialogueSample {
    std::string id;
    std::vector<std::string> active_identities;
    std::vector<DialogueTurn> turns;
    std::string source;
    nlohmann::json annotation;  // optional free-form record

    nlohmann::json to_json() const;
    static DialogueSample from_json(const nlohmann::json& j);
};

enum class LoadMode { strict, skip_invalid };

struct LoadIssue {
    int line = 0;
    std::string message;
};

struct LoadResult {
    std::vector<DialogueSample> samples;
    std::vector<LoadIssue> issues;
};

// Parses and schema-validates a JSONL dataset. In strict mode the first bad
// line throws (message carries the line number); in skip mode bad lines are
// collected in `issues`.
LoadResult load_dataset(const std::filesystem::path& path, const IdentityRegistry& registry,
                        LoadMode mode = LoadMode::strict, bool allow_multi_profession = false);

void save_dataset(const std::vector<DialogueSample>& samples, const std::filesystem::path& path);

// Validates one sample against the registry; throws std::invalid_argument.
void validate_sample(const DialogueSample& sample, const IdentityRegistry& registry,
                     bool allow_multi_profession = false);

// Canonical role prompt. Rendering is bit-exact: identities appear in
// registry order, comma-separated, "unspecified" where a category is empty.
std::string role_prompt(const ActivationSet& activation);

struct TrainingExample {
    std::vector<int> ids;
    std::vector<uint8_t> loss_mask;  // true only on speaker-A text tokens (+ closing EOS)
    ActivationSet activation;
    std::string signature;
    std::string sample_id;
};

// SYS + role prompt + alternating speaker blocks + EOS, with the loss mask
// over speaker-A text. Overlong sequences drop oldest turns first; the role
// prompt is never truncated.
TrainingExample build_training_example(const DialogueSample& sample, const IdentityRegistry& registry,
                                       const ByteTokenizer& tokenizer, int max_seq_len,
                                       bool allow_multi_profession = false);

// Prompt prefix for inference: SYS + role prompt + transcript + trailing
// SPK_A, soliciting the next speaker-A reply.
std::vector<int> build_chat_prompt(const ActivationSet& activation, const std::vector<DialogueTurn>& transcript,
                                   const ByteTokenizer& tokenizer);

}  // namespace rolemix
