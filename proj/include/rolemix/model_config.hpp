#pragma once

#include "json.hpp"

#include "rolemix/tokenizer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rolemix {

// Which attention projections carry identity adapters. Query+value is the
// default; the set is configurable.
enum class AttentionRole { query, key, value, output };

const char* to_string(AttentionRole role);
AttentionRole attention_role_from_string(const std::string& s);

// Adapter wiring mode. `hirp` is hierarchical identity routing (per-identity
// banks, hard mask + soft gate); `dense` keeps the banks but activates every
// identity; `monolithic` is a single shared adapter pair per site with no
// routing.
enum class AdapterMode { hirp, dense, monolithic };

const char* to_string(AdapterMode mode);
AdapterMode adapter_mode_from_string(const std::string& s);

struct ModelConfig {
    int d_model = 64;
    int n_heads = 4;
    int n_blocks = 4;
    int ffn_dim = 256;
    int max_seq_len = 512;
    int vocab_size = ByteTokenizer::kVocabSize;
    int adapter_rank = 16;
    double adapter_alpha = 16.0;
    std::vector<AttentionRole> adapt_sites = {AttentionRole::query, AttentionRole::value};
    std::string precision = "f32";  // "f32" | "f64"
    uint64_t seed = 1234;

    double adapter_scale() const { return adapter_alpha / static_cast<double>(adapter_rank); }

    // category_count: blocks must cover every identity category at least once.
    void validate(int category_count) const;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);

    bool operator==(const ModelConfig&) const = default;
};

}  // namespace rolemix
