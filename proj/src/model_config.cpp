#include "rolemix/model_config.hpp"

#include <stdexcept>

namespace rolemix {

const char* to_string(AttentionRole role) {
    switch (role) {
        case AttentionRole::query: return "query";
        case AttentionRole::key: return "key";
        case AttentionRole::value: return "value";
        case AttentionRole::output: return "output";
    }
    return "?";
}

AttentionRole attention_role_from_string(const std::string& s) {
    if (s == "query") return AttentionRole::query;
    if (s == "key") return AttentionRole::key;
    if (s == "value") return AttentionRole::value;
    if (s == "output") return AttentionRole::output;
    throw std::invalid_argument("unknown attention role \"" + s + "\"");
}

const char* to_string(AdapterMode mode) {
    switch (mode) {
        case AdapterMode::hirp: return "hirp";
        case AdapterMode::dense: return "dense";
        case AdapterMode::monolithic: return "monolithic";
    }
    return "?";
}

AdapterMode adapter_mode_from_string(const std::string& s) {
    if (s == "hirp") return AdapterMode::hirp;
    if (s == "dense") return AdapterMode::dense;
    if (s == "monolithic") return AdapterMode::monolithic;
    throw std::invalid_argument("unknown adapter mode \"" + s + "\" (expected hirp|dense|monolithic)");
}

void ModelConfig::validate(int category_count) const {
    auto positive = [](int v, const char* what) {
        if (v <= 0) throw std::invalid_argument(std::string("model config: ") + what + " must be positive");
    };
    positive(d_model, "d_model");
    positive(n_heads, "n_heads");
    positive(n_blocks, "n_blocks");
    positive(ffn_dim, "ffn_dim");
    positive(max_seq_len, "max_seq_len");
    positive(vocab_size, "vocab_size");
    positive(adapter_rank, "adapter_rank");
    if (adapter_alpha <= 0) throw std::invalid_argument("model config: adapter_alpha must be positive");
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("model config: d_model " + std::to_string(d_model) +
                                    " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (n_blocks < category_count) {
        throw std::invalid_argument("model config: " + std::to_string(n_blocks) + " blocks cannot host " +
                                    std::to_string(category_count) + " identity categories");
    }
    if (precision != "f32" && precision != "f64") {
        throw std::invalid_argument("model config: precision must be f32 or f64, got \"" + precision + "\"");
    }
    if (adapt_sites.empty()) throw std::invalid_argument("model config: adapt_sites is empty");
}

nlohmann::json ModelConfig::to_json() const {
    std::vector<std::string> sites;
    for (auto r : adapt_sites) sites.emplace_back(to_string(r));
    return nlohmann::json{
        {"d_model", d_model},
        {"n_heads", n_heads},
        {"n_blocks", n_blocks},
        {"ffn_dim", ffn_dim},
        {"max_seq_len", max_seq_len},
        {"vocab_size", vocab_size},
        {"adapter_rank", adapter_rank},
        {"adapter_alpha", adapter_alpha},
        {"adapt_sites", sites},
        {"precision", precision},
        {"seed", seed},
    };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.n_blocks = j.at("n_blocks").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.adapter_rank = j.at("adapter_rank").get<int>();
    c.adapter_alpha = j.at("adapter_alpha").get<double>();
    c.adapt_sites.clear();
    for (const auto& s : j.at("adapt_sites")) c.adapt_sites.push_back(attention_role_from_string(s.get<std::string>()));
    c.precision = j.at("precision").get<std::string>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

}  // namespace rolemix
