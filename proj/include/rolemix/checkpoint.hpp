#pragma once

#include "json.hpp"

#include "rolemix/model.hpp"
#include "rolemix/rng.hpp"
#include "rolemix/train_config.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

namespace rolemix {

constexpr int kCheckpointFormatVersion = 1;

// Checkpoint layout: <dir>/manifest.json + <dir>/tensors.bin. The blob holds
// every named parameter as little-endian float32, row-major, in parameter
// declaration order; the manifest records name/shape/offset/byte_length per
// tensor plus config, registry, mode, and an FNV-1a content hash. Save and
// load round-trip bit-exactly.
template <typename Scalar>
void save_checkpoint(const Model<Scalar>& model, const std::filesystem::path& dir,
                     const TrainConfig* train_config = nullptr) {
    static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian");
    std::filesystem::create_directories(dir);

    std::vector<char> blob;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& p : model.named_params()) {
        const Mat<Scalar>& m = p.tensor.value();
        const size_t offset = blob.size();
        const size_t bytes = static_cast<size_t>(m.size()) * sizeof(float);
        blob.resize(offset + bytes);
        auto* out = reinterpret_cast<float*>(blob.data() + offset);
        for (Index i = 0; i < m.size(); ++i) out[i] = static_cast<float>(m.data()[i]);
        tensors.push_back({{"name", p.name},
                           {"shape", {m.rows(), m.cols()}},
                           {"offset", offset},
                           {"byte_length", bytes}});
    }

    char hash_hex[32];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a(blob.data(), blob.size())));

    nlohmann::json manifest{
        {"format_version", kCheckpointFormatVersion},
        {"content_hash", std::string("fnv1a64:") + hash_hex},
        {"mode", to_string(model.mode())},
        {"model", model.config().to_json()},
        {"registry", model.registry().to_json()},
        {"tokenizer", {{"type", "byte"}, {"vocab_size", ByteTokenizer::kVocabSize}}},
        {"tensors", tensors},
    };
    if (train_config) manifest["train"] = train_config->to_json();

    {
        std::ofstream out(dir / "tensors.bin", std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir / "tensors.bin").string());
        out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    }
    {
        std::ofstream out(dir / "manifest.json");
        if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
        out << manifest.dump(2) << "\n";
    }
}

struct CheckpointInfo {
    ModelConfig model_config;
    AdapterMode mode = AdapterMode::hirp;
    IdentityRegistry registry;
    std::optional<TrainConfig> train_config;
};

inline CheckpointInfo read_checkpoint_manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("cannot open " + (dir / "manifest.json").string());
    nlohmann::json manifest = nlohmann::json::parse(in);
    if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion) {
        throw std::runtime_error("checkpoint format version " +
                                 std::to_string(manifest.at("format_version").get<int>()) +
                                 " not supported (expected " + std::to_string(kCheckpointFormatVersion) + ")");
    }
    CheckpointInfo info;
    info.model_config = ModelConfig::from_json(manifest.at("model"));
    info.mode = adapter_mode_from_string(manifest.at("mode").get<std::string>());
    info.registry = IdentityRegistry::from_json(manifest.at("registry"));
    if (manifest.contains("train")) info.train_config = TrainConfig::from_json(manifest.at("train"));
    return info;
}

template <typename Scalar>
Model<Scalar> load_checkpoint(const std::filesystem::path& dir, std::optional<TrainConfig>* train_out = nullptr) {
    static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian");
    std::ifstream min(dir / "manifest.json");
    if (!min) throw std::runtime_error("cannot open " + (dir / "manifest.json").string());
    nlohmann::json manifest = nlohmann::json::parse(min);
    if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion) {
        throw std::runtime_error("checkpoint format version " +
                                 std::to_string(manifest.at("format_version").get<int>()) +
                                 " not supported (expected " + std::to_string(kCheckpointFormatVersion) + ")");
    }

    std::ifstream bin(dir / "tensors.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot open " + (dir / "tensors.bin").string());
    std::vector<char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

    char hash_hex[32];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a(blob.data(), blob.size())));
    const std::string expected = manifest.at("content_hash").get<std::string>();
    if (expected != std::string("fnv1a64:") + hash_hex) {
        throw std::runtime_error("checkpoint hash mismatch: manifest says " + expected + ", blob has fnv1a64:" +
                                 hash_hex + "; refusing to load");
    }

    Model<Scalar> model(ModelConfig::from_json(manifest.at("model")),
                        IdentityRegistry::from_json(manifest.at("registry")),
                        adapter_mode_from_string(manifest.at("mode").get<std::string>()));

    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<Index>>();
        const size_t offset = entry.at("offset").get<size_t>();
        const size_t bytes = entry.at("byte_length").get<size_t>();
        if (offset + bytes > blob.size()) {
            throw std::runtime_error("checkpoint tensor \"" + name + "\" extends past end of blob");
        }
        NamedParam<Scalar>& p = model.param(name);
        Mat<Scalar>& m = p.tensor.value();
        if (shape.size() != 2 || m.rows() != shape[0] || m.cols() != shape[1]) {
            throw std::runtime_error("checkpoint tensor \"" + name + "\" shape mismatch");
        }
        if (bytes != static_cast<size_t>(m.size()) * sizeof(float)) {
            throw std::runtime_error("checkpoint tensor \"" + name + "\" byte length mismatch");
        }
        const auto* in = reinterpret_cast<const float*>(blob.data() + offset);
        for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(in[i]);
    }
    if (train_out) {
        if (manifest.contains("train")) {
            *train_out = TrainConfig::from_json(manifest.at("train"));
        } else {
            train_out->reset();
        }
    }
    return model;
}

}  // namespace rolemix
