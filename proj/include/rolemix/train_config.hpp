#pragma once

#include "json.hpp"

#include "rolemix/model_config.hpp"

#include <cstdint>

namespace rolemix {

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 8;
    int grad_accum = 4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    double adam_eps = 1e-8;
    int epochs = 5;
    long max_steps = -1;       // optimizer-step cap; -1 = run all epochs
    long checkpoint_every = 0; // steps between periodic checkpoints; 0 = final only
    uint64_t seed = 42;
    AdapterMode mode = AdapterMode::hirp;
    bool allow_multi_profession = false;

    void validate() const;

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);

    bool operator==(const TrainConfig&) const = default;
};

}  // namespace rolemix
