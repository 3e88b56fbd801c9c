#include "rolemix/train_config.hpp"

#include <stdexcept>

namespace rolemix {

void TrainConfig::validate() const {
    if (learning_rate < 0) throw std::invalid_argument("train config: learning_rate must be >= 0");
    if (batch_size <= 0) throw std::invalid_argument("train config: batch_size must be positive");
    if (grad_accum <= 0) throw std::invalid_argument("train config: grad_accum must be positive");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
        throw std::invalid_argument("train config: betas must lie in [0, 1)");
    }
    if (weight_decay < 0) throw std::invalid_argument("train config: weight_decay must be >= 0");
    if (adam_eps <= 0) throw std::invalid_argument("train config: adam_eps must be positive");
    if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
    return nlohmann::json{
        {"learning_rate", learning_rate},
        {"batch_size", batch_size},
        {"grad_accum", grad_accum},
        {"beta1", beta1},
        {"beta2", beta2},
        {"weight_decay", weight_decay},
        {"adam_eps", adam_eps},
        {"epochs", epochs},
        {"max_steps", max_steps},
        {"checkpoint_every", checkpoint_every},
        {"seed", seed},
        {"mode", to_string(mode)},
        {"allow_multi_profession", allow_multi_profession},
    };
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.grad_accum = j.at("grad_accum").get<int>();
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.epochs = j.at("epochs").get<int>();
    c.max_steps = j.value("max_steps", c.max_steps);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.seed = j.at("seed").get<uint64_t>();
    c.mode = adapter_mode_from_string(j.value("mode", std::string("hirp")));
    c.allow_multi_profession = j.value("allow_multi_profession", false);
    return c;
}

}  // namespace rolemix
