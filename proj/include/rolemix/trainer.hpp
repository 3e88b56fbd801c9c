#pragma once

#include "rolemix/checkpoint.hpp"
#include "rolemix/dataset.hpp"
#include "rolemix/model.hpp"
#include "rolemix/ops.hpp"
#include "rolemix/rng.hpp"
#include "rolemix/train_config.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace rolemix {

// A micro-batch: examples sharing one activation signature, so the routing
// mask is uniform inside the batch.
struct MicroBatch {
    std::vector<const TrainingExample*> examples;
};

struct StepReport {
    long step = 0;
    double loss = 0.0;
    double lr = 0.0;
    bool applied = false;                      // false: step aborted, no state touched
    std::string diagnostic;
    std::vector<std::string> changed_tensors;  // names of tensors whose bytes changed
    std::map<std::string, std::vector<int>> changed_router_rows;
};

struct TrainResult {
    long steps = 0;
    double final_loss = 0.0;  // pooled per-token NLL over the dataset after training
    std::filesystem::path checkpoint_dir;
    std::filesystem::path metrics_path;
};

// Fine-tuning loop: only adapters of active identities and the gate rows of
// active identities receive optimizer updates; the backbone never does.
// AdamW moments live per parameter row and advance only on rows that update,
// so untouched adapters see no moment drift.
template <typename Scalar>
class Trainer {
public:
    Trainer(Model<Scalar>& model, TrainConfig config) : model_(model), config_(std::move(config)) {
        config_.validate();
        if (model_.mode() != config_.mode) {
            model_.set_mode(config_.mode);  // throws if training already started
        }
        for (const auto& p : model_.named_params()) {
            if (!p.tensor.requires_grad()) continue;
            OptState st;
            st.m = Mat<Scalar>::Zero(p.tensor.rows(), p.tensor.cols());
            st.v = Mat<Scalar>::Zero(p.tensor.rows(), p.tensor.cols());
            st.row_step.assign(static_cast<size_t>(p.tensor.rows()), 0);
            state_.emplace(p.name, std::move(st));
        }
    }

    const TrainConfig& config() const { return config_; }
    long step_count() const { return step_; }

    // One optimizer step over up to grad_accum micro-batches.
    StepReport train_step(std::span<const MicroBatch> micro_batches) {
        StepReport report;
        report.step = step_ + 1;
        report.lr = config_.learning_rate;
        if (micro_batches.empty()) throw std::invalid_argument("train_step: no micro-batches");

        for (const auto& p : model_.named_params()) {
            if (p.tensor.requires_grad()) Tensor<Scalar>(p.tensor).zero_grad();
        }

        // Union of activation sets across the accumulated micro-batches
        // decides which tensors are eligible for this step's update.
        std::set<std::string> eligible_adapter_idents;  // canonical names
        long total_examples = 0;
        for (const auto& mb : micro_batches) total_examples += static_cast<long>(mb.examples.size());
        if (total_examples == 0) throw std::invalid_argument("train_step: empty micro-batches");

        double loss_sum = 0.0;
        for (const auto& mb : micro_batches) {
            if (mb.examples.empty()) continue;
            const std::string& sig = mb.examples.front()->signature;
            for (const auto* ex : mb.examples) {
                if (ex->signature != sig) {
                    throw std::logic_error("train_step: micro-batch mixes activation signatures \"" + sig +
                                           "\" and \"" + ex->signature + "\"");
                }
            }
            for (const auto& ident : mb.examples.front()->activation.active()) {
                eligible_adapter_idents.insert(ident.canonical_name());
            }
            for (const auto* ex : mb.examples) {
                typename Model<Scalar>::ForwardOptions opts;
                opts.activation = &ex->activation;
                std::vector<int> inputs(ex->ids.begin(), ex->ids.end() - 1);
                std::vector<int> targets(ex->ids.begin() + 1, ex->ids.end());
                std::vector<uint8_t> mask(ex->loss_mask.begin() + 1, ex->loss_mask.end());
                auto logits = model_.forward(inputs, opts);
                auto loss = cross_entropy(logits, targets, mask);
                loss_sum += static_cast<double>(loss.item());
                auto scaled = scale(loss, 1.0 / static_cast<double>(total_examples));
                scaled.backward();
            }
        }
        report.loss = loss_sum / static_cast<double>(total_examples);

        if (!std::isfinite(report.loss)) {
            for (const auto& p : model_.named_params()) {
                if (p.tensor.requires_grad()) Tensor<Scalar>(p.tensor).zero_grad();
            }
            report.applied = false;
            report.diagnostic = "non-finite loss " + std::to_string(report.loss) + "; step aborted, state rolled back";
            return report;
        }

        model_.mark_training_started();
        ++step_;
        report.step = step_;
        apply_updates(eligible_adapter_idents, report);
        report.applied = true;
        return report;
    }

    // Full loop. Groups examples by activation signature into micro-batches,
    // shuffles deterministically, accumulates grad_accum micro-batches per
    // optimizer step. Metrics go to `metrics_path` as JSONL if non-empty.
    TrainResult train(const std::vector<DialogueSample>& dataset, const std::filesystem::path& checkpoint_dir,
                      const std::filesystem::path& metrics_path = {}) {
        if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
        ByteTokenizer tokenizer;
        std::vector<TrainingExample> examples;
        examples.reserve(dataset.size());
        for (const auto& s : dataset) {
            examples.push_back(build_training_example(s, model_.registry(), tokenizer, model_.config().max_seq_len,
                                                      config_.allow_multi_profession));
        }

        std::ofstream metrics;
        if (!metrics_path.empty()) {
            if (!metrics_path.parent_path().empty()) std::filesystem::create_directories(metrics_path.parent_path());
            metrics.open(metrics_path);
            if (!metrics) throw std::runtime_error("cannot write metrics file " + metrics_path.string());
        }

        Rng rng(config_.seed);
        bool done = false;
        for (int epoch = 0; epoch < config_.epochs && !done; ++epoch) {
            std::vector<MicroBatch> batches = make_micro_batches(examples, rng);
            size_t at = 0;
            while (at < batches.size()) {
                const size_t take = std::min<size_t>(config_.grad_accum, batches.size() - at);
                StepReport report = train_step(std::span<const MicroBatch>(batches.data() + at, take));
                at += take;
                if (metrics.is_open()) {
                    metrics << nlohmann::json{{"step", report.step},
                                              {"loss", report.loss},
                                              {"lr", report.lr},
                                              {"changed_tensor_count", report.changed_tensors.size()}}
                                   .dump()
                            << "\n";
                }
                if (config_.checkpoint_every > 0 && report.step % config_.checkpoint_every == 0) {
                    save_checkpoint(model_, checkpoint_dir / ("step_" + std::to_string(report.step)), &config_);
                }
                if (config_.max_steps >= 0 && step_ >= config_.max_steps) {
                    done = true;
                    break;
                }
            }
        }

        TrainResult result;
        result.steps = step_;
        result.final_loss = evaluate(examples);
        result.checkpoint_dir = checkpoint_dir / "final";
        result.metrics_path = metrics_path;
        save_checkpoint(model_, result.checkpoint_dir, &config_);
        return result;
    }

    // Pooled per-token NLL over the supervised positions of all examples.
    double evaluate(const std::vector<TrainingExample>& examples) {
        NoGradGuard no_grad;
        double total = 0.0;
        long tokens = 0;
        for (const auto& ex : examples) {
            typename Model<Scalar>::ForwardOptions opts;
            opts.activation = &ex.activation;
            std::vector<int> inputs(ex.ids.begin(), ex.ids.end() - 1);
            std::vector<int> targets(ex.ids.begin() + 1, ex.ids.end());
            std::vector<uint8_t> mask(ex.loss_mask.begin() + 1, ex.loss_mask.end());
            long n = 0;
            for (auto m : mask) n += (m != 0);
            auto loss = cross_entropy(model_.forward(inputs, opts), targets, mask);
            total += static_cast<double>(loss.item()) * static_cast<double>(n);
            tokens += n;
        }
        return tokens > 0 ? total / static_cast<double>(tokens) : 0.0;
    }

    std::vector<MicroBatch> make_micro_batches(const std::vector<TrainingExample>& examples, Rng& rng) const {
        std::vector<size_t> order(examples.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);

        // Stable-bucket by signature in first-appearance order.
        std::vector<std::string> bucket_keys;
        std::map<std::string, std::vector<size_t>> buckets;
        for (size_t idx : order) {
            const std::string& sig = examples[idx].signature;
            if (!buckets.count(sig)) bucket_keys.push_back(sig);
            buckets[sig].push_back(idx);
        }
        std::vector<MicroBatch> batches;
        for (const auto& key : bucket_keys) {
            const auto& members = buckets[key];
            for (size_t at = 0; at < members.size(); at += config_.batch_size) {
                MicroBatch mb;
                for (size_t i = at; i < std::min(members.size(), at + config_.batch_size); ++i) {
                    mb.examples.push_back(&examples[members[i]]);
                }
                batches.push_back(std::move(mb));
            }
        }
        rng.shuffle(batches);
        return batches;
    }

private:
    struct OptState {
        Mat<Scalar> m, v;
        std::vector<long> row_step;
    };

    // Rows of `name` eligible for update this step; empty vector = whole tensor.
    struct UpdatePlan {
        std::vector<std::pair<std::string, std::vector<int>>> entries;
    };

    UpdatePlan plan_updates(const std::set<std::string>& active_idents) const {
        UpdatePlan plan;
        const auto& registry = model_.registry();
        for (const auto& p : model_.named_params()) {
            if (!p.tensor.requires_grad()) continue;
            if (p.kind == ParamKind::adapter_a || p.kind == ParamKind::adapter_b) {
                if (model_.mode() == AdapterMode::monolithic) {
                    plan.entries.push_back({p.name, {}});
                    continue;
                }
                const auto& idents = registry.identities(p.category);
                const std::string canonical = idents[p.identity_id].canonical_name();
                const bool active = model_.mode() == AdapterMode::dense || active_idents.count(canonical) > 0;
                if (active) plan.entries.push_back({p.name, {}});
            } else if (p.kind == ParamKind::router) {
                std::vector<int> rows;
                for (const auto& ident : registry.identities(p.category)) {
                    const bool active =
                        model_.mode() == AdapterMode::dense || active_idents.count(ident.canonical_name()) > 0;
                    if (active) rows.push_back(ident.id);
                }
                if (!rows.empty()) plan.entries.push_back({p.name, std::move(rows)});
            }
        }
        return plan;
    }

    void apply_updates(const std::set<std::string>& active_idents, StepReport& report) {
        UpdatePlan plan = plan_updates(active_idents);
        for (const auto& [name, rows] : plan.entries) {
            NamedParam<Scalar>& p = model_.param(name);
            OptState& st = state_.at(name);
            Mat<Scalar>& theta = p.tensor.value();
            const Mat<Scalar>& g = p.tensor.grad();

            std::vector<int> all_rows;
            const std::vector<int>* row_list = &rows;
            if (rows.empty()) {
                all_rows.resize(static_cast<size_t>(theta.rows()));
                for (Index r = 0; r < theta.rows(); ++r) all_rows[static_cast<size_t>(r)] = static_cast<int>(r);
                row_list = &all_rows;
            }

            bool tensor_changed = false;
            std::vector<int> changed_rows;
            for (int r : *row_list) {
                std::vector<Scalar> before(theta.cols());
                std::memcpy(before.data(), theta.data() + static_cast<size_t>(r) * theta.cols(),
                            sizeof(Scalar) * theta.cols());

                const long t = ++st.row_step[static_cast<size_t>(r)];
                st.m.row(r) = Scalar(config_.beta1) * st.m.row(r) + Scalar(1 - config_.beta1) * g.row(r);
                st.v.row(r) = Scalar(config_.beta2) * st.v.row(r) +
                              Scalar(1 - config_.beta2) * g.row(r).cwiseProduct(g.row(r));
                const Scalar bias1 = Scalar(1) - static_cast<Scalar>(std::pow(config_.beta1, t));
                const Scalar bias2 = Scalar(1) - static_cast<Scalar>(std::pow(config_.beta2, t));
                Eigen::Array<Scalar, 1, Eigen::Dynamic> mhat = st.m.row(r).array() / bias1;
                Eigen::Array<Scalar, 1, Eigen::Dynamic> vhat = st.v.row(r).array() / bias2;
                theta.row(r).array() -=
                    Scalar(config_.learning_rate) *
                    (mhat / (vhat.sqrt() + Scalar(config_.adam_eps)) + Scalar(config_.weight_decay) * theta.row(r).array());

                if (std::memcmp(before.data(), theta.data() + static_cast<size_t>(r) * theta.cols(),
                                sizeof(Scalar) * theta.cols()) != 0) {
                    tensor_changed = true;
                    if (p.kind == ParamKind::router) changed_rows.push_back(r);
                }
            }
            if (tensor_changed) {
                report.changed_tensors.push_back(name);
                if (p.kind == ParamKind::router) report.changed_router_rows[name] = std::move(changed_rows);
            }
        }
    }

    Model<Scalar>& model_;
    TrainConfig config_;
    std::map<std::string, OptState> state_;
    long step_ = 0;
};

}  // namespace rolemix
