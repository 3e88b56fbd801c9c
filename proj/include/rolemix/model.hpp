#pragma once

#include "rolemix/identity.hpp"
#include "rolemix/model_config.hpp"
#include "rolemix/ops.hpp"
#include "rolemix/rng.hpp"
#include "rolemix/tensor.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rolemix {

enum class ParamKind { backbone, adapter_a, adapter_b, router };

template <typename Scalar>
struct NamedParam {
    std::string name;
    Tensor<Scalar> tensor;
    ParamKind kind = ParamKind::backbone;
    int block = -1;                                            // adapter / router
    AttentionRole role = AttentionRole::query;                 // adapter site
    IdentityCategory category = IdentityCategory::personality; // adapter / router
    int identity_id = -1;                                      // adapter; -1 = monolithic shared
};

// Low-rank pair: A [r x d] Gaussian-initialized, B [d x r] zero-initialized,
// so the weight delta B*A is zero until training moves B.
template <typename Scalar>
struct AdapterPair {
    Tensor<Scalar> a;  // [r x d]
    Tensor<Scalar> b;  // [d x r]
};

template <typename Scalar>
struct RouteInfo {
    int block = -1;
    IdentityCategory hosted = IdentityCategory::personality;
    bool pass_through = false;
    Mat<Scalar> weights;         // [n x 1]; exact zeros at inactive entries
    std::vector<uint8_t> mask;
};

template <typename Scalar>
struct ForwardTrace {
    std::vector<RouteInfo<Scalar>> routes;
};

struct GenerateOptions {
    int max_new_tokens = 64;
    bool greedy = true;
    double temperature = 1.0;
    uint64_t seed = 0;
    bool stop_on_any_special = false;  // otherwise stops only at EOS
};

// Decoder-only transformer with per-identity low-rank adapter banks on the
// configured attention projections and one routing gate per block. Blocks
// host identity categories alternately: block j hosts categories[j mod n].
template <typename Scalar>
class Model {
public:
    struct Projection {
        Tensor<Scalar> weight;  // [out x in]
        Tensor<Scalar> bias;    // [1 x out]
    };
    struct LayerNormParams {
        Tensor<Scalar> gain;
        Tensor<Scalar> bias;
    };
    struct Block {
        LayerNormParams ln1, ln2;
        Projection q, k, v, o;
        Projection ff1, ff2;
        IdentityCategory hosted = IdentityCategory::personality;
        Tensor<Scalar> gate;  // [n x d], zero-init: uniform routing at start
        std::map<AttentionRole, std::vector<AdapterPair<Scalar>>> adapters;
    };

    struct ForwardOptions {
        const ActivationSet* activation = nullptr;                 // null: frozen base model only
        const std::vector<Mat<Scalar>>* fixed_route_weights = nullptr;  // per block, from a prefill
        ForwardTrace<Scalar>* trace = nullptr;
    };

    Model(ModelConfig config, IdentityRegistry registry, AdapterMode mode = AdapterMode::hirp)
        : config_(std::move(config)), registry_(std::move(registry)), mode_(mode) {
        config_.validate(static_cast<int>(registry_.categories().size()));
        block_categories_ = assign_categories(config_.n_blocks, registry_.categories());
        init_params();
    }

    const ModelConfig& config() const { return config_; }
    const IdentityRegistry& registry() const { return registry_; }
    AdapterMode mode() const { return mode_; }
    const std::vector<IdentityCategory>& block_categories() const { return block_categories_; }
    std::vector<Block>& blocks() { return blocks_; }
    const std::vector<Block>& blocks() const { return blocks_; }

    // Mode changes rebuild the adapter banks; refused once training has begun.
    void set_mode(AdapterMode mode) {
        if (training_started_) {
            throw std::logic_error("set_mode: refusing to switch adapter mode after training started");
        }
        if (mode == mode_) return;
        mode_ = mode;
        reinit_adapters();
    }
    void mark_training_started() { training_started_ = true; }
    bool training_started() const { return training_started_; }

    std::vector<NamedParam<Scalar>>& named_params() { return params_; }
    const std::vector<NamedParam<Scalar>>& named_params() const { return params_; }

    const NamedParam<Scalar>& param(const std::string& name) const {
        for (const auto& p : params_) {
            if (p.name == name) return p;
        }
        throw std::out_of_range("no parameter named \"" + name + "\"");
    }
    NamedParam<Scalar>& param(const std::string& name) {
        return const_cast<NamedParam<Scalar>&>(std::as_const(*this).param(name));
    }

    std::vector<std::pair<int, AttentionRole>> adapted_sites() const {
        std::vector<std::pair<int, AttentionRole>> out;
        for (int j = 0; j < config_.n_blocks; ++j) {
            for (auto role : config_.adapt_sites) out.emplace_back(j, role);
        }
        return out;
    }

    // Trainable adapter parameter count; 2 * sites * d * r in monolithic mode.
    long adapter_param_count() const {
        long total = 0;
        for (const auto& p : params_) {
            if (p.kind == ParamKind::adapter_a || p.kind == ParamKind::adapter_b) total += p.tensor.size();
        }
        return total;
    }

    // Routing for one block from pooled features. Exposed for tests; forward
    // uses exactly this path. Returns a graph tensor [n x 1].
    Tensor<Scalar> route(int block_index, const Tensor<Scalar>& pooled, const std::vector<uint8_t>& mask) {
        Block& blk = blocks_[block_index];
        bool any_active = false;
        for (auto m : mask) any_active = any_active || (m != 0);
        if (!any_active) {
            return Tensor<Scalar>::constant(Mat<Scalar>::Zero(blk.gate.rows(), 1));
        }
        auto energies = matmul(blk.gate, transpose(pooled));  // [n x 1]
        return masked_softmax(sigmoid(energies), mask, EmptyActive::all_zero);
    }

    Tensor<Scalar> forward(std::span<const int> ids, const ForwardOptions& opts = {}) {
        check_ids(ids);
        const Index t_len = static_cast<Index>(ids.size());

        std::vector<int> positions(ids.size());
        for (size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<int>(i);
        auto x = add(embedding_rows(tok_emb_.tensor, std::vector<int>(ids.begin(), ids.end())),
                     embedding_rows(pos_emb_.tensor, positions));

        for (int j = 0; j < config_.n_blocks; ++j) {
            Block& blk = blocks_[j];

            // Per-sequence routing weights for this block.
            Tensor<Scalar> weights;
            std::vector<uint8_t> mask;
            bool routed = opts.activation != nullptr && mode_ != AdapterMode::monolithic;
            bool pass_through = false;
            if (routed) {
                mask = block_mask(j, *opts.activation);
                pass_through = std::none_of(mask.begin(), mask.end(), [](uint8_t m) { return m != 0; });
                if (opts.fixed_route_weights) {
                    const Mat<Scalar>& w = (*opts.fixed_route_weights)[j];
                    weights = Tensor<Scalar>::constant(w);
                    pass_through = pass_through || w.size() == 0 || w.cwiseAbs().maxCoeff() == Scalar(0);
                } else if (!pass_through) {
                    weights = route(j, rows_mean(x), mask);
                }
                if (opts.trace) {
                    RouteInfo<Scalar> info;
                    info.block = j;
                    info.hosted = blk.hosted;
                    info.pass_through = pass_through;
                    info.mask = mask;
                    info.weights = pass_through ? Mat<Scalar>::Zero(blk.gate.rows(), 1) : weights.value();
                    opts.trace->routes.push_back(info);
                }
            }
            const bool apply_adapters =
                (mode_ == AdapterMode::monolithic && opts.activation != nullptr) || (routed && !pass_through);

            auto xn = layer_norm(x, blk.ln1.gain, blk.ln1.bias);
            auto q = project(xn, blk.q);
            auto k = project(xn, blk.k);
            auto v = project(xn, blk.v);
            if (apply_adapters) {
                if (has_site(AttentionRole::query)) q = add(q, site_delta(blk, AttentionRole::query, xn, weights, mask));
                if (has_site(AttentionRole::key)) k = add(k, site_delta(blk, AttentionRole::key, xn, weights, mask));
                if (has_site(AttentionRole::value)) v = add(v, site_delta(blk, AttentionRole::value, xn, weights, mask));
            }

            const int head_dim = config_.d_model / config_.n_heads;
            std::vector<Tensor<Scalar>> heads;
            heads.reserve(config_.n_heads);
            for (int h = 0; h < config_.n_heads; ++h) {
                auto qh = slice_cols(q, h * head_dim, head_dim);
                auto kh = slice_cols(k, h * head_dim, head_dim);
                auto vh = slice_cols(v, h * head_dim, head_dim);
                auto scores = scale(matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(head_dim)));
                auto attn = causal_row_softmax(scores);
                heads.push_back(matmul(attn, vh));
            }
            auto ctx = concat_cols(heads);
            auto attn_out = project(ctx, blk.o);
            if (apply_adapters && has_site(AttentionRole::output)) {
                attn_out = add(attn_out, site_delta(blk, AttentionRole::output, ctx, weights, mask));
            }
            x = add(x, attn_out);

            auto xn2 = layer_norm(x, blk.ln2.gain, blk.ln2.bias);
            auto ff = project(gelu(project(xn2, blk.ff1)), blk.ff2);
            x = add(x, ff);
        }

        auto xf = layer_norm(x, ln_f_.gain, ln_f_.bias);
        auto logits = matmul_nt(xf, lm_head_.tensor);
        (void)t_len;
        return logits;
    }

    // Verification path: materializes W0 + sum_k w_k*scale*B_k*A_k as a dense
    // matrix per adapted site and runs a plain value-only forward. Kept
    // deliberately separate from forward(); the two are cross-checked.
    Mat<Scalar> forward_merged(std::span<const int> ids, const ActivationSet& activation) {
        check_ids(ids);
        const Index t_len = static_cast<Index>(ids.size());
        const Index d = config_.d_model;

        Mat<Scalar> x(t_len, d);
        for (Index t = 0; t < t_len; ++t) {
            x.row(t) = tok_emb_.tensor.value().row(ids[t]) + pos_emb_.tensor.value().row(t);
        }

        for (int j = 0; j < config_.n_blocks; ++j) {
            Block& blk = blocks_[j];

            Mat<Scalar> route_w;  // [n x 1]
            bool apply = false;
            if (mode_ == AdapterMode::monolithic) {
                apply = true;
            } else {
                std::vector<uint8_t> mask = block_mask(j, activation);
                std::vector<Index> active;
                for (Index i = 0; i < static_cast<Index>(mask.size()); ++i) {
                    if (mask[i]) active.push_back(i);
                }
                if (!active.empty()) {
                    apply = true;
                    Mat<Scalar> pooled = x.colwise().mean();  // [1 x d]
                    route_w = Mat<Scalar>::Zero(blk.gate.rows(), 1);
                    Scalar mx = std::numeric_limits<Scalar>::lowest();
                    std::vector<Scalar> sig(active.size());
                    for (size_t a = 0; a < active.size(); ++a) {
                        Scalar e = blk.gate.value().row(active[a]).dot(pooled.row(0));
                        sig[a] = detail::stable_sigmoid(e);
                        mx = std::max(mx, sig[a]);
                    }
                    Scalar denom = Scalar(0);
                    for (size_t a = 0; a < active.size(); ++a) {
                        sig[a] = std::exp(sig[a] - mx);
                        denom += sig[a];
                    }
                    for (size_t a = 0; a < active.size(); ++a) route_w(active[a], 0) = sig[a] / denom;
                }
            }

            auto merged = [&](AttentionRole role, const Projection& base) -> Mat<Scalar> {
                Mat<Scalar> w = base.weight.value();
                if (apply && has_site(role)) {
                    const auto& bank = blk.adapters.at(role);
                    const Scalar s = static_cast<Scalar>(config_.adapter_scale());
                    if (mode_ == AdapterMode::monolithic) {
                        w += s * (bank[0].b.value() * bank[0].a.value());
                    } else {
                        for (size_t kk = 0; kk < bank.size(); ++kk) {
                            Scalar wk = route_w(static_cast<Index>(kk), 0);
                            if (wk != Scalar(0)) w += (wk * s) * (bank[kk].b.value() * bank[kk].a.value());
                        }
                    }
                }
                return w;
            };

            Mat<Scalar> xn = plain_layer_norm(x, blk.ln1);
            Mat<Scalar> q = (xn * merged(AttentionRole::query, blk.q).transpose()).rowwise() + blk.q.bias.value().row(0);
            Mat<Scalar> k = (xn * merged(AttentionRole::key, blk.k).transpose()).rowwise() + blk.k.bias.value().row(0);
            Mat<Scalar> v = (xn * merged(AttentionRole::value, blk.v).transpose()).rowwise() + blk.v.bias.value().row(0);

            const int head_dim = config_.d_model / config_.n_heads;
            Mat<Scalar> ctx(t_len, d);
            for (int h = 0; h < config_.n_heads; ++h) {
                Mat<Scalar> qh = q.middleCols(h * head_dim, head_dim);
                Mat<Scalar> kh = k.middleCols(h * head_dim, head_dim);
                Mat<Scalar> vh = v.middleCols(h * head_dim, head_dim);
                Mat<Scalar> scores = qh * kh.transpose() / static_cast<Scalar>(std::sqrt(double(head_dim)));
                Mat<Scalar> attn = Mat<Scalar>::Zero(t_len, t_len);
                for (Index t = 0; t < t_len; ++t) {
                    Scalar mx = scores(t, 0);
                    for (Index c = 1; c <= t; ++c) mx = std::max(mx, scores(t, c));
                    Scalar sum = Scalar(0);
                    for (Index c = 0; c <= t; ++c) {
                        attn(t, c) = std::exp(scores(t, c) - mx);
                        sum += attn(t, c);
                    }
                    for (Index c = 0; c <= t; ++c) attn(t, c) /= sum;
                }
                ctx.middleCols(h * head_dim, head_dim) = attn * vh;
            }
            Mat<Scalar> attn_out =
                (ctx * merged(AttentionRole::output, blk.o).transpose()).rowwise() + blk.o.bias.value().row(0);
            x += attn_out;

            Mat<Scalar> xn2 = plain_layer_norm(x, blk.ln2);
            Mat<Scalar> h1 = (xn2 * blk.ff1.weight.value().transpose()).rowwise() + blk.ff1.bias.value().row(0);
            for (Index i = 0; i < h1.size(); ++i) {
                Scalar u = h1.data()[i];
                h1.data()[i] = Scalar(0.5) * u *
                               (Scalar(1) + std::tanh(Scalar(0.7978845608028654) *
                                                      (u + Scalar(0.044715) * u * u * u)));
            }
            Mat<Scalar> h2 = (h1 * blk.ff2.weight.value().transpose()).rowwise() + blk.ff2.bias.value().row(0);
            x += h2;
        }

        Mat<Scalar> xf = plain_layer_norm(x, ln_f_);
        return xf * lm_head_.tensor.value().transpose();
    }

    // Autoregressive continuation. Routing weights are computed once over the
    // prompt and held fixed while decoding; greedy mode is deterministic.
    std::vector<int> generate(std::span<const int> prompt, const ActivationSet* activation,
                              const GenerateOptions& opts) {
        if (prompt.empty()) throw std::invalid_argument("generate: empty prompt");
        NoGradGuard no_grad;

        std::vector<Mat<Scalar>> fixed;
        ForwardOptions fopts;
        fopts.activation = activation;
        if (activation && mode_ != AdapterMode::monolithic) {
            ForwardTrace<Scalar> trace;
            ForwardOptions prefill;
            prefill.activation = activation;
            prefill.trace = &trace;
            forward(prompt, prefill);
            fixed.assign(config_.n_blocks, Mat<Scalar>());
            for (const auto& r : trace.routes) fixed[r.block] = r.weights;
            fopts.fixed_route_weights = &fixed;
        }

        Rng rng(opts.seed);
        std::vector<int> ids(prompt.begin(), prompt.end());
        std::vector<int> generated;
        for (int step = 0; step < opts.max_new_tokens; ++step) {
            if (static_cast<int>(ids.size()) >= config_.max_seq_len) break;
            auto logits = forward(ids, fopts);
            int next = sample_from_row(logits.value().row(logits.rows() - 1), rng, opts);
            if (next == ByteTokenizer::kEos) break;
            if (opts.stop_on_any_special && ByteTokenizer::is_special(next)) break;
            ids.push_back(next);
            generated.push_back(next);
        }
        return generated;
    }

private:
    void check_ids(std::span<const int> ids) const {
        if (ids.empty()) throw std::invalid_argument("forward: empty sequence");
        if (static_cast<int>(ids.size()) > config_.max_seq_len) {
            throw std::length_error("forward: sequence length " + std::to_string(ids.size()) +
                                    " exceeds max " + std::to_string(config_.max_seq_len));
        }
        for (int id : ids) {
            if (id < 0 || id >= config_.vocab_size) {
                throw std::out_of_range("forward: token id " + std::to_string(id) + " outside vocab");
            }
        }
    }

    bool has_site(AttentionRole role) const {
        for (auto r : config_.adapt_sites) {
            if (r == role) return true;
        }
        return false;
    }

    std::vector<uint8_t> block_mask(int block_index, const ActivationSet& activation) const {
        if (mode_ == AdapterMode::dense) {
            return std::vector<uint8_t>(registry_.count(block_categories_[block_index]), 1);
        }
        return activation.mask(block_categories_[block_index]);
    }

    Tensor<Scalar> project(const Tensor<Scalar>& x, const Projection& p) {
        return add_rowvec(matmul_nt(x, p.weight), p.bias);
    }

    // Low-rank bypass: sum over active identities of w_k*scale*(x A_k^T) B_k^T.
    // Inactive identities are skipped outright, so their parameters cannot
    // perturb the output even at the last bit.
    Tensor<Scalar> site_delta(Block& blk, AttentionRole role, const Tensor<Scalar>& x,
                              const Tensor<Scalar>& weights, const std::vector<uint8_t>& mask) {
        auto& bank = blk.adapters.at(role);
        const double s = config_.adapter_scale();
        if (mode_ == AdapterMode::monolithic) {
            return scale(matmul_nt(matmul_nt(x, bank[0].a), bank[0].b), s);
        }
        Tensor<Scalar> total;
        for (size_t k = 0; k < bank.size(); ++k) {
            if (!mask[k]) continue;
            auto contrib = scale(scale_by_entry(matmul_nt(matmul_nt(x, bank[k].a), bank[k].b), weights,
                                                static_cast<Index>(k)),
                                 s);
            total = total.defined() ? add(total, contrib) : contrib;
        }
        return total;  // callers only reach here with at least one active identity
    }

    Mat<Scalar> plain_layer_norm(const Mat<Scalar>& x, const LayerNormParams& ln) const {
        Mat<Scalar> out(x.rows(), x.cols());
        for (Index r = 0; r < x.rows(); ++r) {
            Scalar mean = x.row(r).mean();
            Scalar var = (x.row(r).array() - mean).square().mean();
            Scalar inv = Scalar(1) / std::sqrt(var + Scalar(1e-5));
            out.row(r) = ((x.row(r).array() - mean) * inv) * ln.gain.value().row(0).array() +
                         ln.bias.value().row(0).array();
        }
        return out;
    }

    int sample_from_row(const Eigen::Ref<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>& row, Rng& rng,
                        const GenerateOptions& opts) const {
        if (opts.greedy) {
            Index best = 0;
            for (Index i = 1; i < row.size(); ++i) {
                if (row(i) > row(best)) best = i;
            }
            return static_cast<int>(best);
        }
        const double temp = std::max(opts.temperature, 1e-6);
        double mx = static_cast<double>(row.maxCoeff());
        std::vector<double> probs(row.size());
        double sum = 0.0;
        for (Index i = 0; i < row.size(); ++i) {
            probs[i] = std::exp((static_cast<double>(row(i)) - mx) / temp);
            sum += probs[i];
        }
        double u = rng.uniform() * sum;
        double acc = 0.0;
        for (Index i = 0; i < row.size(); ++i) {
            acc += probs[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(row.size() - 1);
    }

    Tensor<Scalar> make_param(const std::string& name, Mat<Scalar> value, ParamKind kind, bool trainable,
                              int block = -1, AttentionRole role = AttentionRole::query,
                              IdentityCategory category = IdentityCategory::personality, int identity_id = -1) {
        Tensor<Scalar> t(std::move(value), trainable);
        NamedParam<Scalar> p;
        p.name = name;
        p.tensor = t;
        p.kind = kind;
        p.block = block;
        p.role = role;
        p.category = category;
        p.identity_id = identity_id;
        params_.push_back(std::move(p));
        return t;
    }

    Mat<Scalar> gaussian_mat(Rng& rng, Index r, Index c, double stddev) {
        Mat<Scalar> m(r, c);
        for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(rng.gaussian(0.0, stddev));
        return m;
    }

    void init_params() {
        Rng rng(config_.seed);
        const Index d = config_.d_model;
        const Index v = config_.vocab_size;

        tok_emb_.name = "backbone.tok_emb";
        tok_emb_.tensor = make_param(tok_emb_.name, gaussian_mat(rng, v, d, 0.02), ParamKind::backbone, false);
        pos_emb_.name = "backbone.pos_emb";
        pos_emb_.tensor =
            make_param(pos_emb_.name, gaussian_mat(rng, config_.max_seq_len, d, 0.02), ParamKind::backbone, false);

        blocks_.resize(config_.n_blocks);
        for (int j = 0; j < config_.n_blocks; ++j) {
            Block& blk = blocks_[j];
            blk.hosted = block_categories_[j];
            const std::string prefix = "backbone.block" + std::to_string(j) + ".";
            auto ln = [&](const std::string& tag) {
                LayerNormParams p;
                p.gain = make_param(prefix + tag + ".gain", Mat<Scalar>::Ones(1, d), ParamKind::backbone, false);
                p.bias = make_param(prefix + tag + ".bias", Mat<Scalar>::Zero(1, d), ParamKind::backbone, false);
                return p;
            };
            auto proj = [&](const std::string& tag, Index out_dim, Index in_dim) {
                Projection p;
                p.weight = make_param(prefix + tag + ".weight", gaussian_mat(rng, out_dim, in_dim, 0.02),
                                      ParamKind::backbone, false);
                p.bias = make_param(prefix + tag + ".bias", Mat<Scalar>::Zero(1, out_dim), ParamKind::backbone, false);
                return p;
            };
            blk.ln1 = ln("ln1");
            blk.q = proj("attn.query", d, d);
            blk.k = proj("attn.key", d, d);
            blk.v = proj("attn.value", d, d);
            blk.o = proj("attn.output", d, d);
            blk.ln2 = ln("ln2");
            blk.ff1 = proj("ffn.w1", config_.ffn_dim, d);
            blk.ff2 = proj("ffn.w2", d, config_.ffn_dim);
        }

        ln_f_.gain = make_param("backbone.ln_f.gain", Mat<Scalar>::Ones(1, d), ParamKind::backbone, false);
        ln_f_.bias = make_param("backbone.ln_f.bias", Mat<Scalar>::Zero(1, d), ParamKind::backbone, false);
        lm_head_.name = "backbone.lm_head";
        lm_head_.tensor = make_param(lm_head_.name, gaussian_mat(rng, v, d, 0.02), ParamKind::backbone, false);

        init_adapters(rng);
    }

    void init_adapters(Rng& rng) {
        const Index d = config_.d_model;
        const Index r = config_.adapter_rank;
        for (int j = 0; j < config_.n_blocks; ++j) {
            Block& blk = blocks_[j];
            blk.adapters.clear();
            const IdentityCategory cat = block_categories_[j];
            const auto& idents = registry_.identities(cat);
            const std::string bprefix = "adapter.block" + std::to_string(j) + ".";

            if (mode_ != AdapterMode::monolithic) {
                blk.gate = make_param("router.block" + std::to_string(j) + ".gate",
                                      Mat<Scalar>::Zero(static_cast<Index>(idents.size()), d), ParamKind::router,
                                      true, j, AttentionRole::query, cat);
            }
            for (auto role : config_.adapt_sites) {
                auto& bank = blk.adapters[role];
                if (mode_ == AdapterMode::monolithic) {
                    AdapterPair<Scalar> pair;
                    const std::string p = bprefix + to_string(role) + ".shared.";
                    pair.a = make_param(p + "A", gaussian_mat(rng, r, d, 0.02), ParamKind::adapter_a, true, j, role,
                                        cat, -1);
                    pair.b = make_param(p + "B", Mat<Scalar>::Zero(d, r), ParamKind::adapter_b, true, j, role, cat, -1);
                    bank.push_back(pair);
                } else {
                    for (const auto& ident : idents) {
                        AdapterPair<Scalar> pair;
                        const std::string p = bprefix + to_string(role) + "." + ident.canonical_name() + ".";
                        pair.a = make_param(p + "A", gaussian_mat(rng, r, d, 0.02), ParamKind::adapter_a, true, j,
                                            role, cat, ident.id);
                        pair.b = make_param(p + "B", Mat<Scalar>::Zero(d, r), ParamKind::adapter_b, true, j, role,
                                            cat, ident.id);
                        bank.push_back(pair);
                    }
                }
            }
        }
    }

    // Rebuilds adapters and routers after a mode switch, reusing a seed
    // stream offset so the backbone stays untouched.
    void reinit_adapters() {
        // Drop old adapter/router params from the registry, keep backbone.
        std::vector<NamedParam<Scalar>> kept;
        for (auto& p : params_) {
            if (p.kind == ParamKind::backbone) kept.push_back(p);
        }
        params_ = std::move(kept);
        for (auto& blk : blocks_) blk.gate = Tensor<Scalar>();
        Rng rng(config_.seed ^ 0x9e3779b97f4a7c15ULL);
        init_adapters(rng);
    }

    ModelConfig config_;
    IdentityRegistry registry_;
    AdapterMode mode_;
    bool training_started_ = false;
    std::vector<IdentityCategory> block_categories_;

    struct NamedTensor {
        std::string name;
        Tensor<Scalar> tensor;
    };
    NamedTensor tok_emb_, pos_emb_, lm_head_;
    LayerNormParams ln_f_;
    std::vector<Block> blocks_;
    std::vector<NamedParam<Scalar>> params_;
};

}  // namespace rolemix
