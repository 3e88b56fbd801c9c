#include "doctest.h"

#include "rolemix/model.hpp"
#include "rolemix/rng.hpp"
#include "rolemix/tokenizer.hpp"

#include <cstring>

using namespace rolemix;

namespace {

ModelConfig tiny_config(uint64_t seed = 7) {
    ModelConfig c;
    c.d_model = 16;
    c.n_heads = 2;
    c.n_blocks = 2;
    c.ffn_dim = 32;
    c.max_seq_len = 32;
    c.adapter_rank = 2;
    c.adapter_alpha = 2.0;
    c.seed = seed;
    return c;
}

IdentityRegistry tiny_registry() { return IdentityRegistry::make({"openness"}, {"doctor"}); }

template <typename S>
bool bitwise_equal(const Mat<S>& a, const Mat<S>& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(S) * a.size()) == 0;
}

}  // namespace

TEST_CASE("tokenizer round trips empty, ascii, and random utf-8") {
    ByteTokenizer tok;
    CHECK(tok.tokenize("").empty());
    CHECK(tok.detokenize(std::vector<int>{}) == "");

    auto abc = tok.tokenize("abc");
    CHECK(abc == std::vector<int>{97, 98, 99});
    CHECK(tok.detokenize(abc) == "abc");

    // Property: 1000 random byte strings (all valid as raw bytes) round trip.
    Rng rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
        std::string s;
        const size_t len = rng.below(64);
        for (size_t i = 0; i < len; ++i) s.push_back(static_cast<char>(rng.below(256)));
        CHECK(tok.detokenize(tok.tokenize(s)) == s);
    }

    // Specials are stripped on decode, never produced by encode.
    std::vector<int> with_specials{ByteTokenizer::kSystem, 104, 105, ByteTokenizer::kEos};
    CHECK(tok.detokenize(with_specials) == "hi");
    CHECK_THROWS_AS(tok.detokenize(std::vector<int>{262}), std::out_of_range);
    CHECK_THROWS_AS(tok.detokenize(std::vector<int>{-1}), std::out_of_range);
}

TEST_CASE("registry and activation basics") {
    auto reg = IdentityRegistry::default_registry();
    CHECK(reg.count(IdentityCategory::personality) == 10);
    CHECK(reg.count(IdentityCategory::profession) == 3);
    CHECK(reg.resolve("high-agreeableness").polarity == Polarity::high);
    CHECK(reg.resolve("doctor").category == IdentityCategory::profession);
    CHECK_THROWS_AS(reg.resolve("astronaut"), std::invalid_argument);

    std::vector<std::string> names{"high-agreeableness", "doctor"};
    auto act = ActivationSet::from_names(reg, names);
    CHECK(act.active().size() == 2);
    CHECK(act.mask(IdentityCategory::personality)[0] == 1);
    int active_pers = 0;
    for (auto m : act.mask(IdentityCategory::personality)) active_pers += m;
    CHECK(active_pers == 1);
    CHECK(act.mask(IdentityCategory::profession)[1] == 1);
    CHECK(act.signature() == "doctor+high-agreeableness");

    std::vector<std::string> both_polarities{"high-openness", "low-openness"};
    CHECK_THROWS_AS(ActivationSet::from_names(reg, both_polarities), std::invalid_argument);
    std::vector<std::string> two_prof{"doctor", "artist"};
    CHECK_THROWS_AS(ActivationSet::from_names(reg, two_prof), std::invalid_argument);
    CHECK(ActivationSet::from_names(reg, two_prof, true).active().size() == 2);

    std::vector<std::string> prof_only{"doctor"};
    auto prof_act = ActivationSet::from_names(reg, prof_only);
    CHECK(prof_act.category_empty(IdentityCategory::personality));
    CHECK_FALSE(prof_act.category_empty(IdentityCategory::profession));
}

TEST_CASE("category assignment alternates and validates coverage") {
    std::vector<IdentityCategory> cats{IdentityCategory::personality, IdentityCategory::profession};
    auto four = assign_categories(4, cats);
    CHECK(four == std::vector<IdentityCategory>{IdentityCategory::personality, IdentityCategory::profession,
                                                IdentityCategory::personality, IdentityCategory::profession});
    auto one = assign_categories(1, {IdentityCategory::profession});
    CHECK(one == std::vector<IdentityCategory>{IdentityCategory::profession});
    auto five = assign_categories(5, cats);
    CHECK(five[0] == IdentityCategory::personality);
    CHECK(five[2] == IdentityCategory::personality);
    CHECK(five[4] == IdentityCategory::personality);
    CHECK(five[1] == IdentityCategory::profession);
    CHECK(five[3] == IdentityCategory::profession);
    CHECK_THROWS_AS(assign_categories(1, cats), std::invalid_argument);
}

TEST_CASE("forward at initialization equals the frozen base model bitwise") {
    Model<float> model(tiny_config(), tiny_registry());
    std::vector<int> ids{1, 2, 3, 4, 5};

    auto base = model.forward(ids);
    auto act = ActivationSet::from_names(model.registry(), std::vector<std::string>{"high-openness", "doctor"});
    typename Model<float>::ForwardOptions opts;
    opts.activation = &act;
    auto adapted = model.forward(ids, opts);
    CHECK(bitwise_equal(base.value(), adapted.value()));

    // Empty delta map: forward with no activation is the base path itself.
    auto again = model.forward(ids);
    CHECK(bitwise_equal(base.value(), again.value()));
}

TEST_CASE("causality: future tokens cannot influence past logits") {
    Model<float> model(tiny_config(11), tiny_registry());
    std::vector<int> ids{10, 20, 30, 40, 50, 60};
    auto logits = model.forward(ids);
    std::vector<int> perturbed = ids;
    perturbed[4] = 99;
    perturbed[5] = 123;
    auto logits2 = model.forward(perturbed);
    for (int t = 0; t < 4; ++t) {
        for (Index c = 0; c < logits.cols(); ++c) {
            CHECK(logits.value()(t, c) == logits2.value()(t, c));
        }
    }
}

TEST_CASE("forward rejects overlong and invalid sequences") {
    Model<float> model(tiny_config(), tiny_registry());
    std::vector<int> too_long(33, 1);
    CHECK_THROWS_AS(model.forward(too_long), std::length_error);
    std::vector<int> bad_id{1, 2, 500};
    CHECK_THROWS_AS(model.forward(bad_id), std::out_of_range);
    CHECK_THROWS_AS(model.forward(std::vector<int>{}), std::invalid_argument);
}

TEST_CASE("bypass forward matches dense-merge forward within 1e-5") {
    // Randomize adapters so deltas are non-zero, then compare the two paths.
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        Model<float> model(tiny_config(seed), tiny_registry());
        Rng rng(seed * 31 + 1);
        for (auto& p : model.named_params()) {
            if (p.kind == ParamKind::adapter_b || p.kind == ParamKind::router) {
                for (Index i = 0; i < p.tensor.size(); ++i) {
                    p.tensor.value().data()[i] = static_cast<float>(rng.gaussian(0.0, 0.05));
                }
            }
        }
        std::vector<int> ids;
        const size_t len = 3 + rng.below(6);
        for (size_t i = 0; i < len; ++i) ids.push_back(static_cast<int>(rng.below(262)));

        auto act = ActivationSet::from_names(model.registry(), std::vector<std::string>{"high-openness", "doctor"});
        typename Model<float>::ForwardOptions opts;
        opts.activation = &act;
        auto bypass = model.forward(ids, opts);
        auto merged = model.forward_merged(ids, act);
        CAPTURE(seed);
        CHECK((bypass.value() - merged).cwiseAbs().maxCoeff() < 1e-5f);
    }
}

TEST_CASE("greedy generation is deterministic and stops at max_new") {
    Model<float> model(tiny_config(3), tiny_registry());
    std::vector<int> prompt{5, 6, 7};
    GenerateOptions opts;
    opts.max_new_tokens = 0;
    CHECK(model.generate(prompt, nullptr, opts).empty());

    opts.max_new_tokens = 8;
    auto a = model.generate(prompt, nullptr, opts);
    auto b = model.generate(prompt, nullptr, opts);
    CHECK(a == b);
    CHECK(a.size() <= 8);

    auto act = ActivationSet::from_names(model.registry(), std::vector<std::string>{"doctor"});
    auto c = model.generate(prompt, &act, opts);
    auto d = model.generate(prompt, &act, opts);
    CHECK(c == d);
    CHECK_THROWS_AS(model.generate(std::vector<int>{}, nullptr, opts), std::invalid_argument);
}

TEST_CASE("temperature sampling is seed-deterministic") {
    Model<float> model(tiny_config(9), tiny_registry());
    std::vector<int> prompt{1, 2};
    GenerateOptions opts;
    opts.greedy = false;
    opts.temperature = 0.8;
    opts.seed = 1234;
    opts.max_new_tokens = 6;
    auto a = model.generate(prompt, nullptr, opts);
    auto b = model.generate(prompt, nullptr, opts);
    CHECK(a == b);
}
