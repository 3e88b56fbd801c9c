#include "doctest.h"

#include "rolemix/grad_check.hpp"
#include "rolemix/ops.hpp"
#include "rolemix/rng.hpp"
#include "rolemix/tensor.hpp"

#include <cmath>
#include <cstring>

using namespace rolemix;

namespace {

// Test-side oracles, independent of the ops implementations.

Mat<double> naive_matmul(const Mat<double>& a, const Mat<double>& b) {
    Mat<double> c = Mat<double>::Zero(a.rows(), b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < b.cols(); ++j)
            for (Index k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
    return c;
}

long double sigmoid_oracle(long double x) { return 1.0L / (1.0L + std::exp(-x)); }

std::vector<long double> softmax_oracle(const std::vector<long double>& v) {
    long double mx = v[0];
    for (auto x : v) mx = std::max(mx, x);
    long double sum = 0.0L;
    std::vector<long double> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - mx);
        sum += out[i];
    }
    for (auto& x : out) x /= sum;
    return out;
}

template <typename Scalar>
Mat<Scalar> random_mat(Rng& rng, Index r, Index c, double scale = 1.0) {
    Mat<Scalar> m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(rng.gaussian(0.0, scale));
    return m;
}

}  // namespace

TEST_CASE("matmul matches identity, zero, and triple-loop oracle") {
    Mat<float> eye = Mat<float>::Identity(2, 2);
    Mat<float> x(2, 3);
    x << 1, 2, 3, 4, 5, 6;
    auto t_eye = Tensor<float>::constant(eye);
    auto t_x = Tensor<float>::constant(x);
    CHECK(matmul(t_eye, t_x).value() == x);

    auto t_zero = Tensor<float>::constant(Mat<float>::Zero(2, 2));
    CHECK(matmul(t_zero, t_x).value() == Mat<float>::Zero(2, 3));

    Mat<double> a(2, 2), b(2, 2);
    a << 1, 2, 3, 4;
    b << 5, 6, 7, 8;
    Mat<double> expected(2, 2);
    expected << 19, 22, 43, 50;
    auto c = matmul(Tensor<double>::constant(a), Tensor<double>::constant(b));
    CHECK(c.value() == expected);
    CHECK(c.value() == naive_matmul(a, b));

    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Index m = 1 + static_cast<Index>(rng.below(5));
        Index k = 1 + static_cast<Index>(rng.below(5));
        Index n = 1 + static_cast<Index>(rng.below(5));
        Mat<double> ra = random_mat<double>(rng, m, k);
        Mat<double> rb = random_mat<double>(rng, k, n);
        Mat<double> got = matmul(Tensor<double>::constant(ra), Tensor<double>::constant(rb)).value();
        CHECK((got - naive_matmul(ra, rb)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
    auto a = Tensor<float>::zeros(2, 3);
    auto b = Tensor<float>::zeros(4, 2);
    CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
    try {
        matmul(a, b);
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x2]") != std::string::npos);
    }
}

TEST_CASE("sigmoid midpoint, symmetry, and high-precision value") {
    auto mid = sigmoid(Tensor<double>::constant(Mat<double>::Zero(1, 1)));
    CHECK(mid.value()(0, 0) == 0.5);

    Rng rng(11);
    for (int i = 0; i < 100; ++i) {
        double x = rng.uniform(-50.0, 50.0);
        Mat<double> m(1, 2);
        m << x, -x;
        auto y = sigmoid(Tensor<double>::constant(m)).value();
        CHECK(y(0, 0) + y(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(y(0, 0) > 0.0);
        CHECK(y(0, 0) < 1.0);
    }

    Mat<double> two(1, 1);
    two << 2.0;
    double got = sigmoid(Tensor<double>::constant(two)).value()(0, 0);
    CHECK(std::abs(got - static_cast<double>(sigmoid_oracle(2.0L))) < 1e-12);
    CHECK(got == doctest::Approx(0.880797).epsilon(1e-6));
}

TEST_CASE("masked_softmax uniform, one-hot, and oracle cases") {
    Mat<float> z = Mat<float>::Zero(1, 3);
    auto w = masked_softmax(Tensor<float>::constant(z), {1, 1, 1});
    for (int i = 0; i < 3; ++i) CHECK(w.value()(0, i) == doctest::Approx(1.0 / 3).epsilon(1e-6));

    Mat<float> any(1, 4);
    any << -3.0f, 100.0f, 0.5f, -50.0f;
    auto one = masked_softmax(Tensor<float>::constant(any), {0, 0, 1, 0});
    CHECK(one.value()(0, 2) == 1.0f);
    CHECK(one.value()(0, 0) == 0.0f);
    CHECK(one.value()(0, 1) == 0.0f);
    CHECK(one.value()(0, 3) == 0.0f);

    Mat<double> logits(1, 2);
    logits << 0.8808, 0.1192;
    auto got = masked_softmax(Tensor<double>::constant(logits), {1, 1});
    auto oracle = softmax_oracle({0.8808L, 0.1192L});
    CHECK(got.value()(0, 0) == doctest::Approx(static_cast<double>(oracle[0])).epsilon(1e-12));
    CHECK(got.value()(0, 0) == doctest::Approx(0.6817).epsilon(1e-4));
    CHECK(got.value()(0, 1) == doctest::Approx(0.3183).epsilon(1e-4));
}

TEST_CASE("masked_softmax properties: exact zeros, normalization, shift invariance") {
    Rng rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        Index n = 2 + static_cast<Index>(rng.below(8));
        Mat<double> logits = random_mat<double>(rng, 1, n, 3.0);
        std::vector<uint8_t> mask(n, 0);
        int active = 0;
        for (Index i = 0; i < n; ++i) {
            mask[i] = rng.uniform() < 0.5 ? 1 : 0;
            active += mask[i];
        }
        if (active == 0) {
            CHECK_THROWS_AS(masked_softmax(Tensor<double>::constant(logits), mask), std::domain_error);
            auto zeroed = masked_softmax(Tensor<double>::constant(logits), mask, EmptyActive::all_zero);
            CHECK(zeroed.value().cwiseAbs().maxCoeff() == 0.0);
            continue;
        }
        auto w = masked_softmax(Tensor<double>::constant(logits), mask);
        double sum = 0.0;
        const double positive_zero = 0.0;
        for (Index i = 0; i < n; ++i) {
            if (!mask[i]) {
                // Inactive entries are bitwise +0.0.
                double v = w.value()(0, i);
                CHECK(std::memcmp(&v, &positive_zero, sizeof(double)) == 0);
            } else {
                sum += w.value()(0, i);
            }
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));

        double shift = rng.uniform(-40.0, 40.0);
        Mat<double> shifted = logits;
        for (Index i = 0; i < n; ++i) {
            if (mask[i]) shifted(0, i) += shift;
        }
        auto w2 = masked_softmax(Tensor<double>::constant(shifted), mask);
        CHECK((w2.value() - w.value()).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("layer_norm constant row, fixed point, and direct oracle") {
    Mat<double> gain = Mat<double>::Ones(1, 3);
    Mat<double> bias = Mat<double>::Zero(1, 3);
    auto g = Tensor<double>::constant(gain), b = Tensor<double>::constant(bias);

    Mat<double> constant_row = Mat<double>::Constant(1, 3, 4.2);
    auto ln_const = layer_norm(Tensor<double>::constant(constant_row), g, b);
    CHECK(ln_const.value().cwiseAbs().maxCoeff() < 1e-9);

    // A row that is already zero-mean unit-variance is (nearly) a fixed point.
    Mat<double> normalized(1, 2);
    normalized << -1.0, 1.0;
    auto ln_fixed = layer_norm(Tensor<double>::constant(normalized), Tensor<double>::constant(Mat<double>::Ones(1, 2)),
                               Tensor<double>::constant(Mat<double>::Zero(1, 2)));
    CHECK((ln_fixed.value() - normalized).cwiseAbs().maxCoeff() < 1e-5);

    Mat<double> row(1, 3);
    row << 1, 2, 3;
    auto ln_row = layer_norm(Tensor<double>::constant(row), g, b);
    double mean = row.mean();
    double var = (row.array() - mean).square().mean();
    for (int i = 0; i < 3; ++i) {
        CHECK(ln_row.value()(0, i) ==
              doctest::Approx((row(0, i) - mean) / std::sqrt(var + 1e-5)).epsilon(1e-12));
    }
    CHECK(ln_row.value()(0, 0) == doctest::Approx(-1.2247).epsilon(1e-3));
    CHECK(ln_row.value()(0, 1) == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
    CHECK(ln_row.value()(0, 2) == doctest::Approx(1.2247).epsilon(1e-3));
}

TEST_CASE("cross_entropy uniform, saturated, and scalar oracle") {
    const int vocab = 7;
    Mat<double> uniform = Mat<double>::Zero(1, vocab);
    auto loss = cross_entropy(Tensor<double>::constant(uniform), {3}, {1});
    CHECK(loss.item() == doctest::Approx(std::log(double(vocab))).epsilon(1e-12));

    Mat<double> saturated = Mat<double>::Zero(1, vocab);
    saturated(0, 2) = 30.0;
    auto tiny = cross_entropy(Tensor<double>::constant(saturated), {2}, {1});
    CHECK(tiny.item() < 1e-9);

    // Two positions, one masked out; oracle is the per-position log-softmax.
    Mat<double> logits(2, 3);
    logits << 0.3, -1.2, 2.0, 0.0, 0.5, -0.5;
    std::vector<int> targets{2, 1};
    std::vector<uint8_t> mask{1, 1};
    long double expect = 0.0L;
    for (int t = 0; t < 2; ++t) {
        std::vector<long double> row{logits(t, 0), logits(t, 1), logits(t, 2)};
        auto p = softmax_oracle(row);
        expect -= std::log(p[targets[t]]);
    }
    expect /= 2.0L;
    auto got = cross_entropy(Tensor<double>::constant(logits), targets, mask);
    CHECK(std::abs(got.item() - static_cast<double>(expect)) < 1e-6);

    CHECK_THROWS_AS(cross_entropy(Tensor<double>::constant(logits), targets, {0, 0}), std::domain_error);
}

TEST_CASE("grad_check: quadratic loss is exact to 1e-8") {
    Rng rng(3);
    auto theta = Tensor<double>::param(random_mat<double>(rng, 3, 4));
    auto loss_fn = [&]() { return sum_all(hadamard(theta, theta)); };  // ||theta||^2
    std::vector<std::pair<std::string, Tensor<double>>> params{{"theta", theta}};
    auto report = grad_check<double>(loss_fn, params, 1e-6);
    CHECK(report.max_rel_error < 1e-8);
    CHECK(report.elements_checked == 12);
}

TEST_CASE("grad_check: linear layer + cross entropy below 1e-6") {
    Rng rng(5);
    auto w = Tensor<double>::param(random_mat<double>(rng, 5, 4, 0.5));
    auto b = Tensor<double>::param(random_mat<double>(rng, 1, 5, 0.1));
    Mat<double> x = random_mat<double>(rng, 3, 4);
    std::vector<int> targets{1, 4, 0};
    std::vector<uint8_t> mask{1, 0, 1};
    auto loss_fn = [&]() {
        auto logits = add_rowvec(matmul_nt(Tensor<double>::constant(x), w), b);
        return cross_entropy(logits, targets, mask);
    };
    auto report = grad_check<double>(loss_fn, {{"w", w}, {"b", b}}, 1e-6);
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("grad_check aborts on non-finite loss") {
    auto w = Tensor<double>::param(Mat<double>::Ones(1, 1));
    auto loss_fn = [&]() {
        Mat<double> inf(1, 1);
        inf << std::numeric_limits<double>::infinity();
        return add(w, Tensor<double>::constant(inf));
    };
    CHECK_THROWS_WITH_AS(grad_check<double>(loss_fn, {{"w", w}}), doctest::Contains("aborted"),
                         std::runtime_error);
}

TEST_CASE("backward of every op matches finite differences over random shapes") {
    // Property sweep: >= 100 seeds across the op set, relative error < 1e-4.
    for (uint64_t seed = 1; seed <= 120; ++seed) {
        Rng rng(seed);
        const Index t = 1 + static_cast<Index>(rng.below(4));
        const Index d = 2 + static_cast<Index>(rng.below(4));
        auto a = Tensor<double>::param(random_mat<double>(rng, t, d, 0.8));
        auto w = Tensor<double>::param(random_mat<double>(rng, d + 1, d, 0.5));
        auto gain = Tensor<double>::param(random_mat<double>(rng, 1, d, 0.2));
        auto bias = Tensor<double>::param(random_mat<double>(rng, 1, d, 0.2));

        std::vector<int> targets(t);
        std::vector<uint8_t> mask(t, 1);
        for (Index i = 0; i < t; ++i) targets[i] = static_cast<int>(rng.below(d + 1));

        std::vector<uint8_t> route_mask(d, 0);
        for (Index i = 0; i < d; ++i) route_mask[i] = rng.uniform() < 0.6 ? 1 : 0;
        route_mask[rng.below(d)] = 1;

        auto loss_fn = [&]() {
            auto gained = layer_norm(a, add(gain, Tensor<double>::constant(Mat<double>::Ones(1, d))), bias);
            auto act = gelu(gained);
            auto sig = sigmoid(rows_mean(act));
            auto routed = masked_softmax(sig, route_mask);
            auto mixed = scale_by_entry(act, routed, 0);
            auto logits = matmul_nt(mixed, w);
            return cross_entropy(logits, targets, mask);
        };
        auto report = grad_check<double>(
            loss_fn, {{"a", a}, {"w", w}, {"gain", gain}, {"bias", bias}}, 1e-6);
        CAPTURE(seed);
        CAPTURE(report.worst_param);
        CHECK(report.max_rel_error < 1e-4);
    }
}

TEST_CASE("attention-style graph gradients: causal softmax, slices, concat, embedding") {
    for (uint64_t seed = 200; seed < 230; ++seed) {
        Rng rng(seed);
        const Index t = 2 + static_cast<Index>(rng.below(3));
        const Index d = 4;
        auto table = Tensor<double>::param(random_mat<double>(rng, 6, d, 0.5));
        auto wq = Tensor<double>::param(random_mat<double>(rng, d, d, 0.5));
        auto wk = Tensor<double>::param(random_mat<double>(rng, d, d, 0.5));
        std::vector<int> ids(t);
        for (Index i = 0; i < t; ++i) ids[i] = static_cast<int>(rng.below(6));
        std::vector<int> targets(t);
        for (Index i = 0; i < t; ++i) targets[i] = static_cast<int>(rng.below(6));
        std::vector<uint8_t> mask(t, 1);

        auto loss_fn = [&]() {
            auto x = embedding_rows(table, ids);
            auto q = matmul_nt(x, wq);
            auto k = matmul_nt(x, wk);
            std::vector<Tensor<double>> heads;
            for (int h = 0; h < 2; ++h) {
                auto qh = slice_cols(q, h * 2, 2);
                auto kh = slice_cols(k, h * 2, 2);
                auto scores = scale(matmul_nt(qh, kh), 1.0 / std::sqrt(2.0));
                auto attn = causal_row_softmax(scores);
                heads.push_back(matmul(attn, kh));
            }
            auto ctx = concat_cols(heads);
            auto logits = matmul(ctx, transpose(table));
            return cross_entropy(logits, targets, mask);
        };
        auto report = grad_check<double>(loss_fn, {{"table", table}, {"wq", wq}, {"wk", wk}}, 1e-6);
        CAPTURE(seed);
        CHECK(report.max_rel_error < 1e-4);
    }
}

TEST_CASE("ops are deterministic: identical inputs give bitwise identical outputs") {
    Rng rng(99);
    Mat<float> x = random_mat<float>(rng, 4, 6);
    Mat<float> w = random_mat<float>(rng, 6, 6);
    auto run = [&]() {
        auto xt = Tensor<float>::constant(x);
        auto wt = Tensor<float>::constant(w);
        auto y = gelu(matmul(xt, wt));
        auto s = causal_row_softmax(scale(matmul_nt(y, y), 0.3));
        return Mat<float>(matmul(s, y).value());
    };
    Mat<float> first = run();
    Mat<float> second = run();
    CHECK(std::memcmp(first.data(), second.data(), sizeof(float) * first.size()) == 0);
}

TEST_CASE("gradient accumulates additively when a tensor is reused") {
    auto x = Tensor<double>::param(Mat<double>::Ones(1, 1) * 3.0);
    auto y = add(x, x);  // y = 2x
    y.backward();
    CHECK(x.grad()(0, 0) == 2.0);
}
