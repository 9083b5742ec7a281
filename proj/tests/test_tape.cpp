#include <doctest.h>

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "transfuse/rng.hpp"
#include "transfuse/tape.hpp"

using namespace transfuse;

namespace {

using Builder = std::function<Tape::Var(Tape&, const std::vector<Tape::Var>&)>;

double eval_scalar(const Builder& f, const std::vector<Tensor>& inputs) {
    Tape t;
    std::vector<Tape::Var> vars;
    for (const Tensor& in : inputs) vars.push_back(t.leaf(in, false));
    return t.val(f(t, vars))[0];
}

// Central finite differences against the tape gradient, elementwise.
void check_grads(const Builder& f, const std::vector<Tensor>& inputs, double tol = 1e-6,
                 double h = 1e-5) {
    Tape t;
    std::vector<Tape::Var> vars;
    for (const Tensor& in : inputs) vars.push_back(t.leaf(in, true));
    const Tape::Var root = f(t, vars);
    REQUIRE(t.val(root).numel() == 1);
    t.backward(root);

    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Tensor& analytic = t.grad(vars[i]);
        for (int j = 0; j < inputs[i].numel(); ++j) {
            std::vector<Tensor> plus = inputs;
            std::vector<Tensor> minus = inputs;
            plus[i][j] += h;
            minus[i][j] -= h;
            const double fd = (eval_scalar(f, plus) - eval_scalar(f, minus)) / (2.0 * h);
            const double scale = std::max({1.0, std::abs(fd), std::abs(analytic[j])});
            INFO("input ", i, " element ", j, " fd=", fd, " analytic=", analytic[j]);
            CHECK(std::abs(fd - analytic[j]) / scale < tol);
        }
    }
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Values bounded away from zero, for kinked ops.
Tensor random_away_from_zero(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data) {
        const double m = rng.uniform(0.2, 1.0);
        v = rng.bernoulli(0.5) ? m : -m;
    }
    return t;
}

}  // namespace

TEST_SUITE_BEGIN("tape");

TEST_CASE("elementwise ops") {
    Rng rng(1);
    const Tensor a = random_tensor({3, 4}, rng, 0.5, 1.5);
    const Tensor b = random_tensor({3, 4}, rng, 0.5, 1.5);
    check_grads(
        [](Tape& t, const std::vector<Tape::Var>& v) {
            const Tape::Var num = t.mul(v[0], v[1]);
            const Tape::Var den = t.add_scalar(t.sub(v[0], t.scale(v[1], 0.5)), 2.0);
            return t.sum_all(t.div(num, den));
        },
        {a, b});
    check_grads(
        [](Tape& t, const std::vector<Tape::Var>& v) {
            return t.mean_all(t.add(v[0], v[1]));
        },
        {a, b});
}

TEST_CASE("matmul and biases") {
    Rng rng(2);
    const Tensor a = random_tensor({4, 3}, rng);
    const Tensor w = random_tensor({3, 5}, rng);
    const Tensor bias = random_tensor({5}, rng);
    check_grads(
        [](Tape& t, const std::vector<Tape::Var>& v) {
            return t.sum_all(t.add_row_bias(t.matmul(v[0], v[1]), v[2]));
        },
        {a, w, bias});

    const Tensor x = random_tensor({6, 3}, rng);
    const Tensor table = random_tensor({2, 3}, rng);
    check_grads(
        [](Tape& t, const std::vector<Tape::Var>& v) {
            return t.mean_all(t.mul(t.add_row_cycled(v[0], v[1]),
                                    t.add_row_cycled(v[0], v[1])));
        },
        {x, table});
}

TEST_CASE("nonlinearities") {
    Rng rng(3);
    const Tensor x = random_away_from_zero({3, 5}, rng);
    check_grads(
        [](Tape& t, const std::vector<Tape::Var>& v) { return t.sum_all(t.relu(v[0])); }, {x});
    check_grads(
        [](Tape& t, const std::vector<Tape::Var>& v) { return t.sum_all(t.gelu(v[0])); }, {x});
}

TEST_CASE("layer_norm") {
    Rng rng(4);
    const Tensor x = random_tensor({4, 6}, rng);
    const Tensor gamma = random_tensor({6}, rng, 0.5, 1.5);
    const Tensor beta = random_tensor({6}, rng);
    check_grads(
        [](Tape& t, const std::vector<Tape::Var>& v) {
            const Tape::Var y = t.layer_norm(v[0], v[1], v[2]);
            return t.sum_all(t.mul(y, y));
        },
        {x, gamma, beta}, 5e-6);
}

TEST_CASE("self_attention gradients and row sums") {
    Rng rng(5);
    const Tensor q = random_tensor({8, 4}, rng);
    const Tensor k = random_tensor({8, 4}, rng);
    const Tensor v = random_tensor({8, 4}, rng);
    // 2 groups of 4 tokens, 2 heads of width 2
    check_grads(
        [](Tape& t, const std::vector<Tape::Var>& vars) {
            const Tape::Var o = t.self_attention(vars[0], vars[1], vars[2], 2, 4);
            return t.sum_all(t.mul(o, o));
        },
        {q, k, v}, 5e-6);

    Tape t;
    std::vector<Tensor> captured;
    t.attn_capture = &captured;
    const Tape::Var o = t.self_attention(t.leaf(q), t.leaf(k), t.leaf(v), 2, 4);
    (void)o;
    REQUIRE(captured.size() == 1);
    const Tensor& probs = captured[0];
    REQUIRE(probs.shape == std::vector<int>{4, 4, 4});  // groups*heads, gs, gs
    for (int m = 0; m < 4; ++m) {
        for (int r = 0; r < 4; ++r) {
            double sum = 0.0;
            for (int c = 0; c < 4; ++c) {
                const double p = probs.data[static_cast<std::size_t>((m * 4 + r) * 4 + c)];
                CHECK(p >= 0.0);
                sum += p;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("conv2d") {
    Rng rng(6);
    const Tensor x = random_tensor({2, 5, 6}, rng);
    const Tensor w = random_tensor({3, 2, 3, 3}, rng);
    const Tensor b = random_tensor({3}, rng);
    check_grads(
        [](Tape& t, const std::vector<Tape::Var>& v) {
            const Tape::Var y = t.conv2d(v[0], v[1], v[2], 1);
            return t.sum_all(t.mul(y, y));
        },
        {x, w, b}, 5e-6);

    const Tensor w1 = random_tensor({1, 2, 1, 1}, rng);
    const Tensor b1 = random_tensor({1}, rng);
    check_grads(
        [](Tape& t, const std::vector<Tape::Var>& v) {
            return t.sum_all(t.conv2d(v[0], v[1], v[2], 0));
        },
        {x, w1, b1});
}

TEST_CASE("gauss_valid") {
    Rng rng(7);
    const Tensor x = random_tensor({9, 8}, rng);
    auto kernel = std::make_shared<const std::vector<double>>(
        std::vector<double>{0.1, 0.2, 0.4, 0.2, 0.1});
    check_grads(
        [kernel](Tape& t, const std::vector<Tape::Var>& v) {
            const Tape::Var y = t.gauss_valid(v[0], kernel);
            return t.sum_all(t.mul(y, y));
        },
        {x});
}

TEST_CASE("shape ops") {
    Rng rng(8);
    const Tensor a = random_tensor({2, 3, 4}, rng);
    const Tensor b = random_tensor({1, 3, 4}, rng);
    check_grads(
        [](Tape& t, const std::vector<Tape::Var>& v) {
            const Tape::Var cat = t.concat_channels(v[0], v[1]);
            const Tape::Var flat = t.reshape(cat, {3, 12});
            return t.mean_all(t.mul(flat, flat));
        },
        {a, b});

    const Tensor tokens = random_tensor({4, 8}, rng);  // 2x2 grid, 2x2 patch, 2 channels
    check_grads(
        [](Tape& t, const std::vector<Tape::Var>& v) {
            const Tape::Var folded = t.fold_tokens(v[0], 2, 2, 2, 2);
            return t.sum_all(t.mul(folded, folded));
        },
        {tokens});
}

TEST_CASE("fold_tokens places patches correctly") {
    // One 2x2 grid of 2x2 patches, single channel: token j carries its patch
    // in row-major order.
    Tape t;
    Tensor tokens({4, 4});
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i) tokens.at2(j, i) = j * 10 + i;
    const Tape::Var folded = t.fold_tokens(t.leaf(tokens), 1, 2, 2, 2);
    const Tensor& out = t.val(folded);
    REQUIRE(out.shape == std::vector<int>{1, 4, 4});
    CHECK(out.data[0] == 0.0);   // token 0, element 0 at (0,0)
    CHECK(out.data[1] == 1.0);   // token 0, element 1 at (0,1)
    CHECK(out.data[2] == 10.0);  // token 1 starts at column 2
    CHECK(out.data[4] == 2.0);   // token 0 row 1
    CHECK(out.data[8] == 20.0);  // token 2 at (2,0)
}

TEST_CASE("losses") {
    Rng rng(9);
    const Tensor a = random_tensor({4, 5}, rng);
    const Tensor b = random_tensor({4, 5}, rng);
    check_grads(
        [](Tape& t, const std::vector<Tape::Var>& v) { return t.mse_loss(v[0], v[1]); },
        {a, b});
    check_grads(
        [](Tape& t, const std::vector<Tape::Var>& v) {
            return t.tv_sum(t.sub(v[0], v[1]), false);
        },
        {a, b});
    check_grads(
        [](Tape& t, const std::vector<Tape::Var>& v) {
            return t.tv_sum(t.sub(v[0], v[1]), true);
        },
        {a, b});
}

TEST_CASE("backward requires a scalar root") {
    Tape t;
    Rng rng(10);
    const Tape::Var x = t.leaf(random_tensor({2, 2}, rng), true);
    CHECK_THROWS_AS(t.backward(x), ShapeError);
}

TEST_SUITE_END();
