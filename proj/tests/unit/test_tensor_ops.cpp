#include "oracles.hpp"

#include "dipmatte/eval.hpp"
#include "dipmatte/ops.hpp"

#include <doctest.h>

#include <set>

using namespace dipmatte;

namespace {

template <typename T>
Tensor<T> from_grid(const oracle::Grid& g, bool grad = false) {
    return Tensor<T>(Shape{g.c, g.h, g.w}, std::vector<T>(g.v.begin(), g.v.end()), grad);
}

template <typename T>
T element(const Tensor<T>& t, std::size_t i) {
    return t.data()[i];
}

Tensor<double> random_input(std::mt19937& gen, Shape shape, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = d(gen);
    return Tensor<double>(std::move(shape), std::move(v), true);
}

} // namespace

TEST_CASE("conv2d: constant field with all-ones kernel gives 9 everywhere") {
    Tape<float> tape;
    const auto x = Tensor<float>::full({1, 3, 3}, 1.0f);
    const auto k = Tensor<float>::full({1, 1, 3, 3}, 1.0f);
    const auto y = ops::conv2d(tape, x, k, 1);
    CHECK(y.shape() == Shape{1, 3, 3});
    for (float v : y.data()) CHECK(v == 9.0f);
}

TEST_CASE("conv2d: centered delta kernel is the identity") {
    std::mt19937 gen(3);
    const auto g = oracle::random_grid(2, 5, 7, gen);
    const auto x = from_grid<float>(g);
    std::vector<float> delta(2 * 2 * 9, 0.0f);
    delta[(0 * 2 + 0) * 9 + 4] = 1.0f;
    delta[(1 * 2 + 1) * 9 + 4] = 1.0f;
    Tape<float> tape;
    const auto y = ops::conv2d(tape, x, Tensor<float>({2, 2, 3, 3}, delta), 1);
    REQUIRE(y.shape() == x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d matches the nested-loop oracle on random shapes") {
    std::mt19937 gen(11);
    struct Case {
        std::size_t cin, h, w, cout, k;
        int stride;
    };
    const Case cases[] = {{2, 8, 8, 4, 3, 1}, {3, 7, 9, 2, 3, 2}, {8, 16, 16, 5, 3, 1},
                          {4, 16, 16, 8, 3, 2}, {1, 5, 6, 2, 5, 1}, {2, 6, 6, 3, 1, 1},
                          {16, 40, 70, 3, 3, 1}, {20, 65, 65, 2, 3, 2}};
    for (const auto& c : cases) {
        const auto g = oracle::random_grid(c.cin, c.h, c.w, gen);
        std::uniform_real_distribution<double> d(-1, 1);
        std::vector<double> kernel(c.cout * c.cin * c.k * c.k);
        for (auto& v : kernel) v = d(gen);
        const auto expected = oracle::conv2d(g, kernel, c.cout, c.k, c.stride);

        Tape<float> tape;
        const auto y = ops::conv2d(tape, from_grid<float>(g),
                                   Tensor<float>({c.cout, c.cin, c.k, c.k}, std::vector<float>(kernel.begin(), kernel.end())),
                                   c.stride);
        REQUIRE(y.shape() == Shape{expected.c, expected.h, expected.w});
        double worst = 0;
        for (std::size_t i = 0; i < expected.v.size(); ++i)
            worst = std::max(worst, std::abs(static_cast<double>(y.data()[i]) - expected.v[i]));
        CHECK(worst <= 1e-5);
    }
}

// Large shapes exercise the strip-wise backward pass. The input adjoint is
// checked with the dot-product identity <dL/dx, v> = <r, conv(v)>, the kernel
// adjoint against oracle convolutions with one-hot kernels.
TEST_CASE("conv2d backward on large inputs agrees with the oracle") {
    std::mt19937 gen(5);
    struct Case {
        std::size_t cin, h, w, cout;
        int stride;
    };
    for (const Case c : {Case{16, 40, 70, 2, 1}, Case{20, 65, 65, 2, 2}}) {
        const auto g = oracle::random_grid(c.cin, c.h, c.w, gen);
        std::uniform_real_distribution<double> d(-1, 1);
        std::vector<double> kernel(c.cout * c.cin * 9);
        for (auto& v : kernel) v = d(gen);
        const std::size_t s = static_cast<std::size_t>(c.stride);
        const auto weights = oracle::random_grid(c.cout, (c.h + s - 1) / s, (c.w + s - 1) / s, gen);

        Tape<double> tape;
        const auto x = from_grid<double>(g, true);
        const Tensor<double> k({c.cout, c.cin, 3, 3}, kernel, true);
        const auto y = ops::conv2d(tape, x, k, c.stride);
        tape.backward(ops::sum(tape, ops::mul(tape, y, from_grid<double>(weights))));

        const auto v = oracle::random_grid(c.cin, c.h, c.w, gen);
        const auto cv = oracle::conv2d(v, kernel, c.cout, 3, c.stride);
        double lhs = 0, rhs = 0;
        for (std::size_t i = 0; i < v.v.size(); ++i) lhs += x.grad()[i] * v.v[i];
        for (std::size_t i = 0; i < cv.v.size(); ++i) rhs += weights.v[i] * cv.v[i];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));

        double worst = 0;
        for (std::size_t j = 0; j < kernel.size(); j += 7) {
            std::vector<double> onehot(kernel.size(), 0.0);
            onehot[j] = 1.0;
            const auto cj = oracle::conv2d(g, onehot, c.cout, 3, c.stride);
            double expected = 0;
            for (std::size_t i = 0; i < cj.v.size(); ++i) expected += weights.v[i] * cj.v[i];
            worst = std::max(worst, std::abs(k.grad()[j] - expected));
        }
        CHECK(worst <= 1e-9);
    }
}

TEST_CASE("conv2d: stride 2 halves with ceiling division; shape errors are reported") {
    Tape<float> tape;
    const auto x = Tensor<float>::zeros({2, 7, 8});
    CHECK(ops::conv2d(tape, x, Tensor<float>::zeros({3, 2, 3, 3}), 2).shape() == Shape{3, 4, 4});
    CHECK_THROWS_AS(ops::conv2d(tape, x, Tensor<float>::zeros({3, 4, 3, 3}), 1), ShapeError);
    CHECK_THROWS_AS(ops::conv2d(tape, x, Tensor<float>::zeros({3, 2, 2, 2}), 1), ShapeError);
    CHECK_THROWS_AS(ops::conv2d(tape, x, Tensor<float>::zeros({3, 2, 3, 3}), 3), ShapeError);
}

TEST_CASE("upsample_nearest replicates into 2x2 blocks") {
    Tape<float> tape;
    CHECK(element(ops::upsample_nearest(tape, Tensor<float>({1, 1, 1}, {5.0f})), 3) == 5.0f);
    const auto y = ops::upsample_nearest(tape, Tensor<float>({1, 2, 2}, {1, 2, 3, 4}));
    const std::vector<float> expected{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    CHECK(std::vector<float>(y.data().begin(), y.data().end()) == expected);
}

TEST_CASE("pointwise activations") {
    Tape<float> tape;
    const auto x = Tensor<float>({1, 1, 2}, {2.0f, -2.0f});
    const auto lr = ops::leaky_relu(tape, x, 0.1f);
    CHECK(lr.data()[0] == 2.0f);
    CHECK(lr.data()[1] == doctest::Approx(-0.2f));

    CHECK(ops::sigmoid(tape, Tensor<float>::scalar(0.0f)).item() == 0.5f);
    float prev = 0.5f;
    for (float v : {1.0f, 5.0f, 20.0f, 80.0f}) {
        const float s = ops::sigmoid(tape, Tensor<float>::scalar(v)).item();
        CHECK(s >= prev);
        CHECK(s <= 1.0f);
        prev = s;
    }
    CHECK(prev == doctest::Approx(1.0f));
    CHECK(ops::sigmoid(tape, Tensor<float>::scalar(-80.0f)).item() >= 0.0f);
}

TEST_CASE("instance_norm: constant channel maps to zeros, [0,2] maps to [-1,1]") {
    Tape<double> tape;
    const auto z = ops::instance_norm(tape, Tensor<double>::full({1, 2, 2}, 3.0), 1e-5);
    for (double v : z.data()) CHECK(v == 0.0);
    const auto y = ops::instance_norm(tape, Tensor<double>({1, 1, 2}, {0.0, 2.0}), 1e-5);
    CHECK(y.data()[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(y.data()[1] == doctest::Approx(1.0).epsilon(1e-4));

    std::mt19937 gen(5);
    const auto r = ops::instance_norm(tape, random_input(gen, {3, 6, 5}), 1e-8);
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0, var = 0;
        for (std::size_t i = 0; i < 30; ++i) mean += r.data()[c * 30 + i];
        mean /= 30;
        for (std::size_t i = 0; i < 30; ++i) var += (r.data()[c * 30 + i] - mean) * (r.data()[c * 30 + i] - mean);
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var / 30 == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("spatial_grad_l1") {
    Tape<double> tape;
    const auto flat = ops::spatial_grad_l1(tape, Tensor<double>::full({3, 4, 4}, 0.3));
    for (double v : flat.data()) CHECK(v == 0.0);
    const auto y = ops::spatial_grad_l1(tape, Tensor<double>({1, 1, 2}, {0.0, 1.0}));
    CHECK(y.data()[0] == 1.0);
    CHECK(y.data()[1] == 0.0);

    std::mt19937 gen(9);
    const auto g = oracle::random_grid(3, 7, 5, gen);
    const auto expected = oracle::spatial_grad_l1(g);
    const auto got = ops::spatial_grad_l1(tape, from_grid<double>(g));
    REQUIRE(got.shape() == Shape{1, 7, 5});
    for (std::size_t i = 0; i < expected.v.size(); ++i) CHECK(got.data()[i] == expected.v[i]);
}

TEST_CASE("elementwise ops and shape checks") {
    Tape<float> tape;
    const auto a = Tensor<float>({1, 1, 3}, {1, -2, 3});
    const auto b = Tensor<float>({1, 1, 3}, {4, 5, -6});
    CHECK(element(ops::add(tape, a, b), 2) == -3.0f);
    CHECK(element(ops::sub(tape, a, b), 0) == -3.0f);
    CHECK(element(ops::mul(tape, a, b), 1) == -10.0f);
    CHECK(element(ops::scalar_mul(tape, a, 2.0f), 1) == -4.0f);
    CHECK(element(ops::add_scalar(tape, a, 1.0f), 0) == 2.0f);
    CHECK(element(ops::abs(tape, a), 1) == 2.0f);
    CHECK(element(ops::square(tape, a), 2) == 9.0f);
    CHECK(ops::concat_channels(tape, a, b).shape() == Shape{2, 1, 3});
    CHECK(element(ops::expand_channels(tape, a, 3), 7) == -2.0f);
    CHECK(ops::crop(tape, Tensor<float>::zeros({2, 4, 5}), 3, 2).shape() == Shape{2, 3, 2});
    CHECK_THROWS_AS(ops::add(tape, a, Tensor<float>::zeros({1, 3, 1})), ShapeError);
    CHECK_THROWS_AS(ops::region_mean(tape, a, PixelMask(1, 3, false)), ShapeError);
}

TEST_CASE("backward: scalar examples") {
    {
        Tape<double> tape;
        auto x = Tensor<double>::scalar(3.0, true);
        const auto y = ops::square(tape, x);
        tape.backward(y);
        CHECK(x.grad()[0] == 6.0);
        CHECK(y.grad()[0] == 1.0);
    }
    {
        Tape<double> tape;
        auto a = Tensor<double>({1, 1, 3}, {1, 2, 3}, true);
        auto b = Tensor<double>({1, 1, 3}, {4, 5, 6}, true);
        tape.backward(ops::sum(tape, ops::mul(tape, a, b)));
        CHECK(std::vector<double>(a.grad().begin(), a.grad().end()) == std::vector<double>{4, 5, 6});
        CHECK(std::vector<double>(b.grad().begin(), b.grad().end()) == std::vector<double>{1, 2, 3});
    }
}

TEST_CASE("backward: grads are absent off the loss path and for constants") {
    Tape<double> tape;
    auto used = Tensor<double>::scalar(2.0, true);
    auto unused = Tensor<double>::scalar(1.0, true);
    auto constant = Tensor<double>::scalar(4.0);
    const auto side = ops::square(tape, unused);
    tape.backward(ops::mul(tape, used, constant));
    CHECK(used.grad()[0] == 4.0);
    CHECK_FALSE(unused.has_grad());
    CHECK_FALSE(side.has_grad());
    CHECK_FALSE(constant.has_grad());
}

TEST_CASE("backward: a tensor feeding two consumers accumulates both contributions") {
    std::mt19937 gen(21);
    auto x = random_input(gen, {2, 4, 4});
    const DoubleFn fn = [](Tape<double>& t, std::span<const Tensor<double>> in) {
        const auto s = ops::sigmoid(t, in[0]);
        return ops::add(t, ops::sum(t, ops::mul(t, s, in[0])), ops::sum(t, ops::spatial_grad_l1(t, ops::square(t, in[0]))));
    };
    CHECK(gradcheck(fn, {x}, 1) <= 1e-6);

    Tape<double> tape;
    auto y = Tensor<double>::scalar(1.5, true);
    tape.backward(ops::add(tape, ops::scalar_mul(tape, y, 2.0), ops::square(tape, y)));
    CHECK(y.grad()[0] == doctest::Approx(2.0 + 3.0));
}

TEST_CASE("tape errors: non-scalar loss, double backward, and reset") {
    Tape<double> tape;
    auto x = Tensor<double>({1, 1, 2}, {1, 2}, true);
    const auto y = ops::square(tape, x);
    CHECK_THROWS_AS(tape.backward(y), AutodiffError);
    const auto loss = ops::sum(tape, y);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), AutodiffError);
    tape.reset();
    x.clear_grad();
    const auto loss2 = ops::sum(tape, ops::square(tape, x));
    tape.backward(loss2);
    CHECK(x.grad()[1] == 4.0);
    CHECK_THROWS_AS(Tape<double>().backward(Tensor<double>::scalar(1.0)), AutodiffError);
}

TEST_CASE("inference tape records nothing") {
    Tape<float> tape(Tape<float>::Mode::inference);
    auto x = Tensor<float>::scalar(2.0f, true);
    const auto y = ops::square(tape, x);
    CHECK(tape.size() == 0);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("every differentiable op passes the 64-bit finite-difference check") {
    const auto report = gradcheck_suite(7, 1e-3, 10);
    std::set<std::string> seen;
    for (const auto& e : report.entries) {
        INFO(e.name << " max_rel_error=" << e.max_rel_error);
        CHECK(e.passed);
        CHECK(e.points == 10);
        CHECK(seen.insert(e.name).second);
    }
    std::set<std::string> expected(ops::kDifferentiableOps.begin(), ops::kDifferentiableOps.end());
    expected.insert("total_loss");
    CHECK(seen == expected);
}

TEST_CASE("gradcheck detects a corrupted adjoint") {
    // y = 2x forward, but the recorded adjoint claims dy/dx = 3.
    const DoubleFn broken = [](Tape<double>& t, std::span<const Tensor<double>> in) {
        const auto x = in[0];
        std::vector<double> v(x.data().begin(), x.data().end());
        for (auto& e : v) e *= 2;
        Tensor<double> out(x.shape(), std::move(v), t.recording());
        t.record([out, x]() mutable {
            if (!out.has_grad()) return;
            auto gx = x.grad_buffer();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 3 * out.grad()[i];
        });
        return out;
    };
    std::mt19937 gen(2);
    CHECK(gradcheck(broken, {random_input(gen, {1, 3, 3})}, 4) > 0.1);
}
