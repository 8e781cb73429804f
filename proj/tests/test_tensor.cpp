#include <cmath>
#include <vector>

#include "ddseg/ops.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace ddseg;
using ddseg::testing::grad_check;
using ddseg::testing::random_tensor64;

namespace {

constexpr double kOpTol = 1e-3;

// Random points kept away from pixel nodes so central differences never step
// across a kink of the piecewise-bilinear interpolant.
Tensor64 off_node_points(std::int64_t n, std::int64_t h, std::int64_t w, Rng& rng) {
    Tensor64 p(Shape{n, 2});
    for (std::int64_t i = 0; i < n; ++i) {
        const double py = rng.uniform_int(0, static_cast<int>(h) - 2) + rng.uniform(0.1, 0.9);
        const double px = rng.uniform_int(0, static_cast<int>(w) - 2) + rng.uniform(0.1, 0.9);
        p.data()[2 * i] = (2.0 * py + 1.0) / static_cast<double>(h) - 1.0;
        p.data()[2 * i + 1] = (2.0 * px + 1.0) / static_cast<double>(w) - 1.0;
    }
    return p;
}

}  // namespace

TEST_CASE("matmul examples") {
    const Tensor eye(Shape{2, 2}, std::vector<float>{1, 0, 0, 1});
    const Tensor col(Shape{2, 1}, std::vector<float>{3, 4});
    const Tensor r = matmul(eye, col);
    CHECK(r.shape() == Shape{2, 1});
    CHECK(r.data()[0] == 3.0f);
    CHECK(r.data()[1] == 4.0f);

    const Tensor row(Shape{1, 2}, std::vector<float>{1, 2});
    CHECK(matmul(row, col).item() == 11.0f);

    CHECK_THROWS_AS(matmul(row, row), ShapeError);
}

TEST_CASE("matmul gradient of sum equals ones * b^T") {
    Rng rng(11);
    Tensor64 a = random_tensor64({4, 5}, rng);
    const Tensor64 b = random_tensor64({5, 3}, rng);
    a.set_requires_grad(true);
    Tape64 tape;
    {
        TapeScope64 scope(tape);
        tape.backward(sum(matmul(a, b)));
    }
    for (int i = 0; i < 4; ++i) {
        for (int k = 0; k < 5; ++k) {
            double expect = 0.0;
            for (int j = 0; j < 3; ++j) expect += b.data()[k * 3 + j];
            CHECK(a.grad()[i * 5 + k] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
    const auto r = grad_check({a, b}, [](const auto& in) { return sum(matmul(in[0], in[1])); });
    CHECK(r.max_rel_error < kOpTol);
}

TEST_CASE("batched matmul gradients") {
    Rng rng(12);
    const auto shared = grad_check({random_tensor64({2, 3, 4}, rng), random_tensor64({4, 2}, rng)},
                                   [](const auto& in) { return sum(mul(matmul(in[0], in[1]), matmul(in[0], in[1]))); });
    CHECK(shared.max_rel_error < kOpTol);
    const auto batched = grad_check({random_tensor64({3, 2, 4}, rng), random_tensor64({3, 4, 5}, rng)},
                                    [](const auto& in) { return sum(gelu(matmul(in[0], in[1]))); });
    CHECK(batched.max_rel_error < kOpTol);
}

TEST_CASE("softmax examples") {
    const Tensor u = softmax(Tensor(Shape{3}, std::vector<float>{0, 0, 0}), 0);
    for (float v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

    const Tensor big = softmax(Tensor(Shape{2}, std::vector<float>{1000, 0}), 0);
    CHECK(std::isfinite(big.data()[0]));
    CHECK(big.data()[0] == doctest::Approx(1.0));
    CHECK(big.data()[1] == doctest::Approx(0.0));

    const Tensor s = softmax(Tensor(Shape{3}, std::vector<float>{1, 2, 3}), 0);
    CHECK(std::abs(s.data()[0] - 0.0900306) < 1e-4);
    CHECK(std::abs(s.data()[1] - 0.2447285) < 1e-4);
    CHECK(std::abs(s.data()[2] - 0.6652410) < 1e-4);
}

TEST_CASE("softmax rows sum to one for arbitrary inputs") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const int rows = rng.uniform_int(1, 8), cols = rng.uniform_int(1, 8);
        const int axis = rng.uniform_int(0, 1);
        Tensor64 x = random_tensor64({rows, cols}, rng, rng.uniform(0.1, 50.0));
        const Tensor64 y = softmax(x, axis);
        const int outer = axis == 0 ? cols : rows;
        const int extent = axis == 0 ? rows : cols;
        for (int o = 0; o < outer; ++o) {
            double acc = 0.0;
            for (int j = 0; j < extent; ++j) acc += axis == 0 ? y.data()[j * cols + o] : y.data()[o * cols + j];
            CHECK(std::abs(acc - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("pointwise examples") {
    CHECK(sigmoid(Tensor::scalar(0.0f)).item() == 0.5f);
    CHECK(std::abs(gelu(Tensor64::scalar(1.0)).item() - 0.841192) < 1e-3);

    const Tensor c(Shape{1, 4}, 2.5f);
    const Tensor ln = layer_norm(c, Tensor::ones({4}), Tensor::zeros({4}), -1);
    for (float v : ln.data()) CHECK(v == 0.0f);

    Rng rng(5);
    const Tensor64 x = random_tensor64({3, 7}, rng, 3.0);
    const Tensor64 y = layer_norm(x, Tensor64::ones({7}), Tensor64::zeros({7}), -1);
    for (int r = 0; r < 3; ++r) {
        double m = 0, v = 0;
        for (int j = 0; j < 7; ++j) m += y.data()[r * 7 + j];
        m /= 7;
        for (int j = 0; j < 7; ++j) v += (y.data()[r * 7 + j] - m) * (y.data()[r * 7 + j] - m);
        v /= 7;
        CHECK(std::abs(m) < 1e-9);
        CHECK(std::abs(v - 1.0) < 1e-3);
    }
}

TEST_CASE("pointwise and normalization gradients") {
    Rng rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        const int r = rng.uniform_int(1, 8), c = rng.uniform_int(2, 8);
        auto x = random_tensor64({r, c}, rng);
        CHECK(grad_check({x}, [](const auto& in) { return sum(mul(sigmoid(in[0]), in[0])); }).max_rel_error < kOpTol);
        CHECK(grad_check({x}, [](const auto& in) { return sum(mul(tanh(in[0]), in[0])); }).max_rel_error < kOpTol);
        CHECK(grad_check({x}, [](const auto& in) { return sum(mul(gelu(in[0]), in[0])); }).max_rel_error < kOpTol);
        const auto w = random_tensor64({r, c}, rng);
        CHECK(grad_check({x, w}, [](const auto& in) { return sum(mul(softmax(in[0], 1), in[1])); }).max_rel_error <
              kOpTol);
        CHECK(grad_check({x, w}, [](const auto& in) { return sum(mul(softmax(in[0], 0), in[1])); }).max_rel_error <
              kOpTol);
        const auto g = random_tensor64({c}, rng), b = random_tensor64({c}, rng);
        CHECK(grad_check({x, g, b, w},
                         [](const auto& in) { return sum(mul(layer_norm(in[0], in[1], in[2], -1), in[3])); })
                  .max_rel_error < kOpTol);
        const auto g0 = random_tensor64({r}, rng), b0 = random_tensor64({r}, rng);
        CHECK(grad_check({x, g0, b0, w},
                         [](const auto& in) { return sum(mul(layer_norm(in[0], in[1], in[2], 0), in[3])); })
                  .max_rel_error < kOpTol);
    }
}

TEST_CASE("broadcasting arithmetic gradients") {
    Rng rng(22);
    const auto a = random_tensor64({3, 4, 5}, rng);
    const auto row = random_tensor64({1, 5}, rng);
    const auto chan = random_tensor64({3, 1, 1}, rng);
    const auto s = random_tensor64({1}, rng);
    CHECK(grad_check({a, row}, [](const auto& in) { return sum(mul(add(in[0], in[1]), in[0])); }).max_rel_error <
          kOpTol);
    CHECK(grad_check({a, chan}, [](const auto& in) { return sum(mul(mul(in[0], in[1]), in[0])); }).max_rel_error <
          kOpTol);
    CHECK(grad_check({a, s}, [](const auto& in) { return sum(mul(sub(in[0], in[1]), in[0])); }).max_rel_error <
          kOpTol);
    CHECK_THROWS_AS(add(Tensor64::zeros({2, 3}), Tensor64::zeros({3, 2})), ShapeError);
}

TEST_CASE("shape ops gradients") {
    Rng rng(23);
    const auto x = random_tensor64({2, 3, 4}, rng);
    const auto w = random_tensor64({2, 4, 3}, rng);
    CHECK(grad_check({x, w}, [](const auto& in) { return sum(mul(transpose(in[0]), in[1])); }).max_rel_error <
          kOpTol);
    const auto w2 = random_tensor64({6, 4}, rng);
    CHECK(grad_check({x, w2}, [](const auto& in) { return sum(mul(reshape(in[0], {6, 4}), in[1])); }).max_rel_error <
          kOpTol);
    const auto w3 = random_tensor64({2, 2, 4}, rng);
    CHECK(grad_check({x, w3}, [](const auto& in) { return sum(mul(narrow(in[0], 1, 1, 2), in[1])); }).max_rel_error <
          kOpTol);
    const auto y = random_tensor64({2, 2, 4}, rng);
    const auto w4 = random_tensor64({2, 5, 4}, rng);
    CHECK(grad_check({x, y, w4}, [](const auto& in) { return sum(mul(concat<double>({in[0], in[1]}, 1), in[2])); })
              .max_rel_error < kOpTol);
}

TEST_CASE("conv2d examples") {
    Rng rng(7);
    const Tensor x = ddseg::testing::random_tensor({3, 4, 5}, rng);
    Tensor eye(Shape{3, 3, 1, 1});
    for (int c = 0; c < 3; ++c) eye.data()[c * 3 + c] = 1.0f;
    const Tensor y = conv2d(x, eye, Tensor{}, 1, 0);
    CHECK(y.shape() == x.shape());
    for (std::size_t i = 0; i < y.data().size(); ++i) CHECK(y.data()[i] == x.data()[i]);

    const Tensor ones = conv2d(Tensor::ones({1, 3, 3}), Tensor::ones({1, 1, 3, 3}), Tensor{}, 1, 1);
    CHECK(ones.data()[4] == 9.0f);
    CHECK(ones.data()[0] == 4.0f);

    CHECK_THROWS_AS(conv2d(Tensor::ones({2, 3, 3}), Tensor::ones({1, 1, 3, 3}), Tensor{}, 1, 1), ShapeError);
}

TEST_CASE("conv gradients") {
    Rng rng(24);
    for (int stride : {1, 2}) {
        const auto x = random_tensor64({3, 6, 6}, rng);
        const auto k3 = random_tensor64({4, 3, 3, 3}, rng, 0.5);
        const auto b = random_tensor64({4}, rng);
        const auto r3 = grad_check({x, k3, b}, [stride](const auto& in) {
            const auto y = conv2d(in[0], in[1], in[2], stride, 1);
            return sum(mul(y, y));
        });
        CHECK(r3.max_rel_error < kOpTol);
        const auto k1 = random_tensor64({2, 3, 1, 1}, rng);
        const auto r1 = grad_check({x, k1}, [stride](const auto& in) {
            const auto y = conv2d(in[0], in[1], Tensor64{}, stride, 0);
            return sum(mul(y, y));
        });
        CHECK(r1.max_rel_error < kOpTol);
        const auto dk = random_tensor64({3, 1, 3, 3}, rng);
        const auto rd = grad_check({x, dk, random_tensor64({3}, rng)}, [stride](const auto& in) {
            const auto y = depthwise_conv2d(in[0], in[1], in[2], stride, 1);
            return sum(mul(y, y));
        });
        CHECK(rd.max_rel_error < kOpTol);
    }
}

TEST_CASE("bilinear_sample examples") {
    // 1 channel, 2x2 map [[0,1],[2,3]]
    const Tensor feat(Shape{1, 2, 2}, std::vector<float>{0, 1, 2, 3});
    const Tensor node(Shape{1, 2}, std::vector<float>{0.5f, -0.5f});  // row 1, col 0
    CHECK(bilinear_sample(feat, node).item() == 2.0f);
    const Tensor mid(Shape{1, 2}, std::vector<float>{-0.5f, 0.0f});  // row 0, between col 0 and 1
    CHECK(bilinear_sample(feat, mid).item() == doctest::Approx(0.5));
    const Tensor far(Shape{1, 2}, std::vector<float>{-5.0f, 7.0f});  // clamps to row 0, col 1
    CHECK(bilinear_sample(feat, far).item() == 1.0f);
}

TEST_CASE("bilinear_sample of a constant field is constant") {
    Rng rng(8);
    const Tensor64 feat(Shape{3, 5, 4}, 1.75);
    const Tensor64 pts = random_tensor64({40, 2}, rng, 1.5);
    const Tensor64 out = bilinear_sample(feat, pts);
    for (double v : out.data()) CHECK(v == doctest::Approx(1.75).epsilon(1e-12));
}

TEST_CASE("bilinear_sample gradients w.r.t. features and points") {
    Rng rng(25);
    for (int trial = 0; trial < 5; ++trial) {
        const auto feat = random_tensor64({3, 5, 6}, rng);
        const auto pts = off_node_points(7, 5, 6, rng);
        const auto w = random_tensor64({7, 3}, rng);
        const auto r = grad_check({feat, pts, w}, [](const auto& in) { return sum(mul(bilinear_sample(in[0], in[1]), in[2])); });
        CHECK(r.max_rel_error < kOpTol);
    }
}

TEST_CASE("resampling gradients") {
    Rng rng(26);
    const auto x = random_tensor64({2, 4, 4}, rng);
    CHECK(grad_check({x, random_tensor64({2, 8, 8}, rng)},
                     [](const auto& in) { return sum(mul(upsample_nearest(in[0], 2), in[1])); })
              .max_rel_error < kOpTol);
    CHECK(grad_check({x, random_tensor64({2, 16, 16}, rng)},
                     [](const auto& in) { return sum(mul(resize_bilinear(in[0], 16, 16), in[1])); })
              .max_rel_error < kOpTol);
    CHECK(grad_check({x, random_tensor64({2, 2, 2}, rng)},
                     [](const auto& in) { return sum(mul(avg_pool(in[0], 2), in[1])); })
              .max_rel_error < kOpTol);
    CHECK(grad_check({x, random_tensor64({2, 1, 1}, rng)},
                     [](const auto& in) { return sum(mul(global_avg_pool(in[0]), in[1])); })
              .max_rel_error < kOpTol);
}

TEST_CASE("gather_rows gradient") {
    Rng rng(27);
    const std::vector<int> ids{2, 0, 2, 1};
    const auto table = random_tensor64({3, 4}, rng);
    const auto w = random_tensor64({4, 4}, rng);
    CHECK(grad_check({table, w}, [&](const auto& in) { return sum(mul(gather_rows(in[0], std::span<const int>(ids)), in[1])); })
              .max_rel_error < kOpTol);
    CHECK_THROWS_AS(gather_rows(table, std::vector<int>{3}), DataError);
}

TEST_CASE("cross_entropy examples") {
    const std::vector<int> tgt(3, 2);
    const Tensor uniform(Shape{5, 3}, 0.25f);
    CHECK(cross_entropy(uniform, tgt, 255).item() == doctest::Approx(std::log(5.0)).epsilon(1e-6));

    Tensor hot(Shape{5, 3});
    for (int n = 0; n < 3; ++n) hot.data()[2 * 3 + n] = 100.0f;
    CHECK(cross_entropy(hot, tgt, 255).item() < 1e-6);

    const Tensor64 two(Shape{2, 1}, std::vector<double>{1.0, 2.0});
    CHECK(std::abs(cross_entropy(two, std::vector<int>{0}, 255).item() - 1.3132617) < 1e-4);
}

TEST_CASE("cross_entropy ignores masked positions") {
    Rng rng(28);
    const std::vector<int> tgt{0, 255, 3, 1, 255};
    const auto logits = random_tensor64({4, 5}, rng);
    CHECK(grad_check({logits}, [&](const auto& in) { return cross_entropy(in[0], std::span<const int>(tgt), 255); })
              .max_rel_error < kOpTol);

    Tensor64 l2 = logits.clone();
    l2.set_requires_grad(true);
    const std::vector<int> all_ignored(5, 255);
    Tape64 tape;
    {
        TapeScope64 scope(tape);
        const auto loss = cross_entropy(l2, std::span<const int>(all_ignored), 255);
        CHECK(loss.item() == 0.0);
        tape.backward(loss);
    }
    for (double g : l2.grad()) CHECK(g == 0.0);
    CHECK_THROWS_AS(cross_entropy(logits, std::vector<int>{0, 1, 4, 0, 0}, 255), DataError);
}

TEST_CASE("backward basics") {
    Tensor x(Shape{3}, std::vector<float>{1, -2, 3});
    x.set_requires_grad(true);
    Tape tape;
    {
        TapeScope scope(tape);
        tape.backward(sum(x));
    }
    for (float g : x.grad()) CHECK(g == 1.0f);

    x.clear_grad();
    Tape tape2;
    {
        TapeScope scope(tape2);
        tape2.backward(sum(mul(x, x)));
    }
    for (int i = 0; i < 3; ++i) CHECK(x.grad()[i] == 2.0f * x.data()[i]);

    Tape tape3;
    TapeScope scope(tape3);
    CHECK_THROWS_AS(tape3.backward(mul(x, x)), ShapeError);
}

TEST_CASE("two backward passes accumulate additively") {
    Rng rng(29);
    Tensor64 a = random_tensor64({3, 4}, rng);
    const Tensor64 b = random_tensor64({4, 2}, rng);
    a.set_requires_grad(true);
    Tape64 tape;
    Tensor64 loss;
    {
        TapeScope64 scope(tape);
        loss = sum(gelu(matmul(a, b)));
    }
    tape.backward(loss);
    const std::vector<double> once(a.grad().begin(), a.grad().end());
    tape.backward(loss);
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(a.grad()[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-12));
}

TEST_CASE("tape order is topological") {
    Tensor x(Shape{2}, std::vector<float>{1, 2});
    x.set_requires_grad(true);
    Tape tape;
    TapeScope scope(tape);
    const Tensor y = gelu(add(mul(x, x), x));
    (void)y;
    const auto ops = tape.ops();
    REQUIRE(ops.size() == 3);
    for (std::size_t i = 0; i < ops.size(); ++i) {
        for (const auto& in : ops[i].inputs) {
            if (in.is_leaf()) continue;
            bool earlier = false;
            for (std::size_t j = 0; j < i; ++j) earlier = earlier || ops[j].output.same_storage(in);
            CHECK(earlier);
        }
    }
}

TEST_CASE("no recording without a tape or without grad inputs") {
    Tensor x(Shape{2}, 1.0f);
    x.set_requires_grad(true);
    const Tensor y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
    Tape tape;
    TapeScope scope(tape);
    const Tensor z = mul(Tensor(Shape{2}, 1.0f), Tensor(Shape{2}, 2.0f));
    CHECK(tape.size() == 0);
    CHECK_FALSE(z.requires_grad());
}
