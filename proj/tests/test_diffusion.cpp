#include <cmath>
#include <set>
#include <vector>

#include "ddseg/diffusion.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace ddseg;
using ddseg::testing::random_tensor;

namespace {

// cosine schedule evaluated in long double straight from the closed form
long double cosine_gamma_ld(long double t) {
    const long double pi = 3.141592653589793238462643383279502884L;
    const long double c = std::cos((t + 0.0002L) / 1.00025L * pi / 2.0L);
    const long double n = 1.0L / (c * c) - 1.0L;
    return -std::log(n > 1e-5L ? n : 1e-5L);
}

NoiseSchedule kind(ScheduleKind k) {
    NoiseSchedule s;
    s.kind = k;
    return s;
}

}  // namespace

TEST_CASE("cosine log-snr closed-form values") {
    const auto s = kind(ScheduleKind::cosine);
    CHECK(std::abs(alpha_bar(0.5, s) - 0.5) < 1e-3);
    CHECK(std::abs(log_snr(0.0, s) - 11.512925464970229) < 1e-9);  // floor active: -log(1e-5)
    CHECK(alpha_bar(1.0, s) < 1e-4);
    CHECK(log_snr(1.0, s) < -10.0);
    for (double t : {0.0, 0.13, 0.5, 0.77, 0.999, 1.0}) {
        CHECK(std::abs(log_snr(t, s) - static_cast<double>(cosine_gamma_ld(t))) < 1e-9);
    }
}

TEST_CASE("alpha_bar is strictly decreasing and inside (0,1) for both kinds") {
    for (auto k : {ScheduleKind::cosine, ScheduleKind::linear}) {
        const auto s = kind(k);
        // t = i/1000, i = 1..1000: the lattice the sampler visits. Including t = 0 as
        // well would put two points inside the log floor (t < ~0.0018), where the
        // cosine value is flat by construction.
        double prev = 2.0;
        for (int i = 1; i <= 1000; ++i) {
            const double a = alpha_bar(i / 1000.0, s);
            CHECK(a > 0.0);
            CHECK(a < 1.0);
            CHECK(a < prev);
            prev = a;
        }
        CHECK(alpha_bar(0.2, s) > alpha_bar(0.8, s));
        CHECK(alpha_bar(0.0, s) >= alpha_bar(0.001, s));
    }
}

TEST_CASE("linear schedule is the cumulative product of (1 - beta)") {
    auto s = kind(ScheduleKind::linear);
    // knots: t = k / (T - 1) picks prod_{i<=k}
    double prod = 1.0;
    for (int k = 0; k < s.steps; ++k) {
        prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * k / (s.steps - 1));
        if (k % 111 == 0 || k == s.steps - 1) CHECK(alpha_bar(double(k) / (s.steps - 1), s) == doctest::Approx(prod).epsilon(1e-10));
    }
    s.beta_start = s.beta_end = 0.0;
    CHECK(alpha_bar(0.3, s) == 1.0);
    CHECK(alpha_bar(1.0, s) == 1.0);
}

TEST_CASE("parse_schedule") {
    CHECK(parse_schedule("cosine") == ScheduleKind::cosine);
    CHECK(parse_schedule("linear") == ScheduleKind::linear);
    CHECK_THROWS_AS(parse_schedule("sqrt"), UsageError);
}

TEST_CASE("encode_labels range, zero rows and injectivity") {
    Rng rng(1);
    auto book = LabelCodebook<float>::make(6, 32, 0.01, rng);
    std::vector<int> ids;
    for (int i = 0; i < 64; ++i) ids.push_back(i % 6);
    ids[5] = kIgnoreLabel;
    const auto e = encode_labels(ids, 8, 8, book);
    CHECK(e.shape() == Shape{32, 8, 8});
    for (float v : e.data()) CHECK(std::abs(v) <= 0.01f);

    // ignore encodes like class 0
    for (int d = 0; d < 32; ++d) CHECK(e.data()[d * 64 + 5] == e.data()[d * 64 + 0]);

    // pairwise distinct classes
    for (int a = 0; a < 6; ++a) {
        for (int b = a + 1; b < 6; ++b) {
            double dist = 0.0;
            for (int d = 0; d < 32; ++d) dist += std::abs(e.data()[d * 64 + 6 + a] - e.data()[d * 64 + 6 + b]);
            CHECK(dist > 0.0);
        }
    }

    auto zero = book;
    zero.table = Tensor::zeros({6, 32});
    for (float v : encode_labels(ids, 8, 8, zero).data()) CHECK(v == 0.0f);

    ids[0] = 6;
    CHECK_THROWS_AS(encode_labels(ids, 8, 8, book), DataError);
    CHECK_THROWS_AS(encode_labels(std::vector<int>(10, 0), 8, 8, book), ShapeError);
}

TEST_CASE("corrupt is the exact affine mix") {
    Rng rng(2);
    const auto s = kind(ScheduleKind::cosine);
    const auto y = random_tensor({4, 3, 3}, rng, 0.01f);
    const auto z = corrupt(y, 0.3, Tensor::zeros({4, 3, 3}), s);
    const double sa = std::sqrt(alpha_bar(0.3, s));
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(z.data()[i] == doctest::Approx(sa * y.data()[i]).epsilon(1e-6));

    // abar -> 1 at t = 0 (cosine floor keeps it just below one)
    const auto eps = random_tensor({4, 3, 3}, rng);
    const auto near = corrupt(y, 0.0, eps, s);
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(std::abs(near.data()[i] - y.data()[i]) < 1e-2);
    CHECK_THROWS_AS(corrupt(y, 0.3, Tensor::zeros({4, 3}), s), ShapeError);
}

TEST_CASE("corrupt marginal variance matches 1 - abar (Monte Carlo)") {
    Rng rng(3);
    for (auto k : {ScheduleKind::cosine, ScheduleKind::linear}) {
        const auto s = kind(k);
        const double t = 0.4;
        const Tensor y(Shape{1}, std::vector<float>{0.007f});
        const double sa = std::sqrt(alpha_bar(t, s));
        double m = 0.0, m2 = 0.0;
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            const Tensor eps(Shape{1}, std::vector<float>{static_cast<float>(rng.normal())});
            const double r = corrupt(y, t, eps, s).item() - sa * 0.007;
            m += r;
            m2 += r * r;
        }
        const double var = m2 / n - (m / n) * (m / n);
        CHECK(std::abs(var / (1.0 - alpha_bar(t, s)) - 1.0) < 0.05);
    }
}

TEST_CASE("ddim_step fixed point, limit and scalar oracle") {
    Rng rng(4);
    const auto s = kind(ScheduleKind::cosine);
    const auto book = LabelCodebook<float>::make(3, 8, 0.01, rng);
    std::vector<int> pred(16);
    for (auto& p : pred) p = rng.uniform_int(0, 2);
    const auto enc = encode_labels(pred, 4, 4, book);

    // mask_t generated from enc: t_next = t_now reproduces it
    for (double t : {0.9, 0.5, 0.1}) {
        const auto mt = corrupt(enc, t, random_tensor({8, 4, 4}, rng), s);
        const auto next = ddim_step(mt, pred, t, t, book, s);
        for (std::int64_t i = 0; i < mt.numel(); ++i) CHECK(std::abs(next.data()[i] - mt.data()[i]) < 1e-6);
    }

    // t_next = 0 pulls toward the encoding
    const auto mt = random_tensor({8, 4, 4}, rng);
    const auto to_zero = ddim_step(mt, pred, 1.0, 0.0, book, s);
    const double tol = std::sqrt(1.0 - alpha_bar(0.0, s)) * 1e5;  // |eps| bounded by a few * 1e4 at t=1
    for (std::int64_t i = 0; i < mt.numel(); ++i) CHECK(std::abs(to_zero.data()[i] - enc.data()[i]) < tol);

    // scalar oracle
    const double tn = 0.8, tx = 0.35;
    const auto step = ddim_step(mt, pred, tn, tx, book, s);
    const double an = alpha_bar(tn, s), ax = alpha_bar(tx, s);
    for (std::int64_t i = 0; i < mt.numel(); ++i) {
        const double e = (mt.data()[i] - std::sqrt(an) * enc.data()[i]) / std::sqrt(1 - an);
        const double want = std::sqrt(ax) * enc.data()[i] + std::sqrt(1 - ax) * e;
        CHECK(step.data()[i] == doctest::Approx(want).epsilon(1e-5));
    }
    CHECK_THROWS_AS(ddim_step(mt, pred, 0.2, 0.5, book, s), UsageError);
}

TEST_CASE("sampler time pairs follow the reverse schedule") {
    const auto times = sampler_times({3, 1.0, 0});
    REQUIRE(times.size() == 3);
    CHECK(times[0].first == 1.0);
    CHECK(times[0].second == doctest::Approx(1.0 / 3.0));
    CHECK(times[1].first == doctest::Approx(2.0 / 3.0));
    CHECK(times[1].second == 0.0);
    CHECK(times[2].first == doctest::Approx(1.0 / 3.0));
    CHECK(times[2].second == 0.0);
    CHECK(sampler_times({1, 1.0, 0}).size() == 1);
    CHECK_THROWS_AS(sampler_times({0, 1.0, 0}), UsageError);
}
