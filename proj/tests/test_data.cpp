#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "ddseg/data.hpp"
#include "ddseg/error.hpp"
#include "ddseg/metrics.hpp"
#include "doctest.h"

using namespace ddseg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("ddseg_test_" + name);
    fs::remove_all(p);
    return p;
}

bool same_sample(const RgbdSample& a, const RgbdSample& b) {
    return a.height == b.height && a.width == b.width && a.rgb == b.rgb && a.depth == b.depth && a.label == b.label;
}

// Per-pixel tally: IoU of each class by counting set memberships directly.
double brute_force_miou(const std::vector<std::vector<std::uint8_t>>& p, const std::vector<std::vector<std::uint8_t>>& g,
                        int K) {
    double total = 0;
    int n = 0;
    for (int c = 0; c < K; ++c) {
        long inter = 0, uni = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            for (std::size_t j = 0; j < p[i].size(); ++j) {
                if (g[i][j] == 255) continue;
                const bool in_p = p[i][j] == c, in_g = g[i][j] == c;
                inter += in_p && in_g;
                uni += in_p || in_g;
            }
        }
        if (uni == 0) continue;
        total += double(inter) / uni;
        ++n;
    }
    return total / n;
}

}  // namespace

TEST_CASE("synth_scene basics") {
    SceneSpec spec;
    Rng a(5), b(5);
    const auto s1 = synth_scene(spec, a), s2 = synth_scene(spec, b);
    CHECK(same_sample(s1, s2));
    s1.validate();
    for (float v : s1.rgb) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
        CHECK(std::lround(v * 255.0f) / 255.0f == v);
    }
    for (auto l : s1.label) CHECK(l < 6);

    SceneSpec empty = spec;
    empty.max_objects = 0;
    empty.invalid_rate = 0.0;
    Rng c(6);
    const auto bg = synth_scene(empty, c);
    for (auto l : bg.label) CHECK(l == 0);
    CHECK(bg.invalid_fraction() == 0.0);
}

TEST_CASE("synth_scene occlusion keeps the nearer object") {
    // find scenes with overlapping objects and confirm the visible label is the
    // one whose depth surface sits in front: visible depth must not exceed the
    // background, and every labelled pixel owns a depth nearer than the wall
    SceneSpec spec;
    spec.invalid_rate = 0.0;
    spec.reflective_class = -1;
    spec.min_objects = spec.max_objects = 2;
    spec.min_size = spec.max_size = 0.9;  // forces overlap
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const auto s = synth_scene(spec, rng);
        for (std::size_t i = 0; i < s.pixels(); ++i) {
            if (s.label[i] != 0) CHECK(s.depth[i] < spec.background_mm);
        }
    }
}

TEST_CASE("render_scene overlap carries the nearer label and depth") {
    SceneSpec spec;
    spec.height = spec.width = 32;
    spec.invalid_rate = 0.0;
    spec.reflective_class = -1;
    SceneObject far_box{1, 12, 12, 8, 8, 3000};
    SceneObject near_table{3, 18, 18, 8, 8, 1200};
    for (const auto& order : {std::vector<SceneObject>{far_box, near_table}, std::vector<SceneObject>{near_table, far_box}}) {
        Rng rng(1);
        const auto s = render_scene(spec, order, rng);
        const auto at = [&](int y, int x) { return static_cast<std::size_t>(y) * 32 + x; };
        // (15,15) lies in both rectangles
        CHECK(s.label[at(15, 15)] == 3);
        CHECK(s.depth[at(15, 15)] == 1200);
        // (6,6) only in the far box, (25,25) only in the near one, (0,31) neither
        CHECK(s.label[at(6, 6)] == 1);
        CHECK(s.depth[at(6, 6)] == 3000);
        CHECK(s.label[at(25, 25)] == 3);
        CHECK(s.label[at(0, 31)] == 0);
        CHECK(s.depth[at(0, 31)] > 4000);
    }
}

TEST_CASE("generic invalid fraction matches the configured rate") {
    SceneSpec spec;
    spec.reflective_class = -1;
    spec.invalid_rate = 0.05;
    double total = 0;
    for (int i = 0; i < 1000; ++i) {
        Rng rng = Rng::derive(9, 0, static_cast<std::uint64_t>(i));
        total += synth_scene(spec, rng).invalid_fraction();
    }
    CHECK(std::abs(total / 1000 / 0.05 - 1.0) < 0.10);
}

TEST_CASE("reflective objects lose 30-90% of their visible depth") {
    SceneSpec spec;
    spec.invalid_rate = 0.0;
    spec.min_objects = spec.max_objects = 1;
    spec.classes = 2;
    spec.reflective_class = 1;
    for (int seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        const auto s = synth_scene(spec, rng);
        std::size_t area = 0, dropped = 0;
        for (std::size_t i = 0; i < s.pixels(); ++i) {
            if (s.label[i] == 1) {
                ++area;
                dropped += s.depth[i] == 0;
            }
        }
        if (area == 0) continue;
        CHECK(dropped >= 0.3 * area - 1e-9);
        CHECK(dropped <= std::ceil(0.9 * area));
    }
}

TEST_CASE("dataset round-trip is bitwise lossless") {
    const auto ds = synth_dataset(SceneSpec{}, 5, 3);
    const auto dir = scratch("roundtrip");
    save_dataset(ds, dir);
    const auto back = load_dataset(dir);
    CHECK(back.classes == ds.classes);
    CHECK(back.seed == 3);
    REQUIRE(back.samples.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(same_sample(back.samples[i], ds.samples[i]));
    fs::remove_all(dir);
}

TEST_CASE("netpbm errors") {
    const auto dir = scratch("pnm");
    fs::create_directories(dir);
    {
        std::ofstream(dir / "bad.pgm") << "P2\n2 2\n255\n0 0 0 0";
        std::ofstream(dir / "short.pgm", std::ios::binary) << "P5\n4 4\n255\n" << "abc";
    }
    int w, h;
    CHECK_THROWS_AS(read_pgm8(dir / "bad.pgm", w, h), DataError);
    CHECK_THROWS_AS(read_pgm8(dir / "short.pgm", w, h), DataError);
    CHECK_THROWS_AS(read_pgm8(dir / "missing.pgm", w, h), DataError);
    CHECK_THROWS_AS(load_dataset(dir), DataError);

    write_pgm16(dir / "d.pgm", 3, 1, {0, 258, 65535});
    CHECK(read_pgm16(dir / "d.pgm", w, h) == std::vector<std::uint16_t>{0, 258, 65535});
    fs::remove_all(dir);
}

TEST_CASE("mean_iou hand case and degenerate inputs") {
    const auto r = mean_iou({{0, 0, 1, 0}}, {{0, 0, 1, 1}}, 2);
    CHECK(r.iou[0] == doctest::Approx(2.0 / 3.0));
    CHECK(r.iou[1] == doctest::Approx(0.5));
    CHECK(std::abs(r.mean_iou - 0.5833) < 1e-4);
    CHECK(r.at(1, 0) == 1);

    CHECK(mean_iou({{0, 1, 2}}, {{0, 1, 2}}, 3).mean_iou == 1.0);
    CHECK_THROWS_AS(mean_iou({{0, 1}}, {{255, 255}}, 2), DataError);
    CHECK_THROWS_AS(mean_iou({{0, 1}}, {{0, 1, 1}}, 2), ShapeError);

    // absent class is not averaged; ignored class leaves the mean
    const auto r2 = mean_iou({{0, 0, 1, 1}}, {{0, 0, 1, 1}}, 4);
    CHECK(std::isnan(r2.iou[3]));
    CHECK(r2.mean_iou == 1.0);
    const auto r3 = mean_iou({{0, 0, 1, 0}}, {{0, 0, 1, 1}}, 2, 255, {0});
    CHECK(r3.mean_iou == doctest::Approx(0.5));
}

TEST_CASE("mean_iou equals a brute-force tally on random masks") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const int K = rng.uniform_int(2, 5);
        std::vector<std::vector<std::uint8_t>> p(1, std::vector<std::uint8_t>(64)), g = p;
        for (int i = 0; i < 64; ++i) {
            p[0][i] = static_cast<std::uint8_t>(rng.uniform_int(0, K - 1));
            g[0][i] = rng.bernoulli(0.1) ? 255 : static_cast<std::uint8_t>(rng.uniform_int(0, K - 1));
        }
        CHECK(mean_iou(p, g, K).mean_iou == brute_force_miou(p, g, K));
    }
}

TEST_CASE("challenge subsets") {
    std::vector<RgbdSample> set;
    for (double f : {0.9, 0.1, 0.5, 0.0, 0.7}) {
        RgbdSample s;
        s.height = 1;
        s.width = 10;
        s.rgb.assign(30, 0.5f);
        s.label.assign(10, 0);
        s.depth.assign(10, 1000);
        for (int i = 0; i < static_cast<int>(std::lround(f * 10)); ++i) s.depth[i] = 0;
        set.push_back(s);
    }
    CHECK(invalid_subset(set) == std::vector<std::size_t>{0});
    CHECK(invalid_subset(set, 0.4) == std::vector<std::size_t>{0, 4});
    CHECK(invalid_subset(set, 1.0) == std::vector<std::size_t>{0, 4, 2, 1, 3});
    for (auto& s : set) s.depth.assign(10, 1000);
    CHECK(invalid_subset(set) == std::vector<std::size_t>{0});  // ties by id
    CHECK_THROWS_AS(invalid_subset({}), DataError);

    const auto dark = low_light(set[0]);
    CHECK(dark.rgb[0] == 0.25f);
    CHECK(dark.depth == set[0].depth);
    CHECK(dark.label == set[0].label);
    RgbdSample ramp = set[0];
    ramp.rgb = {0.0f, 0.2f, 0.4f, 1.0f};
    const auto rd = low_light(ramp);
    CHECK(rd.rgb[3] == 1.0f);
    CHECK(std::is_sorted(rd.rgb.begin(), rd.rgb.end()));

    CHECK(small_objects_config("nyuv2") ==
          std::vector<std::string>{"wall", "floor", "ceiling", "otherstructure", "otherfurniture", "otherprop"});
    CHECK(small_objects_config("sunrgbd") == std::vector<std::string>{"wall", "floor", "ceiling"});
    CHECK(small_objects_config("synthetic", std::vector<std::string>{"wall"}) == std::vector<std::string>{"wall"});
    CHECK(small_objects_config("synthetic") == std::vector<std::string>{"wall"});
    CHECK_THROWS_AS(small_objects_config("scannet"), UsageError);
    CHECK(class_ids({"wall", "box", "ball"}, {"ball", "wall"}) == std::vector<int>{2, 0});
    CHECK_THROWS_AS(class_ids({"wall"}, {"floor"}), DataError);
}
