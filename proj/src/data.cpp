#include "ddseg/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "ddseg/error.hpp"
#include "json.hpp"

namespace ddseg {

namespace fs = std::filesystem;

double RgbdSample::invalid_fraction() const {
    if (depth.empty()) return 0.0;
    return static_cast<double>(std::count(depth.begin(), depth.end(), std::uint16_t{0})) / depth.size();
}

void RgbdSample::validate() const {
    if (height <= 0 || width <= 0) throw DataError("sample has empty dimensions");
    if (rgb.size() != pixels() * 3 || depth.size() != pixels() || label.size() != pixels()) {
        throw DataError("sample buffers do not match " + std::to_string(height) + "x" + std::to_string(width));
    }
}

std::vector<std::string> default_class_names(int classes) {
    static const std::vector<std::string> names{"wall", "box", "ball", "table", "chair", "mirror"};
    if (classes == static_cast<int>(names.size())) return names;
    std::vector<std::string> out{"background"};
    for (int c = 1; c < classes; ++c) out.push_back("class" + std::to_string(c));
    return out;
}

namespace {

enum class Shape2 { rect, ellipse, wide, tall };

struct ClassLook {
    std::array<double, 3> color;
    Shape2 shape;
};

ClassLook class_look(int c) {
    // the named six-class set, then a generic cycle for larger K
    static const std::array<ClassLook, 6> named{{
        {{0.62, 0.57, 0.50}, Shape2::rect},     // wall (background)
        {{0.55, 0.33, 0.16}, Shape2::rect},     // box
        {{0.86, 0.18, 0.20}, Shape2::ellipse},  // ball
        {{0.18, 0.30, 0.72}, Shape2::wide},     // table
        {{0.90, 0.80, 0.18}, Shape2::tall},     // chair
        {{0.80, 0.86, 0.92}, Shape2::rect},     // mirror
    }};
    if (c < static_cast<int>(named.size())) return named[static_cast<std::size_t>(c)];
    const double hue = std::fmod(c * 0.6180339887, 1.0);
    const auto ch = [&](double off) { return 0.5 + 0.4 * std::cos(2.0 * std::numbers::pi * (hue + off)); };
    return {{ch(0.0), ch(1.0 / 3.0), ch(2.0 / 3.0)}, static_cast<Shape2>(c % 4)};
}

float quantize(double v) {
    const int k = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    return static_cast<float>(k) / 255.0f;
}

using Object = SceneObject;

bool covers(const Object& o, int y, int x) {
    const double dy = (y + 0.5 - o.cy) / o.ry, dx = (x + 0.5 - o.cx) / o.rx;
    if (class_look(o.cls).shape == Shape2::ellipse) return dy * dy + dx * dx <= 1.0;
    return std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
}

double object_depth(const Object& o, int y, int x) {
    const double dy = y + 0.5 - o.cy, dx = x + 0.5 - o.cx;
    double d = o.depth + o.gy * dy + o.gx * dx;
    if (class_look(o.cls).shape == Shape2::ellipse) {
        const double r2 = (dy * dy) / (o.ry * o.ry) + (dx * dx) / (o.rx * o.rx);
        d -= 20.0 * std::min(o.ry, o.rx) * std::sqrt(std::max(0.0, 1.0 - r2));
    }
    return d;
}

std::uint16_t to_mm(double d) { return static_cast<std::uint16_t>(std::clamp(std::lround(d), 1L, 65535L)); }

// Pixel count of the digital disk of radius r.
int disk_area(int r) {
    int n = 0;
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) n += dy * dy + dx * dx <= r * r;
    }
    return n;
}

}  // namespace

RgbdSample synth_scene(const SceneSpec& spec, Rng& rng) {
    if (spec.classes < 2) throw UsageError("scene needs a background and at least one object class");
    const int H = spec.height, W = spec.width;
    const int n_obj = spec.max_objects <= 0 ? 0 : rng.uniform_int(spec.min_objects, spec.max_objects);
    std::vector<Object> objects;
    for (int k = 0; k < n_obj; ++k) {
        Object o;
        o.cls = rng.uniform_int(1, spec.classes - 1);
        const auto look = class_look(o.cls);
        double ry = 0.5 * H * rng.uniform(spec.min_size, spec.max_size);
        double rx = 0.5 * W * rng.uniform(spec.min_size, spec.max_size);
        if (look.shape == Shape2::wide) ry *= 0.55, rx *= 1.3;
        if (look.shape == Shape2::tall) ry *= 1.3, rx *= 0.55;
        if (look.shape == Shape2::ellipse) rx = ry;
        o.ry = std::max(2.0, ry);
        o.rx = std::max(2.0, rx);
        o.cy = rng.uniform(0.0, H);
        o.cx = rng.uniform(0.0, W);
        o.depth = rng.uniform(spec.near_mm, spec.far_mm);
        o.gy = rng.uniform(-4.0, 4.0);
        o.gx = rng.uniform(-4.0, 4.0);
        for (int c = 0; c < 3; ++c) o.color[c] = look.color[c] + rng.uniform(-0.07, 0.07);
        objects.push_back(o);
    }
    return render_scene(spec, objects, rng);
}

RgbdSample render_scene(const SceneSpec& spec, const std::vector<SceneObject>& objects, Rng& rng) {
    if (spec.invalid_rate < 0.0 || spec.invalid_rate >= 1.0) throw UsageError("invalid rate must be in [0,1)");
    const int H = spec.height, W = spec.width;
    if (H <= 0 || W <= 0) throw UsageError("scene size must be positive");
    RgbdSample s;
    s.height = H;
    s.width = W;
    s.rgb.assign(static_cast<std::size_t>(H) * W * 3, 0.0f);
    s.depth.assign(static_cast<std::size_t>(H) * W, 0);
    s.label.assign(static_cast<std::size_t>(H) * W, 0);
    std::vector<double> colour(static_cast<std::size_t>(H) * W * 3);
    std::vector<int> owner(static_cast<std::size_t>(H) * W, -1);

    // background: lit from above, receding towards the top
    const auto bg = class_look(0).color;
    const double bg_jitter = rng.uniform(-0.06, 0.06);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * W + x;
            const double shade = 1.0 - 0.25 * y / H;
            for (int c = 0; c < 3; ++c) colour[i * 3 + c] = (bg[c] + bg_jitter) * shade;
            s.depth[i] = to_mm(spec.background_mm + 8.0 * (H - y));
        }
    }

    // painter's order: far to near
    std::vector<int> order(objects.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return objects[a].depth > objects[b].depth; });
    for (int idx : order) {
        const auto& o = objects[static_cast<std::size_t>(idx)];
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                if (!covers(o, y, x)) continue;
                const std::size_t i = static_cast<std::size_t>(y) * W + x;
                const double shade = 1.0 - 0.2 * (y + 0.5 - (o.cy - o.ry)) / (2 * o.ry);
                for (int c = 0; c < 3; ++c) colour[i * 3 + c] = o.color[c] * shade;
                s.depth[i] = to_mm(object_depth(o, y, x));
                s.label[i] = static_cast<std::uint8_t>(o.cls);
                owner[i] = idx;
            }
        }
    }
    for (std::size_t i = 0; i < colour.size(); ++i) s.rgb[i] = quantize(colour[i] + 0.025 * rng.normal());

    // reflective surfaces: drop the visible pixels nearest a random anchor
    for (std::size_t k = 0; k < objects.size(); ++k) {
        if (objects[k].cls != spec.reflective_class) continue;
        std::vector<std::size_t> visible;
        for (std::size_t i = 0; i < owner.size(); ++i) {
            if (owner[i] == static_cast<int>(k)) visible.push_back(i);
        }
        if (visible.empty()) continue;
        const double frac = rng.uniform(spec.reflective_min, spec.reflective_max);
        const std::size_t anchor = visible[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(visible.size()) - 1))];
        const double ay = static_cast<double>(anchor / W), ax = static_cast<double>(anchor % W);
        std::stable_sort(visible.begin(), visible.end(), [&](std::size_t a, std::size_t b) {
            const double da = std::hypot(double(a / W) - ay, double(a % W) - ax);
            const double db = std::hypot(double(b / W) - ay, double(b % W) - ax);
            return da < db;
        });
        const auto n_drop = static_cast<std::size_t>(std::ceil(frac * visible.size()));
        for (std::size_t j = 0; j < n_drop && j < visible.size(); ++j) s.depth[visible[j]] = 0;
    }

    // sensor dropout: Poisson number of disks on the torus. A pixel stays valid
    // with probability exp(-mu * E[area] / HW), so mu is solved for the target rate.
    if (spec.invalid_rate > 0.0) {
        double mean_area = 0.0;
        for (int r = spec.blob_min_radius; r <= spec.blob_max_radius; ++r) mean_area += disk_area(r);
        mean_area /= (spec.blob_max_radius - spec.blob_min_radius + 1);
        const double mu = -std::log1p(-spec.invalid_rate) * H * W / mean_area;
        const int blobs = rng.poisson(mu);
        for (int b = 0; b < blobs; ++b) {
            const int cy = rng.uniform_int(0, H - 1), cx = rng.uniform_int(0, W - 1);
            const int r = rng.uniform_int(spec.blob_min_radius, spec.blob_max_radius);
            for (int dy = -r; dy <= r; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    if (dy * dy + dx * dx > r * r) continue;
                    const int y = ((cy + dy) % H + H) % H, x = ((cx + dx) % W + W) % W;
                    s.depth[static_cast<std::size_t>(y) * W + x] = 0;
                }
            }
        }
    }
    return s;
}

Dataset synth_dataset(const SceneSpec& spec, int count, std::uint64_t seed, std::uint64_t split) {
    Dataset ds;
    ds.classes = default_class_names(spec.classes);
    ds.height = spec.height;
    ds.width = spec.width;
    ds.seed = seed;
    for (int i = 0; i < count; ++i) {
        Rng rng = Rng::derive(seed, split, static_cast<std::uint64_t>(i));
        ds.samples.push_back(synth_scene(spec, rng));
    }
    return ds;
}

// ---- netpbm ----

namespace {

struct PnmHeader {
    std::string magic;
    int width = 0, height = 0, maxval = 0;
};

PnmHeader read_header(std::istream& in, const fs::path& path) {
    PnmHeader h;
    auto token = [&]() {
        std::string t;
        char c;
        while (in.get(c)) {
            if (c == '#') {
                std::string skip;
                std::getline(in, skip);
            } else if (!std::isspace(static_cast<unsigned char>(c))) {
                t.push_back(c);
                break;
            }
        }
        while (in.get(c) && !std::isspace(static_cast<unsigned char>(c))) t.push_back(c);
        return t;
    };
    h.magic = token();
    try {
        h.width = std::stoi(token());
        h.height = std::stoi(token());
        h.maxval = std::stoi(token());
    } catch (const std::exception&) {
        throw DataError("malformed netpbm header in " + path.string());
    }
    if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 65535) {
        throw DataError("bad netpbm dimensions in " + path.string());
    }
    return h;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

void read_exact(std::istream& in, char* dst, std::size_t n, const fs::path& path) {
    in.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw DataError("truncated pixel data in " + path.string());
}

}  // namespace

void write_ppm(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& rgb) {
    if (rgb.size() != static_cast<std::size_t>(width) * height * 3) throw DataError("ppm buffer size mismatch");
    auto out = open_out(path);
    out << "P6\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
}

std::vector<std::uint8_t> read_ppm(const fs::path& path, int& width, int& height) {
    auto in = open_in(path);
    const auto h = read_header(in, path);
    if (h.magic != "P6" || h.maxval != 255) throw DataError(path.string() + " is not an 8-bit P6 image");
    width = h.width;
    height = h.height;
    std::vector<std::uint8_t> v(static_cast<std::size_t>(width) * height * 3);
    read_exact(in, reinterpret_cast<char*>(v.data()), v.size(), path);
    return v;
}

void write_pgm8(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& v) {
    if (v.size() != static_cast<std::size_t>(width) * height) throw DataError("pgm buffer size mismatch");
    auto out = open_out(path);
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size()));
}

std::vector<std::uint8_t> read_pgm8(const fs::path& path, int& width, int& height) {
    auto in = open_in(path);
    const auto h = read_header(in, path);
    if (h.magic != "P5" || h.maxval > 255) throw DataError(path.string() + " is not an 8-bit P5 image");
    width = h.width;
    height = h.height;
    std::vector<std::uint8_t> v(static_cast<std::size_t>(width) * height);
    read_exact(in, reinterpret_cast<char*>(v.data()), v.size(), path);
    return v;
}

void write_pgm16(const fs::path& path, int width, int height, const std::vector<std::uint16_t>& v) {
    if (v.size() != static_cast<std::size_t>(width) * height) throw DataError("pgm buffer size mismatch");
    std::vector<std::uint8_t> bytes(v.size() * 2);
    for (std::size_t i = 0; i < v.size(); ++i) {
        bytes[2 * i] = static_cast<std::uint8_t>(v[i] >> 8);
        bytes[2 * i + 1] = static_cast<std::uint8_t>(v[i] & 0xff);
    }
    auto out = open_out(path);
    out << "P5\n" << width << " " << height << "\n65535\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint16_t> read_pgm16(const fs::path& path, int& width, int& height) {
    auto in = open_in(path);
    const auto h = read_header(in, path);
    if (h.magic != "P5" || h.maxval < 256) throw DataError(path.string() + " is not a 16-bit P5 image");
    width = h.width;
    height = h.height;
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(width) * height * 2);
    read_exact(in, reinterpret_cast<char*>(bytes.data()), bytes.size(), path);
    std::vector<std::uint16_t> v(bytes.size() / 2);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::uint16_t>(bytes[2 * i] << 8 | bytes[2 * i + 1]);
    return v;
}

std::string sample_stem(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04zu", index);
    return buf;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        s.validate();
        std::vector<std::uint8_t> rgb(s.rgb.size());
        for (std::size_t j = 0; j < rgb.size(); ++j) {
            rgb[j] = static_cast<std::uint8_t>(std::lround(std::clamp(s.rgb[j], 0.0f, 1.0f) * 255.0f));
        }
        const auto stem = sample_stem(i);
        write_ppm(dir / (stem + "_rgb.ppm"), s.width, s.height, rgb);
        write_pgm16(dir / (stem + "_depth.pgm"), s.width, s.height, s.depth);
        write_pgm8(dir / (stem + "_label.pgm"), s.width, s.height, s.label);
    }
    nlohmann::json manifest{{"classes", ds.classes},
                            {"count", ds.samples.size()},
                            {"width", ds.width},
                            {"height", ds.height},
                            {"seed", ds.seed}};
    auto out = open_out(dir / "manifest.json");
    out << manifest.dump(2) << "\n";
}

Dataset load_dataset(const fs::path& dir) {
    auto in = open_in(dir / "manifest.json");
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed manifest in " + dir.string() + ": " + e.what());
    }
    Dataset ds;
    std::size_t count = 0;
    try {
        ds.classes = manifest.at("classes").get<std::vector<std::string>>();
        count = manifest.at("count").get<std::size_t>();
        ds.width = manifest.at("width").get<int>();
        ds.height = manifest.at("height").get<int>();
        ds.seed = manifest.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest in " + dir.string() + " is missing fields: " + e.what());
    }
    if (ds.classes.empty() || ds.classes.size() > 255) throw DataError("manifest class list must have 1..255 entries");
    for (std::size_t i = 0; i < count; ++i) {
        const auto stem = sample_stem(i);
        RgbdSample s;
        int w = 0, h = 0;
        const auto rgb = read_ppm(dir / (stem + "_rgb.ppm"), w, h);
        s.width = w;
        s.height = h;
        s.depth = read_pgm16(dir / (stem + "_depth.pgm"), w, h);
        if (w != s.width || h != s.height) throw DataError("depth/rgb size mismatch for sample " + stem);
        s.label = read_pgm8(dir / (stem + "_label.pgm"), w, h);
        if (w != s.width || h != s.height) throw DataError("label/rgb size mismatch for sample " + stem);
        if (s.width != ds.width || s.height != ds.height) throw DataError("sample " + stem + " disagrees with manifest size");
        s.rgb.resize(rgb.size());
        for (std::size_t j = 0; j < rgb.size(); ++j) s.rgb[j] = static_cast<float>(rgb[j]) / 255.0f;
        for (auto l : s.label) {
            if (l != 255 && l >= ds.classes.size()) throw DataError("sample " + stem + " has label id " + std::to_string(l) + " outside the class list");
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

void save_labels(const std::vector<std::vector<std::uint8_t>>& labels, int width, int height, const fs::path& dir) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < labels.size(); ++i) write_pgm8(dir / (sample_stem(i) + "_label.pgm"), width, height, labels[i]);
}

std::vector<std::vector<std::uint8_t>> load_labels(const fs::path& dir, int& width, int& height) {
    if (!fs::is_directory(dir)) throw DataError("no such directory: " + dir.string());
    std::vector<std::vector<std::uint8_t>> out;
    width = height = 0;
    for (std::size_t i = 0;; ++i) {
        const auto p = dir / (sample_stem(i) + "_label.pgm");
        if (!fs::exists(p)) break;
        int w = 0, h = 0;
        out.push_back(read_pgm8(p, w, h));
        if (i == 0) {
            width = w;
            height = h;
        } else if (w != width || h != height) {
            throw DataError("label size mismatch in " + p.string());
        }
    }
    if (out.empty()) throw DataError("no NNNN_label.pgm files in " + dir.string());
    return out;
}

}  // namespace ddseg
