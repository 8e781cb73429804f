#include "ddseg/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace ddseg {

DecoderConfig ModelConfig::decoder() const {
    DecoderConfig d;
    d.mask_channels = embed_dim;
    d.cond_channels = cond_channels;
    d.hidden = dec_hidden;
    d.heads = dec_heads;
    d.points = dec_points;
    d.layers = dec_layers;
    d.classes = classes;
    d.mlp_ratio = dec_mlp_ratio;
    return d;
}

void ModelConfig::validate() const {
    if (classes < 2 || classes > 255) throw UsageError("classes must be in [2, 255]");
    if (image_h <= 0 || image_w <= 0 || image_h % 32 != 0 || image_w % 32 != 0) {
        throw UsageError("image size must be a positive multiple of 32");
    }
    if (!(scale > 0.0)) throw UsageError("label scale must be positive");
    if (embed_dim < 1 || cond_channels < 1) throw UsageError("embedding and conditioning widths must be positive");
    if (dec_layers < 1 || dec_heads < 1 || dec_hidden % dec_heads != 0 || dec_hidden % 2 != 0) {
        throw UsageError("decoder hidden width must be even and divisible by the head count");
    }
}

template <typename T>
ModelWeights<T> ModelWeights<T>::make(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ModelWeights m;
    m.config = cfg;
    m.cond = ConditionWeights<T>::make(cfg.stages, cfg.cond_channels, cfg.image_h, cfg.image_w, rng);
    m.codebook = LabelCodebook<T>::make(cfg.classes, cfg.embed_dim, cfg.scale, rng);
    m.decoder = DecoderWeights<T>::make(cfg.decoder(), rng);
    return m;
}

template <typename T>
std::size_t ModelWeights<T>::parameter_count() {
    std::size_t n = 0;
    visit([&](const std::string&, BasicTensor<T>& t) { n += static_cast<std::size_t>(t.numel()); });
    return n;
}

template <typename T>
BasicTensor<T> prepare_rgb(const RgbdSample& s) {
    s.validate();
    const std::size_t n = s.pixels();
    BasicTensor<T> t(Shape{3, s.height, s.width});
    auto d = t.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 3; ++c) d[c * n + i] = static_cast<T>((s.rgb[i * 3 + c] - 0.5) / 0.25);
    }
    return t;
}

template <typename T>
BasicTensor<T> prepare_depth(const RgbdSample& s) {
    s.validate();
    std::uint16_t lo = 65535, hi = 0;
    for (auto v : s.depth) {
        if (v == 0) continue;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    BasicTensor<T> t(Shape{1, s.height, s.width});
    auto d = t.data();
    const double span = hi > lo ? static_cast<double>(hi - lo) : 1.0;
    for (std::size_t i = 0; i < s.pixels(); ++i) {
        const auto v = s.depth[i];
        d[i] = v == 0 ? T{0} : static_cast<T>((v - lo) / span);
    }
    return t;
}

std::vector<int> downsample_labels(std::span<const int> labels, int h, int w, int factor) {
    if (static_cast<std::size_t>(h) * w != labels.size()) throw ShapeError("label map size mismatch");
    if (factor < 1 || h % factor != 0 || w % factor != 0) throw ShapeError("label map not divisible by factor");
    const int oh = h / factor, ow = w / factor, off = factor / 2;
    std::vector<int> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            out[static_cast<std::size_t>(y) * ow + x] =
                labels[static_cast<std::size_t>(y * factor + off) * w + (x * factor + off)];
        }
    }
    return out;
}

std::vector<int> to_ids(const std::vector<std::uint8_t>& labels) { return {labels.begin(), labels.end()}; }

template <typename T>
std::vector<int> sample(const ModelWeights<T>& model, const BasicTensor<T>& rgb, const BasicTensor<T>& depth,
                        const SamplerConfig& cfg, SampleTrace* trace) {
    const auto times = sampler_times(cfg);
    const auto h = rgb.dim(1), w = rgb.dim(2);
    const auto cond = full_condition(rgb, depth, model.cond, trace ? &trace->cond : nullptr);
    Rng rng(cfg.seed);
    BasicTensor<T> mask(Shape{model.config.embed_dim, h / 4, w / 4});
    for (auto& v : mask.data()) v = static_cast<T>(rng.normal());
    std::vector<int> pred;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const auto [t_now, t_next] = times[i];
        pred = predict_mask(decode(mask, cond, t_now, model.decoder));
        if (trace) trace->steps.push_back(pred);
        // the last update would only feed a prediction nobody reads
        if (i + 1 < times.size()) {
            const auto small = downsample_labels(pred, static_cast<int>(h), static_cast<int>(w), 4);
            mask = ddim_step(mask, small, t_now, t_next, model.codebook, model.config.schedule);
        }
    }
    return pred;
}

std::vector<std::uint8_t> predict_sample(const ModelWeights<float>& model, const RgbdSample& s,
                                         const SamplerConfig& cfg, SampleTrace* trace) {
    const auto ids = sample(model, prepare_rgb<float>(s), prepare_depth<float>(s), cfg, trace);
    return {ids.begin(), ids.end()};
}

// ---- checkpoint ----

namespace {

constexpr char kMagic[4] = {'D', 'D', 'S', 'G'};
constexpr std::uint32_t kVersion = 1;
enum : std::uint8_t { kF32 = 0, kF64 = 1 };

template <typename U>
void put(std::string& buf, U v) {
    static_assert(std::is_trivially_copyable_v<U>);
    char bytes[sizeof(U)];
    std::memcpy(bytes, &v, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
    buf.append(bytes, sizeof(U));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    const std::string& where;

    template <typename U>
    U get() {
        if (pos + sizeof(U) > buf.size()) throw DataError("truncated checkpoint " + where);
        char bytes[sizeof(U)];
        std::memcpy(bytes, buf.data() + pos, sizeof(U));
        if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
        pos += sizeof(U);
        U v;
        std::memcpy(&v, bytes, sizeof(U));
        return v;
    }
    std::string str(std::size_t n) {
        if (pos + n > buf.size()) throw DataError("truncated checkpoint " + where);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

struct Entry {
    std::string name;
    std::uint8_t dtype = kF32;
    Shape shape;
    std::vector<float> f32;
    std::vector<double> f64;
};

std::vector<std::pair<std::string, double>> config_meta(const ModelConfig& c) {
    std::vector<std::pair<std::string, double>> m{
        {"classes", c.classes},         {"image_h", c.image_h},
        {"image_w", c.image_w},         {"head_dim", c.stages.head_dim},
        {"enc_mlp_ratio", c.stages.mlp_ratio},
        {"cond_channels", c.cond_channels},
        {"embed_dim", c.embed_dim},     {"scale", c.scale},
        {"schedule", c.schedule.kind == ScheduleKind::cosine ? 0.0 : 1.0},
        {"dec_hidden", c.dec_hidden},   {"dec_heads", c.dec_heads},
        {"dec_points", c.dec_points},   {"dec_layers", c.dec_layers},
        {"dec_mlp_ratio", c.dec_mlp_ratio},
    };
    for (int s = 0; s < 4; ++s) {
        m.emplace_back("channels" + std::to_string(s + 1), c.stages.channels[s]);
        m.emplace_back("blocks" + std::to_string(s + 1), c.stages.blocks[s]);
    }
    return m;
}

ModelConfig config_from_meta(const std::map<std::string, double>& meta, const std::string& where) {
    auto get = [&](const std::string& k) {
        const auto it = meta.find(k);
        if (it == meta.end()) throw DataError("checkpoint " + where + " lacks meta." + k);
        return it->second;
    };
    auto geti = [&](const std::string& k) { return static_cast<int>(get(k)); };
    ModelConfig c;
    c.classes = geti("classes");
    c.image_h = geti("image_h");
    c.image_w = geti("image_w");
    c.stages.head_dim = geti("head_dim");
    c.stages.mlp_ratio = geti("enc_mlp_ratio");
    for (int s = 0; s < 4; ++s) {
        c.stages.channels[s] = geti("channels" + std::to_string(s + 1));
        c.stages.blocks[s] = geti("blocks" + std::to_string(s + 1));
    }
    c.cond_channels = geti("cond_channels");
    c.embed_dim = geti("embed_dim");
    c.scale = get("scale");
    c.schedule.kind = get("schedule") == 0.0 ? ScheduleKind::cosine : ScheduleKind::linear;
    c.dec_hidden = geti("dec_hidden");
    c.dec_heads = geti("dec_heads");
    c.dec_points = geti("dec_points");
    c.dec_layers = geti("dec_layers");
    c.dec_mlp_ratio = geti("dec_mlp_ratio");
    return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, ModelWeights<float>& model) {
    std::vector<Entry> entries;
    for (const auto& [k, v] : config_meta(model.config)) {
        Entry e;
        e.name = "meta." + k;
        e.dtype = kF64;
        e.shape = {1};
        e.f64 = {v};
        entries.push_back(std::move(e));
    }
    model.visit([&](const std::string& name, Tensor& t) {
        Entry e;
        e.name = name;
        e.shape = t.shape();
        e.f32.assign(t.data().begin(), t.data().end());
        entries.push_back(std::move(e));
    });

    std::string buf(kMagic, 4);
    put<std::uint32_t>(buf, kVersion);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(e.name.size()));
        buf += e.name;
        put<std::uint8_t>(buf, e.dtype);
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape) put<std::uint32_t>(buf, static_cast<std::uint32_t>(d));
        put<std::uint64_t>(buf, e.dtype == kF32 ? e.f32.size() * 4 : e.f64.size() * 8);
    }
    for (const auto& e : entries) {
        for (float v : e.f32) put<float>(buf, v);
        for (double v : e.f64) put<double>(buf, v);
    }
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write checkpoint " + path.string());
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw DataError("failed writing checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

ModelWeights<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string where = path.string();
    Reader r{buf, 0, where};
    if (r.str(4) != std::string(kMagic, 4)) throw DataError(where + " is not a checkpoint (bad magic)");
    if (const auto v = r.get<std::uint32_t>(); v != kVersion) {
        throw DataError(where + ": unsupported checkpoint version " + std::to_string(v));
    }
    const auto count = r.get<std::uint32_t>();
    std::vector<Entry> entries(count);
    std::vector<std::uint64_t> bytes(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        auto& e = entries[i];
        e.name = r.str(r.get<std::uint32_t>());
        e.dtype = r.get<std::uint8_t>();
        if (e.dtype != kF32 && e.dtype != kF64) throw DataError(where + ": unknown dtype for " + e.name);
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8) throw DataError(where + ": implausible rank for " + e.name);
        for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(r.get<std::uint32_t>());
        bytes[i] = r.get<std::uint64_t>();
        const auto width = e.dtype == kF32 ? 4u : 8u;
        if (bytes[i] != static_cast<std::uint64_t>(shape_numel(e.shape)) * width) {
            throw DataError(where + ": byte length disagrees with shape for " + e.name);
        }
    }
    std::map<std::string, double> meta;
    std::map<std::string, std::size_t> index;
    for (std::uint32_t i = 0; i < count; ++i) {
        auto& e = entries[i];
        const auto n = static_cast<std::size_t>(shape_numel(e.shape));
        if (e.dtype == kF32) {
            e.f32.resize(n);
            for (auto& v : e.f32) v = r.get<float>();
        } else {
            e.f64.resize(n);
            for (auto& v : e.f64) v = r.get<double>();
        }
        if (e.name.rfind("meta.", 0) == 0) {
            if (n != 1 || e.dtype != kF64) throw DataError(where + ": malformed " + e.name);
            meta[e.name.substr(5)] = e.f64[0];
        } else {
            index[e.name] = i;
        }
    }
    if (r.pos != buf.size()) throw DataError(where + ": trailing bytes after payloads");

    ModelConfig cfg = config_from_meta(meta, where);
    try {
        cfg.validate();
    } catch (const UsageError& e) {
        throw DataError(where + ": stored config is invalid: " + e.what());
    }
    auto model = ModelWeights<float>::make(cfg, 0);
    std::size_t used = 0;
    model.visit([&](const std::string& name, Tensor& t) {
        const auto it = index.find(name);
        if (it == index.end()) throw DataError(where + ": missing parameter " + name);
        const auto& e = entries[it->second];
        if (e.dtype != kF32 || e.shape != t.shape()) {
            throw DataError(where + ": parameter " + name + " has shape " + shape_str(e.shape) + ", expected " +
                            shape_str(t.shape()));
        }
        t = Tensor(e.shape, e.f32);
        ++used;
    });
    if (used != index.size()) throw DataError(where + ": checkpoint holds parameters this model does not use");
    return model;
}

#define DDSEG_INSTANTIATE(T)                                                                                        \
    template struct ModelWeights<T>;                                                                               \
    template BasicTensor<T> prepare_rgb<T>(const RgbdSample&);                                                    \
    template BasicTensor<T> prepare_depth<T>(const RgbdSample&);                                                  \
    template std::vector<int> sample<T>(const ModelWeights<T>&, const BasicTensor<T>&, const BasicTensor<T>&,     \
                                        const SamplerConfig&, SampleTrace*);

DDSEG_INSTANTIATE(float)
DDSEG_INSTANTIATE(double)

}  // namespace ddseg
