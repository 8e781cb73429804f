#include "ddseg/decoder.hpp"

#include <cmath>
#include <numbers>

#include "ddseg/attention.hpp"

namespace ddseg {

template <typename T>
DecoderBlock<T> DecoderBlock<T>::make(int hidden, int heads, int points, int mlp_ratio, Rng& rng) {
    if (heads < 1 || hidden % heads != 0) throw ShapeError("decoder hidden dim must be divisible by heads");
    if (points < 1) throw ShapeError("decoder needs at least one sampling point");
    DecoderBlock b;
    b.heads = heads;
    b.points = points;
    b.norm1 = Norm<T>::make(hidden);
    b.value = Linear<T>::make(hidden, hidden, rng);
    // offsets start on rings around the query, one direction per head
    b.offsets = Linear<T>::zeros(hidden, heads * points * 2);
    for (int m = 0; m < heads; ++m) {
        const double theta = 2.0 * std::numbers::pi * m / heads;
        for (int k = 0; k < points; ++k) {
            b.offsets.bias.data()[(m * points + k) * 2 + 0] = static_cast<T>(std::sin(theta) * (k + 1));
            b.offsets.bias.data()[(m * points + k) * 2 + 1] = static_cast<T>(std::cos(theta) * (k + 1));
        }
    }
    b.weights = Linear<T>::zeros(hidden, heads * points);
    b.out = Linear<T>::make(hidden, hidden, rng);
    b.norm2 = Norm<T>::make(hidden);
    b.fc1 = Linear<T>::make(hidden, hidden * mlp_ratio, rng);
    b.fc2 = Linear<T>::make(hidden * mlp_ratio, hidden, rng);
    return b;
}

template <typename T>
DecoderWeights<T> DecoderWeights<T>::make(const DecoderConfig& cfg, Rng& rng) {
    if (cfg.hidden % 2 != 0) throw ShapeError("decoder hidden dim must be even");
    DecoderWeights w;
    w.config = cfg;
    w.in_proj = Conv<T>::make(cfg.mask_channels + cfg.cond_channels, cfg.hidden, 1, 1, rng);
    w.time1 = Linear<T>::make(cfg.hidden, cfg.hidden, rng);
    w.time2 = Linear<T>::make(cfg.hidden, cfg.hidden, rng);
    for (int i = 0; i < cfg.layers; ++i) {
        w.blocks.push_back(DecoderBlock<T>::make(cfg.hidden, cfg.heads, cfg.points, cfg.mlp_ratio, rng));
    }
    w.final_norm = Norm<T>::make(cfg.hidden);
    // small head so the untrained model starts near uniform class scores
    w.classifier.weight = normal_init<T>({cfg.hidden, cfg.classes}, 0.02, rng);
    w.classifier.bias = BasicTensor<T>::zeros({cfg.classes});
    return w;
}

template <typename T>
BasicTensor<T> time_features(double t, int dim) {
    const int half = dim / 2;
    BasicTensor<T> f(Shape{1, dim});
    const double pos = t * 1000.0;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        f.data()[i] = static_cast<T>(std::sin(pos * freq));
        f.data()[half + i] = static_cast<T>(std::cos(pos * freq));
    }
    return f;
}

template <typename T>
BasicTensor<T> time_embed(double t, const DecoderWeights<T>& w) {
    return w.time2(gelu(w.time1(time_features<T>(t, w.config.hidden))));
}

namespace {

// Query reference points repeated once per sampling point: [N * P, 2].
template <typename T>
BasicTensor<T> repeated_refs(std::int64_t h, std::int64_t w, int points) {
    const auto grid = reference_points(static_cast<int>(h), static_cast<int>(w));
    std::vector<T> v;
    v.reserve(grid.points.size() * static_cast<std::size_t>(points));
    for (std::size_t n = 0; n < grid.points.size() / 2; ++n) {
        for (int k = 0; k < points; ++k) {
            v.push_back(static_cast<T>(grid.points[2 * n]));
            v.push_back(static_cast<T>(grid.points[2 * n + 1]));
        }
    }
    return BasicTensor<T>(Shape{h * w * points, 2}, std::move(v));
}

template <typename T>
BasicTensor<T> deformable_sample(const BasicTensor<T>& q, const BasicTensor<T>& value_tokens, std::int64_t h,
                                 std::int64_t w, const DecoderBlock<T>& p) {
    const std::int64_t n = q.dim(0), ch = q.dim(1), hd = ch / p.heads, P = p.points;
    const auto offsets = p.offsets(q);  // [N, heads * P * 2]
    const auto logits = p.weights(q);   // [N, heads * P]
    const auto refs = repeated_refs<T>(h, w, p.points);
    const BasicTensor<T> pix(Shape{1, 2}, std::vector<T>{T(2.0 / h), T(2.0 / w)});
    std::vector<BasicTensor<T>> heads;
    for (int m = 0; m < p.heads; ++m) {
        const auto off = reshape(narrow(offsets, 1, m * P * 2, P * 2), {n * P, 2});
        const auto loc = add(refs, mul(off, pix));
        const auto vmap = to_map(narrow(value_tokens, 1, m * hd, hd), h, w);  // [hd, h, w]
        const auto sampled = reshape(bilinear_sample(vmap, loc), {n, P, hd});
        const auto a = reshape(softmax(narrow(logits, 1, m * P, P), -1), {n, 1, P});
        heads.push_back(reshape(matmul(a, sampled), {n, hd}));
    }
    return p.out(p.heads == 1 ? heads[0] : concat(heads, 1));
}

}  // namespace

template <typename T>
BasicTensor<T> decoder_block(const BasicTensor<T>& x, std::int64_t h, std::int64_t w, const BasicTensor<T>& temb,
                             const DecoderBlock<T>& p) {
    if (x.rank() != 2 || x.dim(0) != h * w) throw ShapeError("decoder block expects [h*w, C] tokens");
    const auto q = add(p.norm1.tokens(x), temb);
    auto y = add(x, deformable_sample(q, p.value(q), h, w, p));
    return add(y, p.fc2(gelu(p.fc1(p.norm2.tokens(y)))));
}

template <typename T>
BasicTensor<T> decode(const BasicTensor<T>& mask_t, const BasicTensor<T>& cond, double t, const DecoderWeights<T>& w) {
    const auto& cfg = w.config;
    if (mask_t.rank() != 3 || mask_t.dim(0) != cfg.mask_channels) {
        throw ShapeError("decode: noisy mask must be [" + std::to_string(cfg.mask_channels) + ",h,w], got " +
                         shape_str(mask_t.shape()));
    }
    if (cond.rank() != 3 || cond.dim(0) != cfg.cond_channels || cond.dim(1) != mask_t.dim(1) ||
        cond.dim(2) != mask_t.dim(2)) {
        throw ShapeError("decode: conditioning " + shape_str(cond.shape()) + " does not match mask " +
                         shape_str(mask_t.shape()));
    }
    const auto h = mask_t.dim(1), wd = mask_t.dim(2);
    const auto temb = time_embed(t, w);
    auto x = to_tokens(w.in_proj(concat(std::vector<BasicTensor<T>>{mask_t, cond}, 0)));
    for (const auto& block : w.blocks) x = decoder_block(x, h, wd, temb, block);
    const auto logits = to_map(w.classifier(w.final_norm.tokens(x)), h, wd);
    return resize_bilinear(logits, h * 4, wd * 4);
}

template <typename T>
std::vector<int> predict_mask(const BasicTensor<T>& logits) {
    if (logits.rank() != 3) throw ShapeError("predict_mask expects [K,H,W]");
    const auto k = logits.dim(0), n = logits.dim(1) * logits.dim(2);
    const auto d = logits.data();
    std::vector<int> out(static_cast<std::size_t>(n), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        T best = d[i];
        for (std::int64_t c = 1; c < k; ++c) {
            if (d[c * n + i] > best) {
                best = d[c * n + i];
                out[i] = static_cast<int>(c);
            }
        }
    }
    return out;
}

#define DDSEG_INSTANTIATE(T)                                                                                        \
    template struct DecoderBlock<T>;                                                                               \
    template struct DecoderWeights<T>;                                                                             \
    template BasicTensor<T> time_features<T>(double, int);                                                        \
    template BasicTensor<T> time_embed<T>(double, const DecoderWeights<T>&);                                      \
    template BasicTensor<T> decoder_block<T>(const BasicTensor<T>&, std::int64_t, std::int64_t,                   \
                                             const BasicTensor<T>&, const DecoderBlock<T>&);                       \
    template BasicTensor<T> decode<T>(const BasicTensor<T>&, const BasicTensor<T>&, double,                       \
                                      const DecoderWeights<T>&);                                                   \
    template std::vector<int> predict_mask<T>(const BasicTensor<T>&);

DDSEG_INSTANTIATE(float)
DDSEG_INSTANTIATE(double)

}  // namespace ddseg
