#pragma once

#include <string>
#include <vector>

#include "ddseg/nn.hpp"

namespace ddseg {

struct DecoderConfig {
    int mask_channels = 32;   // D
    int cond_channels = 256;
    int hidden = 128;
    int heads = 4;
    int points = 4;  // sampling points per head per query
    int layers = 6;
    int classes = 6;
    int mlp_ratio = 2;
};

// Single-scale deformable attention in the Deformable-DETR style: each query
// predicts its own sampling offsets and per-point weights (softmax over points,
// no key dot products).
template <typename T>
struct DecoderBlock {
    int heads = 1;
    int points = 1;
    Norm<T> norm1;
    Linear<T> value;    // hidden -> hidden
    Linear<T> offsets;  // hidden -> heads * points * 2, in pixels (dy, dx)
    Linear<T> weights;  // hidden -> heads * points
    Linear<T> out;      // hidden -> hidden
    Norm<T> norm2;
    Linear<T> fc1, fc2;

    static DecoderBlock make(int hidden, int heads, int points, int mlp_ratio, Rng& rng);

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        norm1.visit(prefix + ".norm1", f);
        value.visit(prefix + ".value", f);
        offsets.visit(prefix + ".offsets", f);
        weights.visit(prefix + ".weights", f);
        out.visit(prefix + ".out", f);
        norm2.visit(prefix + ".norm2", f);
        fc1.visit(prefix + ".fc1", f);
        fc2.visit(prefix + ".fc2", f);
    }
};

template <typename T>
struct DecoderWeights {
    DecoderConfig config;
    Conv<T> in_proj;          // D + cond -> hidden (1x1)
    Linear<T> time1, time2;   // sinusoid -> hidden -> hidden
    std::vector<DecoderBlock<T>> blocks;
    Norm<T> final_norm;
    Linear<T> classifier;     // hidden -> K

    static DecoderWeights make(const DecoderConfig& cfg, Rng& rng);

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        in_proj.visit(prefix + ".in_proj", f);
        time1.visit(prefix + ".time1", f);
        time2.visit(prefix + ".time2", f);
        for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit(prefix + ".block" + std::to_string(i), f);
        final_norm.visit(prefix + ".final_norm", f);
        classifier.visit(prefix + ".classifier", f);
    }
};

// Sinusoidal features of t * 1000 (half sin, half cos), [1, dim].
template <typename T>
BasicTensor<T> time_features(double t, int dim);

// [1, hidden]
template <typename T>
BasicTensor<T> time_embed(double t, const DecoderWeights<T>& w);

// One block over tokens [N, hidden] laid out on an h x w map. temb: [1, hidden].
template <typename T>
BasicTensor<T> decoder_block(const BasicTensor<T>& x, std::int64_t h, std::int64_t w, const BasicTensor<T>& temb,
                             const DecoderBlock<T>& p);

// mask_t: [D, h/4, w/4], cond: [C, h/4, w/4] -> logits [K, h, w]
template <typename T>
BasicTensor<T> decode(const BasicTensor<T>& mask_t, const BasicTensor<T>& cond, double t, const DecoderWeights<T>& w);

// Per-pixel argmax over the class axis of [K, H, W]; ties go to the lowest index.
template <typename T>
std::vector<int> predict_mask(const BasicTensor<T>& logits);

}  // namespace ddseg
