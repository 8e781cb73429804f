#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ddseg/data.hpp"
#include "ddseg/decoder.hpp"
#include "ddseg/diffusion.hpp"
#include "ddseg/encoder.hpp"

namespace ddseg {

struct ModelConfig {
    int classes = 6;
    int image_h = 64;
    int image_w = 64;
    StageSpec stages;
    int cond_channels = 256;
    int embed_dim = 32;
    double scale = 0.01;
    NoiseSchedule schedule;
    int dec_hidden = 128;
    int dec_heads = 4;
    int dec_points = 4;
    int dec_layers = 6;
    int dec_mlp_ratio = 2;

    DecoderConfig decoder() const;
    void validate() const;  // throws UsageError
};

template <typename T>
struct ModelWeights {
    ModelConfig config;
    ConditionWeights<T> cond;
    LabelCodebook<T> codebook;
    DecoderWeights<T> decoder;

    static ModelWeights make(const ModelConfig& cfg, std::uint64_t seed);

    template <typename F>
    void visit(F&& f) {
        cond.visit("cond", f);
        codebook.visit("codebook", f);
        decoder.visit("decoder", f);
    }

    // Copy with every parameter converted to U (e.g. the 64-bit shadow).
    template <typename U>
    ModelWeights<U> cast() const;

    std::size_t parameter_count();
};

// Network inputs from a stored sample.
// rgb: [3, h, w], (v - 0.5) / 0.25. depth: [1, h, w], valid depths min-max
// scaled to [0, 1] per image, invalid pixels 0.
template <typename T>
BasicTensor<T> prepare_rgb(const RgbdSample& s);
template <typename T>
BasicTensor<T> prepare_depth(const RgbdSample& s);

// Nearest downsample by `factor` picking the centre-ish pixel (factor*i + factor/2).
std::vector<int> downsample_labels(std::span<const int> labels, int h, int w, int factor);
std::vector<int> to_ids(const std::vector<std::uint8_t>& labels);

struct SampleTrace {
    ConditionTrace cond;
    std::vector<std::vector<int>> steps;  // argmax after every step, full resolution
};

// Runs the conditioning once, then `steps` decoder + DDIM iterations from unit
// Gaussian noise seeded by cfg.seed. Returns the full-resolution class map.
template <typename T>
std::vector<int> sample(const ModelWeights<T>& model, const BasicTensor<T>& rgb, const BasicTensor<T>& depth,
                        const SamplerConfig& cfg, SampleTrace* trace = nullptr);

std::vector<std::uint8_t> predict_sample(const ModelWeights<float>& model, const RgbdSample& s,
                                         const SamplerConfig& cfg, SampleTrace* trace = nullptr);

// Binary checkpoint: "DDSG", u32 version, u32 entry count, then per entry
// (u32 name length, name, u8 dtype, u32 rank, u32 dims..., u64 byte length),
// followed by the payloads in entry order. Parameters are little-endian f32;
// config values are stored as f64 entries under "meta.".
void save_checkpoint(const std::filesystem::path& path, ModelWeights<float>& model);
ModelWeights<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace ddseg

namespace ddseg {

template <typename T>
template <typename U>
ModelWeights<U> ModelWeights<T>::cast() const {
    auto& self = const_cast<ModelWeights&>(*this);
    ModelWeights<U> out = ModelWeights<U>::make(config, 0);
    std::vector<BasicTensor<T>*> src;
    std::vector<BasicTensor<U>*> dst;
    self.visit([&](const std::string&, BasicTensor<T>& t) { src.push_back(&t); });
    out.visit([&](const std::string&, BasicTensor<U>& t) { dst.push_back(&t); });
    for (std::size_t i = 0; i < src.size(); ++i) {
        BasicTensor<U> t(src[i]->shape());
        const auto from = src[i]->data();
        auto to = t.data();
        for (std::size_t j = 0; j < from.size(); ++j) to[j] = static_cast<U>(from[j]);
        *dst[i] = t;
    }
    out.codebook.scale = codebook.scale;
    return out;
}

}  // namespace ddseg
