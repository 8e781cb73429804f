#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "ddseg/attention.hpp"

namespace ddseg {

// Four-stage hierarchy at strides 4, 8, 16, 32.
struct StageSpec {
    std::array<int, 4> channels{32, 64, 128, 256};
    std::array<int, 4> blocks{1, 1, 2, 1};
    int head_dim = 32;
    int mlp_ratio = 2;
    static constexpr std::array<int, 4> strides{4, 8, 16, 32};
};

template <typename T>
using PyramidFeatures = std::array<BasicTensor<T>, 4>;

// One hierarchical deformable-attention encoder (used once per modality).
template <typename T>
struct BranchWeights {
    Conv<T> stem1, stem2;  // two stride-2 3x3 convs: input -> C1 at 1/4
    Norm<T> stem_norm;
    std::array<Conv<T>, 4> down;       // [0] unused; stride-2 3x3 conv between stages
    std::array<Norm<T>, 4> down_norm;  // [0] unused
    std::array<BasicTensor<T>, 4> pos;  // learned positional bias per stage at the base resolution
    std::array<std::vector<DatBlockParams<T>>, 4> blocks;
    std::array<Norm<T>, 4> out_norm;

    static BranchWeights make(const StageSpec& spec, int in_channels, int image_h, int image_w, Rng& rng);

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        stem1.visit(prefix + ".stem1", f);
        stem2.visit(prefix + ".stem2", f);
        stem_norm.visit(prefix + ".stem_norm", f);
        for (int s = 0; s < 4; ++s) {
            const std::string sp = prefix + ".stage" + std::to_string(s + 1);
            if (s > 0) {
                down[s].visit(sp + ".down", f);
                down_norm[s].visit(sp + ".down_norm", f);
            }
            f(sp + ".pos", pos[s]);
            for (std::size_t b = 0; b < blocks[s].size(); ++b) blocks[s][b].visit(sp + ".block" + std::to_string(b), f);
            out_norm[s].visit(sp + ".out_norm", f);
        }
    }
};

// img: [C_in, h, w] with h, w divisible by 32.
template <typename T>
PyramidFeatures<T> encode_branch(const BasicTensor<T>& img, const BranchWeights<T>& w, DeformTrace* trace = nullptr);

// Cross-modal rectification: per-channel gates from pooled descriptors and
// per-pixel gates from a 1x1 conv, each scaled by a zero-initialized lambda.
template <typename T>
struct FrmWeights {
    Linear<T> fc1, fc2;  // 2C -> C/2 -> 2C
    Conv<T> spatial;     // 2C -> 2
    BasicTensor<T> lambda_channel_rgb, lambda_spatial_rgb, lambda_channel_depth, lambda_spatial_depth;  // [1]

    static FrmWeights make(int channels, Rng& rng);

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        fc1.visit(prefix + ".fc1", f);
        fc2.visit(prefix + ".fc2", f);
        spatial.visit(prefix + ".spatial", f);
        f(prefix + ".lambda_c_rgb", lambda_channel_rgb);
        f(prefix + ".lambda_s_rgb", lambda_spatial_rgb);
        f(prefix + ".lambda_c_depth", lambda_channel_depth);
        f(prefix + ".lambda_s_depth", lambda_spatial_depth);
    }
};

// Gates computed inside frm(); exposed for testing.
template <typename T>
struct FrmGates {
    BasicTensor<T> channel_rgb, channel_depth;  // [C, 1, 1]
    BasicTensor<T> spatial_rgb, spatial_depth;  // [1, H, W]
};

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> frm(const BasicTensor<T>& f_rgb, const BasicTensor<T>& f_depth,
                                              const FrmWeights<T>& w, FrmGates<T>* gates = nullptr);

// Cross-attention exchange (each modality queries the other's pooled tokens),
// then concat + 1x1 projection + channel norm.
template <typename T>
struct FfmWeights {
    MhsaParams<T> rgb_from_depth, depth_from_rgb;
    Conv<T> proj;  // 2C -> C
    Norm<T> norm;
    int pool = 1;  // key/value pooling factor (down to the stride-32 grid)

    static FfmWeights make(int channels, int heads, int pool, Rng& rng);

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        rgb_from_depth.visit(prefix + ".rgb_from_depth", f);
        depth_from_rgb.visit(prefix + ".depth_from_rgb", f);
        proj.visit(prefix + ".proj", f);
        norm.visit(prefix + ".norm", f);
    }
};

template <typename T>
BasicTensor<T> ffm(const BasicTensor<T>& f_rgb, const BasicTensor<T>& f_depth, const FfmWeights<T>& w);

template <typename T>
struct FpnWeights {
    std::array<Conv<T>, 4> lateral;  // C_s -> out
    Conv<T> smooth;                  // 3x3, out -> out
    Conv<T> aggregate;               // 1x1, out -> out, no bias
    Norm<T> norm;

    static FpnWeights make(const StageSpec& spec, int out_channels, Rng& rng);

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        for (int s = 0; s < 4; ++s) lateral[s].visit(prefix + ".lateral" + std::to_string(s + 1), f);
        smooth.visit(prefix + ".smooth", f);
        aggregate.visit(prefix + ".aggregate", f);
        norm.visit(prefix + ".norm", f);
    }
};

// Top-down merge to the stride-4 map followed by the 1x1 aggregation, before
// the output norm. Linear in the aggregation weights.
template <typename T>
BasicTensor<T> fpn_merge(const PyramidFeatures<T>& fused, const FpnWeights<T>& w);

// Conditioning signal [out_channels, h/4, w/4].
template <typename T>
BasicTensor<T> fpn_condition(const PyramidFeatures<T>& fused, const FpnWeights<T>& w);

template <typename T>
struct ConditionWeights {
    BranchWeights<T> rgb, depth;
    std::array<FrmWeights<T>, 4> frm;
    std::array<FfmWeights<T>, 4> ffm;
    FpnWeights<T> fpn;

    static ConditionWeights make(const StageSpec& spec, int cond_channels, int image_h, int image_w, Rng& rng);

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        rgb.visit(prefix + ".rgb", f);
        depth.visit(prefix + ".depth", f);
        for (int s = 0; s < 4; ++s) {
            frm[s].visit(prefix + ".frm" + std::to_string(s + 1), f);
            ffm[s].visit(prefix + ".ffm" + std::to_string(s + 1), f);
        }
        fpn.visit(prefix + ".fpn", f);
    }
};

// Optional taps into full_condition for visualization and tests.
struct ConditionTrace {
    DeformTrace rgb, depth;
};

// rgb: [3, h, w]; depth: [1, h, w] (normalized, replicated to three channels
// internally). Returns the conditioning signal.
template <typename T>
BasicTensor<T> full_condition(const BasicTensor<T>& rgb, const BasicTensor<T>& depth, const ConditionWeights<T>& w,
                              ConditionTrace* trace = nullptr);

}  // namespace ddseg
