#pragma once

#include <string>
#include <vector>

#include "ddseg/nn.hpp"

namespace ddseg {

// Multi-head attention projections. Channels split evenly across heads.
template <typename T>
struct MhsaParams {
    int heads = 1;
    int head_dim = 1;
    Linear<T> wq, wk, wv, wout;

    static MhsaParams make(int channels, int heads, Rng& rng);
    int channels() const { return heads * head_dim; }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        wq.visit(prefix + ".wq", f);
        wk.visit(prefix + ".wk", f);
        wv.visit(prefix + ".wv", f);
        wout.visit(prefix + ".wout", f);
    }
};

// Head count used throughout the encoder: head_dim-wide heads, at least one.
int heads_for(int channels, int head_dim);

// Queries from `queries` [N, C], keys/values from `context` [M, C].
// When `weights` is given it receives one [N, M] row-stochastic matrix per head.
template <typename T>
BasicTensor<T> attend(const BasicTensor<T>& queries, const BasicTensor<T>& context, const MhsaParams<T>& p,
                      std::vector<BasicTensor<T>>* weights = nullptr);

// Self-attention over tokens x [N, C].
template <typename T>
BasicTensor<T> mhsa(const BasicTensor<T>& x, const MhsaParams<T>& p, std::vector<BasicTensor<T>>* weights = nullptr);

// Uniform lattice of cell centers over [-1, 1]^2, points stored row-major as
// (y, x) pairs.
struct ReferenceGrid {
    int rows = 1;
    int cols = 1;
    std::vector<double> points;  // rows * cols * 2

    template <typename T>
    BasicTensor<T> tensor() const;
};

ReferenceGrid reference_points(int rows, int cols);

// Deformable attention: keys/values are sampled from the input map at a shared
// set of deformed reference points.
template <typename T>
struct DeformParams {
    MhsaParams<T> attn;
    // offset network: depthwise 3x3 -> GELU -> 1x1 to (dy, dx); last layer zero-init
    BasicTensor<T> offset_dw_weight;  // [C, 1, 3, 3]
    BasicTensor<T> offset_dw_bias;    // [C]
    Conv<T> offset_proj;              // C -> 2
    ReferenceGrid grid;

    static DeformParams make(int channels, int heads, int grid_rows, int grid_cols, Rng& rng);

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        attn.visit(prefix + ".attn", f);
        f(prefix + ".offset.dw.weight", offset_dw_weight);
        f(prefix + ".offset.dw.bias", offset_dw_bias);
        offset_proj.visit(prefix + ".offset.proj", f);
    }
};

// Diagnostics captured during a deformable forward pass.
struct DeformTrace {
    // Deformed sampling points (y, x) per layer, in call order.
    std::vector<std::vector<double>> points;
};

// Bounded offsets for the grid: tanh(raw) scaled to one grid cell. Returns [G, 2].
template <typename T>
BasicTensor<T> deform_offsets(const BasicTensor<T>& query_map, const DeformParams<T>& p);

// x: [C, H, W] -> [C, H, W]
template <typename T>
BasicTensor<T> deform_attend(const BasicTensor<T>& x, const DeformParams<T>& p, DeformTrace* trace = nullptr,
                             std::vector<BasicTensor<T>>* weights = nullptr);

template <typename T>
struct DatBlockParams {
    Norm<T> norm1;
    DeformParams<T> deform;
    Norm<T> norm2;
    Linear<T> fc1, fc2;

    static DatBlockParams make(int channels, int heads, int grid_rows, int grid_cols, int mlp_ratio, Rng& rng);

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        norm1.visit(prefix + ".norm1", f);
        deform.visit(prefix + ".deform", f);
        norm2.visit(prefix + ".norm2", f);
        fc1.visit(prefix + ".fc1", f);
        fc2.visit(prefix + ".fc2", f);
    }
};

// Pre-norm deformable attention and MLP, each with a residual connection.
template <typename T>
BasicTensor<T> dat_block(const BasicTensor<T>& x, const DatBlockParams<T>& p, DeformTrace* trace = nullptr);

}  // namespace ddseg
