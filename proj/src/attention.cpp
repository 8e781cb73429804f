#include "ddseg/attention.hpp"

#include <algorithm>
#include <cmath>

namespace ddseg {

int heads_for(int channels, int head_dim) { return std::max(1, channels / std::max(1, head_dim)); }

template <typename T>
MhsaParams<T> MhsaParams<T>::make(int channels, int heads, Rng& rng) {
    if (heads < 1 || channels % heads != 0) {
        throw ShapeError("channels " + std::to_string(channels) + " not divisible by " + std::to_string(heads) +
                         " heads");
    }
    MhsaParams p;
    p.heads = heads;
    p.head_dim = channels / heads;
    p.wq = Linear<T>::make(channels, channels, rng, false);
    p.wk = Linear<T>::make(channels, channels, rng, false);
    p.wv = Linear<T>::make(channels, channels, rng, false);
    p.wout = Linear<T>::make(channels, channels, rng, false);
    return p;
}

namespace {

template <typename T>
void check_channels(const BasicTensor<T>& x, const MhsaParams<T>& p, const char* what) {
    if (x.rank() != 2 || x.dim(1) != p.channels()) {
        throw ShapeError(std::string(what) + " must be [N," + std::to_string(p.channels()) + "], got " +
                         shape_str(x.shape()));
    }
}

// softmax(q_m k_m^T / sqrt(d)) v_m per head, concatenated, then W_out.
template <typename T>
BasicTensor<T> attention_core(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                              const MhsaParams<T>& p, std::vector<BasicTensor<T>>* weights) {
    const T inv_sqrt_d = T{1} / std::sqrt(static_cast<T>(p.head_dim));
    std::vector<BasicTensor<T>> heads;
    heads.reserve(static_cast<std::size_t>(p.heads));
    for (int h = 0; h < p.heads; ++h) {
        const auto qh = p.heads == 1 ? q : narrow(q, 1, h * p.head_dim, p.head_dim);
        const auto kh = p.heads == 1 ? k : narrow(k, 1, h * p.head_dim, p.head_dim);
        const auto vh = p.heads == 1 ? v : narrow(v, 1, h * p.head_dim, p.head_dim);
        const auto a = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt_d), -1);
        if (weights) weights->push_back(a);
        heads.push_back(matmul(a, vh));
    }
    const auto z = p.heads == 1 ? heads[0] : concat(heads, 1);
    return p.wout(z);
}

template <typename T>
BasicTensor<T> pool_to_grid(const BasicTensor<T>& x, int rows, int cols) {
    const auto h = x.dim(1), w = x.dim(2);
    if (h % rows == 0 && w % cols == 0 && h / rows == w / cols) return avg_pool(x, static_cast<int>(h / rows));
    return resize_bilinear(x, rows, cols);
}

// Deformable attention on tokens [N, C] laid out over an h x w map.
template <typename T>
BasicTensor<T> deform_attend_tokens(const BasicTensor<T>& tokens, std::int64_t h, std::int64_t w,
                                    const DeformParams<T>& p, DeformTrace* trace,
                                    std::vector<BasicTensor<T>>* weights) {
    check_channels(tokens, p.attn, "deformable attention input");
    const auto map = to_map(tokens, h, w);
    const auto q = p.attn.wq(tokens);
    const auto delta = deform_offsets(to_map(q, h, w), p);
    const auto points = add(p.grid.template tensor<T>(), delta);
    if (trace) trace->points.emplace_back(points.data().begin(), points.data().end());
    const auto sampled = bilinear_sample(map, points);
    return attention_core(q, p.attn.wk(sampled), p.attn.wv(sampled), p.attn, weights);
}

}  // namespace

template <typename T>
BasicTensor<T> attend(const BasicTensor<T>& queries, const BasicTensor<T>& context, const MhsaParams<T>& p,
                      std::vector<BasicTensor<T>>* weights) {
    check_channels(queries, p, "attention queries");
    check_channels(context, p, "attention context");
    return attention_core(p.wq(queries), p.wk(context), p.wv(context), p, weights);
}

template <typename T>
BasicTensor<T> mhsa(const BasicTensor<T>& x, const MhsaParams<T>& p, std::vector<BasicTensor<T>>* weights) {
    return attend(x, x, p, weights);
}

ReferenceGrid reference_points(int rows, int cols) {
    if (rows < 1 || cols < 1) throw ShapeError("reference grid extents must be >= 1");
    ReferenceGrid g;
    g.rows = rows;
    g.cols = cols;
    g.points.reserve(static_cast<std::size_t>(rows * cols * 2));
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            g.points.push_back((2.0 * i + 1.0) / rows - 1.0);
            g.points.push_back((2.0 * j + 1.0) / cols - 1.0);
        }
    }
    return g;
}

template <typename T>
BasicTensor<T> ReferenceGrid::tensor() const {
    std::vector<T> v(points.begin(), points.end());
    return BasicTensor<T>(Shape{static_cast<std::int64_t>(rows) * cols, 2}, std::move(v));
}

template <typename T>
DeformParams<T> DeformParams<T>::make(int channels, int heads, int grid_rows, int grid_cols, Rng& rng) {
    DeformParams p;
    p.attn = MhsaParams<T>::make(channels, heads, rng);
    p.offset_dw_weight = normal_init<T>({channels, 1, 3, 3}, std::sqrt(2.0 / 9.0), rng);
    p.offset_dw_bias = BasicTensor<T>::zeros({channels});
    p.offset_proj.weight = BasicTensor<T>::zeros({2, channels, 1, 1});
    p.offset_proj.bias = BasicTensor<T>::zeros({2});
    p.grid = reference_points(grid_rows, grid_cols);
    return p;
}

template <typename T>
BasicTensor<T> deform_offsets(const BasicTensor<T>& query_map, const DeformParams<T>& p) {
    auto hidden = gelu(depthwise_conv2d(query_map, p.offset_dw_weight, p.offset_dw_bias, 1, 1));
    auto raw = pool_to_grid(p.offset_proj(hidden), p.grid.rows, p.grid.cols);  // [2, rows, cols]
    const std::int64_t g = static_cast<std::int64_t>(p.grid.rows) * p.grid.cols;
    const auto bounded = transpose(reshape(tanh(raw), {2, g}));                   // [G, 2]
    const BasicTensor<T> cell(Shape{1, 2}, std::vector<T>{T(2.0 / p.grid.rows), T(2.0 / p.grid.cols)});
    return mul(bounded, cell);
}

template <typename T>
BasicTensor<T> deform_attend(const BasicTensor<T>& x, const DeformParams<T>& p, DeformTrace* trace,
                             std::vector<BasicTensor<T>>* weights) {
    if (x.rank() != 3) throw ShapeError("deform_attend input must be [C,H,W]");
    return to_map(deform_attend_tokens(to_tokens(x), x.dim(1), x.dim(2), p, trace, weights), x.dim(1), x.dim(2));
}

template <typename T>
DatBlockParams<T> DatBlockParams<T>::make(int channels, int heads, int grid_rows, int grid_cols, int mlp_ratio,
                                          Rng& rng) {
    DatBlockParams p;
    p.norm1 = Norm<T>::make(channels);
    p.deform = DeformParams<T>::make(channels, heads, grid_rows, grid_cols, rng);
    p.norm2 = Norm<T>::make(channels);
    p.fc1 = Linear<T>::make(channels, channels * mlp_ratio, rng);
    p.fc2 = Linear<T>::make(channels * mlp_ratio, channels, rng);
    return p;
}

template <typename T>
BasicTensor<T> dat_block(const BasicTensor<T>& x, const DatBlockParams<T>& p, DeformTrace* trace) {
    if (x.rank() != 3) throw ShapeError("dat_block input must be [C,H,W]");
    const auto h = x.dim(1), w = x.dim(2);
    auto t = to_tokens(x);
    t = add(t, deform_attend_tokens<T>(p.norm1.tokens(t), h, w, p.deform, trace, nullptr));
    t = add(t, p.fc2(gelu(p.fc1(p.norm2.tokens(t)))));
    return to_map(t, h, w);
}

#define DDSEG_INSTANTIATE(T)                                                                                        \
    template struct MhsaParams<T>;                                                                                 \
    template struct DeformParams<T>;                                                                               \
    template struct DatBlockParams<T>;                                                                             \
    template BasicTensor<T> ReferenceGrid::tensor<T>() const;                                                      \
    template BasicTensor<T> attend<T>(const BasicTensor<T>&, const BasicTensor<T>&, const MhsaParams<T>&,         \
                                      std::vector<BasicTensor<T>>*);                                               \
    template BasicTensor<T> mhsa<T>(const BasicTensor<T>&, const MhsaParams<T>&, std::vector<BasicTensor<T>>*);   \
    template BasicTensor<T> deform_offsets<T>(const BasicTensor<T>&, const DeformParams<T>&);                     \
    template BasicTensor<T> deform_attend<T>(const BasicTensor<T>&, const DeformParams<T>&, DeformTrace*,         \
                                             std::vector<BasicTensor<T>>*);                                        \
    template BasicTensor<T> dat_block<T>(const BasicTensor<T>&, const DatBlockParams<T>&, DeformTrace*);

DDSEG_INSTANTIATE(float)
DDSEG_INSTANTIATE(double)

}  // namespace ddseg
