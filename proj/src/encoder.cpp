#include "ddseg/encoder.hpp"

#include <algorithm>

namespace ddseg {

namespace {

// Deformable grid side for a stage map: half the map side, but never coarser
// than 2x2 unless the map itself is smaller.
int grid_side(int extent) { return extent >= 4 ? extent / 2 : extent; }

template <typename T>
void require_same(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what) {
    if (a.rank() != 3 || a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": expected equal [C,H,W] inputs, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
}

}  // namespace

template <typename T>
BranchWeights<T> BranchWeights<T>::make(const StageSpec& spec, int in_channels, int image_h, int image_w, Rng& rng) {
    if (image_h % 32 != 0 || image_w % 32 != 0) throw ShapeError("image size must be divisible by 32");
    BranchWeights w;
    const int c1 = spec.channels[0];
    w.stem1 = Conv<T>::make(in_channels, std::max(1, c1 / 2), 3, 2, rng);
    w.stem2 = Conv<T>::make(std::max(1, c1 / 2), c1, 3, 2, rng);
    w.stem_norm = Norm<T>::make(c1);
    for (int s = 0; s < 4; ++s) {
        const int c = spec.channels[s];
        const int h = image_h / StageSpec::strides[s], wd = image_w / StageSpec::strides[s];
        if (s > 0) {
            w.down[s] = Conv<T>::make(spec.channels[s - 1], c, 3, 2, rng);
            w.down_norm[s] = Norm<T>::make(c);
        }
        w.pos[s] = BasicTensor<T>::zeros({c, h, wd});
        const int heads = heads_for(c, spec.head_dim);
        for (int b = 0; b < spec.blocks[s]; ++b) {
            w.blocks[s].push_back(DatBlockParams<T>::make(c, heads, grid_side(h), grid_side(wd), spec.mlp_ratio, rng));
        }
        w.out_norm[s] = Norm<T>::make(c);
    }
    return w;
}

template <typename T>
PyramidFeatures<T> encode_branch(const BasicTensor<T>& img, const BranchWeights<T>& w, DeformTrace* trace) {
    if (img.rank() != 3) throw ShapeError("encoder input must be [C,H,W], got " + shape_str(img.shape()));
    if (img.dim(1) % 32 != 0 || img.dim(2) % 32 != 0) {
        throw ShapeError("encoder input spatial dims must be divisible by 32, got " + shape_str(img.shape()));
    }
    if (img.dim(0) != w.stem1.weight.dim(1)) {
        throw ShapeError("encoder expects " + std::to_string(w.stem1.weight.dim(1)) + " input channels, got " +
                         shape_str(img.shape()));
    }
    PyramidFeatures<T> out;
    auto x = w.stem_norm.channels(w.stem2(gelu(w.stem1(img))));
    for (int s = 0; s < 4; ++s) {
        if (s > 0) x = w.down_norm[s].channels(w.down[s](x));
        auto pos = w.pos[s];
        if (pos.dim(1) != x.dim(1) || pos.dim(2) != x.dim(2)) pos = resize_bilinear(pos, x.dim(1), x.dim(2));
        x = add(x, pos);
        for (const auto& block : w.blocks[s]) x = dat_block(x, block, trace);
        x = w.out_norm[s].channels(x);
        out[s] = x;
    }
    return out;
}

template <typename T>
FrmWeights<T> FrmWeights<T>::make(int channels, Rng& rng) {
    FrmWeights w;
    const int hidden = std::max(1, channels / 2);
    w.fc1 = Linear<T>::make(2 * channels, hidden, rng);
    w.fc2 = Linear<T>::make(hidden, 2 * channels, rng);
    w.spatial = Conv<T>::make(2 * channels, 2, 1, 1, rng);
    w.lambda_channel_rgb = BasicTensor<T>::zeros({1});
    w.lambda_spatial_rgb = BasicTensor<T>::zeros({1});
    w.lambda_channel_depth = BasicTensor<T>::zeros({1});
    w.lambda_spatial_depth = BasicTensor<T>::zeros({1});
    return w;
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> frm(const BasicTensor<T>& f_rgb, const BasicTensor<T>& f_depth,
                                              const FrmWeights<T>& w, FrmGates<T>* gates) {
    require_same(f_rgb, f_depth, "frm");
    const auto c = f_rgb.dim(0);
    if (w.fc1.weight.dim(0) != 2 * c) throw ShapeError("frm weights built for a different channel count");

    const auto both = concat(std::vector<BasicTensor<T>>{f_rgb, f_depth}, 0);  // [2C, H, W]
    const auto pooled = reshape(global_avg_pool(both), {1, 2 * c});
    const auto cg = reshape(sigmoid(w.fc2(gelu(w.fc1(pooled)))), {2 * c, 1, 1});
    const auto cg_rgb = narrow(cg, 0, 0, c), cg_depth = narrow(cg, 0, c, c);
    const auto sg = sigmoid(w.spatial(both));  // [2, H, W]
    const auto sg_rgb = narrow(sg, 0, 0, 1), sg_depth = narrow(sg, 0, 1, 1);
    if (gates) *gates = {cg_rgb, cg_depth, sg_rgb, sg_depth};

    // each branch is corrected by the gated features of the other one
    auto rgb = add(f_rgb, add(mul(w.lambda_channel_rgb, mul(cg_rgb, f_depth)),
                              mul(w.lambda_spatial_rgb, mul(sg_rgb, f_depth))));
    auto depth = add(f_depth, add(mul(w.lambda_channel_depth, mul(cg_depth, f_rgb)),
                                  mul(w.lambda_spatial_depth, mul(sg_depth, f_rgb))));
    return {rgb, depth};
}

template <typename T>
FfmWeights<T> FfmWeights<T>::make(int channels, int heads, int pool, Rng& rng) {
    FfmWeights w;
    w.rgb_from_depth = MhsaParams<T>::make(channels, heads, rng);
    w.depth_from_rgb = MhsaParams<T>::make(channels, heads, rng);
    w.proj = Conv<T>::make(2 * channels, channels, 1, 1, rng);
    w.norm = Norm<T>::make(channels);
    w.pool = pool;
    return w;
}

template <typename T>
BasicTensor<T> ffm(const BasicTensor<T>& f_rgb, const BasicTensor<T>& f_depth, const FfmWeights<T>& w) {
    require_same(f_rgb, f_depth, "ffm");
    if (f_rgb.dim(0) != w.rgb_from_depth.channels()) throw ShapeError("ffm weights built for a different channel count");
    const auto h = f_rgb.dim(1), wd = f_rgb.dim(2);
    const int pool = (h % w.pool == 0 && wd % w.pool == 0) ? w.pool : 1;

    const auto rgb_tokens = to_tokens(f_rgb), depth_tokens = to_tokens(f_depth);
    const auto rgb_ctx = to_tokens(avg_pool(f_rgb, pool)), depth_ctx = to_tokens(avg_pool(f_depth, pool));
    const auto rgb = add(rgb_tokens, attend(rgb_tokens, depth_ctx, w.rgb_from_depth));
    const auto depth = add(depth_tokens, attend(depth_tokens, rgb_ctx, w.depth_from_rgb));
    const auto merged = concat(std::vector<BasicTensor<T>>{to_map(rgb, h, wd), to_map(depth, h, wd)}, 0);
    return w.norm.channels(w.proj(merged));
}

template <typename T>
FpnWeights<T> FpnWeights<T>::make(const StageSpec& spec, int out_channels, Rng& rng) {
    FpnWeights w;
    for (int s = 0; s < 4; ++s) w.lateral[s] = Conv<T>::make(spec.channels[s], out_channels, 1, 1, rng);
    w.smooth = Conv<T>::make(out_channels, out_channels, 3, 1, rng);
    w.aggregate = Conv<T>::make(out_channels, out_channels, 1, 1, rng, false);
    w.norm = Norm<T>::make(out_channels);
    return w;
}

template <typename T>
BasicTensor<T> fpn_merge(const PyramidFeatures<T>& fused, const FpnWeights<T>& w) {
    for (int s = 0; s < 4; ++s) {
        if (!fused[s].defined() || fused[s].rank() != 3 || fused[s].dim(0) != w.lateral[s].weight.dim(1)) {
            throw ShapeError("fpn: stage " + std::to_string(s + 1) + " has unexpected shape");
        }
        if (s > 0 && (fused[s].dim(1) * 2 != fused[s - 1].dim(1) || fused[s].dim(2) * 2 != fused[s - 1].dim(2))) {
            throw ShapeError("fpn: stage " + std::to_string(s + 1) + " is not half the previous resolution");
        }
    }
    auto p = w.lateral[3](fused[3]);
    for (int s = 2; s >= 0; --s) p = add(w.lateral[s](fused[s]), upsample_nearest(p, 2));
    return w.aggregate(w.smooth(p));
}

template <typename T>
BasicTensor<T> fpn_condition(const PyramidFeatures<T>& fused, const FpnWeights<T>& w) {
    return w.norm.channels(fpn_merge(fused, w));
}

template <typename T>
ConditionWeights<T> ConditionWeights<T>::make(const StageSpec& spec, int cond_channels, int image_h, int image_w,
                                              Rng& rng) {
    ConditionWeights w;
    w.rgb = BranchWeights<T>::make(spec, 3, image_h, image_w, rng);
    w.depth = BranchWeights<T>::make(spec, 3, image_h, image_w, rng);
    for (int s = 0; s < 4; ++s) {
        const int c = spec.channels[s];
        w.frm[s] = FrmWeights<T>::make(c, rng);
        w.ffm[s] = FfmWeights<T>::make(c, heads_for(c, spec.head_dim), 1 << (3 - s), rng);
    }
    w.fpn = FpnWeights<T>::make(spec, cond_channels, rng);
    return w;
}

template <typename T>
BasicTensor<T> full_condition(const BasicTensor<T>& rgb, const BasicTensor<T>& depth, const ConditionWeights<T>& w,
                              ConditionTrace* trace) {
    if (rgb.rank() != 3 || rgb.dim(0) != 3) throw ShapeError("rgb must be [3,H,W], got " + shape_str(rgb.shape()));
    if (depth.rank() != 3 || depth.dim(0) != 1 || depth.dim(1) != rgb.dim(1) || depth.dim(2) != rgb.dim(2)) {
        throw ShapeError("depth must be [1,H,W] matching rgb, got " + shape_str(depth.shape()));
    }
    const auto rgb_feats = encode_branch(rgb, w.rgb, trace ? &trace->rgb : nullptr);
    const auto depth3 = concat(std::vector<BasicTensor<T>>{depth, depth, depth}, 0);
    const auto depth_feats = encode_branch(depth3, w.depth, trace ? &trace->depth : nullptr);
    PyramidFeatures<T> fused;
    for (int s = 0; s < 4; ++s) {
        const auto [r, d] = frm(rgb_feats[s], depth_feats[s], w.frm[s]);
        fused[s] = ffm(r, d, w.ffm[s]);
    }
    return fpn_condition(fused, w.fpn);
}

#define DDSEG_INSTANTIATE(T)                                                                                        \
    template struct BranchWeights<T>;                                                                              \
    template struct FrmWeights<T>;                                                                                 \
    template struct FfmWeights<T>;                                                                                 \
    template struct FpnWeights<T>;                                                                                 \
    template struct ConditionWeights<T>;                                                                           \
    template PyramidFeatures<T> encode_branch<T>(const BasicTensor<T>&, const BranchWeights<T>&, DeformTrace*);   \
    template std::pair<BasicTensor<T>, BasicTensor<T>> frm<T>(const BasicTensor<T>&, const BasicTensor<T>&,       \
                                                              const FrmWeights<T>&, FrmGates<T>*);                 \
    template BasicTensor<T> ffm<T>(const BasicTensor<T>&, const BasicTensor<T>&, const FfmWeights<T>&);           \
    template BasicTensor<T> fpn_merge<T>(const PyramidFeatures<T>&, const FpnWeights<T>&);                        \
    template BasicTensor<T> fpn_condition<T>(const PyramidFeatures<T>&, const FpnWeights<T>&);                    \
    template BasicTensor<T> full_condition<T>(const BasicTensor<T>&, const BasicTensor<T>&,                       \
                                              const ConditionWeights<T>&, ConditionTrace*);

DDSEG_INSTANTIATE(float)
DDSEG_INSTANTIATE(double)

}  // namespace ddseg
