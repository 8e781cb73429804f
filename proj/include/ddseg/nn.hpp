#pragma once

#include <cmath>
#include <string>

#include "ddseg/ops.hpp"
#include "ddseg/rng.hpp"

// Parameter containers shared by the model modules. Every container exposes
// visit(prefix, f) which calls f(name, tensor&) in a fixed order; checkpoints,
// the optimizer and precision casts all rely on that order.
namespace ddseg {

template <typename T>
BasicTensor<T> uniform_init(Shape shape, double bound, Rng& rng) {
    BasicTensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

template <typename T>
BasicTensor<T> normal_init(Shape shape, double stddev, Rng& rng) {
    BasicTensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(stddev * rng.normal());
    return t;
}

// y = x W + b over the last axis; W is [in, out].
template <typename T>
struct Linear {
    BasicTensor<T> weight;
    BasicTensor<T> bias;  // [out], optional

    static Linear make(int in, int out, Rng& rng, bool with_bias = true) {
        Linear l;
        l.weight = uniform_init<T>({in, out}, std::sqrt(6.0 / (in + out)), rng);
        if (with_bias) l.bias = BasicTensor<T>::zeros({out});
        return l;
    }
    static Linear zeros(int in, int out, bool with_bias = true) {
        Linear l;
        l.weight = BasicTensor<T>::zeros({in, out});
        if (with_bias) l.bias = BasicTensor<T>::zeros({out});
        return l;
    }

    BasicTensor<T> operator()(const BasicTensor<T>& x) const {
        auto y = matmul(x, weight);
        return bias.defined() ? add(y, bias) : y;
    }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".weight", weight);
        if (bias.defined()) f(prefix + ".bias", bias);
    }
};

template <typename T>
struct Conv {
    BasicTensor<T> weight;  // [out, in, k, k]
    BasicTensor<T> bias;    // [out], optional
    int stride = 1;
    int pad = 0;

    static Conv make(int in, int out, int k, int stride, Rng& rng, bool with_bias = true) {
        Conv c;
        c.weight = normal_init<T>({out, in, k, k}, std::sqrt(2.0 / (in * k * k)), rng);
        if (with_bias) c.bias = BasicTensor<T>::zeros({out});
        c.stride = stride;
        c.pad = k / 2;
        return c;
    }

    BasicTensor<T> operator()(const BasicTensor<T>& x) const { return conv2d(x, weight, bias, stride, pad); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".weight", weight);
        if (bias.defined()) f(prefix + ".bias", bias);
    }
};

template <typename T>
struct Norm {
    BasicTensor<T> gain;
    BasicTensor<T> bias;

    static Norm make(int channels) { return {BasicTensor<T>::ones({channels}), BasicTensor<T>::zeros({channels})}; }

    // Normalizes tokens [N, C] over C.
    BasicTensor<T> tokens(const BasicTensor<T>& x) const { return layer_norm(x, gain, bias, -1); }
    // Normalizes maps [C, H, W] over C.
    BasicTensor<T> channels(const BasicTensor<T>& x) const { return layer_norm(x, gain, bias, 0); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".gain", gain);
        f(prefix + ".bias", bias);
    }
};

// [C, H, W] -> [H*W, C]
template <typename T>
BasicTensor<T> to_tokens(const BasicTensor<T>& x) {
    return transpose(reshape(x, {x.dim(0), x.dim(1) * x.dim(2)}));
}

// [H*W, C] -> [C, H, W]
template <typename T>
BasicTensor<T> to_map(const BasicTensor<T>& tokens, std::int64_t h, std::int64_t w) {
    return reshape(transpose(tokens), {tokens.dim(1), h, w});
}

}  // namespace ddseg
