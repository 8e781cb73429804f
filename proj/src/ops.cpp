#include "ddseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "gemm.hpp"

namespace ddseg {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <typename T>
void check_finite(const BasicTensor<T>& x, const char* where) {
    for (T v : x.data()) {
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + where);
    }
}

namespace {

#ifndef NDEBUG
#define DDSEG_CHECK_FINITE(t, name) check_finite(t, name)
#else
#define DDSEG_CHECK_FINITE(t, name) ((void)0)
#endif

template <typename T, typename F>
void record(const char* name, std::vector<BasicTensor<T>> inputs, BasicTensor<T>& out, F&& backward) {
    auto* tape = detail::active_tape<T>();
    if (tape == nullptr) return;
    bool any = false;
    for (const auto& in : inputs) any = any || (in.defined() && in.requires_grad());
    if (!any) return;
    out.set_requires_grad(true);
    out.storage()->is_leaf = false;
    tape->record({name, std::move(inputs), out, std::function<void()>(std::forward<F>(backward))});
}

template <typename T>
bool wants(const BasicTensor<T>& t) {
    return t.defined() && t.requires_grad();
}

int normalize_axis(int axis, int rank) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw ShapeError("axis " + std::to_string(axis) + " out of range");
    return axis;
}

// Splits shape around `axis` into (outer, extent, inner) element counts.
struct AxisSplit {
    std::int64_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, int axis) {
    AxisSplit s;
    for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
    s.extent = shape[static_cast<std::size_t>(axis)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

// ---------------------------------------------------------------- broadcasting

struct Broadcast {
    Shape out;
    std::vector<std::int64_t> stride_a, stride_b;  // 0 on broadcast axes
    bool same = false;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b) {
    Broadcast p;
    if (a == b) {
        p.out = a;
        p.same = true;
        return p;
    }
    const std::size_t r = std::max(a.size(), b.size());
    Shape pa(r, 1), pb(r, 1);
    std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(r - a.size()));
    std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(r - b.size()));
    p.out.resize(r);
    for (std::size_t i = 0; i < r; ++i) {
        if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
            throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        }
        p.out[i] = std::max(pa[i], pb[i]);
    }
    p.stride_a.assign(r, 0);
    p.stride_b.assign(r, 0);
    std::int64_t sa = 1, sb = 1;
    for (std::size_t i = r; i-- > 0;) {
        p.stride_a[i] = pa[i] == 1 ? 0 : sa;
        p.stride_b[i] = pb[i] == 1 ? 0 : sb;
        sa *= pa[i];
        sb *= pb[i];
    }
    return p;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_broadcast(const Broadcast& p, F&& f) {
    const std::size_t r = p.out.size();
    if (r == 0) {
        f(0, 0, 0);
        return;
    }
    const std::int64_t last = p.out[r - 1];
    const std::int64_t sa_last = p.stride_a[r - 1], sb_last = p.stride_b[r - 1];
    const std::int64_t total = shape_numel(p.out);
    std::vector<std::int64_t> idx(r, 0);
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t o = 0; o < total; o += last) {
        for (std::int64_t j = 0; j < last; ++j) f(o + j, ia + j * sa_last, ib + j * sb_last);
        // advance odometer over axes [0, r-1)
        for (std::size_t d = r - 1; d-- > 0;) {
            ++idx[d];
            ia += p.stride_a[d];
            ib += p.stride_b[d];
            if (idx[d] < p.out[d]) break;
            ia -= p.stride_a[d] * idx[d];
            ib -= p.stride_b[d] * idx[d];
            idx[d] = 0;
        }
    }
}

enum class BinOp { Add, Sub, Mul };

template <typename T>
BasicTensor<T> binary(const BasicTensor<T>& a, const BasicTensor<T>& b, BinOp op, const char* name) {
    const Broadcast plan = plan_broadcast(a.shape(), b.shape());
    BasicTensor<T> out(plan.out);
    const T* pa = a.ptr();
    const T* pb = b.ptr();
    T* po = out.ptr();
    auto apply = [op](T x, T y) {
        switch (op) {
            case BinOp::Add: return x + y;
            case BinOp::Sub: return x - y;
            default: return x * y;
        }
    };
    if (plan.same) {
        const auto n = out.numel();
        for (std::int64_t i = 0; i < n; ++i) po[i] = apply(pa[i], pb[i]);
    } else {
        for_each_broadcast(plan, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) { po[o] = apply(pa[ia], pb[ib]); });
    }
    DDSEG_CHECK_FINITE(out, name);
    record(name, {a, b}, out, [a, b, out, plan, op]() {
        const T* g = out.grad().data();
        const bool ga_on = wants(a), gb_on = wants(b);
        T* ga = ga_on ? a.grad_mut().data() : nullptr;
        T* gb = gb_on ? b.grad_mut().data() : nullptr;
        const T* va = a.ptr();
        const T* vb = b.ptr();
        auto step = [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
            switch (op) {
                case BinOp::Add:
                    if (ga) ga[ia] += g[o];
                    if (gb) gb[ib] += g[o];
                    break;
                case BinOp::Sub:
                    if (ga) ga[ia] += g[o];
                    if (gb) gb[ib] -= g[o];
                    break;
                case BinOp::Mul:
                    if (ga) ga[ia] += g[o] * vb[ib];
                    if (gb) gb[ib] += g[o] * va[ia];
                    break;
            }
        };
        if (plan.same) {
            const auto n = out.numel();
            for (std::int64_t i = 0; i < n; ++i) step(i, i, i);
        } else {
            for_each_broadcast(plan, step);
        }
    });
    return out;
}

// Elementwise unary op: forward f(x), backward uses (x, y) -> dy/dx.
template <typename T, typename F, typename D>
BasicTensor<T> unary(const BasicTensor<T>& x, const char* name, F f, D df) {
    BasicTensor<T> out(x.shape());
    const auto n = x.numel();
    const T* px = x.ptr();
    T* po = out.ptr();
    for (std::int64_t i = 0; i < n; ++i) po[i] = f(px[i]);
    DDSEG_CHECK_FINITE(out, name);
    record(name, {x}, out, [x, out, df]() {
        const T* g = out.grad().data();
        T* gx = x.grad_mut().data();
        const T* vx = x.ptr();
        const T* vy = out.ptr();
        const auto n = x.numel();
        for (std::int64_t i = 0; i < n; ++i) gx[i] += g[i] * df(vx[i], vy[i]);
    });
    return out;
}

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return binary(a, b, BinOp::Add, "add");
}
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return binary(a, b, BinOp::Sub, "sub");
}
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return binary(a, b, BinOp::Mul, "mul");
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
    return unary(
        a, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& a, T value) {
    return unary(
        a, "add_scalar", [value](T v) { return v + value; }, [](T, T) { return T{1}; });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
    return unary(
        x, "sigmoid",
        [](T v) {
            if (v >= 0) return T{1} / (T{1} + std::exp(-v));
            const T e = std::exp(v);
            return e / (T{1} + e);
        },
        [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x) {
    return unary(
        x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
    constexpr T k = T(0.7978845608028654);  // sqrt(2/pi)
    constexpr T c = T(0.044715);
    return unary(
        x, "gelu",
        [](T v) { return T(0.5) * v * (T{1} + std::tanh(k * (v + c * v * v * v))); },
        [](T v, T) {
            const T u = k * (v + c * v * v * v);
            const T th = std::tanh(u);
            const T du = k * (T{1} + T{3} * c * v * v);
            return T(0.5) * (T{1} + th) + T(0.5) * v * (T{1} - th * th) * du;
        });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
    T acc{0};
    for (T v : x.data()) acc += v;
    auto out = BasicTensor<T>::scalar(acc);
    record("sum", {x}, out, [x, out]() {
        const T g = out.grad()[0];
        for (auto& v : x.grad_mut()) v += g;
    });
    return out;
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
    if (x.numel() == 0) throw ShapeError("mean of empty tensor");
    return scale(sum(x), T{1} / static_cast<T>(x.numel()));
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul needs rank >= 2 operands");
    const auto m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
    if (b.dim(-2) != k) {
        throw ShapeError("matmul inner dims differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::int64_t batch = a.numel() / std::max<std::int64_t>(m * k, 1);
    const bool shared_b = b.rank() == 2;
    if (!shared_b) {
        if (b.rank() != a.rank() || !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
            throw ShapeError("matmul batch axes differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
        }
    }
    Shape out_shape = a.shape();
    out_shape.back() = n;
    BasicTensor<T> out(out_shape);
    const int M = static_cast<int>(m), N = static_cast<int>(n), K = static_cast<int>(k);
    if (shared_b) {
        detail::gemm<T>(false, false, static_cast<int>(batch) * M, N, K, a.ptr(), b.ptr(), out.ptr(), false);
    } else {
        for (std::int64_t i = 0; i < batch; ++i) {
            detail::gemm<T>(false, false, M, N, K, a.ptr() + i * m * k, b.ptr() + i * k * n, out.ptr() + i * m * n,
                            false);
        }
    }
    DDSEG_CHECK_FINITE(out, "matmul");
    record("matmul", {a, b}, out, [a, b, out, batch, M, N, K, shared_b]() {
        const T* g = out.grad().data();
        if (wants(a)) {
            T* ga = a.grad_mut().data();
            if (shared_b) {
                detail::gemm<T>(false, true, static_cast<int>(batch) * M, K, N, g, b.ptr(), ga, true);
            } else {
                for (std::int64_t i = 0; i < batch; ++i) {
                    detail::gemm<T>(false, true, M, K, N, g + i * M * N, b.ptr() + i * K * N, ga + i * M * K, true);
                }
            }
        }
        if (wants(b)) {
            T* gb = b.grad_mut().data();
            if (shared_b) {
                detail::gemm<T>(true, false, K, N, static_cast<int>(batch) * M, a.ptr(), g, gb, true);
            } else {
                for (std::int64_t i = 0; i < batch; ++i) {
                    detail::gemm<T>(true, false, K, N, M, a.ptr() + i * M * K, g + i * M * N, gb + i * K * N, true);
                }
            }
        }
    });
    return out;
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& x) {
    if (x.rank() < 2) throw ShapeError("transpose needs rank >= 2");
    const auto r = x.dim(-2), c = x.dim(-1);
    const auto batch = x.numel() / std::max<std::int64_t>(r * c, 1);
    Shape s = x.shape();
    std::swap(s[s.size() - 1], s[s.size() - 2]);
    BasicTensor<T> out(s);
    const T* px = x.ptr();
    T* po = out.ptr();
    for (std::int64_t b = 0; b < batch; ++b) {
        const T* src = px + b * r * c;
        T* dst = po + b * r * c;
        for (std::int64_t i = 0; i < r; ++i) {
            for (std::int64_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
        }
    }
    record("transpose", {x}, out, [x, out, r, c, batch]() {
        const T* g = out.grad().data();
        T* gx = x.grad_mut().data();
        for (std::int64_t b = 0; b < batch; ++b) {
            for (std::int64_t i = 0; i < r; ++i) {
                for (std::int64_t j = 0; j < c; ++j) gx[b * r * c + i * c + j] += g[b * r * c + j * r + i];
            }
        }
    });
    return out;
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
    }
    BasicTensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
    record("reshape", {x}, out, [x, out]() {
        const auto g = out.grad();
        auto gx = x.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
    return out;
}

template <typename T>
BasicTensor<T> narrow(const BasicTensor<T>& x, int axis, std::int64_t start, std::int64_t length) {
    axis = normalize_axis(axis, x.rank());
    const AxisSplit s = split_at(x.shape(), axis);
    if (start < 0 || length < 0 || start + length > s.extent) {
        throw ShapeError("narrow range out of bounds for " + shape_str(x.shape()));
    }
    Shape os = x.shape();
    os[static_cast<std::size_t>(axis)] = length;
    BasicTensor<T> out(os);
    const T* px = x.ptr();
    T* po = out.ptr();
    for (std::int64_t o = 0; o < s.outer; ++o) {
        std::copy_n(px + (o * s.extent + start) * s.inner, length * s.inner, po + o * length * s.inner);
    }
    record("narrow", {x}, out, [x, out, s, start, length]() {
        const T* g = out.grad().data();
        T* gx = x.grad_mut().data();
        for (std::int64_t o = 0; o < s.outer; ++o) {
            T* dst = gx + (o * s.extent + start) * s.inner;
            const T* src = g + o * length * s.inner;
            for (std::int64_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
        }
    });
    return out;
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat of nothing");
    axis = normalize_axis(axis, parts[0].rank());
    Shape os = parts[0].shape();
    std::int64_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != parts[0].rank()) throw ShapeError("concat rank mismatch");
        for (int i = 0; i < p.rank(); ++i) {
            if (i != axis && p.dim(i) != os[static_cast<std::size_t>(i)]) {
                throw ShapeError("concat shape mismatch: " + shape_str(p.shape()) + " vs " + shape_str(os));
            }
        }
        total += p.dim(axis);
    }
    os[static_cast<std::size_t>(axis)] = total;
    BasicTensor<T> out(os);
    const AxisSplit so = split_at(os, axis);
    std::vector<std::int64_t> offsets;
    std::int64_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const auto ext = p.dim(axis);
        for (std::int64_t o = 0; o < so.outer; ++o) {
            std::copy_n(p.ptr() + o * ext * so.inner, ext * so.inner, out.ptr() + (o * total + off) * so.inner);
        }
        off += ext;
    }
    record("concat", parts, out, [parts, out, offsets, so, total, axis]() {
        const T* g = out.grad().data();
        for (std::size_t k = 0; k < parts.size(); ++k) {
            if (!wants(parts[k])) continue;
            const auto ext = parts[k].dim(axis);
            T* gp = parts[k].grad_mut().data();
            for (std::int64_t o = 0; o < so.outer; ++o) {
                const T* src = g + (o * total + offsets[k]) * so.inner;
                T* dst = gp + o * ext * so.inner;
                for (std::int64_t i = 0; i < ext * so.inner; ++i) dst[i] += src[i];
            }
        }
    });
    return out;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, int axis) {
    axis = normalize_axis(axis, x.rank());
    const AxisSplit s = split_at(x.shape(), axis);
    BasicTensor<T> out(x.shape());
    const T* px = x.ptr();
    T* po = out.ptr();
    for (std::int64_t o = 0; o < s.outer; ++o) {
        for (std::int64_t in = 0; in < s.inner; ++in) {
            const std::int64_t base = o * s.extent * s.inner + in;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::int64_t j = 0; j < s.extent; ++j) mx = std::max(mx, px[base + j * s.inner]);
            T z{0};
            for (std::int64_t j = 0; j < s.extent; ++j) {
                const T e = std::exp(px[base + j * s.inner] - mx);
                po[base + j * s.inner] = e;
                z += e;
            }
            const T inv = T{1} / z;
            for (std::int64_t j = 0; j < s.extent; ++j) po[base + j * s.inner] *= inv;
        }
    }
    DDSEG_CHECK_FINITE(out, "softmax");
    record("softmax", {x}, out, [x, out, s]() {
        const T* g = out.grad().data();
        const T* y = out.ptr();
        T* gx = x.grad_mut().data();
        for (std::int64_t o = 0; o < s.outer; ++o) {
            for (std::int64_t in = 0; in < s.inner; ++in) {
                const std::int64_t base = o * s.extent * s.inner + in;
                T dot{0};
                for (std::int64_t j = 0; j < s.extent; ++j) dot += g[base + j * s.inner] * y[base + j * s.inner];
                for (std::int64_t j = 0; j < s.extent; ++j) {
                    const auto idx = base + j * s.inner;
                    gx[idx] += y[idx] * (g[idx] - dot);
                }
            }
        }
    });
    return out;
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain, const BasicTensor<T>& bias, int axis,
                          T epsilon) {
    axis = normalize_axis(axis, x.rank());
    const AxisSplit s = split_at(x.shape(), axis);
    if (gain.numel() != s.extent || bias.numel() != s.extent) {
        throw ShapeError("layer_norm affine size does not match axis extent of " + shape_str(x.shape()));
    }
    BasicTensor<T> out(x.shape());
    std::vector<T> xhat(static_cast<std::size_t>(x.numel()));
    std::vector<T> inv_std(static_cast<std::size_t>(s.outer * s.inner));
    const T* px = x.ptr();
    const T* pg = gain.ptr();
    const T* pb = bias.ptr();
    T* po = out.ptr();
    const T n = static_cast<T>(s.extent);
    for (std::int64_t o = 0; o < s.outer; ++o) {
        for (std::int64_t in = 0; in < s.inner; ++in) {
            const std::int64_t base = o * s.extent * s.inner + in;
            T mu{0};
            for (std::int64_t j = 0; j < s.extent; ++j) mu += px[base + j * s.inner];
            mu /= n;
            T var{0};
            for (std::int64_t j = 0; j < s.extent; ++j) {
                const T d = px[base + j * s.inner] - mu;
                var += d * d;
            }
            var /= n;
            const T is = T{1} / std::sqrt(var + epsilon);
            inv_std[static_cast<std::size_t>(o * s.inner + in)] = is;
            for (std::int64_t j = 0; j < s.extent; ++j) {
                const auto idx = base + j * s.inner;
                const T xh = (px[idx] - mu) * is;
                xhat[static_cast<std::size_t>(idx)] = xh;
                po[idx] = xh * pg[j] + pb[j];
            }
        }
    }
    DDSEG_CHECK_FINITE(out, "layer_norm");
    record("layer_norm", {x, gain, bias}, out, [x, gain, bias, out, s, xhat = std::move(xhat),
                                                inv_std = std::move(inv_std)]() {
        const T* g = out.grad().data();
        const T* pg = gain.ptr();
        T* gx = wants(x) ? x.grad_mut().data() : nullptr;
        T* gg = wants(gain) ? gain.grad_mut().data() : nullptr;
        T* gb = wants(bias) ? bias.grad_mut().data() : nullptr;
        const T n = static_cast<T>(s.extent);
        for (std::int64_t o = 0; o < s.outer; ++o) {
            for (std::int64_t in = 0; in < s.inner; ++in) {
                const std::int64_t base = o * s.extent * s.inner + in;
                T mean_gxh{0}, mean_gxh_xh{0};
                for (std::int64_t j = 0; j < s.extent; ++j) {
                    const auto idx = base + j * s.inner;
                    const T xh = xhat[static_cast<std::size_t>(idx)];
                    if (gg) gg[j] += g[idx] * xh;
                    if (gb) gb[j] += g[idx];
                    const T gxh = g[idx] * pg[j];
                    mean_gxh += gxh;
                    mean_gxh_xh += gxh * xh;
                }
                if (!gx) continue;
                mean_gxh /= n;
                mean_gxh_xh /= n;
                const T is = inv_std[static_cast<std::size_t>(o * s.inner + in)];
                for (std::int64_t j = 0; j < s.extent; ++j) {
                    const auto idx = base + j * s.inner;
                    const T xh = xhat[static_cast<std::size_t>(idx)];
                    gx[idx] += is * (g[idx] * pg[j] - mean_gxh - xh * mean_gxh_xh);
                }
            }
        }
    });
    return out;
}

namespace {

struct ConvGeom {
    std::int64_t c, h, w, kh, kw, oh, ow;
    int stride, pad;
};

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
    const std::int64_t plane = g.oh * g.ow;
    for (std::int64_t ch = 0; ch < g.c; ++ch) {
        for (std::int64_t ky = 0; ky < g.kh; ++ky) {
            for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                T* row = cols + ((ch * g.kh + ky) * g.kw + kx) * plane;
                for (std::int64_t oy = 0; oy < g.oh; ++oy) {
                    const std::int64_t iy = oy * g.stride - g.pad + ky;
                    for (std::int64_t ox = 0; ox < g.ow; ++ox) {
                        const std::int64_t ix = ox * g.stride - g.pad + kx;
                        row[oy * g.ow + ox] =
                            (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? x[(ch * g.h + iy) * g.w + ix] : T{0};
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeom& g, T* x) {
    const std::int64_t plane = g.oh * g.ow;
    for (std::int64_t ch = 0; ch < g.c; ++ch) {
        for (std::int64_t ky = 0; ky < g.kh; ++ky) {
            for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                const T* row = cols + ((ch * g.kh + ky) * g.kw + kx) * plane;
                for (std::int64_t oy = 0; oy < g.oh; ++oy) {
                    const std::int64_t iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.h) continue;
                    for (std::int64_t ox = 0; ox < g.ow; ++ox) {
                        const std::int64_t ix = ox * g.stride - g.pad + kx;
                        if (ix >= 0 && ix < g.w) x[(ch * g.h + iy) * g.w + ix] += row[oy * g.ow + ox];
                    }
                }
            }
        }
    }
}

ConvGeom conv_geom(const Shape& x, std::int64_t kh, std::int64_t kw, int stride, int pad) {
    if (x.size() != 3) throw ShapeError("conv input must be [C,H,W], got " + shape_str(x));
    if (stride < 1 || pad < 0) throw ShapeError("conv stride must be >= 1 and pad >= 0");
    ConvGeom g{x[0], x[1], x[2], kh, kw, 0, 0, stride, pad};
    g.oh = (g.h + 2 * pad - kh) / stride + 1;
    g.ow = (g.w + 2 * pad - kw) / stride + 1;
    if (g.oh <= 0 || g.ow <= 0) throw ShapeError("conv kernel larger than padded input " + shape_str(x));
    return g;
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& bias, int stride,
                      int pad) {
    if (kernel.rank() != 4) throw ShapeError("conv kernel must be [C',C,kh,kw]");
    const ConvGeom g = conv_geom(x.shape(), kernel.dim(2), kernel.dim(3), stride, pad);
    if (kernel.dim(1) != g.c) {
        throw ShapeError("conv channel mismatch: input " + shape_str(x.shape()) + ", kernel " +
                         shape_str(kernel.shape()));
    }
    const std::int64_t co = kernel.dim(0);
    if (bias.defined() && bias.numel() != co) throw ShapeError("conv bias size mismatch");
    const std::int64_t plane = g.oh * g.ow;
    const std::int64_t kdim = g.c * g.kh * g.kw;
    const bool direct = g.kh == 1 && g.kw == 1 && stride == 1 && pad == 0;
    std::vector<T> cols;
    if (!direct) {
        cols.resize(static_cast<std::size_t>(kdim * plane));
        im2col(x.ptr(), g, cols.data());
    }
    const T* colp = direct ? x.ptr() : cols.data();
    BasicTensor<T> out(Shape{co, g.oh, g.ow});
    detail::gemm<T>(false, false, static_cast<int>(co), static_cast<int>(plane), static_cast<int>(kdim), kernel.ptr(),
                    colp, out.ptr(), false);
    if (bias.defined()) {
        T* po = out.ptr();
        const T* pb = bias.ptr();
        for (std::int64_t c = 0; c < co; ++c) {
            for (std::int64_t i = 0; i < plane; ++i) po[c * plane + i] += pb[c];
        }
    }
    DDSEG_CHECK_FINITE(out, "conv2d");
    std::vector<BasicTensor<T>> inputs{x, kernel};
    if (bias.defined()) inputs.push_back(bias);
    record("conv2d", std::move(inputs), out, [x, kernel, bias, out, g, co, plane, kdim, direct,
                                              cols = std::move(cols)]() {
        const T* gout = out.grad().data();
        if (wants(kernel)) {
            const T* colp = direct ? x.ptr() : cols.data();
            detail::gemm<T>(false, true, static_cast<int>(co), static_cast<int>(kdim), static_cast<int>(plane), gout,
                            colp, kernel.grad_mut().data(), true);
        }
        if (wants(bias)) {
            T* gb = bias.grad_mut().data();
            for (std::int64_t c = 0; c < co; ++c) {
                T acc{0};
                for (std::int64_t i = 0; i < plane; ++i) acc += gout[c * plane + i];
                gb[c] += acc;
            }
        }
        if (wants(x)) {
            if (direct) {
                detail::gemm<T>(true, false, static_cast<int>(kdim), static_cast<int>(plane), static_cast<int>(co),
                                kernel.ptr(), gout, x.grad_mut().data(), true);
            } else {
                std::vector<T> gcols(static_cast<std::size_t>(kdim * plane));
                detail::gemm<T>(true, false, static_cast<int>(kdim), static_cast<int>(plane), static_cast<int>(co),
                                kernel.ptr(), gout, gcols.data(), false);
                col2im_add(gcols.data(), g, x.grad_mut().data());
            }
        }
    });
    return out;
}

template <typename T>
BasicTensor<T> depthwise_conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                                int stride, int pad) {
    if (kernel.rank() != 4 || kernel.dim(1) != 1) throw ShapeError("depthwise kernel must be [C,1,kh,kw]");
    const ConvGeom g = conv_geom(x.shape(), kernel.dim(2), kernel.dim(3), stride, pad);
    if (kernel.dim(0) != g.c) throw ShapeError("depthwise channel mismatch");
    if (bias.defined() && bias.numel() != g.c) throw ShapeError("depthwise bias size mismatch");
    BasicTensor<T> out(Shape{g.c, g.oh, g.ow});
    const T* px = x.ptr();
    const T* pk = kernel.ptr();
    T* po = out.ptr();
    auto for_each_tap = [g](auto&& f) {
        for (std::int64_t c = 0; c < g.c; ++c) {
            for (std::int64_t oy = 0; oy < g.oh; ++oy) {
                for (std::int64_t ox = 0; ox < g.ow; ++ox) {
                    for (std::int64_t ky = 0; ky < g.kh; ++ky) {
                        const std::int64_t iy = oy * g.stride - g.pad + ky;
                        if (iy < 0 || iy >= g.h) continue;
                        for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                            const std::int64_t ix = ox * g.stride - g.pad + kx;
                            if (ix < 0 || ix >= g.w) continue;
                            f((c * g.oh + oy) * g.ow + ox, (c * g.h + iy) * g.w + ix, (c * g.kh + ky) * g.kw + kx);
                        }
                    }
                }
            }
        }
    };
    for_each_tap([&](std::int64_t o, std::int64_t i, std::int64_t k) { po[o] += px[i] * pk[k]; });
    if (bias.defined()) {
        const std::int64_t plane = g.oh * g.ow;
        for (std::int64_t c = 0; c < g.c; ++c) {
            for (std::int64_t i = 0; i < plane; ++i) po[c * plane + i] += bias.ptr()[c];
        }
    }
    DDSEG_CHECK_FINITE(out, "depthwise_conv2d");
    std::vector<BasicTensor<T>> inputs{x, kernel};
    if (bias.defined()) inputs.push_back(bias);
    record("depthwise_conv2d", std::move(inputs), out, [x, kernel, bias, out, g, for_each_tap]() {
        const T* gout = out.grad().data();
        T* gx = wants(x) ? x.grad_mut().data() : nullptr;
        T* gk = wants(kernel) ? kernel.grad_mut().data() : nullptr;
        const T* px = x.ptr();
        const T* pk = kernel.ptr();
        for_each_tap([&](std::int64_t o, std::int64_t i, std::int64_t k) {
            if (gx) gx[i] += gout[o] * pk[k];
            if (gk) gk[k] += gout[o] * px[i];
        });
        if (wants(bias)) {
            T* gb = bias.grad_mut().data();
            const std::int64_t plane = g.oh * g.ow;
            for (std::int64_t c = 0; c < g.c; ++c) {
                for (std::int64_t i = 0; i < plane; ++i) gb[c] += gout[c * plane + i];
            }
        }
    });
    return out;
}

template <typename T>
BasicTensor<T> bilinear_sample(const BasicTensor<T>& feat, const BasicTensor<T>& points) {
    if (feat.rank() != 3) throw ShapeError("bilinear_sample feature must be [C,H,W]");
    if (points.rank() != 2 || points.dim(1) != 2) throw ShapeError("bilinear_sample points must be [N,2]");
    const std::int64_t C = feat.dim(0), H = feat.dim(1), W = feat.dim(2), N = points.dim(0);
    const std::int64_t plane = H * W;

    // Per point: corner indices, fractional weights and whether each axis
    // was clamped (clamped axes carry no coordinate gradient).
    struct Tap {
        std::int64_t y0, y1, x0, x1;
        T fy, fx;
        bool cy, cx;
    };
    std::vector<Tap> taps(static_cast<std::size_t>(N));
    const T* pp = points.ptr();
    for (std::int64_t n = 0; n < N; ++n) {
        if (!std::isfinite(pp[2 * n]) || !std::isfinite(pp[2 * n + 1])) {
            throw NumericError("bilinear_sample got a non-finite point");
        }
        T py = ((pp[2 * n] + T{1}) * static_cast<T>(H) - T{1}) / T{2};
        T px = ((pp[2 * n + 1] + T{1}) * static_cast<T>(W) - T{1}) / T{2};
        Tap t{};
        t.cy = py < T{0} || py > static_cast<T>(H - 1);
        t.cx = px < T{0} || px > static_cast<T>(W - 1);
        py = std::clamp(py, T{0}, static_cast<T>(H - 1));
        px = std::clamp(px, T{0}, static_cast<T>(W - 1));
        t.y0 = std::min(static_cast<std::int64_t>(std::floor(py)), H - 1);
        t.x0 = std::min(static_cast<std::int64_t>(std::floor(px)), W - 1);
        t.y1 = std::min(t.y0 + 1, H - 1);
        t.x1 = std::min(t.x0 + 1, W - 1);
        t.fy = py - static_cast<T>(t.y0);
        t.fx = px - static_cast<T>(t.x0);
        taps[static_cast<std::size_t>(n)] = t;
    }
    BasicTensor<T> out(Shape{N, C});
    const T* pf = feat.ptr();
    T* po = out.ptr();
    for (std::int64_t n = 0; n < N; ++n) {
        const Tap& t = taps[static_cast<std::size_t>(n)];
        const T w00 = (T{1} - t.fy) * (T{1} - t.fx), w01 = (T{1} - t.fy) * t.fx;
        const T w10 = t.fy * (T{1} - t.fx), w11 = t.fy * t.fx;
        const std::int64_t i00 = t.y0 * W + t.x0, i01 = t.y0 * W + t.x1;
        const std::int64_t i10 = t.y1 * W + t.x0, i11 = t.y1 * W + t.x1;
        T* row = po + n * C;
        for (std::int64_t c = 0; c < C; ++c) {
            const T* f = pf + c * plane;
            row[c] = w00 * f[i00] + w01 * f[i01] + w10 * f[i10] + w11 * f[i11];
        }
    }
    DDSEG_CHECK_FINITE(out, "bilinear_sample");
    record("bilinear_sample", {feat, points}, out, [feat, points, out, taps = std::move(taps), C, H, W, N, plane]() {
        const T* g = out.grad().data();
        const T* pf = feat.ptr();
        T* gf = wants(feat) ? feat.grad_mut().data() : nullptr;
        T* gp = wants(points) ? points.grad_mut().data() : nullptr;
        const T sy = static_cast<T>(H) / T{2}, sx = static_cast<T>(W) / T{2};
        for (std::int64_t n = 0; n < N; ++n) {
            const Tap& t = taps[static_cast<std::size_t>(n)];
            const T w00 = (T{1} - t.fy) * (T{1} - t.fx), w01 = (T{1} - t.fy) * t.fx;
            const T w10 = t.fy * (T{1} - t.fx), w11 = t.fy * t.fx;
            const std::int64_t i00 = t.y0 * W + t.x0, i01 = t.y0 * W + t.x1;
            const std::int64_t i10 = t.y1 * W + t.x0, i11 = t.y1 * W + t.x1;
            const T* grow = g + n * C;
            T dfy{0}, dfx{0};
            for (std::int64_t c = 0; c < C; ++c) {
                const T* f = pf + c * plane;
                const T gv = grow[c];
                if (gf) {
                    T* gfc = gf + c * plane;
                    gfc[i00] += gv * w00;
                    gfc[i01] += gv * w01;
                    gfc[i10] += gv * w10;
                    gfc[i11] += gv * w11;
                }
                dfy += gv * ((T{1} - t.fx) * (f[i10] - f[i00]) + t.fx * (f[i11] - f[i01]));
                dfx += gv * ((T{1} - t.fy) * (f[i01] - f[i00]) + t.fy * (f[i11] - f[i10]));
            }
            if (gp) {
                if (!t.cy) gp[2 * n] += dfy * sy;
                if (!t.cx) gp[2 * n + 1] += dfx * sx;
            }
        }
    });
    return out;
}

template <typename T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& x, int factor) {
    if (x.rank() != 3 || factor < 1) throw ShapeError("upsample_nearest needs [C,H,W] and factor >= 1");
    const auto C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const auto OH = H * factor, OW = W * factor;
    BasicTensor<T> out(Shape{C, OH, OW});
    const T* px = x.ptr();
    T* po = out.ptr();
    for (std::int64_t c = 0; c < C; ++c) {
        for (std::int64_t y = 0; y < OH; ++y) {
            for (std::int64_t xx = 0; xx < OW; ++xx) po[(c * OH + y) * OW + xx] = px[(c * H + y / factor) * W + xx / factor];
        }
    }
    record("upsample_nearest", {x}, out, [x, out, C, H, W, OH, OW, factor]() {
        const T* g = out.grad().data();
        T* gx = x.grad_mut().data();
        for (std::int64_t c = 0; c < C; ++c) {
            for (std::int64_t y = 0; y < OH; ++y) {
                for (std::int64_t xx = 0; xx < OW; ++xx) gx[(c * H + y / factor) * W + xx / factor] += g[(c * OH + y) * OW + xx];
            }
        }
    });
    return out;
}

namespace {

struct Lerp1d {
    std::vector<std::int64_t> i0, i1;
    std::vector<double> f;
};

Lerp1d lerp_table(std::int64_t in, std::int64_t out) {
    Lerp1d t;
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::int64_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const auto lo = std::min(static_cast<std::int64_t>(std::floor(src)), in - 1);
        t.i0.push_back(lo);
        t.i1.push_back(std::min(lo + 1, in - 1));
        t.f.push_back(src - static_cast<double>(lo));
    }
    return t;
}

}  // namespace

template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& x, std::int64_t out_h, std::int64_t out_w) {
    if (x.rank() != 3 || out_h < 1 || out_w < 1) throw ShapeError("resize_bilinear needs [C,H,W] and positive size");
    const auto C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const Lerp1d ty = lerp_table(H, out_h), tx = lerp_table(W, out_w);
    BasicTensor<T> out(Shape{C, out_h, out_w});
    const T* px = x.ptr();
    T* po = out.ptr();
    for (std::int64_t c = 0; c < C; ++c) {
        const T* src = px + c * H * W;
        for (std::int64_t y = 0; y < out_h; ++y) {
            const T fy = static_cast<T>(ty.f[y]);
            const T* r0 = src + ty.i0[y] * W;
            const T* r1 = src + ty.i1[y] * W;
            T* dst = po + (c * out_h + y) * out_w;
            for (std::int64_t xx = 0; xx < out_w; ++xx) {
                const T fx = static_cast<T>(tx.f[xx]);
                const T top = r0[tx.i0[xx]] + fx * (r0[tx.i1[xx]] - r0[tx.i0[xx]]);
                const T bot = r1[tx.i0[xx]] + fx * (r1[tx.i1[xx]] - r1[tx.i0[xx]]);
                dst[xx] = top + fy * (bot - top);
            }
        }
    }
    record("resize_bilinear", {x}, out, [x, out, ty, tx, C, H, W, out_h, out_w]() {
        const T* g = out.grad().data();
        T* gx = x.grad_mut().data();
        for (std::int64_t c = 0; c < C; ++c) {
            T* dst = gx + c * H * W;
            for (std::int64_t y = 0; y < out_h; ++y) {
                const T fy = static_cast<T>(ty.f[y]);
                const T* grow = g + (c * out_h + y) * out_w;
                for (std::int64_t xx = 0; xx < out_w; ++xx) {
                    const T fx = static_cast<T>(tx.f[xx]);
                    const T gv = grow[xx];
                    dst[ty.i0[y] * W + tx.i0[xx]] += gv * (T{1} - fy) * (T{1} - fx);
                    dst[ty.i0[y] * W + tx.i1[xx]] += gv * (T{1} - fy) * fx;
                    dst[ty.i1[y] * W + tx.i0[xx]] += gv * fy * (T{1} - fx);
                    dst[ty.i1[y] * W + tx.i1[xx]] += gv * fy * fx;
                }
            }
        }
    });
    return out;
}

template <typename T>
BasicTensor<T> avg_pool(const BasicTensor<T>& x, int factor) {
    if (x.rank() != 3 || factor < 1) throw ShapeError("avg_pool needs [C,H,W] and factor >= 1");
    const auto C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (H % factor != 0 || W % factor != 0) {
        throw ShapeError("avg_pool factor " + std::to_string(factor) + " does not divide " + shape_str(x.shape()));
    }
    if (factor == 1) return x;
    const auto OH = H / factor, OW = W / factor;
    const T inv = T{1} / static_cast<T>(factor * factor);
    BasicTensor<T> out(Shape{C, OH, OW});
    const T* px = x.ptr();
    T* po = out.ptr();
    for (std::int64_t c = 0; c < C; ++c) {
        for (std::int64_t y = 0; y < H; ++y) {
            for (std::int64_t xx = 0; xx < W; ++xx) po[(c * OH + y / factor) * OW + xx / factor] += px[(c * H + y) * W + xx];
        }
    }
    for (auto& v : out.data()) v *= inv;
    record("avg_pool", {x}, out, [x, out, C, H, W, OH, OW, factor, inv]() {
        const T* g = out.grad().data();
        T* gx = x.grad_mut().data();
        for (std::int64_t c = 0; c < C; ++c) {
            for (std::int64_t y = 0; y < H; ++y) {
                for (std::int64_t xx = 0; xx < W; ++xx) gx[(c * H + y) * W + xx] += inv * g[(c * OH + y / factor) * OW + xx / factor];
            }
        }
    });
    return out;
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
    if (x.rank() != 3) throw ShapeError("global_avg_pool needs [C,H,W]");
    const auto C = x.dim(0), plane = x.dim(1) * x.dim(2);
    BasicTensor<T> out(Shape{C, 1, 1});
    const T inv = T{1} / static_cast<T>(plane);
    for (std::int64_t c = 0; c < C; ++c) {
        T acc{0};
        for (std::int64_t i = 0; i < plane; ++i) acc += x.ptr()[c * plane + i];
        out.ptr()[c] = acc * inv;
    }
    record("global_avg_pool", {x}, out, [x, out, C, plane, inv]() {
        const T* g = out.grad().data();
        T* gx = x.grad_mut().data();
        for (std::int64_t c = 0; c < C; ++c) {
            for (std::int64_t i = 0; i < plane; ++i) gx[c * plane + i] += g[c] * inv;
        }
    });
    return out;
}

template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& table, std::span<const int> ids) {
    if (table.rank() != 2) throw ShapeError("gather_rows table must be [K,D]");
    const auto K = table.dim(0), D = table.dim(1);
    const auto N = static_cast<std::int64_t>(ids.size());
    for (int id : ids) {
        if (id < 0 || id >= K) throw DataError("row id " + std::to_string(id) + " out of range for table of " + std::to_string(K));
    }
    BasicTensor<T> out(Shape{N, D});
    for (std::int64_t n = 0; n < N; ++n) std::copy_n(table.ptr() + ids[n] * D, D, out.ptr() + n * D);
    std::vector<int> idv(ids.begin(), ids.end());
    record("gather_rows", {table}, out, [table, out, idv = std::move(idv), D]() {
        const T* g = out.grad().data();
        T* gt = table.grad_mut().data();
        for (std::size_t n = 0; n < idv.size(); ++n) {
            for (std::int64_t d = 0; d < D; ++d) gt[idv[n] * D + d] += g[static_cast<std::int64_t>(n) * D + d];
        }
    });
    return out;
}

template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const int> targets, int ignore_id) {
    if (logits.rank() != 2) throw ShapeError("cross_entropy logits must be [K,N]");
    const auto K = logits.dim(0), N = logits.dim(1);
    if (static_cast<std::int64_t>(targets.size()) != N) throw ShapeError("cross_entropy target count mismatch");
    std::vector<T> prob(static_cast<std::size_t>(K * N));
    const T* pl = logits.ptr();
    T total{0};
    std::int64_t count = 0;
    for (std::int64_t n = 0; n < N; ++n) {
        const int tgt = targets[static_cast<std::size_t>(n)];
        if (tgt == ignore_id) continue;
        if (tgt < 0 || tgt >= K) throw DataError("cross_entropy target " + std::to_string(tgt) + " out of range");
        T mx = -std::numeric_limits<T>::infinity();
        for (std::int64_t k = 0; k < K; ++k) mx = std::max(mx, pl[k * N + n]);
        T z{0};
        for (std::int64_t k = 0; k < K; ++k) {
            const T e = std::exp(pl[k * N + n] - mx);
            prob[static_cast<std::size_t>(k * N + n)] = e;
            z += e;
        }
        for (std::int64_t k = 0; k < K; ++k) prob[static_cast<std::size_t>(k * N + n)] /= z;
        total += std::log(z) + mx - pl[tgt * N + n];
        ++count;
    }
    auto out = BasicTensor<T>::scalar(count > 0 ? total / static_cast<T>(count) : T{0});
    DDSEG_CHECK_FINITE(out, "cross_entropy");
    std::vector<int> tv(targets.begin(), targets.end());
    record("cross_entropy", {logits}, out, [logits, out, prob = std::move(prob), tv = std::move(tv), K, N, count,
                                            ignore_id]() {
        if (count == 0) return;
        const T g = out.grad()[0] / static_cast<T>(count);
        T* gl = logits.grad_mut().data();
        for (std::int64_t n = 0; n < N; ++n) {
            const int tgt = tv[static_cast<std::size_t>(n)];
            if (tgt == ignore_id) continue;
            for (std::int64_t k = 0; k < K; ++k) {
                const T p = prob[static_cast<std::size_t>(k * N + n)];
                gl[k * N + n] += g * (p - (k == tgt ? T{1} : T{0}));
            }
        }
    });
    return out;
}

#define DDSEG_INSTANTIATE(T)                                                                                        \
    template void check_finite<T>(const BasicTensor<T>&, const char*);                                             \
    template BasicTensor<T> add<T>(const BasicTensor<T>&, const BasicTensor<T>&);                                  \
    template BasicTensor<T> sub<T>(const BasicTensor<T>&, const BasicTensor<T>&);                                  \
    template BasicTensor<T> mul<T>(const BasicTensor<T>&, const BasicTensor<T>&);                                  \
    template BasicTensor<T> scale<T>(const BasicTensor<T>&, T);                                                    \
    template BasicTensor<T> add_scalar<T>(const BasicTensor<T>&, T);                                               \
    template BasicTensor<T> sigmoid<T>(const BasicTensor<T>&);                                                     \
    template BasicTensor<T> tanh<T>(const BasicTensor<T>&);                                                        \
    template BasicTensor<T> gelu<T>(const BasicTensor<T>&);                                                        \
    template BasicTensor<T> sum<T>(const BasicTensor<T>&);                                                         \
    template BasicTensor<T> mean<T>(const BasicTensor<T>&);                                                        \
    template BasicTensor<T> matmul<T>(const BasicTensor<T>&, const BasicTensor<T>&);                               \
    template BasicTensor<T> transpose<T>(const BasicTensor<T>&);                                                   \
    template BasicTensor<T> reshape<T>(const BasicTensor<T>&, Shape);                                              \
    template BasicTensor<T> narrow<T>(const BasicTensor<T>&, int, std::int64_t, std::int64_t);                     \
    template BasicTensor<T> concat<T>(const std::vector<BasicTensor<T>>&, int);                                    \
    template BasicTensor<T> softmax<T>(const BasicTensor<T>&, int);                                                \
    template BasicTensor<T> layer_norm<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, int, \
                                          T);                                                                      \
    template BasicTensor<T> conv2d<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, int,    \
                                      int);                                                                        \
    template BasicTensor<T> depthwise_conv2d<T>(const BasicTensor<T>&, const BasicTensor<T>&,                      \
                                                const BasicTensor<T>&, int, int);                                  \
    template BasicTensor<T> bilinear_sample<T>(const BasicTensor<T>&, const BasicTensor<T>&);                      \
    template BasicTensor<T> upsample_nearest<T>(const BasicTensor<T>&, int);                                       \
    template BasicTensor<T> resize_bilinear<T>(const BasicTensor<T>&, std::int64_t, std::int64_t);                 \
    template BasicTensor<T> avg_pool<T>(const BasicTensor<T>&, int);                                               \
    template BasicTensor<T> global_avg_pool<T>(const BasicTensor<T>&);                                             \
    template BasicTensor<T> gather_rows<T>(const BasicTensor<T>&, std::span<const int>);                           \
    template BasicTensor<T> cross_entropy<T>(const BasicTensor<T>&, std::span<const int>, int);

DDSEG_INSTANTIATE(float)
DDSEG_INSTANTIATE(double)

}  // namespace ddseg
