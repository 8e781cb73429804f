#include "ddseg/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ddseg {

ScheduleKind parse_schedule(const std::string& name) {
    if (name == "cosine") return ScheduleKind::cosine;
    if (name == "linear") return ScheduleKind::linear;
    throw UsageError("unknown noise schedule '" + name + "' (expected cosine or linear)");
}

std::string schedule_name(ScheduleKind kind) { return kind == ScheduleKind::cosine ? "cosine" : "linear"; }

double log_snr(double t, const NoiseSchedule& sched) {
    const double c = std::cos((t + sched.ns) / (1.0 + sched.ds) * std::numbers::pi / 2.0);
    const double n = 1.0 / (c * c);
    return -std::log(std::max(n - 1.0, sched.log_floor));
}

namespace {

double logistic(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// log of prod_{i<=k} (1 - beta_i), interpolated linearly in k
double linear_log_alpha_bar(double t, const NoiseSchedule& sched) {
    const int n = std::max(sched.steps, 2);
    const double u = std::clamp(t, 0.0, 1.0) * (n - 1);
    const int lo = std::min(static_cast<int>(std::floor(u)), n - 2);
    double acc = 0.0, at_lo = 0.0, at_hi = 0.0;
    for (int i = 0; i <= lo + 1; ++i) {
        const double beta = sched.beta_start + (sched.beta_end - sched.beta_start) * i / (n - 1);
        acc += std::log1p(-beta);
        if (i == lo) at_lo = acc;
        if (i == lo + 1) at_hi = acc;
    }
    const double frac = u - lo;
    return at_lo + (at_hi - at_lo) * frac;
}

}  // namespace

double alpha_bar(double t, const NoiseSchedule& sched) {
    if (sched.kind == ScheduleKind::cosine) return logistic(log_snr(t, sched));
    return std::exp(linear_log_alpha_bar(t, sched));
}

template <typename T>
LabelCodebook<T> LabelCodebook<T>::make(int classes, int dim, double scale, Rng& rng) {
    if (classes < 1 || dim < 1) throw ShapeError("codebook needs at least one class and one dimension");
    LabelCodebook b;
    b.table = BasicTensor<T>({classes, dim});
    for (auto& v : b.table.data()) v = static_cast<T>(rng.normal());
    b.scale = scale;
    return b;
}

template <typename T>
BasicTensor<T> encode_labels(std::span<const int> ids, std::int64_t h, std::int64_t w, const LabelCodebook<T>& book) {
    if (static_cast<std::int64_t>(ids.size()) != h * w) {
        throw ShapeError("label count " + std::to_string(ids.size()) + " does not match " + std::to_string(h) + "x" +
                         std::to_string(w));
    }
    std::vector<int> rows(ids.begin(), ids.end());
    for (int& id : rows) {
        if (id == kIgnoreLabel) {
            id = 0;
        } else if (id < 0 || id >= book.classes()) {
            throw DataError("label id " + std::to_string(id) + " outside [0, " + std::to_string(book.classes()) + ")");
        }
    }
    auto e = sigmoid(gather_rows(book.table, std::span<const int>(rows)));   // [N, D]
    e = scale(add_scalar(scale(e, T{2}), T{-1}), static_cast<T>(book.scale));
    return reshape(transpose(e), {book.dim(), h, w});
}

template <typename T>
BasicTensor<T> corrupt(const BasicTensor<T>& y_enc, double t, const BasicTensor<T>& eps, const NoiseSchedule& sched) {
    if (y_enc.shape() != eps.shape()) {
        throw ShapeError("corrupt: noise " + shape_str(eps.shape()) + " does not match " + shape_str(y_enc.shape()));
    }
    const double a = alpha_bar(t, sched);
    return add(scale(y_enc, static_cast<T>(std::sqrt(a))), scale(eps, static_cast<T>(std::sqrt(1.0 - a))));
}

template <typename T>
BasicTensor<T> ddim_step(const BasicTensor<T>& mask_t, std::span<const int> pred, double t_now, double t_next,
                         const LabelCodebook<T>& book, const NoiseSchedule& sched) {
    if (mask_t.rank() != 3) throw ShapeError("ddim_step: mask must be [D,H,W], got " + shape_str(mask_t.shape()));
    if (t_next > t_now) throw UsageError("ddim_step: t_next must not exceed t_now");
    const auto enc = encode_labels(pred, mask_t.dim(1), mask_t.dim(2), book);
    if (enc.shape() != mask_t.shape()) throw ShapeError("ddim_step: codebook dim does not match mask channels");
    const double a_now = alpha_bar(t_now, sched), a_next = alpha_bar(t_next, sched);
    const double noise_now = std::sqrt(std::max(1.0 - a_now, 1e-12));
    const double sa_now = std::sqrt(a_now), sa_next = std::sqrt(a_next), noise_next = std::sqrt(1.0 - a_next);
    BasicTensor<T> out(mask_t.shape());
    const auto m = mask_t.data();
    const auto e = enc.data();
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double eps = (m[i] - sa_now * e[i]) / noise_now;
        o[i] = static_cast<T>(sa_next * e[i] + noise_next * eps);
    }
    return out;
}

std::vector<std::pair<double, double>> sampler_times(const SamplerConfig& cfg) {
    if (cfg.steps < 1) throw UsageError("sampler steps must be >= 1");
    if (cfg.td < 0) throw UsageError("sampler td must be >= 0");
    std::vector<std::pair<double, double>> out;
    for (int step = 0; step < cfg.steps; ++step) {
        const double now = 1.0 - static_cast<double>(step) / cfg.steps;
        const double next = std::max(1.0 - (step + 1 + cfg.td) / cfg.steps, 0.0);
        out.emplace_back(now, next);
    }
    return out;
}

#define DDSEG_INSTANTIATE(T)                                                                                        \
    template struct LabelCodebook<T>;                                                                              \
    template BasicTensor<T> encode_labels<T>(std::span<const int>, std::int64_t, std::int64_t,                    \
                                             const LabelCodebook<T>&);                                             \
    template BasicTensor<T> corrupt<T>(const BasicTensor<T>&, double, const BasicTensor<T>&, const NoiseSchedule&); \
    template BasicTensor<T> ddim_step<T>(const BasicTensor<T>&, std::span<const int>, double, double,             \
                                         const LabelCodebook<T>&, const NoiseSchedule&);

DDSEG_INSTANTIATE(float)
DDSEG_INSTANTIATE(double)

}  // namespace ddseg
