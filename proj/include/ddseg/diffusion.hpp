#pragma once

#include <span>
#include <string>
#include <vector>

#include "ddseg/ops.hpp"
#include "ddseg/rng.hpp"

namespace ddseg {

enum class ScheduleKind { cosine, linear };

ScheduleKind parse_schedule(const std::string& name);
std::string schedule_name(ScheduleKind kind);

struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::cosine;
    // cosine
    double ns = 0.0002;
    double ds = 0.00025;
    double log_floor = 1e-5;
    // linear: beta ramps over `steps` virtual timesteps
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int steps = 1000;
};

// Log signal-to-noise ratio of the cosine schedule.
double log_snr(double t, const NoiseSchedule& sched);

// Fraction of signal variance kept at t in [0, 1].
double alpha_bar(double t, const NoiseSchedule& sched);

inline constexpr int kIgnoreLabel = 255;

// Learnable class embedding; encodings live in [-scale, scale].
template <typename T>
struct LabelCodebook {
    BasicTensor<T> table;  // [K, D]
    double scale = 0.01;

    static LabelCodebook make(int classes, int dim, double scale, Rng& rng);
    int classes() const { return static_cast<int>(table.dim(0)); }
    int dim() const { return static_cast<int>(table.dim(1)); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".table", table);
    }
};

// ids: h*w class ids (kIgnoreLabel allowed, encoded as class 0). Returns [D, h, w].
template <typename T>
BasicTensor<T> encode_labels(std::span<const int> ids, std::int64_t h, std::int64_t w, const LabelCodebook<T>& book);

// sqrt(abar) * y + sqrt(1 - abar) * eps
template <typename T>
BasicTensor<T> corrupt(const BasicTensor<T>& y_enc, double t, const BasicTensor<T>& eps, const NoiseSchedule& sched);

// One deterministic DDIM move from t_now to t_next given predicted class ids
// at the mask resolution. The noise term uses sqrt(1 - abar_next).
template <typename T>
BasicTensor<T> ddim_step(const BasicTensor<T>& mask_t, std::span<const int> pred, double t_now, double t_next,
                         const LabelCodebook<T>& book, const NoiseSchedule& sched);

struct SamplerConfig {
    int steps = 3;
    double td = 1.0;
    std::uint64_t seed = 0;
};

// (t_now, t_next) pairs visited by the sampler.
std::vector<std::pair<double, double>> sampler_times(const SamplerConfig& cfg);

}  // namespace ddseg
