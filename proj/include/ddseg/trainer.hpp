#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ddseg/model.hpp"

namespace ddseg {

struct TrainConfig {
    double lr = 6e-5;
    double weight_decay = 0.01;
    int epochs = 40;
    int batch = 4;
    double warmup = 0.1;  // fraction of all steps
    double power = 1.0;
    double clip = 1.0;    // global gradient norm; <= 0 disables
    std::uint64_t seed = 0;
    bool augment = true;
    double max_resize = 1.25;
    double flip_prob = 0.5;
    int checkpoint_every = 0;  // epochs; 0 = only at the end

    void validate() const;  // throws UsageError
};

// Warmup to lr over the first `warmup` fraction, then polynomial decay to 0.
double lr_at(std::int64_t step, std::int64_t total, const TrainConfig& cfg);

struct AdamW {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t steps = 0;
    std::vector<std::vector<float>> m, v;

    // Decoupled decay: w <- w - lr * (mhat / (sqrt(vhat) + eps) + wd * w).
    // Parameters without a gradient are treated as having a zero gradient.
    void step(const std::vector<Tensor*>& params, double lr, double wd);
};

std::vector<Tensor*> parameters(ModelWeights<float>& model);

// Scales all gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(const std::vector<Tensor*>& params, double max_norm);

struct AugmentParams {
    double scale = 1.0;  // resize factor >= 1
    int offset_y = 0;    // crop origin in the resized image
    int offset_x = 0;
    bool flip = false;   // horizontal, after the crop
};

AugmentParams draw_augment(int height, int width, const TrainConfig& cfg, Rng& rng);

// Resize (rgb bilinear, depth/label nearest) then crop back to the original
// size, then optionally flip. Every channel follows the same pixel map.
RgbdSample apply_augment(const RgbdSample& s, const AugmentParams& p);

RgbdSample augment(const RgbdSample& s, const TrainConfig& cfg, Rng& rng);

// Diffusion loss for one sample; records on the active tape.
Tensor sample_loss(const ModelWeights<float>& model, const RgbdSample& s, Rng& rng);

// One optimizer step over the batch. `rngs[i]` draws t and the noise for
// batch[i]. Returns the mean loss; throws NumericError on a non-finite loss.
double train_step(ModelWeights<float>& model, const std::vector<RgbdSample>& batch, std::vector<Rng>& rngs,
                  AdamW& opt, double lr, const TrainConfig& cfg);

struct FitOptions {
    std::filesystem::path loss_csv;    // empty = no log
    std::filesystem::path checkpoint;  // empty = no checkpoint
    std::function<void(int epoch, double mean_loss)> on_epoch;
};

// Returns the mean loss per epoch.
std::vector<double> fit(ModelWeights<float>& model, const Dataset& train, const TrainConfig& cfg,
                        const FitOptions& opts = {});

}  // namespace ddseg
