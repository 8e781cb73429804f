#include "ddseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace ddseg {

void TrainConfig::validate() const {
    if (!(lr >= 0.0)) throw UsageError("learning rate must be >= 0");
    if (!(weight_decay >= 0.0)) throw UsageError("weight decay must be >= 0");
    if (epochs < 1) throw UsageError("epochs must be >= 1");
    if (batch < 1) throw UsageError("batch size must be >= 1");
    if (!(warmup >= 0.0 && warmup < 1.0)) throw UsageError("warmup fraction must be in [0,1)");
    if (!(power > 0.0)) throw UsageError("decay power must be positive");
    if (!(max_resize >= 1.0)) throw UsageError("max resize must be >= 1");
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw UsageError("flip probability must be in [0,1]");
}

double lr_at(std::int64_t step, std::int64_t total, const TrainConfig& cfg) {
    if (total <= 0) return 0.0;
    step = std::clamp<std::int64_t>(step, 0, total);
    const double warm = cfg.warmup * static_cast<double>(total);
    if (step < warm) return cfg.lr * static_cast<double>(step) / warm;
    const double span = static_cast<double>(total) - warm;
    if (span <= 0.0) return 0.0;
    const double progress = (static_cast<double>(step) - warm) / span;
    return cfg.lr * std::pow(std::max(0.0, 1.0 - progress), cfg.power);
}

void AdamW::step(const std::vector<Tensor*>& params, double lr, double wd) {
    if (m.empty()) {
        for (auto* p : params) {
            m.emplace_back(static_cast<std::size_t>(p->numel()), 0.0f);
            v.emplace_back(static_cast<std::size_t>(p->numel()), 0.0f);
        }
    }
    if (m.size() != params.size()) throw ShapeError("optimizer state does not match the parameter list");
    ++steps;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto w = params[k]->data();
        const bool has = params[k]->has_grad();
        auto& mk = m[k];
        auto& vk = v[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double g = has ? params[k]->grad()[i] : 0.0;
            const double mi = beta1 * mk[i] + (1.0 - beta1) * g;
            const double vi = beta2 * vk[i] + (1.0 - beta2) * g * g;
            mk[i] = static_cast<float>(mi);
            vk[i] = static_cast<float>(vi);
            const double update = (mi / c1) / (std::sqrt(vi / c2) + eps) + wd * w[i];
            w[i] = static_cast<float>(w[i] - lr * update);
        }
    }
}

std::vector<Tensor*> parameters(ModelWeights<float>& model) {
    std::vector<Tensor*> out;
    model.visit([&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

double clip_grad_norm(const std::vector<Tensor*>& params, double max_norm) {
    double sq = 0.0;
    for (auto* p : params) {
        if (!p->has_grad()) continue;
        for (float g : p->grad()) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const auto f = static_cast<float>(max_norm / (norm + 1e-12));
        for (auto* p : params) {
            if (!p->has_grad()) continue;
            for (auto& g : p->grad_mut()) g *= f;
        }
    }
    return norm;
}

AugmentParams draw_augment(int height, int width, const TrainConfig& cfg, Rng& rng) {
    AugmentParams p;
    p.scale = rng.uniform(1.0, cfg.max_resize);
    const int rh = static_cast<int>(std::lround(height * p.scale)), rw = static_cast<int>(std::lround(width * p.scale));
    p.offset_y = rng.uniform_int(0, rh - height);
    p.offset_x = rng.uniform_int(0, rw - width);
    p.flip = rng.bernoulli(cfg.flip_prob);
    return p;
}

RgbdSample apply_augment(const RgbdSample& s, const AugmentParams& p) {
    s.validate();
    const int H = s.height, W = s.width;
    if (!(p.scale >= 1.0)) throw UsageError("augment resize factor must be >= 1 (the crop keeps the input size)");
    const int rh = static_cast<int>(std::lround(H * p.scale)), rw = static_cast<int>(std::lround(W * p.scale));
    if (p.offset_y < 0 || p.offset_x < 0 || p.offset_y + H > rh || p.offset_x + W > rw) {
        throw UsageError("crop window exceeds the resized image");
    }
    const double sy = static_cast<double>(H) / rh, sx = static_cast<double>(W) / rw;
    RgbdSample out;
    out.height = H;
    out.width = W;
    out.rgb.resize(s.rgb.size());
    out.depth.resize(s.depth.size());
    out.label.resize(s.label.size());
    for (int y = 0; y < H; ++y) {
        // half-pixel centres: resized pixel j maps to source (j + 0.5) * s - 0.5
        const double fy = (y + p.offset_y + 0.5) * sy - 0.5;
        const int ny = std::clamp(static_cast<int>(std::floor(fy + 0.5)), 0, H - 1);
        const double cy = std::clamp(fy, 0.0, H - 1.0);
        const int y0 = static_cast<int>(std::floor(cy)), y1 = std::min(y0 + 1, H - 1);
        const double wy = cy - y0;
        for (int x = 0; x < W; ++x) {
            const int ox = p.flip ? W - 1 - x : x;
            const double fx = (ox + p.offset_x + 0.5) * sx - 0.5;
            const int nx = std::clamp(static_cast<int>(std::floor(fx + 0.5)), 0, W - 1);
            const double cx = std::clamp(fx, 0.0, W - 1.0);
            const int x0 = static_cast<int>(std::floor(cx)), x1 = std::min(x0 + 1, W - 1);
            const double wx = cx - x0;
            const std::size_t o = static_cast<std::size_t>(y) * W + x;
            const std::size_t n = static_cast<std::size_t>(ny) * W + nx;
            out.depth[o] = s.depth[n];
            out.label[o] = s.label[n];
            for (int c = 0; c < 3; ++c) {
                auto at = [&](int yy, int xx) { return static_cast<double>(s.rgb[(static_cast<std::size_t>(yy) * W + xx) * 3 + c]); };
                const double v = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
                                 wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
                out.rgb[o * 3 + c] = static_cast<float>(v);
            }
        }
    }
    return out;
}

RgbdSample augment(const RgbdSample& s, const TrainConfig& cfg, Rng& rng) {
    return apply_augment(s, draw_augment(s.height, s.width, cfg, rng));
}

Tensor sample_loss(const ModelWeights<float>& model, const RgbdSample& s, Rng& rng) {
    const auto& cfg = model.config;
    const int h = s.height, w = s.width;
    const double t = rng.uniform();
    Tensor eps(Shape{cfg.embed_dim, h / 4, w / 4});
    for (auto& v : eps.data()) v = static_cast<float>(rng.normal());

    const auto labels = to_ids(s.label);
    const auto small = downsample_labels(labels, h, w, 4);
    const auto cond = full_condition(prepare_rgb<float>(s), prepare_depth<float>(s), model.cond);
    const auto y_t = corrupt(encode_labels(small, h / 4, w / 4, model.codebook), t, eps, cfg.schedule);
    const auto logits = decode(y_t, cond, t, model.decoder);
    return cross_entropy(reshape(logits, {cfg.classes, static_cast<std::int64_t>(h) * w}), labels, kIgnoreLabel);
}

double train_step(ModelWeights<float>& model, const std::vector<RgbdSample>& batch, std::vector<Rng>& rngs,
                  AdamW& opt, double lr, const TrainConfig& cfg) {
    if (batch.empty() || rngs.size() != batch.size()) throw UsageError("train_step needs one rng per batch item");
    const auto params = parameters(model);
    for (auto* p : params) {
        p->set_requires_grad(true);
        p->zero_grad();
    }
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Tape tape;
        TapeScope scope(tape);
        const auto loss = scale(sample_loss(model, batch[i], rngs[i]), 1.0f / static_cast<float>(batch.size()));
        const double v = loss.item();
        if (!std::isfinite(v)) throw NumericError("non-finite loss (" + std::to_string(v) + ") at optimizer step " + std::to_string(opt.steps + 1));
        tape.backward(loss);
        total += v;
    }
    const double norm = clip_grad_norm(params, cfg.clip);
    if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm at optimizer step " + std::to_string(opt.steps + 1));
    opt.step(params, lr, cfg.weight_decay);
    return total;
}

std::vector<double> fit(ModelWeights<float>& model, const Dataset& train, const TrainConfig& cfg,
                        const FitOptions& opts) {
    cfg.validate();
    if (train.samples.empty()) throw DataError("training set is empty");
    for (const auto& s : train.samples) {
        if (s.height != model.config.image_h || s.width != model.config.image_w) {
            throw DataError("training sample size " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                            " does not match the model's " + std::to_string(model.config.image_h) + "x" +
                            std::to_string(model.config.image_w));
        }
    }
    const auto n = static_cast<std::int64_t>(train.samples.size());
    const std::int64_t per_epoch = (n + cfg.batch - 1) / cfg.batch;
    const std::int64_t total = per_epoch * cfg.epochs;

    std::ofstream csv;
    if (!opts.loss_csv.empty()) {
        csv.open(opts.loss_csv);
        if (!csv) throw DataError("cannot write " + opts.loss_csv.string());
        csv << "epoch,step,loss,lr\n";
    }
    AdamW opt;
    std::vector<double> history;
    std::int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle = Rng::derive(cfg.seed, 0x5348, static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<int>(i) - 1))]);
        }
        double epoch_loss = 0.0;
        for (std::int64_t b = 0; b < per_epoch; ++b) {
            std::vector<RgbdSample> batch;
            std::vector<Rng> rngs;
            for (std::int64_t k = b * cfg.batch; k < std::min(n, (b + 1) * cfg.batch); ++k) {
                const auto idx = order[static_cast<std::size_t>(k)];
                // keyed by (epoch, sample) so results do not depend on batching order
                const auto key = static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(n) + idx;
                Rng aug = Rng::derive(cfg.seed, 0x4155, key);
                batch.push_back(cfg.augment ? augment(train.samples[idx], cfg, aug) : train.samples[idx]);
                rngs.push_back(Rng::derive(cfg.seed, 0x4e4f, key));
            }
            const double lr = lr_at(step + 1, total, cfg);
            const double loss = train_step(model, batch, rngs, opt, lr, cfg);
            ++step;
            epoch_loss += loss;
            if (csv) {
                char line[128];
                std::snprintf(line, sizeof line, "%d,%lld,%.9g,%.9g\n", epoch, static_cast<long long>(step), loss, lr);
                csv << line;
            }
        }
        epoch_loss /= static_cast<double>(per_epoch);
        history.push_back(epoch_loss);
        if (csv) csv.flush();
        if (opts.on_epoch) opts.on_epoch(epoch, epoch_loss);
        if (!opts.checkpoint.empty() && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
            save_checkpoint(opts.checkpoint, model);
        }
    }
    for (auto* p : parameters(model)) {
        p->clear_grad();
        p->set_requires_grad(false);
    }
    if (!opts.checkpoint.empty()) save_checkpoint(opts.checkpoint, model);
    return history;
}

}  // namespace ddseg
