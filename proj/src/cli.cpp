#include "ddseg/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "ddseg/metrics.hpp"
#include "ddseg/trainer.hpp"

namespace ddseg {

namespace fs = std::filesystem;

std::array<std::uint8_t, 3> palette_color(int id) {
    static constexpr std::uint8_t table[40][3] = {
        {174, 199, 232}, {152, 223, 138}, {31, 119, 180},  {255, 187, 120}, {188, 189, 34},  {140, 86, 75},
        {255, 152, 150}, {214, 39, 40},   {197, 176, 213}, {148, 103, 189}, {196, 156, 148}, {23, 190, 207},
        {247, 182, 210}, {219, 219, 141}, {255, 127, 14},  {158, 218, 229}, {44, 160, 44},   {112, 128, 144},
        {227, 119, 194}, {82, 84, 163},   {100, 85, 144},  {178, 76, 76},   {66, 188, 102},  {140, 57, 197},
        {202, 185, 52},  {51, 176, 203},  {200, 54, 131},  {92, 193, 61},   {78, 71, 183},   {172, 114, 82},
        {255, 127, 127}, {91, 163, 138},  {153, 98, 156},  {140, 153, 101}, {158, 158, 158}, {84, 109, 168},
        {24, 74, 115},   {229, 208, 110}, {96, 32, 53},    {0, 128, 128},
    };
    if (id == 255 || id < 0) return {0, 0, 0};
    const auto& c = table[id % 40];
    return {c[0], c[1], c[2]};
}

std::vector<std::uint8_t> colorize(const std::vector<std::uint8_t>& labels) {
    std::vector<std::uint8_t> out;
    out.reserve(labels.size() * 3);
    for (auto l : labels) {
        const auto c = palette_color(l);
        out.insert(out.end(), c.begin(), c.end());
    }
    return out;
}

namespace {

std::pair<int, int> parse_size(const std::string& s) {
    int h = 0, w = 0;
    char x = 0;
    std::istringstream in(s);
    if (!(in >> h >> x >> w) || (x != 'x' && x != 'X') || !in.eof()) {
        throw UsageError("size must look like 64x64, got '" + s + "'");
    }
    return {h, w};
}

// A dataset root may hold train/ and test/ splits; otherwise it is the split.
fs::path split_dir(const fs::path& root, const char* split) {
    if (fs::exists(root / split / "manifest.json")) return root / split;
    if (fs::exists(root / "manifest.json")) return root;
    throw DataError("no dataset (manifest.json) under " + root.string());
}

// Predictions live either directly in `dir` or (for a dataset root) in dir/test.
fs::path label_dir(const fs::path& dir) {
    if (!fs::exists(dir / (sample_stem(0) + "_label.pgm")) && fs::exists(dir / "test" / "manifest.json")) {
        return dir / "test";
    }
    return dir;
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
    return Rng::derive(seed, 0x5052, static_cast<std::uint64_t>(index)).next_u64();
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << v;
    return s.str();
}

// ---- synth ----

struct SynthArgs {
    std::string out;
    int count = 200;
    int test_count = 50;
    std::string size = "64x64";
    int classes = 6;
    double invalid_rate = 0.05;
    std::uint64_t seed = 0;
};

void summarize_split(std::ostream& out, const std::string& name, const Dataset& ds) {
    double mean = 0, mx = 0;
    for (const auto& s : ds.samples) {
        const double f = s.invalid_fraction();
        mean += f;
        mx = std::max(mx, f);
    }
    if (!ds.samples.empty()) mean /= static_cast<double>(ds.samples.size());
    out << name << ": " << ds.samples.size() << " samples, invalid depth mean " << fmt(100 * mean, 2) << "%, max "
        << fmt(100 * mx, 2) << "%\n";
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    SceneSpec spec;
    std::tie(spec.height, spec.width) = parse_size(a.size);
    if (spec.height <= 0 || spec.width <= 0) throw UsageError("size must be positive");
    if (a.classes < 2 || a.classes > 255) throw UsageError("--classes must be in [2, 255]");
    if (a.count < 1 || a.test_count < 0) throw UsageError("--count must be >= 1 and --test-count >= 0");
    if (!(a.invalid_rate >= 0.0 && a.invalid_rate < 1.0)) throw UsageError("--invalid-rate must be in [0, 1)");
    spec.classes = a.classes;
    spec.invalid_rate = a.invalid_rate;
    spec.reflective_class = a.classes - 1;
    const auto train = synth_dataset(spec, a.count, a.seed, 0);
    const auto test = synth_dataset(spec, a.test_count, a.seed, 1);
    save_dataset(train, fs::path(a.out) / "train");
    save_dataset(test, fs::path(a.out) / "test");
    summarize_split(out, "train", train);
    summarize_split(out, "test", test);
    return kExitOk;
}

// ---- train ----

struct TrainArgs {
    std::string data;
    std::string out;
    std::string loss_csv;
    std::string schedule = "cosine";
    double scale = 0.01;
    bool no_augment = false;
    TrainConfig cfg;
};

ModelConfig model_config_for(const Dataset& ds, ScheduleKind kind, double scale) {
    ModelConfig mc;
    mc.classes = static_cast<int>(ds.classes.size());
    mc.image_h = ds.height;
    mc.image_w = ds.width;
    mc.schedule.kind = kind;
    mc.scale = scale;
    mc.validate();
    return mc;
}

int cmd_train(TrainArgs a, std::ostream& out) {
    const auto kind = parse_schedule(a.schedule);
    if (!(a.scale > 0.0)) throw UsageError("--scale must be positive");
    a.cfg.augment = !a.no_augment;
    a.cfg.validate();
    const auto train = load_dataset(split_dir(a.data, "train"));
    const auto mc = model_config_for(train, kind, a.scale);
    auto model = ModelWeights<float>::make(mc, a.cfg.seed);
    FitOptions opts;
    opts.checkpoint = a.out;
    opts.loss_csv = a.loss_csv.empty() ? fs::path(a.out + ".loss.csv") : fs::path(a.loss_csv);
    const auto start = std::chrono::steady_clock::now();
    opts.on_epoch = [&](int epoch, double loss) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out << "epoch " << epoch + 1 << "/" << a.cfg.epochs << "  loss " << fmt(loss) << "  (" << fmt(secs, 0)
            << "s)\n"
            << std::flush;
    };
    fit(model, train, a.cfg, opts);
    out << "wrote " << a.out << " and " << opts.loss_csv.string() << "\n";
    return kExitOk;
}

// ---- predict ----

struct PredictArgs {
    std::string ckpt;
    std::string data;
    std::string out;
    std::string viz;
    int steps = 3;
    double td = 1.0;
    std::uint64_t seed = 0;
    bool lowlight = false;
    double gamma = 2.0;
};

// RGB image upscaled by `up` with the deformed sampling points of every
// encoder layer drawn on top, one palette colour per layer.
std::vector<std::uint8_t> point_overlay(const RgbdSample& s, const DeformTrace& trace, int up) {
    const int H = s.height * up, W = s.width * up;
    std::vector<std::uint8_t> img(static_cast<std::size_t>(H) * W * 3);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const std::size_t src = (static_cast<std::size_t>(y / up) * s.width + x / up) * 3;
            for (int c = 0; c < 3; ++c) {
                img[(static_cast<std::size_t>(y) * W + x) * 3 + c] =
                    static_cast<std::uint8_t>(std::lround(std::clamp(s.rgb[src + c], 0.0f, 1.0f) * 255.0f * 0.6f));
            }
        }
    }
    for (std::size_t layer = 0; layer < trace.points.size(); ++layer) {
        const auto colour = palette_color(static_cast<int>(layer) + 1);
        const auto& pts = trace.points[layer];
        for (std::size_t i = 0; i + 1 < pts.size(); i += 2) {
            const int py = static_cast<int>(std::lround((pts[i] + 1.0) / 2.0 * H - 0.5));
            const int px = static_cast<int>(std::lround((pts[i + 1] + 1.0) / 2.0 * W - 0.5));
            for (int d = -1; d <= 1; ++d) {
                for (auto [yy, xx] : {std::pair{py + d, px}, std::pair{py, px + d}}) {
                    if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                    std::copy(colour.begin(), colour.end(), img.begin() + (static_cast<std::ptrdiff_t>(yy) * W + xx) * 3);
                }
            }
        }
    }
    return img;
}

int cmd_predict(const PredictArgs& a, std::ostream& out) {
    if (a.steps < 1) throw UsageError("--steps must be >= 1");
    if (!(a.td >= 0.0)) throw UsageError("--td must be >= 0");
    if (!(a.gamma > 0.0)) throw UsageError("--gamma must be positive");
    const auto model = load_checkpoint(a.ckpt);
    const auto ds = load_dataset(split_dir(a.data, "test"));
    if (ds.height != model.config.image_h || ds.width != model.config.image_w) {
        throw DataError("dataset images are " + std::to_string(ds.height) + "x" + std::to_string(ds.width) +
                        " but the checkpoint expects " + std::to_string(model.config.image_h) + "x" +
                        std::to_string(model.config.image_w));
    }
    if (static_cast<int>(ds.classes.size()) != model.config.classes) {
        throw DataError("dataset has " + std::to_string(ds.classes.size()) + " classes, checkpoint " +
                        std::to_string(model.config.classes));
    }
    std::vector<std::vector<std::uint8_t>> preds;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto s = a.lowlight ? low_light(ds.samples[i], a.gamma) : ds.samples[i];
        const SamplerConfig cfg{a.steps, a.td, sample_seed(a.seed, i)};
        SampleTrace trace;
        preds.push_back(predict_sample(model, s, cfg, a.viz.empty() ? nullptr : &trace));
        if (!a.viz.empty()) {
            fs::create_directories(a.viz);
            const auto stem = sample_stem(i);
            write_ppm(fs::path(a.viz) / (stem + "_pred.ppm"), s.width, s.height, colorize(preds.back()));
            write_ppm(fs::path(a.viz) / (stem + "_gt.ppm"), s.width, s.height, colorize(s.label));
            write_ppm(fs::path(a.viz) / (stem + "_points.ppm"), s.width * 4, s.height * 4,
                      point_overlay(s, trace.cond.rgb, 4));
        }
    }
    save_labels(preds, ds.width, ds.height, a.out);
    out << "wrote " << preds.size() << " predictions to " << a.out << "\n";
    return kExitOk;
}

// ---- eval ----

struct EvalArgs {
    std::string pred;
    std::string gt;
    std::string subset = "none";
    double fraction = 0.2;
    std::string dataset_name = "synthetic";
    std::vector<std::string> ignore_classes;
    std::string csv = "eval.csv";
};

void print_report(std::ostream& out, const EvalReport& r, const std::vector<std::string>& names) {
    std::size_t width = 10;
    for (const auto& n : names) width = std::max(width, n.size() + 2);
    out << std::left << std::setw(static_cast<int>(width)) << "class" << "IoU\n";
    for (int c = 0; c < r.classes; ++c) {
        const auto& name = static_cast<std::size_t>(c) < names.size() ? names[c] : std::to_string(c);
        out << std::left << std::setw(static_cast<int>(width)) << name;
        const double v = r.iou[static_cast<std::size_t>(c)];
        if (std::isnan(v)) {
            out << "-";
        } else {
            out << fmt(v) << (r.counted[static_cast<std::size_t>(c)] ? "" : "  (ignored)");
        }
        out << "\n";
    }
    out << std::left << std::setw(static_cast<int>(width)) << "meanIoU" << fmt(r.mean_iou) << "\n";
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    if (a.subset != "none" && a.subset != "invalid" && a.subset != "lowlight" && a.subset != "small") {
        throw UsageError("--subset must be none, invalid, lowlight or small");
    }
    if (!(a.fraction > 0.0 && a.fraction <= 1.0)) throw UsageError("--fraction must be in (0, 1]");
    const auto gt = load_dataset(split_dir(a.gt, "test"));
    int w = 0, h = 0;
    auto preds = load_labels(label_dir(a.pred), w, h);
    if (preds.size() != gt.samples.size()) {
        throw DataError(std::to_string(preds.size()) + " predictions for " + std::to_string(gt.samples.size()) +
                        " ground-truth samples");
    }
    if (w != gt.width || h != gt.height) throw DataError("prediction size differs from the ground truth");
    std::vector<std::vector<std::uint8_t>> p, g;
    std::vector<std::size_t> picked(gt.samples.size());
    for (std::size_t i = 0; i < picked.size(); ++i) picked[i] = i;
    std::vector<int> ignore;
    if (a.subset == "invalid") {
        picked = invalid_subset(gt.samples, a.fraction);
    } else if (a.subset == "small") {
        std::optional<std::vector<std::string>> list;
        if (!a.ignore_classes.empty()) list = a.ignore_classes;
        ignore = class_ids(gt.classes, small_objects_config(a.dataset_name, list));
    } else if (!a.ignore_classes.empty()) {
        ignore = class_ids(gt.classes, a.ignore_classes);
    }
    // lowlight: scoring is unchanged; the darkening happens in `predict --lowlight`
    for (auto i : picked) {
        p.push_back(preds[i]);
        g.push_back(gt.samples[i].label);
    }
    auto report = mean_iou(p, g, static_cast<int>(gt.classes.size()), kIgnoreLabel, ignore);
    for (auto i : picked) report.invalid_fraction.push_back(gt.samples[i].invalid_fraction());

    out << "subset: " << a.subset << " (" << picked.size() << " images)\n";
    print_report(out, report, gt.classes);
    std::ofstream csv(a.csv);
    if (!csv) throw DataError("cannot write " + a.csv);
    csv << "subset,class,iou,counted\n";
    for (int c = 0; c < report.classes; ++c) {
        const double v = report.iou[static_cast<std::size_t>(c)];
        csv << a.subset << "," << gt.classes[static_cast<std::size_t>(c)] << "," << (std::isnan(v) ? "" : fmt(v, 6))
            << "," << (report.counted[static_cast<std::size_t>(c)] ? 1 : 0) << "\n";
    }
    csv << a.subset << ",meanIoU," << fmt(report.mean_iou, 6) << ",1\n";
    return kExitOk;
}

// ---- ablate ----

struct AblateArgs {
    std::string data;
    std::string csv = "ablation.csv";
    std::string work;
    std::vector<std::string> schedules{"cosine", "linear"};
    std::vector<double> scales{0.001, 0.01, 0.03, 0.05, 0.1};
    bool grid = false;
    int train_limit = 0;
    int test_limit = 0;
    int steps = 3;
    double td = 1.0;
    TrainConfig cfg;
};

int cmd_ablate(AblateArgs a, std::ostream& out) {
    for (const auto& s : a.schedules) parse_schedule(s);
    for (double s : a.scales) {
        if (!(s > 0.0)) throw UsageError("--scales must be positive");
    }
    if (a.train_limit < 0 || a.test_limit < 0) throw UsageError("limits must be >= 0");
    if (a.steps < 1 || !(a.td >= 0.0)) throw UsageError("--steps must be >= 1 and --td >= 0");
    a.cfg.validate();
    auto train = load_dataset(split_dir(a.data, "train"));
    auto test = load_dataset(split_dir(a.data, "test"));
    if (a.train_limit > 0 && static_cast<std::size_t>(a.train_limit) < train.samples.size()) train.samples.resize(a.train_limit);
    if (a.test_limit > 0 && static_cast<std::size_t>(a.test_limit) < test.samples.size()) test.samples.resize(a.test_limit);
    if (test.samples.empty()) throw DataError("ablation needs a nonempty test split");

    // Paper-style: vary one axis at a time around the default (cosine, 0.01);
    // --grid runs the full cross product instead.
    struct Run {
        std::string axis, schedule;
        double scale;
    };
    std::vector<Run> runs;
    if (a.grid) {
        for (const auto& s : a.schedules)
            for (double v : a.scales) runs.push_back({"grid", s, v});
    } else {
        for (const auto& s : a.schedules) runs.push_back({"schedule", s, 0.01});
        for (double v : a.scales) runs.push_back({"scale", "cosine", v});
    }
    std::ofstream csv(a.csv);
    if (!csv) throw DataError("cannot write " + a.csv);
    csv << "axis,schedule,scale,epochs,final_loss,mean_iou\n";
    for (const auto& r : runs) {
        const auto mc = model_config_for(train, parse_schedule(r.schedule), r.scale);
        auto model = ModelWeights<float>::make(mc, a.cfg.seed);
        FitOptions opts;
        if (!a.work.empty()) {
            fs::create_directories(a.work);
            opts.checkpoint = fs::path(a.work) / (r.axis + "_" + r.schedule + "_" + fmt(r.scale, 3) + ".ckpt");
        }
        const auto hist = fit(model, train, a.cfg, opts);
        std::vector<std::vector<std::uint8_t>> p, g;
        for (std::size_t i = 0; i < test.samples.size(); ++i) {
            p.push_back(predict_sample(model, test.samples[i], SamplerConfig{a.steps, a.td, sample_seed(a.cfg.seed, i)}));
            g.push_back(test.samples[i].label);
        }
        const auto rep = mean_iou(p, g, mc.classes);
        csv << r.axis << "," << r.schedule << "," << r.scale << "," << a.cfg.epochs << "," << fmt(hist.back(), 6) << ","
            << fmt(rep.mean_iou, 6) << "\n"
            << std::flush;
        out << std::left << std::setw(9) << r.axis << std::setw(8) << r.schedule << " s=" << std::setw(6) << r.scale
            << " loss " << fmt(hist.back()) << "  mIoU " << fmt(rep.mean_iou) << "\n"
            << std::flush;
    }
    out << "wrote " << a.csv << " (" << runs.size() << " rows)\n";
    return kExitOk;
}

void add_train_options(CLI::App* cmd, TrainConfig& c) {
    cmd->add_option("--epochs", c.epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--batch", c.batch, "Batch size")->capture_default_str();
    cmd->add_option("--lr", c.lr, "Peak learning rate")->capture_default_str();
    cmd->add_option("--weight-decay", c.weight_decay, "AdamW decoupled weight decay")->capture_default_str();
    cmd->add_option("--warmup", c.warmup, "Warmup fraction of all steps")->capture_default_str();
    cmd->add_option("--clip", c.clip, "Global gradient-norm clip (0 disables)")->capture_default_str();
    cmd->add_option("--seed", c.seed, "Seed for weights, augmentation and noise")->capture_default_str();
    cmd->add_option("--checkpoint-every", c.checkpoint_every, "Also checkpoint every N epochs")->capture_default_str();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Diffusion-based RGB-D semantic segmentation at desk scale"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Generate a synthetic RGB-D dataset (train/ and test/ splits)");
    c_synth->add_option("--out", synth.out, "Output directory")->required();
    c_synth->add_option("--count", synth.count, "Training samples")->capture_default_str();
    c_synth->add_option("--test-count", synth.test_count, "Test samples")->capture_default_str();
    c_synth->add_option("--size", synth.size, "Image size HxW")->capture_default_str();
    c_synth->add_option("--classes", synth.classes, "Class count including the background")->capture_default_str();
    c_synth->add_option("--invalid-rate", synth.invalid_rate, "Expected fraction of random invalid depth")
        ->capture_default_str();
    c_synth->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();

    TrainArgs train;
    auto* c_train = app.add_subcommand("train", "Train a model");
    c_train->add_option("--data", train.data, "Dataset root (uses train/ if present)")->required();
    c_train->add_option("--out", train.out, "Checkpoint path")->required();
    c_train->add_option("--loss-csv", train.loss_csv, "Loss log (default: <out>.loss.csv)");
    c_train->add_option("--schedule", train.schedule, "Noise schedule: cosine or linear")->capture_default_str();
    c_train->add_option("--scale", train.scale, "Label encoding scale s")->capture_default_str();
    c_train->add_flag("--no-augment", train.no_augment, "Disable resize/crop/flip augmentation");
    add_train_options(c_train, train.cfg);

    PredictArgs pred;
    auto* c_pred = app.add_subcommand("predict", "Sample segmentation masks");
    c_pred->add_option("--ckpt", pred.ckpt, "Checkpoint")->required();
    c_pred->add_option("--data", pred.data, "Dataset root (uses test/ if present)")->required();
    c_pred->add_option("--out", pred.out, "Directory for NNNN_label.pgm predictions")->required();
    c_pred->add_option("--steps", pred.steps, "Sampling steps")->capture_default_str();
    c_pred->add_option("--td", pred.td, "Time difference between steps")->capture_default_str();
    c_pred->add_option("--seed", pred.seed, "Sampling seed")->capture_default_str();
    c_pred->add_option("--viz", pred.viz, "Write colour masks and sampling-point overlays here");
    c_pred->add_flag("--lowlight", pred.lowlight, "Darken RGB inputs with I^gamma before predicting");
    c_pred->add_option("--gamma", pred.gamma, "Gamma for --lowlight")->capture_default_str();

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Score predictions with mean IoU");
    c_eval->add_option("--pred", ev.pred, "Prediction directory")->required();
    c_eval->add_option("--gt", ev.gt, "Ground-truth dataset root (uses test/ if present)")->required();
    c_eval->add_option("--subset", ev.subset, "none, invalid, lowlight or small")->capture_default_str();
    c_eval->add_option("--fraction", ev.fraction, "Fraction kept by the invalid subset")->capture_default_str();
    c_eval->add_option("--dataset-name", ev.dataset_name, "nyuv2, sunrgbd or synthetic (small-objects lists)")
        ->capture_default_str();
    c_eval->add_option("--ignore-classes", ev.ignore_classes, "Class names left out of the mean")->delimiter(',');
    c_eval->add_option("--csv", ev.csv, "CSV report path")->capture_default_str();

    AblateArgs ab;
    auto* c_ab = app.add_subcommand("ablate", "Sweep noise schedule and label scale");
    c_ab->add_option("--data", ab.data, "Dataset root with train/ and test/")->required();
    c_ab->add_option("--csv", ab.csv, "Output CSV")->capture_default_str();
    c_ab->add_option("--work", ab.work, "Keep per-run checkpoints here");
    c_ab->add_option("--schedules", ab.schedules, "Schedules to sweep")->delimiter(',')->capture_default_str();
    c_ab->add_option("--scales", ab.scales, "Scales to sweep")->delimiter(',')->capture_default_str();
    c_ab->add_flag("--grid", ab.grid, "Run the full schedule x scale grid");
    c_ab->add_option("--train-limit", ab.train_limit, "Use only the first N training samples (0 = all)");
    c_ab->add_option("--test-limit", ab.test_limit, "Use only the first N test samples (0 = all)");
    c_ab->add_option("--steps", ab.steps, "Sampling steps")->capture_default_str();
    c_ab->add_option("--td", ab.td, "Time difference between steps")->capture_default_str();
    add_train_options(c_ab, ab.cfg);

    for (auto* c : {c_synth, c_train, c_pred, c_eval, c_ab}) {
        c->set_config("--config", "", "Read options from a key=value file (flags take precedence)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*c_synth) return cmd_synth(synth, out);
        if (*c_train) return cmd_train(train, out);
        if (*c_pred) return cmd_predict(pred, out);
        if (*c_eval) return cmd_eval(ev, out);
        if (*c_ab) return cmd_ablate(ab, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const ShapeError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace ddseg
