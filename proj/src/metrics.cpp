#include "ddseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ddseg/error.hpp"

namespace ddseg {

EvalReport mean_iou(const std::vector<std::vector<std::uint8_t>>& preds,
                    const std::vector<std::vector<std::uint8_t>>& gts, int classes, int ignore_id,
                    const std::vector<int>& ignore_classes) {
    if (classes < 1) throw UsageError("mean_iou needs at least one class");
    if (preds.size() != gts.size()) {
        throw ShapeError("prediction count " + std::to_string(preds.size()) + " does not match ground truth count " +
                         std::to_string(gts.size()));
    }
    EvalReport r;
    r.classes = classes;
    r.confusion.assign(static_cast<std::size_t>(classes) * classes, 0);
    std::int64_t scored = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].size() != gts[i].size()) throw ShapeError("image " + std::to_string(i) + ": mask sizes differ");
        for (std::size_t j = 0; j < gts[i].size(); ++j) {
            const int g = gts[i][j], p = preds[i][j];
            if (g == ignore_id) continue;
            if (g >= classes) throw DataError("ground truth id " + std::to_string(g) + " >= " + std::to_string(classes));
            if (p >= classes) throw DataError("predicted id " + std::to_string(p) + " >= " + std::to_string(classes));
            ++r.confusion[static_cast<std::size_t>(g) * classes + p];
            ++scored;
        }
    }
    if (scored == 0) throw DataError("every pixel is ignored; mean IoU is undefined");

    r.iou.assign(static_cast<std::size_t>(classes), std::numeric_limits<double>::quiet_NaN());
    r.counted.assign(static_cast<std::size_t>(classes), false);
    double total = 0.0;
    int n = 0;
    for (int c = 0; c < classes; ++c) {
        std::int64_t tp = r.at(c, c), fp = 0, fn = 0;
        for (int o = 0; o < classes; ++o) {
            if (o == c) continue;
            fn += r.at(c, o);
            fp += r.at(o, c);
        }
        if (tp + fp + fn == 0) continue;
        r.iou[static_cast<std::size_t>(c)] = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
        if (std::find(ignore_classes.begin(), ignore_classes.end(), c) != ignore_classes.end()) continue;
        r.counted[static_cast<std::size_t>(c)] = true;
        total += r.iou[static_cast<std::size_t>(c)];
        ++n;
    }
    if (n == 0) throw DataError("no scored class remains after ignoring classes");
    r.mean_iou = total / n;
    return r;
}

RgbdSample low_light(const RgbdSample& s, double gamma) {
    if (!(gamma > 0.0)) throw UsageError("gamma must be positive");
    RgbdSample out = s;
    for (auto& v : out.rgb) v = static_cast<float>(std::pow(static_cast<double>(v), gamma));
    return out;
}

std::vector<std::size_t> invalid_subset(const std::vector<RgbdSample>& samples, double fraction) {
    if (samples.empty()) throw DataError("invalid_subset needs a nonempty dataset");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("subset fraction must be in (0,1]");
    std::vector<double> frac(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) frac[i] = samples[i].invalid_fraction();
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    // the small slack keeps 0.2 * 5 from rounding up to 2
    const double want = fraction * static_cast<double>(samples.size());
    auto keep = static_cast<std::size_t>(std::ceil(want - 1e-9));
    keep = std::clamp<std::size_t>(keep, 1, samples.size());
    order.resize(keep);
    return order;
}

std::vector<std::string> small_objects_config(const std::string& dataset,
                                              const std::optional<std::vector<std::string>>& explicit_list) {
    if (explicit_list) return *explicit_list;
    if (dataset == "nyuv2") return {"wall", "floor", "ceiling", "otherstructure", "otherfurniture", "otherprop"};
    if (dataset == "sunrgbd") return {"wall", "floor", "ceiling"};
    // desk scenes: the structural background plays the role of wall/floor/ceiling
    if (dataset == "synthetic") return {"wall"};
    throw UsageError("no small-objects ignore list for '" + dataset + "'; pass one explicitly");
}

std::vector<int> class_ids(const std::vector<std::string>& classes, const std::vector<std::string>& names) {
    std::vector<int> ids;
    for (const auto& n : names) {
        const auto it = std::find(classes.begin(), classes.end(), n);
        if (it == classes.end()) throw DataError("class '" + n + "' is not in the dataset class list");
        ids.push_back(static_cast<int>(it - classes.begin()));
    }
    return ids;
}

}  // namespace ddseg
