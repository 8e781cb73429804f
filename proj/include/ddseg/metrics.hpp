#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ddseg/data.hpp"

namespace ddseg {

struct EvalReport {
    int classes = 0;
    std::vector<std::int64_t> confusion;  // K x K, row = ground truth, col = prediction
    std::vector<double> iou;              // NaN for classes absent from both
    std::vector<bool> counted;            // present and not ignored
    double mean_iou = 0.0;
    std::vector<double> invalid_fraction;  // per image, when depth was supplied

    std::int64_t at(int gt, int pred) const { return confusion[static_cast<std::size_t>(gt) * classes + pred]; }
};

// One confusion matrix over the whole split. Pixels whose ground truth is
// ignore_id are skipped; classes in ignore_classes are left out of the mean.
EvalReport mean_iou(const std::vector<std::vector<std::uint8_t>>& preds,
                    const std::vector<std::vector<std::uint8_t>>& gts, int classes, int ignore_id = 255,
                    const std::vector<int>& ignore_classes = {});

RgbdSample low_light(const RgbdSample& s, double gamma = 2.0);

// Indices of the ceil(fraction * N) samples with the most invalid depth,
// ordered by invalid fraction (descending) then index.
std::vector<std::size_t> invalid_subset(const std::vector<RgbdSample>& samples, double fraction = 0.2);

// Class names the small-objects protocol ignores.
std::vector<std::string> small_objects_config(const std::string& dataset,
                                              const std::optional<std::vector<std::string>>& explicit_list = {});

// Map names to ids within a class list; unknown names are a DataError.
std::vector<int> class_ids(const std::vector<std::string>& classes, const std::vector<std::string>& names);

}  // namespace ddseg
