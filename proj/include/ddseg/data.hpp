#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ddseg/rng.hpp"

namespace ddseg {

// rgb is HWC in [0,1]; depth in millimetres with 0 = invalid; label ids with
// 255 = ignore.
struct RgbdSample {
    int height = 0;
    int width = 0;
    std::vector<float> rgb;
    std::vector<std::uint16_t> depth;
    std::vector<std::uint8_t> label;

    std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
    double invalid_fraction() const;
    void validate() const;  // throws DataError
};

struct Dataset {
    std::vector<std::string> classes;
    std::vector<RgbdSample> samples;
    int height = 0;
    int width = 0;
    std::uint64_t seed = 0;
};

struct SceneSpec {
    int height = 64;
    int width = 64;
    int classes = 6;  // class 0 is the background
    int min_objects = 2;
    int max_objects = 5;
    double min_size = 0.18;  // object extent as a fraction of the image side
    double max_size = 0.45;
    // generic sensor dropout: disks of random radius scattered so the expected
    // invalid fraction equals `invalid_rate`
    double invalid_rate = 0.05;
    int blob_min_radius = 1;
    int blob_max_radius = 4;
    // objects of this class lose 30-90% of their depth; -1 disables
    int reflective_class = 5;
    double reflective_min = 0.3;
    double reflective_max = 0.9;
    // depth planes in millimetres
    double near_mm = 800.0;
    double far_mm = 3500.0;
    double background_mm = 4500.0;
};

std::vector<std::string> default_class_names(int classes);

struct SceneObject {
    int cls = 1;
    double cy = 0, cx = 0, ry = 1, rx = 1;  // centre and half extents in pixels
    double depth = 1000;                    // mm at the centre
    double gy = 0, gx = 0;                  // depth slope, mm per pixel
    std::array<double, 3> color{0.5, 0.5, 0.5};
};

// Paints the objects far to near over the background, then applies sensor
// noise, reflective dropout and random invalid blobs.
RgbdSample render_scene(const SceneSpec& spec, const std::vector<SceneObject>& objects, Rng& rng);

// Random object layout rendered with render_scene.
RgbdSample synth_scene(const SceneSpec& spec, Rng& rng);

// Samples i = 0..count-1 are drawn from Rng::derive(seed, split, i).
Dataset synth_dataset(const SceneSpec& spec, int count, std::uint64_t seed, std::uint64_t split = 0);

// Netpbm IO. Depth PGMs are 16-bit big-endian, labels 8-bit.
void write_ppm(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgb);
std::vector<std::uint8_t> read_ppm(const std::filesystem::path& path, int& width, int& height);
void write_pgm8(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& v);
std::vector<std::uint8_t> read_pgm8(const std::filesystem::path& path, int& width, int& height);
void write_pgm16(const std::filesystem::path& path, int width, int height, const std::vector<std::uint16_t>& v);
std::vector<std::uint16_t> read_pgm16(const std::filesystem::path& path, int& width, int& height);

std::string sample_stem(std::size_t index);  // "0007"

void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Label-only directory of NNNN_label.pgm files (predictions).
void save_labels(const std::vector<std::vector<std::uint8_t>>& labels, int width, int height,
                 const std::filesystem::path& dir);
std::vector<std::vector<std::uint8_t>> load_labels(const std::filesystem::path& dir, int& width, int& height);

}  // namespace ddseg
