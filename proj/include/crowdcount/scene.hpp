#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "crowdcount/error.hpp"
#include "crowdcount/tensor.hpp"

namespace crowdcount {

// Annotation coordinates are real-valued and 0-indexed: a head at x lies in
// pixel column floor(x), and x is required to satisfy 0 <= x < width.
struct HeadPoint {
    double x = 0.0;
    double y = 0.0;
};

// Image grid plus point annotations. Immutable after construction; safe to
// share across threads.
struct CrowdScene {
    std::string id;
    int width = 0;  // >= 16, divisible by 16
    int height = 0; // >= 16, divisible by 16
    Tensor image;   // channels x H x W, values in [0, 1]
    std::vector<HeadPoint> heads;

    int count() const { return static_cast<int>(heads.size()); }
};

// Throws ValidationError on any invariant violation (dimensions, head bounds,
// image range/finiteness).
void validate_scene(const CrowdScene& scene);

enum class ImageFormat {
    Inline, // row-major float arrays per channel, embedded in the JSON
    Pnm,    // sibling PGM (1 channel) or PPM (3 channels) file
};

CrowdScene load_scene(const std::filesystem::path& annotation_file);
void save_scene(const CrowdScene& scene, const std::filesystem::path& annotation_file,
                ImageFormat format = ImageFormat::Pnm);

// 8-bit binary PGM (P5) / PPM (P6).
Tensor read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Tensor& image);

struct CountRange {
    int min = 0;
    int max = 0;
};

// Deterministic synthetic scene: low-amplitude noise background plus one
// bright isotropic bump per head, heads at least 4 px apart.
CrowdScene synth_scene(std::uint64_t seed, int width, int height, CountRange count_range);

// Horizontal flip; head x -> W-1-x (pixel-index reflection). Real-valued
// coordinates in (W-1, W) would land below 0 and are clamped to 0.
CrowdScene hflip(const CrowdScene& scene);

// Crop to [x0, x0+w) x [y0, y0+h); heads outside the window are dropped,
// the rest are translated. w and h must be divisible by 16.
CrowdScene crop(const CrowdScene& scene, int x0, int y0, int w, int h);

struct Dataset {
    std::vector<CrowdScene> train;
    std::vector<CrowdScene> test;
};

// Directory with manifest.json: {"train": [files...], "test": [files...]}
Dataset load_dataset(const std::filesystem::path& dir);

} // namespace crowdcount
