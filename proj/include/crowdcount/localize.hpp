#pragma once

#include <cstdint>
#include <vector>

#include "crowdcount/tensor.hpp"

namespace crowdcount {

// Head detection in original-image coordinates. Score is the summed heatmap
// mass inside the blob; blob_size counts member pixels at S3 resolution.
struct Detection {
    double x = 0.0;
    double y = 0.0;
    double score = 0.0;
    int blob_size = 0;
};

struct BinaryGrid {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> fg; // row-major, 0/1

    bool at(int r, int c) const { return fg[static_cast<std::size_t>(r) * width + c] != 0; }
};

struct LabelGrid {
    int height = 0;
    int width = 0;
    std::vector<int> labels; // 0 = background, 1..num_components
    int num_components = 0;

    int at(int r, int c) const { return labels[static_cast<std::size_t>(r) * width + c]; }
};

// Foreground iff value > tau (strict). Input must be single-channel.
BinaryGrid threshold(const Tensor& heatmap, double tau);

// 8-connectivity two-pass union-find labeling; labels are assigned
// contiguously in raster order of first appearance.
LabelGrid connected_components(const BinaryGrid& grid);

// Blob centroids of the thresholded S3 head map, mapped back to the original
// frame (a head map cell (c, r) covers original pixels [2c, 2c+2) x [2r, 2r+2),
// so a centroid maps to 2*centroid + 1). Sorted by descending score, ties
// broken by (y, x).
std::vector<Detection> extract_detections(const Tensor& head_map_s3, double tau, int scene_width,
                                          int scene_height);

} // namespace crowdcount
