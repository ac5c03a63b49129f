#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "crowdcount/scene.hpp"
#include "crowdcount/tensor.hpp"

namespace crowdcount {

// Branch scales S1=1/8, S2=1/4, S3=1/2 plus the fused output scale S4=1/16.
enum class Scale : int { S1 = 0, S2 = 1, S3 = 2, S4 = 3 };

constexpr std::array<Scale, 4> kAllScales{Scale::S1, Scale::S2, Scale::S3, Scale::S4};

int scale_denominator(Scale s); // 8, 4, 2, 16
double scale_factor(Scale s);   // 1/denominator
int scale_index(Scale s);       // 1..4
const char* scale_name(Scale s);

// Integer count grid at one scale: cell (r, c) holds the number of heads
// whose coordinates fall in the corresponding image block. Blocks are
// half-open: a head at x lands in column floor(x / denominator).
struct ScaleMap {
    Scale scale = Scale::S1;
    int height = 0;
    int width = 0;
    std::vector<int> grid; // row-major
    int total = 0;

    int at(int r, int c) const { return grid[static_cast<std::size_t>(r) * width + c]; }
    int& at(int r, int c) { return grid[static_cast<std::size_t>(r) * width + c]; }
};

// (u, v) = (x/W, y/H) per head, order preserved; values in [0, 1).
std::vector<std::pair<double, double>> normalize_heads(const CrowdScene& scene);

ScaleMap bin_annotations(const CrowdScene& scene, Scale scale);

// All four ground-truth maps, indexed by static_cast<int>(Scale).
std::array<ScaleMap, 4> bin_all(const CrowdScene& scene);

// Count grid as a 1 x h x w tensor (regression target).
Tensor to_tensor(const ScaleMap& map);

// {"scale": j, "grid": [[...]]} for golden tests.
std::string to_json(const ScaleMap& map);

} // namespace crowdcount
