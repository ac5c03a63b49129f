#pragma once

#include <cstddef>
#include <vector>

namespace crowdcount {

// Dense (channels, height, width) grid of doubles, row-major within a channel.
// Double precision throughout: the gradient checks that gate this project are
// not reliable in single precision.
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w),
          data(static_cast<std::size_t>(c) * h * w, fill) {}

    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    double sum() const;
    bool all_finite() const;
};

} // namespace crowdcount
