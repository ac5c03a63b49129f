#include "crowdcount/tensor.hpp"

#include <cmath>

namespace crowdcount {

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data) s += v;
    return s;
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

} // namespace crowdcount
