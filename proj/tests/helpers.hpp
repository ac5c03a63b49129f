#pragma once

#include <string>
#include <vector>

#include "crowdcount/rng.hpp"
#include "crowdcount/scene.hpp"

namespace testutil {

// Scene with a blank image; enough for binning/eval paths.
inline crowdcount::CrowdScene make_scene(int w, int h, std::vector<crowdcount::HeadPoint> heads,
                                         std::string id = "t") {
    crowdcount::CrowdScene s;
    s.id = std::move(id);
    s.width = w;
    s.height = h;
    s.image = crowdcount::Tensor(1, h, w);
    s.heads = std::move(heads);
    return s;
}

inline crowdcount::CrowdScene random_scene(crowdcount::Rng& rng, int w, int h, int count,
                                           std::string id = "r") {
    std::vector<crowdcount::HeadPoint> heads;
    heads.reserve(count);
    for (int i = 0; i < count; ++i)
        heads.push_back({rng.uniform(0.0, w), rng.uniform(0.0, h)});
    return make_scene(w, h, std::move(heads), std::move(id));
}

inline crowdcount::Tensor random_tensor(crowdcount::Rng& rng, int c, int h, int w, double lo = -1.0,
                                        double hi = 1.0) {
    crowdcount::Tensor t(c, h, w);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

} // namespace testutil
