#include "crowdcount/localize.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "crowdcount/error.hpp"

namespace crowdcount {

BinaryGrid threshold(const Tensor& heatmap, double tau) {
    if (heatmap.channels != 1) throw std::invalid_argument("threshold: need single-channel map");
    BinaryGrid out;
    out.height = heatmap.height;
    out.width = heatmap.width;
    out.fg.resize(heatmap.data.size());
    for (std::size_t i = 0; i < heatmap.data.size(); ++i)
        out.fg[i] = heatmap.data[i] > tau ? 1 : 0;
    return out;
}

namespace {

int uf_find(std::vector<int>& parent, int a) {
    while (parent[a] != a) {
        parent[a] = parent[parent[a]]; // path halving
        a = parent[a];
    }
    return a;
}

void uf_union(std::vector<int>& parent, int a, int b) {
    a = uf_find(parent, a);
    b = uf_find(parent, b);
    if (a == b) return;
    if (a > b) std::swap(a, b); // keep the smaller (earlier raster) root
    parent[b] = a;
}

} // namespace

LabelGrid connected_components(const BinaryGrid& grid) {
    LabelGrid out;
    out.height = grid.height;
    out.width = grid.width;
    out.labels.assign(grid.fg.size(), 0);

    // First pass: provisional labels, unions with the four already-visited
    // 8-neighbours (W, NW, N, NE).
    std::vector<int> parent(1, 0); // parent[0] unused (background)
    std::vector<int>& labels = out.labels;
    for (int r = 0; r < grid.height; ++r) {
        for (int c = 0; c < grid.width; ++c) {
            if (!grid.at(r, c)) continue;
            const std::size_t idx = static_cast<std::size_t>(r) * grid.width + c;
            int best = 0;
            const int nr[4] = {r, r - 1, r - 1, r - 1};
            const int nc[4] = {c - 1, c - 1, c, c + 1};
            for (int k = 0; k < 4; ++k) {
                if (nr[k] < 0 || nc[k] < 0 || nc[k] >= grid.width) continue;
                const int nl = labels[static_cast<std::size_t>(nr[k]) * grid.width + nc[k]];
                if (nl == 0) continue;
                if (best == 0) {
                    best = nl;
                } else {
                    uf_union(parent, best, nl);
                }
            }
            if (best == 0) {
                const int fresh = static_cast<int>(parent.size());
                parent.push_back(fresh);
                labels[idx] = fresh;
            } else {
                labels[idx] = best;
            }
        }
    }

    // Second pass: resolve to roots, then compact to 1..n in raster order of
    // first appearance.
    std::vector<int> compact(parent.size(), 0);
    int next = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 0) continue;
        const int root = uf_find(parent, labels[i]);
        if (compact[root] == 0) compact[root] = ++next;
        labels[i] = compact[root];
    }
    out.num_components = next;
    return out;
}

std::vector<Detection> extract_detections(const Tensor& head_map_s3, double tau, int scene_width,
                                          int scene_height) {
    if (head_map_s3.channels != 1 || head_map_s3.width != scene_width / 2 ||
        head_map_s3.height != scene_height / 2)
        throw ValidationError("extract_detections: head map shape does not match scene dims");

    const LabelGrid cc = connected_components(threshold(head_map_s3, tau));
    struct Acc {
        double sum_x = 0, sum_y = 0, mass = 0;
        int pixels = 0;
    };
    std::vector<Acc> acc(cc.num_components);
    for (int r = 0; r < cc.height; ++r) {
        for (int c = 0; c < cc.width; ++c) {
            const int l = cc.at(r, c);
            if (l == 0) continue;
            Acc& a = acc[l - 1];
            a.sum_x += c;
            a.sum_y += r;
            a.mass += head_map_s3.at(0, r, c);
            ++a.pixels;
        }
    }

    std::vector<Detection> dets;
    dets.reserve(acc.size());
    for (const Acc& a : acc) {
        Detection d;
        d.x = 2.0 * (a.sum_x / a.pixels) + 1.0;
        d.y = 2.0 * (a.sum_y / a.pixels) + 1.0;
        d.score = a.mass;
        d.blob_size = a.pixels;
        dets.push_back(d);
    }
    std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    return dets;
}

} // namespace crowdcount
