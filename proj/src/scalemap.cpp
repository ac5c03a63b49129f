#include "crowdcount/scalemap.hpp"

#include <cmath>

#include <json.hpp>

namespace crowdcount {

int scale_denominator(Scale s) {
    switch (s) {
        case Scale::S1: return 8;
        case Scale::S2: return 4;
        case Scale::S3: return 2;
        case Scale::S4: return 16;
    }
    return 0;
}

double scale_factor(Scale s) { return 1.0 / scale_denominator(s); }

int scale_index(Scale s) { return static_cast<int>(s) + 1; }

const char* scale_name(Scale s) {
    switch (s) {
        case Scale::S1: return "s1";
        case Scale::S2: return "s2";
        case Scale::S3: return "s3";
        case Scale::S4: return "s4";
    }
    return "?";
}

std::vector<std::pair<double, double>> normalize_heads(const CrowdScene& scene) {
    std::vector<std::pair<double, double>> out;
    out.reserve(scene.heads.size());
    for (const HeadPoint& p : scene.heads)
        out.emplace_back(p.x / scene.width, p.y / scene.height);
    return out;
}

ScaleMap bin_annotations(const CrowdScene& scene, Scale scale) {
    const int denom = scale_denominator(scale);
    ScaleMap map;
    map.scale = scale;
    map.height = scene.height / denom;
    map.width = scene.width / denom;
    map.grid.assign(static_cast<std::size_t>(map.height) * map.width, 0);
    for (const HeadPoint& p : scene.heads) {
        const int c = static_cast<int>(std::floor(p.x / denom));
        const int r = static_cast<int>(std::floor(p.y / denom));
        if (c < 0 || c >= map.width || r < 0 || r >= map.height)
            throw ValidationError("bin_annotations: head outside scene bounds");
        ++map.at(r, c);
        ++map.total;
    }
    return map;
}

std::array<ScaleMap, 4> bin_all(const CrowdScene& scene) {
    return {bin_annotations(scene, Scale::S1), bin_annotations(scene, Scale::S2),
            bin_annotations(scene, Scale::S3), bin_annotations(scene, Scale::S4)};
}

Tensor to_tensor(const ScaleMap& map) {
    Tensor t(1, map.height, map.width);
    for (std::size_t i = 0; i < map.grid.size(); ++i) t.data[i] = map.grid[i];
    return t;
}

std::string to_json(const ScaleMap& map) {
    nlohmann::json doc;
    doc["scale"] = scale_index(map.scale);
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < map.height; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < map.width; ++c) row.push_back(map.at(r, c));
        rows.push_back(std::move(row));
    }
    doc["grid"] = std::move(rows);
    return doc.dump();
}

} // namespace crowdcount
