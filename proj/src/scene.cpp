#include "crowdcount/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "crowdcount/rng.hpp"
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace crowdcount {

void validate_scene(const CrowdScene& scene) {
    if (scene.width < 16 || scene.height < 16)
        throw ValidationError("scene '" + scene.id + "': dimensions must be at least 16x16");
    if (scene.width % 16 != 0 || scene.height % 16 != 0)
        throw ValidationError("scene '" + scene.id + "': dimensions must be divisible by 16");
    if (scene.image.channels < 1 || scene.image.height != scene.height ||
        scene.image.width != scene.width)
        throw ValidationError("scene '" + scene.id + "': image shape does not match scene dimensions");
    if (!scene.image.all_finite())
        throw ValidationError("scene '" + scene.id + "': image contains non-finite values");
    for (double v : scene.image.data) {
        if (v < 0.0 || v > 1.0)
            throw ValidationError("scene '" + scene.id + "': image values must lie in [0,1]");
    }
    for (std::size_t i = 0; i < scene.heads.size(); ++i) {
        const HeadPoint& p = scene.heads[i];
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            throw ValidationError("scene '" + scene.id + "': head " + std::to_string(i) +
                                  " has non-finite coordinates");
        if (p.x < 0.0 || p.x >= scene.width || p.y < 0.0 || p.y >= scene.height)
            throw ValidationError("scene '" + scene.id + "': head " + std::to_string(i) +
                                  " out of bounds (coordinates must satisfy 0 <= x < W, 0 <= y < H)");
    }
}

// ---------------------------------------------------------------------------
// PNM I/O

namespace {

int pnm_read_token(std::istream& in) {
    // skips whitespace and '#' comments
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int value = -1;
    in >> value;
    return value;
}

} // namespace

Tensor read_pnm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open image file: " + path.string());
    char p = 0, kind = 0;
    in.get(p);
    in.get(kind);
    if (p != 'P' || (kind != '5' && kind != '6'))
        throw ValidationError("unsupported image format (want binary PGM/PPM): " + path.string());
    const int channels = (kind == '5') ? 1 : 3;
    const int w = pnm_read_token(in);
    const int h = pnm_read_token(in);
    const int maxval = pnm_read_token(in);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
        throw ValidationError("bad PNM header in " + path.string());
    in.get(); // single whitespace byte before raster
    std::vector<unsigned char> raster(static_cast<std::size_t>(w) * h * channels);
    in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
    if (!in) throw ValidationError("truncated PNM raster in " + path.string());

    Tensor img(channels, h, w);
    // PNM raster is interleaved; Tensor is planar.
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) =
                    raster[(static_cast<std::size_t>(y) * w + x) * channels + c] / double(maxval);
    return img;
}

void write_pnm(const fs::path& path, const Tensor& image) {
    if (image.channels != 1 && image.channels != 3)
        throw ValidationError("PNM images must have 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write image file: " + path.string());
    out << (image.channels == 1 ? "P5" : "P6") << "\n"
        << image.width << " " << image.height << "\n255\n";
    std::vector<unsigned char> raster;
    raster.reserve(image.size());
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < image.channels; ++c) {
                double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
                raster.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
            }
    out.write(reinterpret_cast<const char*>(raster.data()),
              static_cast<std::streamsize>(raster.size()));
}

// ---------------------------------------------------------------------------
// Annotation JSON

CrowdScene load_scene(const fs::path& annotation_file) {
    std::ifstream in(annotation_file);
    if (!in) throw ValidationError("cannot open annotation file: " + annotation_file.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("parse failure in " + annotation_file.string() + ": " + e.what());
    }

    CrowdScene scene;
    try {
        scene.id = doc.at("id").get<std::string>();
        scene.width = doc.at("width").get<int>();
        scene.height = doc.at("height").get<int>();
        for (const auto& hp : doc.at("heads")) {
            if (!hp.is_array() || hp.size() != 2)
                throw ValidationError("head entries must be [x, y] pairs");
            scene.heads.push_back({hp[0].get<double>(), hp[1].get<double>()});
        }
        const json& img = doc.at("image");
        if (img.is_string()) {
            scene.image = read_pnm(annotation_file.parent_path() / img.get<std::string>());
        } else if (img.is_array()) {
            const int channels = static_cast<int>(img.size());
            scene.image = Tensor(channels, scene.height, scene.width);
            for (int c = 0; c < channels; ++c) {
                const auto& plane = img[c];
                if (static_cast<int>(plane.size()) != scene.height * scene.width)
                    throw ValidationError("inline image plane " + std::to_string(c) +
                                          " has wrong length in " + annotation_file.string());
                for (int i = 0; i < scene.height * scene.width; ++i)
                    scene.image.data[static_cast<std::size_t>(c) * scene.height * scene.width + i] =
                        plane[i].get<double>();
            }
        } else {
            throw ValidationError("'image' must be a path or an array of channel arrays");
        }
    } catch (const json::exception& e) {
        throw ValidationError("parse failure in " + annotation_file.string() + ": " + e.what());
    }

    validate_scene(scene);
    return scene;
}

void save_scene(const CrowdScene& scene, const fs::path& annotation_file, ImageFormat format) {
    validate_scene(scene);
    json doc;
    doc["id"] = scene.id;
    doc["width"] = scene.width;
    doc["height"] = scene.height;
    json heads = json::array();
    for (const HeadPoint& p : scene.heads) heads.push_back({p.x, p.y});
    doc["heads"] = heads;

    if (format == ImageFormat::Inline) {
        json planes = json::array();
        const std::size_t plane_size = static_cast<std::size_t>(scene.height) * scene.width;
        for (int c = 0; c < scene.image.channels; ++c) {
            json plane = json::array();
            for (std::size_t i = 0; i < plane_size; ++i)
                plane.push_back(scene.image.data[c * plane_size + i]);
            planes.push_back(std::move(plane));
        }
        doc["image"] = std::move(planes);
    } else {
        fs::path img_name = annotation_file.stem();
        img_name += (scene.image.channels == 1) ? ".pgm" : ".ppm";
        write_pnm(annotation_file.parent_path() / img_name, scene.image);
        doc["image"] = img_name.string();
    }

    std::ofstream out(annotation_file, std::ios::binary);
    if (!out) throw ValidationError("cannot write annotation file: " + annotation_file.string());
    out << doc.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Synthesis

CrowdScene synth_scene(std::uint64_t seed, int width, int height, CountRange count_range) {
    if (width < 16 || height < 16 || width % 16 != 0 || height % 16 != 0)
        throw ValidationError("synth_scene: dimensions must be >= 16 and divisible by 16");
    if (count_range.min < 0 || count_range.min > count_range.max)
        throw ValidationError("synth_scene: need 0 <= min <= max in count range");

    Rng rng(seed);
    const int count = static_cast<int>(rng.uniform_int(count_range.min, count_range.max));

    // Heads keep a 2 px border margin so every bump has a visible peak, and a
    // 4 px pairwise separation (rejection sampled).
    constexpr double kMargin = 2.0;
    constexpr double kMinSep = 4.0;
    std::vector<HeadPoint> heads;
    heads.reserve(count);
    int attempts = 0;
    const int max_attempts = 10000 + 1000 * count;
    while (static_cast<int>(heads.size()) < count) {
        if (++attempts > max_attempts)
            throw ValidationError("synth_scene: count range infeasible for the minimum-separation "
                                  "constraint at " + std::to_string(width) + "x" + std::to_string(height));
        HeadPoint p{rng.uniform(kMargin, width - kMargin), rng.uniform(kMargin, height - kMargin)};
        bool ok = true;
        for (const HeadPoint& q : heads) {
            const double dx = p.x - q.x, dy = p.y - q.y;
            if (dx * dx + dy * dy < kMinSep * kMinSep) {
                ok = false;
                break;
            }
        }
        if (ok) heads.push_back(p);
    }

    CrowdScene scene;
    scene.id = "synth_" + std::to_string(seed);
    scene.width = width;
    scene.height = height;
    scene.heads = std::move(heads);
    scene.image = Tensor(1, height, width);

    // Noise floor, then one Gaussian bump per head. Amplitudes are chosen so
    // the composed value never needs more than a trailing clamp and every
    // peak stays >= 0.5 above the local background.
    for (double& v : scene.image.data) v = rng.uniform(0.0, 0.05);
    for (const HeadPoint& p : scene.heads) {
        const double amp = rng.uniform(0.6, 0.95);
        const double sigma = rng.uniform(1.0, 1.4);
        const int x0 = std::max(0, static_cast<int>(std::floor(p.x - 4 * sigma)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(p.x + 4 * sigma)));
        const int y0 = std::max(0, static_cast<int>(std::floor(p.y - 4 * sigma)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(p.y + 4 * sigma)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double d2 = (x - p.x) * (x - p.x) + (y - p.y) * (y - p.y);
                scene.image.at(0, y, x) += amp * std::exp(-d2 / (2.0 * sigma * sigma));
            }
    }
    for (double& v : scene.image.data) v = std::min(v, 1.0);
    return scene;
}

// ---------------------------------------------------------------------------
// Augmentation

CrowdScene hflip(const CrowdScene& scene) {
    CrowdScene out;
    out.id = scene.id;
    out.width = scene.width;
    out.height = scene.height;
    out.image = Tensor(scene.image.channels, scene.height, scene.width);
    for (int c = 0; c < scene.image.channels; ++c)
        for (int y = 0; y < scene.height; ++y)
            for (int x = 0; x < scene.width; ++x)
                out.image.at(c, y, x) = scene.image.at(c, y, scene.width - 1 - x);
    out.heads.reserve(scene.heads.size());
    for (const HeadPoint& p : scene.heads)
        out.heads.push_back({std::max(0.0, scene.width - 1 - p.x), p.y});
    return out;
}

CrowdScene crop(const CrowdScene& scene, int x0, int y0, int w, int h) {
    if (w % 16 != 0 || h % 16 != 0 || w < 16 || h < 16)
        throw ValidationError("crop: window dimensions must be >= 16 and divisible by 16");
    if (x0 < 0 || y0 < 0 || x0 + w > scene.width || y0 + h > scene.height)
        throw ValidationError("crop: window outside image");
    CrowdScene out;
    out.id = scene.id;
    out.width = w;
    out.height = h;
    out.image = Tensor(scene.image.channels, h, w);
    for (int c = 0; c < scene.image.channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.image.at(c, y, x) = scene.image.at(c, y0 + y, x0 + x);
    for (const HeadPoint& p : scene.heads) {
        if (p.x >= x0 && p.x < x0 + w && p.y >= y0 && p.y < y0 + h)
            out.heads.push_back({p.x - x0, p.y - y0});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset

Dataset load_dataset(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw ValidationError("cannot open manifest: " + manifest_path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("parse failure in " + manifest_path.string() + ": " + e.what());
    }
    Dataset ds;
    try {
        for (const auto& name : doc.at("train"))
            ds.train.push_back(load_scene(dir / name.get<std::string>()));
        for (const auto& name : doc.at("test"))
            ds.test.push_back(load_scene(dir / name.get<std::string>()));
    } catch (const json::exception& e) {
        throw ValidationError("bad manifest " + manifest_path.string() + ": " + e.what());
    }
    return ds;
}

} // namespace crowdcount
