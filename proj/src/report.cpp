#include "crowdcount/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace crowdcount {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

namespace {

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

} // namespace

void write_metrics_csv(const fs::path& path, const EvalReport& report) {
    auto out = open_out(path);
    out << "mae,mse,ap\n"
        << format_double(report.mae) << "," << format_double(report.mse) << ","
        << format_double(report.ap) << "\n";
}

void write_pr_csv(const fs::path& path, const std::vector<PrPoint>& curve) {
    auto out = open_out(path);
    out << "threshold,recall,precision\n";
    for (const PrPoint& pt : curve)
        out << format_double(pt.threshold) << "," << format_double(pt.recall) << ","
            << format_double(pt.precision) << "\n";
}

void write_density_csv(const fs::path& path, const std::vector<DensityGroupStat>& groups) {
    auto out = open_out(path);
    out << "group,scenes,mae_s1,mae_s2,mae_s3,mae_s4,mae_fused\n";
    for (const DensityGroupStat& g : groups) {
        out << g.group << "," << g.scene_count;
        for (double m : g.mae_scale) out << "," << format_double(m);
        out << "," << format_double(g.mae_fused) << "\n";
    }
}

void write_report_json(const fs::path& path, const EvalReport& report) {
    json doc;
    doc["mae"] = report.mae;
    doc["mse"] = report.mse;
    doc["ap"] = report.ap;
    json curve = json::array();
    for (const PrPoint& pt : report.pr_curve)
        curve.push_back({{"threshold", pt.threshold},
                         {"recall", pt.recall},
                         {"precision", pt.precision}});
    doc["pr_curve"] = std::move(curve);
    doc["per_scale_mae"] = {{"s1", report.per_scale_mae[0]},
                            {"s2", report.per_scale_mae[1]},
                            {"s3", report.per_scale_mae[2]},
                            {"s4", report.per_scale_mae[3]}};
    json groups = json::array();
    for (const DensityGroupStat& g : report.groups)
        groups.push_back({{"group", g.group},
                          {"scenes", g.scene_count},
                          {"mae_s1", g.mae_scale[0]},
                          {"mae_s2", g.mae_scale[1]},
                          {"mae_s3", g.mae_scale[2]},
                          {"mae_s4", g.mae_scale[3]},
                          {"mae_fused", g.mae_fused}});
    doc["density_groups"] = std::move(groups);
    auto out = open_out(path);
    out << doc.dump(2) << "\n";
}

void write_train_log_csv(const fs::path& path, const std::vector<EpochRecord>& log) {
    auto out = open_out(path);
    out << "epoch,loss_total,loss_s1,loss_s2,loss_s3,loss_s4,val_mae\n";
    for (const EpochRecord& rec : log) {
        out << rec.epoch << "," << format_double(rec.loss_total);
        for (double t : rec.terms) out << "," << format_double(t);
        out << "," << format_double(rec.val_mae) << "\n";
    }
}

void write_detections_csv(const fs::path& path, const std::vector<std::string>& scene_ids,
                          const std::vector<std::vector<Detection>>& detections) {
    auto out = open_out(path);
    out << "scene_id,x,y,score,blob_size\n";
    for (std::size_t s = 0; s < detections.size(); ++s)
        for (const Detection& d : detections[s])
            out << scene_ids[s] << "," << format_double(d.x) << "," << format_double(d.y) << ","
                << format_double(d.score) << "," << d.blob_size << "\n";
}

void write_ablation_csv(const fs::path& path, const std::vector<AblationRow>& rows) {
    auto out = open_out(path);
    out << "config,l1_weight,l2_weight,l3_weight,l4_weight,mae,mse,ap\n";
    for (const AblationRow& r : rows) {
        out << r.config;
        for (double w : r.weights) out << "," << format_double(w);
        out << "," << format_double(r.mae) << "," << format_double(r.mse) << ","
            << format_double(r.ap) << "\n";
    }
}

// ---------------------------------------------------------------------------
// SVG plots. Hand-rolled on purpose: dependency-free and diffable.

namespace {

constexpr int kW = 480, kH = 360;
constexpr int kMarginL = 56, kMarginR = 16, kMarginT = 24, kMarginB = 44;

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

void svg_header(std::ostream& out) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
        << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n"
        << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
}

void svg_axes(std::ostream& out, const std::string& xlabel, const std::string& ylabel) {
    out << "<line x1=\"" << kMarginL << "\" y1=\"" << kH - kMarginB << "\" x2=\"" << kW - kMarginR
        << "\" y2=\"" << kH - kMarginB << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << kMarginL << "\" y1=\"" << kMarginT << "\" x2=\"" << kMarginL
        << "\" y2=\"" << kH - kMarginB << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << (kMarginL + kW - kMarginR) / 2 << "\" y=\"" << kH - 10
        << "\" text-anchor=\"middle\" font-size=\"13\">" << xlabel << "</text>\n"
        << "<text x=\"14\" y=\"" << (kMarginT + kH - kMarginB) / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 14 "
        << (kMarginT + kH - kMarginB) / 2 << ")\">" << ylabel << "</text>\n";
}

} // namespace

void write_pr_svg(const fs::path& path, const std::vector<PrPoint>& curve) {
    auto out = open_out(path);
    svg_header(out);
    svg_axes(out, "recall", "precision");
    const double plot_w = kW - kMarginL - kMarginR;
    const double plot_h = kH - kMarginT - kMarginB;
    auto px = [&](double r) { return kMarginL + r * plot_w; };
    auto py = [&](double p) { return kH - kMarginB - p * plot_h; };
    for (int i = 0; i <= 5; ++i) {
        const double v = i / 5.0;
        out << "<text x=\"" << fmt2(px(v)) << "\" y=\"" << kH - kMarginB + 16
            << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt2(v) << "</text>\n";
        out << "<text x=\"" << kMarginL - 6 << "\" y=\"" << fmt2(py(v) + 3)
            << "\" text-anchor=\"end\" font-size=\"10\">" << fmt2(v) << "</text>\n";
    }
    if (!curve.empty()) {
        out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
        out << fmt2(px(0.0)) << "," << fmt2(py(curve.front().precision));
        for (const PrPoint& pt : curve)
            out << " " << fmt2(px(pt.recall)) << "," << fmt2(py(pt.precision));
        out << "\"/>\n";
    }
    out << "</svg>\n";
}

void write_density_svg(const fs::path& path, const std::vector<DensityGroupStat>& groups) {
    auto out = open_out(path);
    svg_header(out);
    svg_axes(out, "density group", "MAE");
    const char* colors[4] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"};
    const char* labels[4] = {"s1", "s2", "s3", "fused"};
    double max_mae = 1e-9;
    for (const DensityGroupStat& g : groups)
        for (double m : g.mae_scale) max_mae = std::max(max_mae, m);
    const double plot_w = kW - kMarginL - kMarginR;
    const double plot_h = kH - kMarginT - kMarginB;
    const double group_w = plot_w / std::max<std::size_t>(groups.size(), 1);
    const double bar_w = group_w / 5.5;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const DensityGroupStat& g = groups[gi];
        const double gx = kMarginL + gi * group_w;
        for (int j = 0; j < 4; ++j) {
            const double h = g.mae_scale[j] / max_mae * plot_h;
            out << "<rect x=\"" << fmt2(gx + (j + 0.5) * bar_w) << "\" y=\""
                << fmt2(kH - kMarginB - h) << "\" width=\"" << fmt2(bar_w) << "\" height=\""
                << fmt2(h) << "\" fill=\"" << colors[j] << "\"/>\n";
        }
        out << "<text x=\"" << fmt2(gx + group_w / 2) << "\" y=\"" << kH - kMarginB + 16
            << "\" text-anchor=\"middle\" font-size=\"10\">G" << g.group << "</text>\n";
    }
    out << "<text x=\"" << kMarginL - 6 << "\" y=\"" << kMarginT + 4
        << "\" text-anchor=\"end\" font-size=\"10\">" << fmt2(max_mae) << "</text>\n";
    for (int j = 0; j < 4; ++j) {
        const double lx = kW - kMarginR - 180 + j * 46;
        out << "<rect x=\"" << fmt2(lx) << "\" y=\"8\" width=\"10\" height=\"10\" fill=\""
            << colors[j] << "\"/>\n"
            << "<text x=\"" << fmt2(lx + 13) << "\" y=\"17\" font-size=\"10\">" << labels[j]
            << "</text>\n";
    }
    out << "</svg>\n";
}

} // namespace crowdcount
