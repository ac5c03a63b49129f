#include "crowdcount/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "crowdcount/error.hpp"

namespace crowdcount {

std::pair<double, double> counting_errors(const std::vector<double>& pred_counts,
                                          const std::vector<int>& gt_counts) {
    if (pred_counts.empty() || pred_counts.size() != gt_counts.size())
        throw ValidationError("counting_errors: need equal-length non-empty count lists");
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t i = 0; i < pred_counts.size(); ++i) {
        const double d = pred_counts[i] - gt_counts[i];
        abs_sum += std::abs(d);
        sq_sum += d * d;
    }
    const double n = static_cast<double>(pred_counts.size());
    return {abs_sum / n, std::sqrt(sq_sum / n)};
}

MatchResult greedy_match(const std::vector<Detection>& detections,
                         const std::vector<HeadPoint>& gt, double radius) {
    if (radius <= 0.0) throw ValidationError("greedy_match: radius must be positive");
    for (std::size_t i = 1; i < detections.size(); ++i)
        if (detections[i].score > detections[i - 1].score)
            throw ValidationError("greedy_match: detections must be sorted by descending score");

    MatchResult result;
    std::vector<bool> gt_taken(gt.size(), false);
    for (std::size_t d = 0; d < detections.size(); ++d) {
        int best = -1;
        double best_dist = 0.0;
        for (std::size_t g = 0; g < gt.size(); ++g) {
            if (gt_taken[g]) continue;
            const double dx = detections[d].x - gt[g].x;
            const double dy = detections[d].y - gt[g].y;
            const double dist = std::sqrt(dx * dx + dy * dy);
            if (dist <= radius && (best < 0 || dist < best_dist)) {
                best = static_cast<int>(g);
                best_dist = dist;
            }
        }
        if (best >= 0) {
            gt_taken[best] = true;
            result.true_positives.push_back({static_cast<int>(d), best, best_dist});
        } else {
            result.false_positives.push_back(static_cast<int>(d));
        }
    }
    for (std::size_t g = 0; g < gt.size(); ++g)
        if (!gt_taken[g]) result.false_negatives.push_back(static_cast<int>(g));
    return result;
}

ApResult average_precision(const std::vector<std::vector<Detection>>& detections_per_scene,
                           const std::vector<std::vector<HeadPoint>>& gt_per_scene, double radius) {
    if (detections_per_scene.size() != gt_per_scene.size())
        throw ValidationError("average_precision: scene count mismatch");
    std::size_t total_gt = 0;
    for (const auto& g : gt_per_scene) total_gt += g.size();
    if (total_gt == 0) throw ValidationError("average_precision: no ground-truth points");

    // Distinct scores, descending: each is one operating point keeping all
    // detections with score >= threshold.
    std::set<double, std::greater<double>> thresholds;
    for (const auto& dets : detections_per_scene)
        for (const Detection& d : dets) thresholds.insert(d.score);

    ApResult result;
    for (double tau : thresholds) {
        std::size_t tp = 0, kept = 0;
        for (std::size_t s = 0; s < detections_per_scene.size(); ++s) {
            std::vector<Detection> keep;
            for (const Detection& d : detections_per_scene[s])
                if (d.score >= tau) keep.push_back(d);
            kept += keep.size();
            tp += greedy_match(keep, gt_per_scene[s], radius).true_positives.size();
        }
        PrPoint pt;
        pt.threshold = tau;
        pt.recall = static_cast<double>(tp) / static_cast<double>(total_gt);
        pt.precision = kept == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(kept);
        result.curve.push_back(pt);
    }

    if (!result.curve.empty()) {
        double prev_r = 0.0, prev_p = result.curve.front().precision;
        for (const PrPoint& pt : result.curve) {
            result.ap += (pt.recall - prev_r) * 0.5 * (pt.precision + prev_p);
            prev_r = pt.recall;
            prev_p = pt.precision;
        }
    }
    return result;
}

std::vector<std::vector<int>> density_groups(const std::vector<CrowdScene>& scenes) {
    if (scenes.size() < 5) throw ValidationError("density_groups: need at least 5 scenes");
    std::vector<int> order(scenes.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scenes[a].count() != scenes[b].count()) return scenes[a].count() < scenes[b].count();
        return scenes[a].id < scenes[b].id; // intrinsic tie-break: permutation invariant
    });

    const int n = static_cast<int>(scenes.size());
    const int base = n / 5;
    const int extra = n % 5; // earlier groups take the extra scene
    std::vector<std::vector<int>> groups(5);
    int pos = 0;
    for (int g = 0; g < 5; ++g) {
        const int size = base + (g < extra ? 1 : 0);
        groups[g].assign(order.begin() + pos, order.begin() + pos + size);
        pos += size;
    }
    return groups;
}

EvalReport per_scale_report(const Model& model, const std::vector<CrowdScene>& test_scenes,
                            const EvalSettings& settings) {
    if (test_scenes.empty()) throw ValidationError("per_scale_report: empty test set");

    const std::size_t n = test_scenes.size();
    std::vector<std::array<double, 4>> scale_counts(n);
    std::vector<double> fused_counts(n);
    std::vector<int> gt_counts(n);
    std::vector<std::vector<Detection>> dets(n);
    std::vector<std::vector<HeadPoint>> gts(n);
    for (std::size_t i = 0; i < n; ++i) {
        const CrowdScene& scene = test_scenes[i];
        const ModelOutput out = model.infer(scene.image);
        for (int j = 0; j < 3; ++j) scale_counts[i][j] = out.head_maps[j].sum();
        scale_counts[i][3] = out.count;
        fused_counts[i] = out.count;
        gt_counts[i] = scene.count();
        dets[i] = extract_detections(out.head_maps[2], settings.tau, scene.width, scene.height);
        gts[i] = scene.heads;
    }

    EvalReport report;
    std::tie(report.mae, report.mse) = counting_errors(fused_counts, gt_counts);
    for (int j = 0; j < 4; ++j) {
        std::vector<double> counts(n);
        for (std::size_t i = 0; i < n; ++i) counts[i] = scale_counts[i][j];
        report.per_scale_mae[j] = counting_errors(counts, gt_counts).first;
    }

    const ApResult ap = average_precision(dets, gts, settings.radius);
    report.ap = ap.ap;
    report.pr_curve = ap.curve;

    const auto groups = density_groups(test_scenes);
    for (int g = 0; g < 5; ++g) {
        DensityGroupStat stat;
        stat.group = g + 1;
        stat.scene_count = static_cast<int>(groups[g].size());
        for (int j = 0; j < 4; ++j) {
            double err = 0.0;
            for (int idx : groups[g]) err += std::abs(scale_counts[idx][j] - gt_counts[idx]);
            stat.mae_scale[j] = groups[g].empty() ? 0.0 : err / groups[g].size();
        }
        stat.mae_fused = stat.mae_scale[3];
        report.groups.push_back(stat);
    }
    return report;
}

} // namespace crowdcount
