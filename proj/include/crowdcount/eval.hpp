#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "crowdcount/localize.hpp"
#include "crowdcount/model.hpp"
#include "crowdcount/scene.hpp"

namespace crowdcount {

// Note on naming: in the crowd-counting literature "MSE" denotes the
// root-mean-squared count error, and this project follows that convention
// everywhere an MSE is reported.

// (MAE, RMSE) of predicted counts against ground truth.
std::pair<double, double> counting_errors(const std::vector<double>& pred_counts,
                                          const std::vector<int>& gt_counts);

struct MatchResult {
    struct TruePositive {
        int detection = -1;
        int gt = -1;
        double distance = 0.0;
    };
    std::vector<TruePositive> true_positives;
    std::vector<int> false_positives; // detection indices
    std::vector<int> false_negatives; // gt indices
};

// Score-ordered greedy assignment: each detection takes the nearest remaining
// ground-truth point within `radius` (inclusive), which is then deleted.
// Detections must already be sorted by descending score.
MatchResult greedy_match(const std::vector<Detection>& detections,
                         const std::vector<HeadPoint>& gt, double radius);

struct PrPoint {
    double threshold = 0.0;
    double recall = 0.0;
    double precision = 0.0;
};

struct ApResult {
    double ap = 0.0;
    std::vector<PrPoint> curve; // descending threshold order, recalls non-decreasing
};

// Sweeps the distinct detection scores descending over the pooled test set,
// matching per scene at each threshold; AP is the trapezoidal area under the
// (recall, precision) curve anchored at recall 0 with the first precision.
ApResult average_precision(const std::vector<std::vector<Detection>>& detections_per_scene,
                           const std::vector<std::vector<HeadPoint>>& gt_per_scene, double radius);

// Quintiles of scene indices ordered by person count ascending (ties broken
// by scene id); earlier groups absorb the remainder.
std::vector<std::vector<int>> density_groups(const std::vector<CrowdScene>& scenes);

struct DensityGroupStat {
    int group = 0; // 1..5
    int scene_count = 0;
    std::array<double, 4> mae_scale{}; // S1..S4
    double mae_fused = 0.0;            // == mae_scale[3]; S4 is the fusion output
};

struct EvalReport {
    double mae = 0.0;
    double mse = 0.0; // RMSE convention
    double ap = 0.0;
    std::vector<PrPoint> pr_curve;
    std::array<double, 4> per_scale_mae{};
    std::vector<DensityGroupStat> groups;
};

struct EvalSettings {
    double radius = 5.0;
    double tau = 0.5;
};

// Full protocol over a frozen model: per-scale counting MAE globally and per
// density group, fused MAE/MSE, and localization AP from the S3 branch.
EvalReport per_scale_report(const Model& model, const std::vector<CrowdScene>& test_scenes,
                            const EvalSettings& settings);

} // namespace crowdcount
