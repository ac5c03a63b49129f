#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "crowdcount/eval.hpp"
#include "crowdcount/model.hpp"

namespace crowdcount {

// Shortest deterministic decimal form with 9 significant digits.
std::string format_double(double v);

void write_metrics_csv(const std::filesystem::path& path, const EvalReport& report);
void write_pr_csv(const std::filesystem::path& path, const std::vector<PrPoint>& curve);
void write_density_csv(const std::filesystem::path& path,
                       const std::vector<DensityGroupStat>& groups);
void write_report_json(const std::filesystem::path& path, const EvalReport& report);
void write_train_log_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& log);

// scene_ids[i] labels detections[i]; rows keep per-scene descending-score order.
void write_detections_csv(const std::filesystem::path& path,
                          const std::vector<std::string>& scene_ids,
                          const std::vector<std::vector<Detection>>& detections);

struct AblationRow {
    std::string config;                 // drop_l1 | drop_l2 | drop_l3 | all_on
    std::array<double, 4> weights{};    // 0 marks the excluded term
    double mae = 0.0;
    double mse = 0.0;
    double ap = 0.0;
};
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

void write_pr_svg(const std::filesystem::path& path, const std::vector<PrPoint>& curve);
void write_density_svg(const std::filesystem::path& path,
                       const std::vector<DensityGroupStat>& groups);

} // namespace crowdcount
