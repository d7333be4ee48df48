#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthpipe/dataset.hpp"

namespace synthpipe::eval {

using data::BoundingBox;

struct Detection {
    std::string image_id;
    BoundingBox box;
    double confidence = 0.0;  // in [0,1]
};

// Overlap / union of two axis-aligned boxes in continuous coordinates;
// 0 for disjoint boxes, 1 iff identical.
double iou(const BoundingBox& a, const BoundingBox& b);

// Greedy single-image matching: detections in descending confidence (ties by
// input order), each takes the unmatched ground truth with the highest IoU if
// that IoU clears the threshold (IoU ties to the lowest ground-truth index).
struct MatchOutcome {
    double threshold = 0.0;
    std::vector<int> detection_match;  // per detection, input order: gt index or -1
    std::vector<bool> gt_matched;

    int tp() const;
    int fp() const { return static_cast<int>(detection_match.size()) - tp(); }
    int fn() const;
};

MatchOutcome match_greedy(const std::vector<Detection>& detections,
                          const std::vector<BoundingBox>& ground_truths, double threshold);

// Everything needed to score a detector run: ground truth per image plus the
// full detection set (any subset of images, any order).
struct EvalInput {
    std::map<std::string, std::vector<BoundingBox>> ground_truth;
    std::vector<Detection> detections;
};

inline constexpr int kRecallGridPoints = 101;  // 0.00, 0.01, ..., 1.00

struct PRCurve {
    std::vector<double> recall;     // cumulative sweep points
    std::vector<double> precision;  // cumulative sweep points
    std::array<double, kRecallGridPoints> interpolated{};  // max precision at recall >= r
};

struct ThresholdEval {
    double threshold = 0.0;
    double ap = 0.0;
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    PRCurve curve;
};

// AP at one IoU threshold: global confidence-descending sweep over per-image
// greedy matches, 101-point interpolation, mean over the grid. Throws
// ValidationError when there is no ground truth (AP undefined).
ThresholdEval evaluate_at(const EvalInput& input, double threshold);
double average_precision(const EvalInput& input, double threshold);

struct EvalReport {
    double ap_at_50 = 0.0;
    double ap_50_95 = 0.0;  // arithmetic mean of the ten per-threshold APs
    std::vector<ThresholdEval> per_threshold;
    std::uint64_t gt_total = 0;
    std::uint64_t detection_total = 0;
};

// The ten thresholds 0.50, 0.55, ..., 0.95.
std::array<double, 10> threshold_range();
EvalReport ap_range(const EvalInput& input);

nlohmann::ordered_json report_to_json(const EvalReport& report);
// One CSV row per (threshold, recall grid point) for external plotting.
void write_pr_csv(const EvalReport& report, const std::filesystem::path& path);

// Detections file: newline-delimited JSON {image_id, bbox [x,y,w,h], score}.
std::vector<Detection> read_detections(const std::filesystem::path& path);
void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets);

}  // namespace synthpipe::eval
