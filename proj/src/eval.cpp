#include "synthpipe/eval.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "synthpipe/error.hpp"

namespace synthpipe::eval {

using ordered_json = nlohmann::ordered_json;

double iou(const BoundingBox& a, const BoundingBox& b) {
    const double ix = std::max(a.x, b.x);
    const double iy = std::max(a.y, b.y);
    const double ix2 = std::min(a.x + a.w, b.x + b.w);
    const double iy2 = std::min(a.y + a.h, b.y + b.h);
    const double iw = ix2 - ix;
    const double ih = iy2 - iy;
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return inter / uni;
}

int MatchOutcome::tp() const {
    int n = 0;
    for (int m : detection_match) {
        if (m >= 0) ++n;
    }
    return n;
}

int MatchOutcome::fn() const {
    int n = 0;
    for (bool m : gt_matched) {
        if (!m) ++n;
    }
    return n;
}

MatchOutcome match_greedy(const std::vector<Detection>& detections,
                          const std::vector<BoundingBox>& ground_truths, double threshold) {
    MatchOutcome out;
    out.threshold = threshold;
    out.detection_match.assign(detections.size(), -1);
    out.gt_matched.assign(ground_truths.size(), false);

    // Descending confidence; stable keeps input order on ties.
    std::vector<std::size_t> order(detections.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return detections[a].confidence > detections[b].confidence;
    });

    for (std::size_t d : order) {
        double best = -1.0;
        int best_gt = -1;
        for (std::size_t g = 0; g < ground_truths.size(); ++g) {
            if (out.gt_matched[g]) continue;
            const double o = iou(detections[d].box, ground_truths[g]);
            if (o < threshold) continue;
            if (o > best) {  // strict > keeps IoU ties on the lowest gt index
                best = o;
                best_gt = static_cast<int>(g);
            }
        }
        if (best_gt >= 0) {
            out.detection_match[d] = best_gt;
            out.gt_matched[best_gt] = true;
        }
    }
    return out;
}

namespace {

struct SweepEntry {
    double confidence;
    std::string_view image_id;
    std::size_t input_order;  // position within the image's detection list
    bool is_tp;
};

// Per-image greedy matches flattened into one confidence-descending sweep.
std::vector<SweepEntry> build_sweep(const EvalInput& input, double threshold) {
    std::map<std::string_view, std::vector<Detection>> by_image;
    for (const Detection& det : input.detections) {
        by_image[det.image_id].push_back(det);
    }

    static const std::vector<BoundingBox> kNoGt;
    std::vector<SweepEntry> sweep;
    sweep.reserve(input.detections.size());
    for (const auto& [image_id, dets] : by_image) {
        auto gt_it = input.ground_truth.find(std::string(image_id));
        const std::vector<BoundingBox>& gts =
            gt_it == input.ground_truth.end() ? kNoGt : gt_it->second;
        const MatchOutcome matches = match_greedy(dets, gts, threshold);
        for (std::size_t i = 0; i < dets.size(); ++i) {
            sweep.push_back({dets[i].confidence, image_id, i, matches.detection_match[i] >= 0});
        }
    }

    std::sort(sweep.begin(), sweep.end(), [](const SweepEntry& a, const SweepEntry& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        if (a.image_id != b.image_id) return a.image_id < b.image_id;
        return a.input_order < b.input_order;
    });
    return sweep;
}

}  // namespace

std::array<double, 10> threshold_range() {
    std::array<double, 10> thresholds{};
    for (int i = 0; i < 10; ++i) thresholds[i] = (50 + 5 * i) / 100.0;
    return thresholds;
}

ThresholdEval evaluate_at(const EvalInput& input, double threshold) {
    std::uint64_t gt_total = 0;
    for (const auto& [id, boxes] : input.ground_truth) gt_total += boxes.size();
    if (gt_total == 0) {
        throw ValidationError("average precision undefined: no ground-truth boxes");
    }

    ThresholdEval result;
    result.threshold = threshold;

    const std::vector<SweepEntry> sweep = build_sweep(input, threshold);
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    result.curve.recall.reserve(sweep.size());
    result.curve.precision.reserve(sweep.size());
    for (const SweepEntry& e : sweep) {
        e.is_tp ? ++tp : ++fp;
        result.curve.recall.push_back(static_cast<double>(tp) / static_cast<double>(gt_total));
        result.curve.precision.push_back(static_cast<double>(tp) /
                                         static_cast<double>(tp + fp));
    }
    result.tp = tp;
    result.fp = fp;
    result.fn = gt_total - tp;

    // Interpolated precision at grid point r: the best precision at any sweep
    // point with recall >= r. Recall is non-decreasing along the sweep, so a
    // suffix maximum plus one backward walk covers all 101 points.
    const std::size_t n = sweep.size();
    std::vector<double> suffix_max(n);
    for (std::size_t i = n; i-- > 0;) {
        suffix_max[i] = result.curve.precision[i];
        if (i + 1 < n) suffix_max[i] = std::max(suffix_max[i], suffix_max[i + 1]);
    }
    std::size_t first_at = n;  // first sweep index with recall >= grid value
    for (int k = kRecallGridPoints - 1; k >= 0; --k) {
        const double r = static_cast<double>(k) / 100.0;
        while (first_at > 0 && result.curve.recall[first_at - 1] >= r) --first_at;
        result.curve.interpolated[k] = (first_at < n) ? suffix_max[first_at] : 0.0;
    }

    double sum = 0.0;
    for (double p : result.curve.interpolated) sum += p;
    result.ap = sum / kRecallGridPoints;
    return result;
}

double average_precision(const EvalInput& input, double threshold) {
    return evaluate_at(input, threshold).ap;
}

EvalReport ap_range(const EvalInput& input) {
    EvalReport report;
    for (const auto& [id, boxes] : input.ground_truth) report.gt_total += boxes.size();
    report.detection_total = input.detections.size();

    double sum = 0.0;
    for (double threshold : threshold_range()) {
        report.per_threshold.push_back(evaluate_at(input, threshold));
        sum += report.per_threshold.back().ap;
    }
    report.ap_at_50 = report.per_threshold.front().ap;
    report.ap_50_95 = sum / static_cast<double>(report.per_threshold.size());
    return report;
}

ordered_json report_to_json(const EvalReport& report) {
    ordered_json j;
    j["ap_at_50"] = report.ap_at_50;
    j["ap_50_95"] = report.ap_50_95;
    ordered_json per = ordered_json::array();
    for (const ThresholdEval& t : report.per_threshold) {
        per.push_back(ordered_json{{"threshold", t.threshold},
                                   {"ap", t.ap},
                                   {"tp", t.tp},
                                   {"fp", t.fp},
                                   {"fn", t.fn}});
    }
    j["per_threshold"] = std::move(per);
    j["gt_total"] = report.gt_total;
    j["detection_total"] = report.detection_total;
    return j;
}

void write_pr_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write CSV: " + path.string());
    out << "threshold,recall,precision\n";
    char buf[96];
    for (const ThresholdEval& t : report.per_threshold) {
        for (int k = 0; k < kRecallGridPoints; ++k) {
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f,%.9f\n", t.threshold, k / 100.0,
                          t.curve.interpolated[k]);
            out << buf;
        }
    }
    if (!out) throw IoError("CSV write failed: " + path.string());
}

std::vector<Detection> read_detections(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open detections file: " + path.string());
    std::vector<Detection> dets;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const ordered_json j = ordered_json::parse(line);
            Detection det;
            det.image_id = j.at("image_id").get<std::string>();
            const auto& bbox = j.at("bbox");
            if (!bbox.is_array() || bbox.size() != 4) {
                throw ValidationError("bbox must be [x, y, w, h]");
            }
            det.box = BoundingBox{bbox[0].get<double>(), bbox[1].get<double>(),
                                  bbox[2].get<double>(), bbox[3].get<double>()};
            det.confidence = j.at("score").get<double>();
            if (det.confidence < 0.0 || det.confidence > 1.0) {
                throw ValidationError("score outside [0,1]");
            }
            dets.push_back(std::move(det));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " +
                                  e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " +
                                  e.what());
        }
    }
    return dets;
}

void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write detections file: " + path.string());
    for (const Detection& det : dets) {
        ordered_json j;
        j["image_id"] = det.image_id;
        j["bbox"] = {det.box.x, det.box.y, det.box.w, det.box.h};
        j["score"] = det.confidence;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("detections write failed: " + path.string());
}

}  // namespace synthpipe::eval
