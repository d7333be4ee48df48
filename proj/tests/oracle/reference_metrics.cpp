#include "reference_metrics.hpp"

#include <algorithm>

namespace oracle {

namespace {

double overlap_1d(double a0, double a1, double b0, double b1) {
    const double lo = std::max(a0, b0);
    const double hi = std::min(a1, b1);
    return hi > lo ? hi - lo : 0.0;
}

}  // namespace

double iou_reference(const Box& a, const Box& b) {
    const double inter = overlap_1d(a.x, a.x + a.w, b.x, b.x + b.w) *
                         overlap_1d(a.y, a.y + a.h, b.y, b.y + b.h);
    if (inter <= 0.0) return 0.0;
    return inter / (a.w * a.h + b.w * b.h - inter);
}

double iou_pixel_count(int ax, int ay, int aw, int ah, int bx, int by, int bw, int bh) {
    long long inter = 0;
    long long uni = 0;
    const int x0 = std::min(ax, bx);
    const int x1 = std::max(ax + aw, bx + bw);
    const int y0 = std::min(ay, by);
    const int y1 = std::max(ay + ah, by + bh);
    for (int j = y0; j < y1; ++j) {
        for (int i = x0; i < x1; ++i) {
            const bool in_a = (i >= ax && i < ax + aw && j >= ay && j < ay + ah);
            const bool in_b = (i >= bx && i < bx + bw && j >= by && j < by + bh);
            if (in_a && in_b) ++inter;
            if (in_a || in_b) ++uni;
        }
    }
    if (uni == 0) return 0.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

int max_tp_recurse(const std::vector<Box>& dets, const std::vector<Box>& gts,
                   double threshold, std::size_t next_det, std::vector<bool>& used) {
    if (next_det == dets.size()) return 0;
    // Option 1: this detection matches nothing.
    int best = max_tp_recurse(dets, gts, threshold, next_det + 1, used);
    // Option 2: it takes any free ground truth it clears the threshold with.
    for (std::size_t g = 0; g < gts.size(); ++g) {
        if (used[g]) continue;
        if (iou_reference(dets[next_det], gts[g]) < threshold) continue;
        used[g] = true;
        best = std::max(best, 1 + max_tp_recurse(dets, gts, threshold, next_det + 1, used));
        used[g] = false;
    }
    return best;
}

}  // namespace

int max_assignment_tp(const std::vector<Box>& detections, const std::vector<Box>& gts,
                      double threshold) {
    std::vector<bool> used(gts.size(), false);
    return max_tp_recurse(detections, gts, threshold, 0, used);
}

namespace {

struct SweepPoint {
    double score;
    std::string image_id;
    std::size_t order;  // input order within the image
    bool tp;
};

// Per-image greedy matching exactly as specified, nothing shared with the
// library implementation.
std::vector<bool> greedy_flags(const std::vector<Det>& dets, const std::vector<Box>& gts,
                               double threshold) {
    std::vector<std::size_t> order(dets.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

    std::vector<bool> taken(gts.size(), false);
    std::vector<bool> tp(dets.size(), false);
    for (std::size_t d : order) {
        int choice = -1;
        double best_iou = -1.0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[g]) continue;
            const double o = iou_reference(dets[d].box, gts[g]);
            if (o >= threshold && o > best_iou) {
                best_iou = o;
                choice = static_cast<int>(g);
            }
        }
        if (choice >= 0) {
            taken[choice] = true;
            tp[d] = true;
        }
    }
    return tp;
}

}  // namespace

double reference_average_precision(
    const std::map<std::string, std::vector<Box>>& ground_truth,
    const std::vector<Det>& detections, double threshold) {
    std::size_t total_gt = 0;
    for (const auto& [id, boxes] : ground_truth) total_gt += boxes.size();

    // Group detections per image, preserving input order.
    std::map<std::string, std::vector<Det>> per_image;
    for (const Det& d : detections) per_image[d.image_id].push_back(d);

    std::vector<SweepPoint> sweep;
    for (const auto& [image_id, dets] : per_image) {
        auto it = ground_truth.find(image_id);
        const std::vector<Box> gts = it == ground_truth.end() ? std::vector<Box>{} : it->second;
        const std::vector<bool> tp = greedy_flags(dets, gts, threshold);
        for (std::size_t i = 0; i < dets.size(); ++i) {
            sweep.push_back({dets[i].score, image_id, i, tp[i]});
        }
    }

    std::sort(sweep.begin(), sweep.end(), [](const SweepPoint& a, const SweepPoint& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.image_id != b.image_id) return a.image_id < b.image_id;
        return a.order < b.order;
    });

    std::vector<double> precision;
    std::vector<double> recall;
    std::size_t tp_count = 0;
    std::size_t fp_count = 0;
    for (const SweepPoint& p : sweep) {
        if (p.tp) {
            ++tp_count;
        } else {
            ++fp_count;
        }
        precision.push_back(static_cast<double>(tp_count) /
                            static_cast<double>(tp_count + fp_count));
        recall.push_back(static_cast<double>(tp_count) / static_cast<double>(total_gt));
    }

    double sum = 0.0;
    for (int k = 0; k <= 100; ++k) {
        const double r = static_cast<double>(k) / 100.0;
        double best = 0.0;
        for (std::size_t i = 0; i < precision.size(); ++i) {
            if (recall[i] >= r && precision[i] > best) best = precision[i];
        }
        sum += best;
    }
    return sum / 101.0;
}

ReferenceReport reference_ap_range(
    const std::map<std::string, std::vector<Box>>& ground_truth,
    const std::vector<Det>& detections) {
    ReferenceReport report;
    double sum = 0.0;
    for (int i = 0; i < 10; ++i) {
        const double threshold = (50 + 5 * i) / 100.0;
        const double ap = reference_average_precision(ground_truth, detections, threshold);
        report.per_threshold.push_back(ap);
        sum += ap;
    }
    report.ap_at_50 = report.per_threshold.front();
    report.ap_50_95 = sum / 10.0;
    return report;
}

}  // namespace oracle
