#pragma once

// Brute-force reference implementations, kept deliberately independent of the
// library's evaluation path. Everything here is written straight from the
// metric definitions with naive scans; the main implementation must agree
// with these, never the other way around.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace oracle {

struct Box {
    double x, y, w, h;
};

struct Det {
    std::string image_id;
    Box box;
    double score;
};

// Continuous-coordinate IoU, written independently of the library.
double iou_reference(const Box& a, const Box& b);

// Lattice-cell counting IoU for integer boxes: a unit cell (i, j) belongs to
// a box iff x <= i < x+w and y <= j < y+h. Counts cells with plain loops.
double iou_pixel_count(int ax, int ay, int aw, int ah, int bx, int by, int bw, int bh);

// Maximum number of detection->ground-truth matches over every injective
// assignment with IoU >= threshold, by exhaustive enumeration. Only sane for
// tiny instances.
int max_assignment_tp(const std::vector<Box>& detections, const std::vector<Box>& gts,
                      double threshold);

// Average precision at one IoU threshold: per-image greedy matching
// (descending score, ties by per-image input order; best remaining IoU, ties
// to the lowest ground-truth index), global sweep ordered by
// (score desc, image_id asc, input order asc), 101-point interpolation by a
// full scan per grid point.
double reference_average_precision(const std::map<std::string, std::vector<Box>>& ground_truth,
                                   const std::vector<Det>& detections, double threshold);

struct ReferenceReport {
    double ap_at_50 = 0.0;
    double ap_50_95 = 0.0;
    std::vector<double> per_threshold;
};

ReferenceReport reference_ap_range(const std::map<std::string, std::vector<Box>>& ground_truth,
                                   const std::vector<Det>& detections);

}  // namespace oracle
