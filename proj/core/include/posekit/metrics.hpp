#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "posekit/heatmap.hpp"

namespace posekit {

/// One ground-truth person crop and (optionally) the prediction matched to
/// it by id. Top-down evaluation: one prediction per instance.
struct EvalInstance {
    int64_t id = 0;
    KeypointSet gt;     // image space
    double area = 0.0;  // instance area used by the OKS denominator
    std::optional<KeypointSet> pred;
    double score = 0.0; // prediction confidence used for ranking
};

/// Per-joint k constants for the COCO 17-joint skeleton (k = 2*sigma with the
/// standard sigma table), version "coco17.v1".
std::span<const double> coco17_oks_k();

/// Mean over labeled gt joints of exp(-d^2 / (2 * area * k^2)). Joints with
/// gt visibility 0 are excluded. Throws ValueError when nothing is labeled.
double oks(const KeypointSet& pred, const KeypointSet& gt, double area,
           std::span<const double> per_joint_k);

struct EvalResult {
    double ap = 0.0;
    double ap50 = 0.0;
    double ap75 = 0.0;
    double ar = 0.0;
    std::vector<double> thresholds;
    std::vector<double> per_threshold_precision; // AP at each threshold
    std::vector<double> per_threshold_recall;

    std::string text() const;
    std::string json() const;
};

std::vector<double> default_oks_thresholds(); // 0.50:0.05:0.95

/// Score-ranked AP/AR over OKS thresholds. A prediction is a true positive at
/// threshold t iff its OKS >= t; AP(t) sums precision at each true-positive
/// rank divided by the number of gt instances; AP and AR average over
/// thresholds. Instances without labeled gt joints are ignored entirely.
/// An empty k table selects the COCO 17-joint constants.
EvalResult evaluate(const std::vector<EvalInstance>& instances,
                    std::vector<double> thresholds = default_oks_thresholds(),
                    std::span<const double> per_joint_k = {});

struct PckhResult {
    std::vector<double> per_joint;        // accuracy per joint over labeled instances
    std::vector<int64_t> per_joint_total; // labeled count per joint
    double mean = 0.0;                    // over all labeled (instance, joint) pairs
};

/// Head-normalized PCK: joint j of instance i is correct iff
/// ||pred - gt|| <= alpha * head_sizes[i] (inclusive boundary).
PckhResult pckh(const std::vector<KeypointSet>& preds, const std::vector<KeypointSet>& gts,
                std::span<const double> head_sizes, double alpha = 0.5);

} // namespace posekit
