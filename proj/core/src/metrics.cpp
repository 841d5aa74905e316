#include "posekit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

namespace posekit {

namespace {

// standard COCO keypoint sigmas, k = 2*sigma
constexpr double kCocoSigmas[17] = {0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072,
                                    0.072, 0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089, 0.089};

std::vector<double> make_coco_k() {
    std::vector<double> k(17);
    for (size_t i = 0; i < 17; ++i) k[i] = 2.0 * kCocoSigmas[i];
    return k;
}

} // namespace

std::span<const double> coco17_oks_k() {
    static const std::vector<double> k = make_coco_k();
    return k;
}

double oks(const KeypointSet& pred, const KeypointSet& gt, double area,
           std::span<const double> per_joint_k) {
    if (area <= 0.0) throw ValueError("oks: area must be positive");
    if (pred.size() != gt.size())
        throw ShapeError("oks: joint counts differ (" + std::to_string(pred.size()) + " vs " +
                         std::to_string(gt.size()) + ")");
    if (static_cast<int64_t>(per_joint_k.size()) != gt.size())
        throw ShapeError("oks: k table has " + std::to_string(per_joint_k.size()) +
                         " entries for " + std::to_string(gt.size()) + " joints");
    double acc = 0.0;
    int64_t labeled = 0;
    for (int64_t j = 0; j < gt.size(); ++j) {
        const Keypoint& g = gt.pts[static_cast<size_t>(j)];
        if (g.vis == 0) continue;
        const Keypoint& p = pred.pts[static_cast<size_t>(j)];
        const double dx = p.x - g.x;
        const double dy = p.y - g.y;
        const double k = per_joint_k[static_cast<size_t>(j)];
        acc += std::exp(-(dx * dx + dy * dy) / (2.0 * area * k * k));
        ++labeled;
    }
    if (labeled == 0) throw ValueError("oks: ground truth has no labeled joints");
    return acc / static_cast<double>(labeled);
}

std::vector<double> default_oks_thresholds() {
    std::vector<double> t;
    for (int i = 0; i <= 9; ++i) t.push_back(0.50 + 0.05 * i);
    return t;
}

EvalResult evaluate(const std::vector<EvalInstance>& instances, std::vector<double> thresholds,
                    std::span<const double> per_joint_k) {
    std::set<int64_t> ids;
    for (const auto& inst : instances)
        if (!ids.insert(inst.id).second)
            throw ValueError("evaluate: duplicate instance id " + std::to_string(inst.id));

    if (per_joint_k.empty()) per_joint_k = coco17_oks_k();

    // instances without labeled gt joints are excluded from both sides
    struct Scored {
        double oks;
        double score;
        int64_t id;
    };
    std::vector<Scored> scored;
    int64_t num_gt = 0;
    for (const auto& inst : instances) {
        if (inst.gt.labeled_count() == 0) continue;
        ++num_gt;
        if (inst.pred)
            scored.push_back({oks(*inst.pred, inst.gt, inst.area, per_joint_k), inst.score, inst.id});
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });

    EvalResult res;
    res.thresholds = thresholds;
    for (double t : thresholds) {
        double ap_t = 0.0;
        int64_t tp = 0;
        for (size_t k = 0; k < scored.size(); ++k) {
            if (scored[k].oks >= t) {
                ++tp;
                ap_t += static_cast<double>(tp) / static_cast<double>(k + 1);
            }
        }
        const double denom = num_gt > 0 ? static_cast<double>(num_gt) : 1.0;
        res.per_threshold_precision.push_back(num_gt > 0 ? ap_t / denom : 0.0);
        res.per_threshold_recall.push_back(num_gt > 0 ? static_cast<double>(tp) / denom : 0.0);
    }
    double ap_sum = 0.0, ar_sum = 0.0;
    for (size_t i = 0; i < thresholds.size(); ++i) {
        ap_sum += res.per_threshold_precision[i];
        ar_sum += res.per_threshold_recall[i];
        if (std::abs(thresholds[i] - 0.50) < 1e-9) res.ap50 = res.per_threshold_precision[i];
        if (std::abs(thresholds[i] - 0.75) < 1e-9) res.ap75 = res.per_threshold_precision[i];
    }
    if (!thresholds.empty()) {
        res.ap = ap_sum / static_cast<double>(thresholds.size());
        res.ar = ar_sum / static_cast<double>(thresholds.size());
    }
    return res;
}

PckhResult pckh(const std::vector<KeypointSet>& preds, const std::vector<KeypointSet>& gts,
                std::span<const double> head_sizes, double alpha) {
    if (preds.size() != gts.size() || gts.size() != head_sizes.size())
        throw ShapeError("pckh: preds/gts/head_sizes lengths differ");
    PckhResult res;
    if (gts.empty()) return res;
    const int64_t joints = gts.front().size();
    res.per_joint.assign(static_cast<size_t>(joints), 0.0);
    res.per_joint_total.assign(static_cast<size_t>(joints), 0);
    std::vector<int64_t> correct(static_cast<size_t>(joints), 0);

    for (size_t i = 0; i < gts.size(); ++i) {
        if (head_sizes[i] <= 0.0)
            throw ValueError("pckh: non-positive head size at instance " + std::to_string(i));
        if (gts[i].size() != joints || preds[i].size() != joints)
            throw ShapeError("pckh: joint count mismatch at instance " + std::to_string(i));
        for (int64_t j = 0; j < joints; ++j) {
            const Keypoint& g = gts[i].pts[static_cast<size_t>(j)];
            if (g.vis == 0) continue;
            const Keypoint& p = preds[i].pts[static_cast<size_t>(j)];
            const double d = std::hypot(p.x - g.x, p.y - g.y);
            res.per_joint_total[static_cast<size_t>(j)] += 1;
            if (d <= alpha * head_sizes[i]) correct[static_cast<size_t>(j)] += 1;
        }
    }
    int64_t total = 0, total_correct = 0;
    for (int64_t j = 0; j < joints; ++j) {
        total += res.per_joint_total[static_cast<size_t>(j)];
        total_correct += correct[static_cast<size_t>(j)];
        res.per_joint[static_cast<size_t>(j)] =
            res.per_joint_total[static_cast<size_t>(j)] > 0
                ? static_cast<double>(correct[static_cast<size_t>(j)]) /
                      static_cast<double>(res.per_joint_total[static_cast<size_t>(j)])
                : 0.0;
    }
    res.mean = total > 0 ? static_cast<double>(total_correct) / static_cast<double>(total) : 0.0;
    return res;
}

std::string EvalResult::text() const {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    os << "ap=" << ap << "\n";
    os << "ap50=" << ap50 << "\n";
    os << "ap75=" << ap75 << "\n";
    os << "ar=" << ar << "\n";
    for (size_t i = 0; i < thresholds.size(); ++i) {
        os << "precision@" << thresholds[i] << "=" << per_threshold_precision[i] << "\n";
        os << "recall@" << thresholds[i] << "=" << per_threshold_recall[i] << "\n";
    }
    return os.str();
}

std::string EvalResult::json() const {
    nlohmann::ordered_json j;
    j["ap"] = ap;
    j["ap50"] = ap50;
    j["ap75"] = ap75;
    j["ar"] = ar;
    j["thresholds"] = thresholds;
    j["precision"] = per_threshold_precision;
    j["recall"] = per_threshold_recall;
    return j.dump(2);
}

} // namespace posekit
