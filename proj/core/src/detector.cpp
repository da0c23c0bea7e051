#include "toothseg/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "toothseg/rng.hpp"

namespace toothseg {

double iou(const Box3& a, const Box3& b) {
    a.validate();
    b.validate();
    double inter = 1.0;
    for (int ax = 0; ax < 3; ++ax) {
        const double lo = std::max(a.min_mm[ax], b.min_mm[ax]);
        const double hi = std::min(a.max_mm[ax], b.max_mm[ax]);
        if (hi <= lo) return 0.0;
        inter *= hi - lo;
    }
    return inter / (a.volume() + b.volume() - inter);
}

namespace {
std::vector<int> score_order(std::span<const Box3> boxes) {
    std::vector<int> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return boxes[a].score.value() > boxes[b].score.value();
    });
    return order;
}
}  // namespace

std::vector<Box3> nms(std::vector<Box3> boxes, double iou_threshold) {
    for (const auto& b : boxes) {
        b.validate();
        if (!b.score) throw std::invalid_argument("nms: every box needs a score");
    }
    std::vector<Box3> kept;
    for (int idx : score_order(boxes)) {
        bool suppressed = false;
        for (const auto& k : kept)
            if (iou(boxes[idx], k) > iou_threshold) {
                suppressed = true;
                break;
            }
        if (!suppressed) kept.push_back(boxes[idx]);
    }
    return kept;
}

ToothGroup assign_group(int tooth_id, bool is_metal) {
    const int quadrant = tooth_id / 10;
    const int position = tooth_id % 10;
    if (quadrant < 1 || quadrant > 4 || position < 1 || position > 8)
        throw std::invalid_argument("assign_group: invalid FDI code " + std::to_string(tooth_id));
    if (is_metal) return ToothGroup::Metal;
    return position <= 3 ? ToothGroup::OneRooted : ToothGroup::Others;
}

Box3 dilate(const Box3& b, double margin_mm, const Box3& bounds) {
    b.validate();
    bounds.validate();
    if (margin_mm < 0) throw std::invalid_argument("dilate: margin must be >= 0");
    Box3 out = b;
    for (int ax = 0; ax < 3; ++ax) {
        out.min_mm[ax] = std::max(b.min_mm[ax] - margin_mm, bounds.min_mm[ax]);
        out.max_mm[ax] = std::min(b.max_mm[ax] + margin_mm, bounds.max_mm[ax]);
    }
    out.validate();
    return out;
}

double overlap_ratio(const Box3& a, std::span<const Box3> neighbors, double grid_mm) {
    a.validate();
    if (grid_mm <= 0) throw std::invalid_argument("overlap_ratio: grid must be > 0");
    const Vec3 s = a.size();
    const int nx = std::max(1, static_cast<int>(std::ceil(s.x / grid_mm)));
    const int ny = std::max(1, static_cast<int>(std::ceil(s.y / grid_mm)));
    const int nz = std::max(1, static_cast<int>(std::ceil(s.z / grid_mm)));
    const double gx = s.x / nx, gy = s.y / ny, gz = s.z / nz;

    std::int64_t covered = 0;
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const Vec3 p{a.min_mm.x + (i + 0.5) * gx, a.min_mm.y + (j + 0.5) * gy,
                             a.min_mm.z + (k + 0.5) * gz};
                for (const auto& n : neighbors)
                    if (n.contains(p)) {
                        ++covered;
                        break;
                    }
            }
    return static_cast<double>(covered) / (static_cast<double>(nx) * ny * nz);
}

double object_include_ratio(const LabelMap& labels, Label id, const Box3& detected) {
    labels.validate();
    detected.validate();
    std::int64_t total = 0, inside = 0;
    const auto& d = labels.geom.dims;
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) {
                if (labels.at(i, j, k) != id) continue;
                ++total;
                if (detected.contains(labels.geom.voxel_center(i, j, k))) ++inside;
            }
    if (total == 0)
        throw std::invalid_argument("object_include_ratio: label " + std::to_string(id) +
                                    " has no voxels");
    return static_cast<double>(inside) / static_cast<double>(total);
}

double average_precision_50(std::span<const Box3> gt, std::span<const Box3> pred) {
    if (gt.empty()) throw std::invalid_argument("average_precision_50: empty ground truth");
    if (pred.empty()) return 0.0;

    const auto order = score_order(pred);
    std::vector<bool> gt_used(gt.size(), false);
    std::vector<double> precision, recall;
    int tp = 0;
    for (std::size_t n = 0; n < order.size(); ++n) {
        const Box3& p = pred[order[n]];
        int best = -1;
        double best_iou = 0.5;  // must reach the AP50 threshold
        for (std::size_t g = 0; g < gt.size(); ++g) {
            if (gt_used[g]) continue;
            const double v = iou(p, gt[g]);
            if (v >= best_iou) {
                best_iou = v;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0) {
            gt_used[best] = true;
            ++tp;
        }
        precision.push_back(static_cast<double>(tp) / static_cast<double>(n + 1));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(gt.size()));
    }

    // all-point interpolation: integrate the precision envelope over recall
    double ap = 0.0, env = 0.0;
    for (std::size_t n = precision.size(); n-- > 0;) {
        env = std::max(env, precision[n]);
        const double r_lo = n == 0 ? 0.0 : recall[n - 1];
        ap += (recall[n] - r_lo) * env;
    }
    return ap;
}

RpnTargets sample_rpn_targets(std::span<const Box3> anchors, std::span<const Box3> gt,
                              const SamplerConfig& cfg) {
    if (!(0.0 <= cfg.t_neg && cfg.t_neg < cfg.t_pos && cfg.t_pos <= 1.0))
        throw std::invalid_argument("sample_rpn_targets: need 0 <= t_neg < t_pos <= 1");

    const int na = static_cast<int>(anchors.size());
    const int ng = static_cast<int>(gt.size());

    // best gt per anchor, and best anchor per gt
    std::vector<double> best_iou(na, 0.0);
    std::vector<int> best_gt(na, -1);
    std::vector<double> gt_best_iou(ng, -1.0);
    std::vector<int> gt_best_anchor(ng, -1);
    for (int a = 0; a < na; ++a)
        for (int g = 0; g < ng; ++g) {
            const double v = iou(anchors[a], gt[g]);
            if (v > best_iou[a] || best_gt[a] < 0) {
                best_iou[a] = v;
                best_gt[a] = g;
            }
            if (v > gt_best_iou[g]) {
                gt_best_iou[g] = v;
                gt_best_anchor[g] = a;
            }
        }

    auto group_of = [&](int g) { return gt[g].group.value_or(ToothGroup::Others); };

    // candidate positives scored by their best IoU, thinned by NMS
    std::vector<int> cand;
    for (int a = 0; a < na; ++a)
        if (ng > 0 && best_iou[a] >= cfg.t_pos) cand.push_back(a);
    std::stable_sort(cand.begin(), cand.end(),
                     [&](int a, int b) { return best_iou[a] > best_iou[b]; });

    RpnTargets out;
    std::vector<bool> used(na, false);
    for (int a : cand) {
        if (static_cast<int>(out.positives.size()) >= cfg.max_pos) break;
        bool suppressed = false;
        for (const auto& p : out.positives)
            if (iou(anchors[a], anchors[p.anchor_index]) > cfg.nms_iou) {
                suppressed = true;
                break;
            }
        if (suppressed) continue;
        out.positives.push_back({a, best_gt[a], best_iou[a], group_of(best_gt[a]), false});
        used[a] = true;
    }

    // force-include the best unused anchor for any unrepresented gt
    std::vector<bool> represented(ng, false);
    for (const auto& p : out.positives) represented[p.gt_index] = true;
    for (int g = 0; g < ng; ++g) {
        if (represented[g]) continue;
        int pick = gt_best_anchor[g];
        if (pick < 0 || used[pick]) {
            pick = -1;
            double best = -1.0;
            for (int a = 0; a < na; ++a) {
                if (used[a]) continue;
                const double v = iou(anchors[a], gt[g]);
                if (v > best) {
                    best = v;
                    pick = a;
                }
            }
        }
        if (pick < 0) continue;  // every anchor already used
        out.positives.push_back({pick, g, iou(anchors[pick], gt[g]), group_of(g), true});
        used[pick] = true;
    }

    // seeded uniform negative sampling (partial Fisher-Yates)
    std::vector<int> negatives;
    for (int a = 0; a < na; ++a)
        if (!used[a] && best_iou[a] <= cfg.t_neg) negatives.push_back(a);
    Rng rng(cfg.seed);
    const int want = std::min<int>(cfg.max_neg, static_cast<int>(negatives.size()));
    for (int n = 0; n < want; ++n) {
        const int pick = rng.uniform_int(n, static_cast<int>(negatives.size()) - 1);
        std::swap(negatives[n], negatives[pick]);
        out.negative_indices.push_back(negatives[n]);
    }
    return out;
}

std::vector<Box3> AnchorGrid::generate() const {
    extent.validate();
    if (!(stride_mm.x > 0 && stride_mm.y > 0 && stride_mm.z > 0))
        throw std::invalid_argument("anchor grid: strides must be > 0");
    std::vector<Box3> anchors;
    for (double cz = extent.min_mm.z; cz <= extent.max_mm.z + 1e-9; cz += stride_mm.z)
        for (double cy = extent.min_mm.y; cy <= extent.max_mm.y + 1e-9; cy += stride_mm.y)
            for (double cx = extent.min_mm.x; cx <= extent.max_mm.x + 1e-9; cx += stride_mm.x)
                for (const Vec3& s : base_sizes_mm) {
                    Box3 b;
                    b.min_mm = {cx - s.x / 2, cy - s.y / 2, cz - s.z / 2};
                    b.max_mm = {cx + s.x / 2, cy + s.y / 2, cz + s.z / 2};
                    anchors.push_back(b);
                }
    return anchors;
}

std::vector<Box3> boxes_from_labels(const LabelMap& labels) {
    labels.validate();
    struct Extent {
        int lo[3] = {std::numeric_limits<int>::max(), std::numeric_limits<int>::max(),
                     std::numeric_limits<int>::max()};
        int hi[3] = {-1, -1, -1};
    };
    std::map<Label, Extent> extents;
    const auto& d = labels.geom.dims;
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) {
                const Label id = labels.at(i, j, k);
                if (id == 0) continue;
                auto& e = extents[id];
                const int idx[3] = {i, j, k};
                for (int ax = 0; ax < 3; ++ax) {
                    e.lo[ax] = std::min(e.lo[ax], idx[ax]);
                    e.hi[ax] = std::max(e.hi[ax], idx[ax]);
                }
            }
    std::vector<Box3> boxes;
    for (const auto& [id, e] : extents) {
        Box3 b;
        for (int ax = 0; ax < 3; ++ax) {
            b.min_mm[ax] = labels.geom.origin[ax] + (e.lo[ax] - 0.5) * labels.geom.spacing[ax];
            b.max_mm[ax] = labels.geom.origin[ax] + (e.hi[ax] + 0.5) * labels.geom.spacing[ax];
        }
        b.tooth_id = id;
        boxes.push_back(b);
    }
    return boxes;
}

}  // namespace toothseg
