#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "toothseg/geometry.hpp"
#include "toothseg/volume.hpp"

namespace toothseg {

/// Anatomical grouping of teeth for multiclass detection targets. Metal
/// restorations form their own class and override anatomy; FDI positions
/// 1-3 (incisors and canines) are single-rooted.
enum class ToothGroup { Metal, OneRooted, Others };

/// Axis-aligned box in world millimeters. Containment is closed on all faces.
struct Box3 {
    Vec3 min_mm;
    Vec3 max_mm;
    std::optional<int> tooth_id;         // FDI code
    std::optional<ToothGroup> group;
    std::optional<double> score;

    Vec3 size() const { return max_mm - min_mm; }
    double volume() const {
        const Vec3 s = size();
        return s.x * s.y * s.z;
    }
    bool contains(const Vec3& p) const {
        return p.x >= min_mm.x && p.x <= max_mm.x && p.y >= min_mm.y && p.y <= max_mm.y &&
               p.z >= min_mm.z && p.z <= max_mm.z;
    }
    void validate() const {
        if (!(min_mm.x < max_mm.x && min_mm.y < max_mm.y && min_mm.z < max_mm.z))
            throw std::invalid_argument("box: min must be componentwise < max");
    }
};

/// Intersection over union; symmetric, in [0, 1].
double iou(const Box3& a, const Box3& b);

/// Greedy non-maximum suppression. Boxes are taken in descending score order
/// (ties by input index); a box is kept iff its IoU with every already kept
/// box is <= iou_threshold. Kept boxes preserve descending score order.
std::vector<Box3> nms(std::vector<Box3> boxes, double iou_threshold);

/// Metal if is_metal, OneRooted for FDI positions 1-3, Others otherwise.
/// Throws on invalid FDI codes (quadrant 1-4, position 1-8).
ToothGroup assign_group(int tooth_id, bool is_metal);

/// Grows the box by margin_mm on every face, clamped to bounds.
Box3 dilate(const Box3& b, double margin_mm, const Box3& bounds);

/// |a ∩ (∪ neighbors)| / |a|, evaluated by voxelizing `a` at grid_mm
/// resolution (cell centers anchored at a.min_mm).
double overlap_ratio(const Box3& a, std::span<const Box3> neighbors, double grid_mm = 0.1);

/// Fraction of the instance's foreground voxel centers that lie inside
/// `detected`. Throws if label `id` has no voxels.
double object_include_ratio(const LabelMap& labels, Label id, const Box3& detected);

/// Average precision at IoU 0.5: predictions sorted by descending score, each
/// greedily matched one-to-one to the highest-IoU unmatched ground-truth box,
/// precision-recall curve integrated with all-point interpolation.
double average_precision_50(std::span<const Box3> gt, std::span<const Box3> pred);

struct SamplerConfig {
    double t_pos = 0.5;
    double t_neg = 0.1;
    double nms_iou = 0.3;
    int max_pos = 32;
    int max_neg = 32;
    std::uint64_t seed = 0;
};

struct RpnPositive {
    int anchor_index = -1;
    int gt_index = -1;
    double iou_to_gt = 0.0;
    ToothGroup group = ToothGroup::Others;
    bool forced = false;  // fallback best-anchor; exempt from the pairwise IoU bound
};

struct RpnTargets {
    std::vector<RpnPositive> positives;
    std::vector<int> negative_indices;  // into the anchor list
};

/// NMS-based true-example mining for region-proposal training. Anchors whose
/// best IoU against ground truth reaches t_pos become candidates scored by
/// that IoU; NMS at nms_iou thins them; the result is truncated to max_pos.
/// Any ground-truth box left unrepresented gets its best unused anchor
/// force-included. Negatives are drawn uniformly (seeded) from anchors with
/// best IoU <= t_neg, up to max_neg.
RpnTargets sample_rpn_targets(std::span<const Box3> anchors, std::span<const Box3> gt,
                              const SamplerConfig& cfg);

/// Regular anchor lattice: one anchor per base size centered on every stride
/// point whose center lies inside `extent`.
struct AnchorGrid {
    std::vector<Vec3> base_sizes_mm{{6, 6, 6}, {8, 8, 8}, {11, 11, 11}};
    Vec3 stride_mm{4, 4, 4};
    Box3 extent;

    std::vector<Box3> generate() const;
};

/// Tight axis-aligned boxes around each instance (voxel extents, i.e. the
/// outermost labeled voxel centers plus half a voxel); tooth_id = label.
std::vector<Box3> boxes_from_labels(const LabelMap& labels);

}  // namespace toothseg
