#pragma once

#include <cstdint>
#include <vector>

#include "toothseg/distance_field.hpp"
#include "toothseg/volume.hpp"

namespace toothseg {

struct ConfusionCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
};

struct F1Result {
    double precision = 0.0;
    double sensitivity = 0.0;
    double f1 = 0.0;
};

/// Precision, sensitivity and their harmonic mean. Throws when tp+fp or
/// tp+fn is zero.
F1Result f1(const ConfusionCounts& counts);

ConfusionCounts confusion(const BinaryMask& gt, const BinaryMask& pred);

/// Aggregated Jaccard index. Ground-truth instances are matched greedily in
/// ascending label order to the unused prediction maximizing the Jaccard
/// index (ties to the smaller predicted label); unmatched predictions add
/// their size to the denominator, and an unmatched ground-truth instance
/// contributes its own size.
double aji(const LabelMap& gt, const LabelMap& pred);

/// Surface voxel centers in mm: foreground voxels with at least one
/// face-adjacent background neighbor (the grid border counts as background).
std::vector<Vec3> surface_voxels(const BinaryMask& mask);

/// Hausdorff distance in mm: the larger of the two directed maxima of
/// nearest-surface distances. Both masks must be nonempty and share a grid.
double hausdorff_mm(const BinaryMask& a, const BinaryMask& b);

/// Average symmetric surface distance in mm.
double assd_mm(const BinaryMask& a, const BinaryMask& b);

struct InstanceMetrics {
    Label gt_label = 0;
    Label matched_pred = 0;  // 0 when no prediction matched
    bool matched = false;
    double f1 = 0.0;
    double hd_mm = 0.0;    // valid only when matched
    double assd_mm = 0.0;  // valid only when matched
};

struct MetricsReport {
    std::vector<InstanceMetrics> per_instance;
    double f1_mean = 0.0;
    double f1_std = 0.0;  // population standard deviation
    double aji = 0.0;
    double hd_mm = 0.0;    // integrated (union of all instances)
    double assd_mm = 0.0;  // integrated
};

/// Per-instance F1/HD/ASSD with the AJI matching rule, plus surface metrics
/// on the pooled foregrounds. A ground-truth instance with no overlapping
/// prediction is reported with f1 = 0 rather than thrown.
MetricsReport per_instance_report(const LabelMap& gt, const LabelMap& pred);

}  // namespace toothseg
