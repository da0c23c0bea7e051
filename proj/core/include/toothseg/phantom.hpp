#pragma once

#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include "toothseg/detector.hpp"
#include "toothseg/distance_field.hpp"
#include "toothseg/pose_align.hpp"
#include "toothseg/volume.hpp"

namespace toothseg {

/// Per-group tooth dimensions in mm. Tangential (along-arch) widths are
/// derived from the arch slot so teeth never collide; these set the radial
/// width and the crown/root lengths.
struct ToothSizes {
    double crown_radial_half = 2.6;
    double crown_len = 4.4;
    double root_len = 7.0;
    int root_lobes = 1;
};

struct PhantomSpec {
    // the default z extent stays under the 112-deep VOI span so realignment
    // never resamples coarser than the native grid; 0.25 mm voxels keep the
    // rotation staircase of nearest-neighbor label realignment small
    Dims3 dims{180, 152, 116};
    Vec3 spacing{0.25, 0.25, 0.25};
    int teeth_per_jaw = 14;  // even, <= 16
    double arch_bow_mm = 16.0;
    double arch_width_mm = 32.0;
    double occlusal_gap_mm = 3.0;
    double tilt_deg = 0.0;
    std::set<int> missing;
    std::set<int> metal;
    double noise_sigma = 0.01;
    std::uint64_t seed = 0;

    // crown + root lengths stay below the 12 mm slab depth even after the
    // +-6 % per-tooth size jitter
    ToothSizes one_rooted{1.9, 4.4, 6.8, 1};
    ToothSizes premolar{2.2, 4.1, 6.6, 2};
    ToothSizes molar{2.4, 4.0, 6.5, 2};

    float bone_value = 0.4f;
    float tooth_value = 0.7f;
    float metal_value = 2.0f;
    double bone_radius_mm = 3.5;

    void validate() const;
};

struct PhantomTruth {
    Volume volume;
    LabelMap labels;
    std::vector<Box3> boxes;          // tight, with FDI ids and groups
    std::vector<PoseEstimate> poses;  // one per jaw (upper first)
};

/// Builds the CBCT-like jaw phantom: teeth as tapered superellipsoids along
/// two parabolic arches, bone shell around the roots, optional metal crowns
/// with radial streak artifacts, Gaussian noise, and a whole-scene tilt about
/// the x axis. Deterministic under spec.seed.
PhantomTruth generate(const PhantomSpec& spec);

/// Ground-truth distance-regression targets: per tooth, the 2 mm-dilated
/// tight box and the clamped, normalized chamfer map of its mask in the
/// standard crop frame.
std::vector<std::pair<Box3, DistanceMap>> oracle_distance_targets(const PhantomTruth& truth,
                                                                  double dilate_mm = 2.0,
                                                                  double d_max_vox = 20.0,
                                                                  Dims3 crop_dims = {64, 64, 128});

}  // namespace toothseg
