#pragma once

#include <span>

#include "toothseg/geometry.hpp"
#include "toothseg/volume.hpp"

namespace toothseg {

enum class Jaw { Upper, Lower };

/// One regressed (or annotated) point/line pair on the x-axis MIP image.
/// point_u indexes the image's first axis (volume y), point_v the second
/// (volume z). angle_deg, in (-90, 90], is the in-plane tilt of the line:
/// a line at angle a is the image of a z-aligned line under a rotation of
/// a degrees about the x axis (right-hand rule, +y toward +z), so a scene
/// tilted by a has poses with angle_deg = a.
struct PoseEstimate {
    double point_u = 0.0;
    double point_v = 0.0;
    double angle_deg = 0.0;
    Jaw jaw = Jaw::Upper;
};

struct PoseLossParams {
    double alpha = 0.1;
    double beta = 0.1;
};

/// Sum over pairs of the Euclidean point error, plus alpha times the sum of
/// absolute angle errors (degrees), plus beta times the squared weight norm.
double pose_loss(std::span<const PoseEstimate> truth, std::span<const PoseEstimate> pred,
                 const PoseLossParams& params, double weight_norm_sq);

/// Slab geometry for the volume-of-interest crop. depth_mm extends from the
/// regressed line toward the roots, margin_mm past the crowns on the other
/// side. The default output grid is 224 x 224 x 112.
struct VoiSpec {
    double depth_mm = 12.0;
    double margin_mm = 2.0;
    Dims3 out_dims{224, 224, 112};

    void validate() const {
        if (!(depth_mm > 0)) throw std::invalid_argument("voi: depth_mm must be > 0");
        if (margin_mm < 0) throw std::invalid_argument("voi: margin_mm must be >= 0");
        GridGeom{out_dims, {1, 1, 1}, {}}.validate();
    }
};

struct VoiResult {
    Volume volume;
    /// Source world -> VOI world. Resampling the source with this transform
    /// onto voi_geom() reproduces the (pre-flip) crop.
    RigidTransform source_to_voi;
    /// Lower-jaw VOIs are mirrored along y after resampling so that all teeth
    /// point the same way; the mirror is voxel-space flip_y, not part of the
    /// rigid transform.
    bool y_flipped = false;

    const GridGeom& voi_geom() const { return volume.geom; }
};

/// Rotates the volume about the x axis so the regressed line becomes
/// z-aligned, crops a slab of depth_mm + margin_mm anchored at the regressed
/// point, resamples to spec.out_dims, and y-flips lower-jaw results.
/// Throws if the slab lies entirely outside the volume.
VoiResult realign_voi(const Volume& v, const PoseEstimate& pose, const VoiSpec& spec);

/// Nearest-neighbor label resampling under the transform returned by
/// realign_voi (or any other rigid map). The output label set is a subset of
/// the input's.
LabelMap apply_to_labels(const LabelMap& labels, const RigidTransform& world_map,
                         const GridGeom& out_geom);

/// Labels following a full VoiResult, including the lower-jaw mirror.
LabelMap realign_labels(const LabelMap& labels, const VoiResult& voi);

}  // namespace toothseg
