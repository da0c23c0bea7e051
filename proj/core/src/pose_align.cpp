#include "toothseg/pose_align.hpp"

#include <algorithm>
#include <cmath>

namespace toothseg {

double pose_loss(std::span<const PoseEstimate> truth, std::span<const PoseEstimate> pred,
                 const PoseLossParams& params, double weight_norm_sq) {
    if (truth.size() != pred.size())
        throw std::invalid_argument("pose_loss: truth/pred length mismatch");
    if (params.alpha < 0 || params.beta < 0)
        throw std::invalid_argument("pose_loss: alpha and beta must be >= 0");
    double point_term = 0.0, angle_term = 0.0;
    for (std::size_t n = 0; n < truth.size(); ++n) {
        point_term += std::hypot(truth[n].point_u - pred[n].point_u,
                                 truth[n].point_v - pred[n].point_v);
        angle_term += std::abs(truth[n].angle_deg - pred[n].angle_deg);
    }
    return point_term + params.alpha * angle_term + params.beta * weight_norm_sq;
}

VoiResult realign_voi(const Volume& v, const PoseEstimate& pose, const VoiSpec& spec) {
    v.validate();
    spec.validate();
    if (!(pose.angle_deg > -90.0 && pose.angle_deg <= 90.0))
        throw std::invalid_argument("realign_voi: angle_deg must be in (-90, 90]");

    const GridGeom& g = v.geom;
    // MIP pixel (u, v) -> world (y, z)
    const Vec3 pivot{g.origin.x, g.origin.y + pose.point_u * g.spacing.y,
                     g.origin.z + pose.point_v * g.spacing.z};

    // rotating by -angle brings the regressed line parallel to the z axis
    const RigidTransform to_voi = RigidTransform::about_x(-pose.angle_deg, pivot);

    // slab in realigned world: depth toward the roots, margin past the crowns
    const double y_lo =
        pose.jaw == Jaw::Upper ? pivot.y - spec.margin_mm : pivot.y - spec.depth_mm;
    const double y_hi =
        pose.jaw == Jaw::Upper ? pivot.y + spec.depth_mm : pivot.y + spec.margin_mm;

    const double x_len = g.dims.nx * g.spacing.x;
    const double z_len = g.dims.nz * g.spacing.z;
    const Vec3 crop_min{g.extent_min().x, y_lo, pivot.z - z_len / 2.0};
    const Vec3 crop_max{g.extent_min().x + x_len, y_hi, pivot.z + z_len / 2.0};

    // reject slabs that cannot touch the volume (AABB test on the rotated crop)
    {
        const RigidTransform from_voi = to_voi.inverse();
        Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
        for (int c = 0; c < 8; ++c) {
            const Vec3 corner{c & 1 ? crop_max.x : crop_min.x, c & 2 ? crop_max.y : crop_min.y,
                              c & 4 ? crop_max.z : crop_min.z};
            const Vec3 p = from_voi.apply(corner);
            for (int ax = 0; ax < 3; ++ax) {
                lo[ax] = std::min(lo[ax], p[ax]);
                hi[ax] = std::max(hi[ax], p[ax]);
            }
        }
        const Vec3 vmin = g.extent_min(), vmax = g.extent_max();
        for (int ax = 0; ax < 3; ++ax)
            if (hi[ax] < vmin[ax] || lo[ax] > vmax[ax])
                throw std::invalid_argument("realign_voi: crop slab lies outside the volume");
    }

    GridGeom voi_geom;
    voi_geom.dims = spec.out_dims;
    voi_geom.spacing = {(crop_max.x - crop_min.x) / spec.out_dims.nx,
                        (crop_max.y - crop_min.y) / spec.out_dims.ny,
                        (crop_max.z - crop_min.z) / spec.out_dims.nz};
    voi_geom.origin = crop_min + voi_geom.spacing * 0.5;

    VoiResult out;
    out.volume = resample(v, to_voi, voi_geom, Interp::Trilinear);
    out.source_to_voi = to_voi;
    out.y_flipped = pose.jaw == Jaw::Lower;
    if (out.y_flipped) out.volume = flip_y(out.volume);
    return out;
}

LabelMap apply_to_labels(const LabelMap& labels, const RigidTransform& world_map,
                         const GridGeom& out_geom) {
    return resample_labels(labels, world_map, out_geom);
}

LabelMap realign_labels(const LabelMap& labels, const VoiResult& voi) {
    LabelMap out = apply_to_labels(labels, voi.source_to_voi, voi.voi_geom());
    if (voi.y_flipped) out = flip_y(out);
    return out;
}

}  // namespace toothseg
