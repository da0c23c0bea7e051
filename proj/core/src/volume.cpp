#include "toothseg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace toothseg {

Image2D mip_x(const Volume& v) {
    v.validate();
    const auto& d = v.geom.dims;
    Image2D out(d.ny, d.nz);
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j) {
            float m = -std::numeric_limits<float>::infinity();
            for (int i = 0; i < d.nx; ++i) m = std::max(m, v.at(i, j, k));
            out.at(j, k) = m;
        }
    return out;
}

Volume normalize01(const Volume& v) {
    v.validate();
    const auto [mn_it, mx_it] = std::minmax_element(v.data.begin(), v.data.end());
    const float mn = *mn_it, mx = *mx_it;
    Volume out(v.geom);
    if (mx == mn) return out;  // constant volume carries no information
    const float span = mx - mn;
    for (std::size_t n = 0; n < v.data.size(); ++n) out.data[n] = (v.data[n] - mn) / span;
    return out;
}

Label sample_nearest_ci(const LabelMap& labels, const Vec3& ci) {
    const int i = static_cast<int>(std::llround(ci.x));
    const int j = static_cast<int>(std::llround(ci.y));
    const int k = static_cast<int>(std::llround(ci.z));
    if (!labels.geom.in_bounds(i, j, k)) return 0;
    return labels.at(i, j, k);
}

namespace {

// Shared backward-warp loop. Exact integer hits reproduce source voxels
// bit-exactly thanks to the snapping in continuous_index().
template <typename Out, typename SampleFn>
void warp(Out& out, const RigidTransform& world_map, SampleFn&& sample) {
    const RigidTransform inv = world_map.inverse();
    const auto& d = out.geom.dims;
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) {
                const Vec3 w = out.geom.voxel_center(i, j, k);
                out.at(i, j, k) = sample(inv.apply(w));
            }
}

}  // namespace

Volume resample(const Volume& v, const RigidTransform& world_map, const GridGeom& out_geom,
                Interp mode) {
    v.validate();
    out_geom.validate();
    world_map.validate();
    Volume out(out_geom);
    if (mode == Interp::Trilinear) {
        warp(out, world_map,
             [&](const Vec3& w) { return sample_trilinear_ci(v, v.geom.continuous_index(w)); });
    } else {
        warp(out, world_map, [&](const Vec3& w) -> float {
            const Vec3 ci = v.geom.continuous_index(w);
            const int i = static_cast<int>(std::llround(ci.x));
            const int j = static_cast<int>(std::llround(ci.y));
            const int k = static_cast<int>(std::llround(ci.z));
            return v.geom.in_bounds(i, j, k) ? v.at(i, j, k) : 0.0f;
        });
    }
    return out;
}

LabelMap resample_labels(const LabelMap& labels, const RigidTransform& world_map,
                         const GridGeom& out_geom) {
    labels.validate();
    out_geom.validate();
    world_map.validate();
    LabelMap out(out_geom);
    warp(out, world_map,
         [&](const Vec3& w) { return sample_nearest_ci(labels, labels.geom.continuous_index(w)); });
    return out;
}

namespace {
template <typename T>
T flip_y_impl(const T& in) {
    in.validate();
    T out(in.geom);
    const auto& d = in.geom.dims;
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) out.at(i, j, k) = in.at(i, d.ny - 1 - j, k);
    return out;
}
}  // namespace

Volume flip_y(const Volume& v) { return flip_y_impl(v); }
LabelMap flip_y(const LabelMap& labels) { return flip_y_impl(labels); }

}  // namespace toothseg
