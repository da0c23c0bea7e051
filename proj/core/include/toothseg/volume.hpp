#pragma once

#include <cstdint>
#include <vector>

#include "toothseg/geometry.hpp"

namespace toothseg {

/// Dense 3D scalar grid, 32-bit float, x-fastest.
struct Volume {
    GridGeom geom;
    std::vector<float> data;

    Volume() = default;
    explicit Volume(const GridGeom& g) : geom(g), data(g.voxel_count(), 0.0f) { g.validate(); }

    float at(int i, int j, int k) const { return data[geom.index(i, j, k)]; }
    float& at(int i, int j, int k) { return data[geom.index(i, j, k)]; }

    void validate() const {
        geom.validate();
        if (data.size() != geom.voxel_count())
            throw std::invalid_argument("volume: data length != nx*ny*nz");
    }
};

using Label = std::uint16_t;

/// Dense 3D grid of per-voxel instance identifiers; 0 is background.
struct LabelMap {
    GridGeom geom;
    std::vector<Label> data;

    LabelMap() = default;
    explicit LabelMap(const GridGeom& g) : geom(g), data(g.voxel_count(), 0) { g.validate(); }

    Label at(int i, int j, int k) const { return data[geom.index(i, j, k)]; }
    Label& at(int i, int j, int k) { return data[geom.index(i, j, k)]; }

    void validate() const {
        geom.validate();
        if (data.size() != geom.voxel_count())
            throw std::invalid_argument("label map: data length != nx*ny*nz");
    }
};

/// Dense 2D scalar image, u-fastest.
struct Image2D {
    int nu = 0;
    int nv = 0;
    std::vector<float> data;

    Image2D() = default;
    Image2D(int u, int v) : nu(u), nv(v), data(static_cast<std::size_t>(u) * v, 0.0f) {}

    float at(int u, int v) const { return data[static_cast<std::size_t>(u) + nu * v]; }
    float& at(int u, int v) { return data[static_cast<std::size_t>(u) + nu * v]; }
};

enum class Interp { Trilinear, Nearest };

/// Maximum intensity projection along x. Output pixel (j,k) = max_i v(i,j,k);
/// image dims are (ny, nz).
Image2D mip_x(const Volume& v);

/// (v - min) / (max - min). A constant volume maps to all zeros.
Volume normalize01(const Volume& v);

/// Resamples `v` onto `out_geom`. `world_map` maps source world coordinates
/// to output world coordinates; each output voxel center samples the source
/// at world_map^-1(center). Samples outside the source grid are 0.
Volume resample(const Volume& v, const RigidTransform& world_map, const GridGeom& out_geom,
                Interp mode);

/// Nearest-neighbor label resampling under the same convention as resample().
LabelMap resample_labels(const LabelMap& labels, const RigidTransform& world_map,
                         const GridGeom& out_geom);

/// output(i,j,k) = input(i, ny-1-j, k).
Volume flip_y(const Volume& v);
LabelMap flip_y(const LabelMap& labels);

/// Trilinear sample at a continuous voxel index; out-of-grid contributions
/// are zero. Works for any float grid with .geom/.data (Volume,
/// DistanceMap); reused by the augmentation and assembly kernels.
template <typename FloatGrid>
float sample_trilinear_ci(const FloatGrid& v, const Vec3& ci) {
    const auto& d = v.geom.dims;
    const int i0 = static_cast<int>(std::floor(ci.x));
    const int j0 = static_cast<int>(std::floor(ci.y));
    const int k0 = static_cast<int>(std::floor(ci.z));
    const double fx = ci.x - i0, fy = ci.y - j0, fz = ci.z - k0;

    double acc = 0.0;
    for (int dk = 0; dk < 2; ++dk) {
        const int k = k0 + dk;
        if (k < 0 || k >= d.nz) continue;
        const double wz = dk ? fz : 1.0 - fz;
        if (wz == 0.0) continue;
        for (int dj = 0; dj < 2; ++dj) {
            const int j = j0 + dj;
            if (j < 0 || j >= d.ny) continue;
            const double wy = dj ? fy : 1.0 - fy;
            if (wy == 0.0) continue;
            for (int di = 0; di < 2; ++di) {
                const int i = i0 + di;
                if (i < 0 || i >= d.nx) continue;
                const double wx = di ? fx : 1.0 - fx;
                if (wx == 0.0) continue;
                acc += wx * wy * wz * v.data[v.geom.index(i, j, k)];
            }
        }
    }
    return static_cast<float>(acc);
}

Label sample_nearest_ci(const LabelMap& labels, const Vec3& ci);

}  // namespace toothseg
