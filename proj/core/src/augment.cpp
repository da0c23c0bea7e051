#include "toothseg/augment.hpp"

#include <algorithm>
#include <cmath>

#include "toothseg/rng.hpp"

namespace toothseg {

CutoutResult cutout(const Volume& v, const CutoutSpec& spec, std::uint64_t seed) {
    v.validate();
    spec.validate();
    Rng rng(seed);
    CutoutResult out{v, std::nullopt};
    if (rng.uniform() >= spec.probability) return out;

    const auto& d = v.geom.dims;
    CutoutBox box;
    for (int ax = 0; ax < 3; ++ax) {
        const int len = d[ax];
        const int lo = static_cast<int>(std::ceil(spec.lo_frac * len));
        const int hi = static_cast<int>(std::floor(spec.hi_frac * len));
        box.side[ax] = rng.uniform_int(std::max(1, lo), std::max(std::max(1, lo), hi));
    }
    for (int ax = 0; ax < 3; ++ax) {
        const int center = rng.uniform_int(0, d[ax] - 1);
        const int start = center - box.side[ax] / 2;
        box.lo[ax] = std::max(0, start);
        box.hi[ax] = std::min(d[ax] - 1, start + box.side[ax] - 1);
    }
    for (int k = box.lo[2]; k <= box.hi[2]; ++k)
        for (int j = box.lo[1]; j <= box.hi[1]; ++j)
            for (int i = box.lo[0]; i <= box.hi[0]; ++i) out.volume.at(i, j, k) = spec.fill;
    out.box = box;
    return out;
}

namespace {

struct Affine {
    // world -> world forward map: p' = R * (p - c) * s + c + t
    std::array<double, 9> rot;
    Vec3 center, translate;
    double scale;

    Vec3 inverse_apply(const Vec3& p) const {
        const Vec3 q = (p - center - translate) / scale;
        // R^T q
        return Vec3{rot[0] * q.x + rot[3] * q.y + rot[6] * q.z,
                    rot[1] * q.x + rot[4] * q.y + rot[7] * q.z,
                    rot[2] * q.x + rot[5] * q.y + rot[8] * q.z} +
               center;
    }
};

std::array<double, 9> rotation_zyx(double rx_deg, double ry_deg, double rz_deg) {
    const double ax = rx_deg * M_PI / 180.0, ay = ry_deg * M_PI / 180.0,
                 az = rz_deg * M_PI / 180.0;
    const double cx = std::cos(ax), sx = std::sin(ax);
    const double cy = std::cos(ay), sy = std::sin(ay);
    const double cz = std::cos(az), sz = std::sin(az);
    // Rz * Ry * Rx
    return {cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx,
            sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx,
            -sy,     cy * sx,                cy * cx};
}

}  // namespace

AffineResult random_affine(const Volume& v, const BinaryMask* labels, const AffineSpec& spec,
                           std::uint64_t seed) {
    v.validate();
    spec.validate();
    if (labels) {
        labels->validate();
        if (!(labels->geom == v.geom))
            throw std::invalid_argument("random_affine: mask geometry differs from volume");
    }

    Rng rng(seed);
    AffineResult out;
    if (rng.uniform() >= spec.probability) {
        out.volume = v;
        if (labels) out.mask = *labels;
        return out;
    }

    const double rx = rng.uniform(-spec.max_rotate_deg, spec.max_rotate_deg);
    const double ry = rng.uniform(-spec.max_rotate_deg, spec.max_rotate_deg);
    const double rz = rng.uniform(-spec.max_rotate_deg, spec.max_rotate_deg);
    const double s = rng.uniform(1.0 - spec.max_scale_frac, 1.0 + spec.max_scale_frac);

    const Vec3 lo = v.geom.extent_min(), hi = v.geom.extent_max();
    Affine a;
    a.rot = rotation_zyx(rx, ry, rz);
    a.center = (lo + hi) * 0.5;
    a.scale = s;
    for (int ax = 0; ax < 3; ++ax)
        a.translate[ax] =
            rng.uniform(-spec.max_translate_frac, spec.max_translate_frac) * (hi[ax] - lo[ax]);

    out.applied = true;
    out.volume = Volume(v.geom);
    if (labels) out.mask = BinaryMask(labels->geom);

    const auto& d = v.geom.dims;
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) {
                const Vec3 src = a.inverse_apply(v.geom.voxel_center(i, j, k));
                const Vec3 ci = v.geom.continuous_index(src);
                out.volume.at(i, j, k) = sample_trilinear_ci(v, ci);
                if (labels) {
                    const int si = static_cast<int>(std::llround(ci.x));
                    const int sj = static_cast<int>(std::llround(ci.y));
                    const int sk = static_cast<int>(std::llround(ci.z));
                    out.mask->at(i, j, k) =
                        labels->geom.in_bounds(si, sj, sk) ? labels->at(si, sj, sk) : 0;
                }
            }
    return out;
}

Vec3 crop_index_to_world(const Box3& box, const Dims3& crop_dims, const Vec3& idx) {
    const Vec3 s = box.size();
    return {box.min_mm.x + (idx.x + 0.5) * s.x / crop_dims.nx,
            box.min_mm.y + (idx.z + 0.5) * s.y / crop_dims.nz,
            box.min_mm.z + (idx.y + 0.5) * s.z / crop_dims.ny};
}

Vec3 world_to_crop_index(const Box3& box, const Dims3& crop_dims, const Vec3& world) {
    const Vec3 s = box.size();
    Vec3 ci{(world.x - box.min_mm.x) / s.x * crop_dims.nx - 0.5,
            (world.z - box.min_mm.z) / s.z * crop_dims.ny - 0.5,
            (world.y - box.min_mm.y) / s.y * crop_dims.nz - 0.5};
    for (int ax = 0; ax < 3; ++ax) {
        const double r = std::round(ci[ax]);
        if (std::abs(ci[ax] - r) < 1e-7) ci[ax] = r;
    }
    return ci;
}

Volume standardize_crop(const Volume& v, const Box3& box, const Dims3& crop_dims) {
    v.validate();
    box.validate();
    const Vec3 vmin = v.geom.extent_min(), vmax = v.geom.extent_max();
    for (int ax = 0; ax < 3; ++ax)
        if (box.max_mm[ax] < vmin[ax] || box.min_mm[ax] > vmax[ax])
            throw std::invalid_argument("standardize_crop: box does not intersect the volume");

    GridGeom out_geom;
    out_geom.dims = crop_dims;
    out_geom.spacing = {box.size().x / crop_dims.nx, box.size().z / crop_dims.ny,
                        box.size().y / crop_dims.nz};
    out_geom.origin = {0, 0, 0};

    Volume out(out_geom);
    for (int k = 0; k < crop_dims.nz; ++k)
        for (int j = 0; j < crop_dims.ny; ++j)
            for (int i = 0; i < crop_dims.nx; ++i) {
                const Vec3 w = crop_index_to_world(box, crop_dims,
                                                   {static_cast<double>(i), static_cast<double>(j),
                                                    static_cast<double>(k)});
                out.at(i, j, k) = sample_trilinear_ci(v, v.geom.continuous_index(w));
            }
    return normalize01(out);
}

BinaryMask standardize_crop_mask(const LabelMap& labels, Label id, const Box3& box,
                                 const Dims3& crop_dims) {
    labels.validate();
    box.validate();
    GridGeom out_geom;
    out_geom.dims = crop_dims;
    out_geom.spacing = {box.size().x / crop_dims.nx, box.size().z / crop_dims.ny,
                        box.size().y / crop_dims.nz};
    out_geom.origin = {0, 0, 0};

    BinaryMask out(out_geom);
    for (int k = 0; k < crop_dims.nz; ++k)
        for (int j = 0; j < crop_dims.ny; ++j)
            for (int i = 0; i < crop_dims.nx; ++i) {
                const Vec3 w = crop_index_to_world(box, crop_dims,
                                                   {static_cast<double>(i), static_cast<double>(j),
                                                    static_cast<double>(k)});
                const Vec3 ci = labels.geom.continuous_index(w);
                out.at(i, j, k) = sample_nearest_ci(labels, ci) == id ? 1 : 0;
            }
    return out;
}

}  // namespace toothseg
