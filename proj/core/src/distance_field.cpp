#include "toothseg/distance_field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "toothseg/augment.hpp"

namespace toothseg {

namespace {

struct SweepOffset {
    int di, dj, dk;
    int w;
};

// The 13 already-visited neighbors of a (k, j, i ascending) raster scan;
// weight 3/4/5 by the number of nonzero steps.
std::vector<SweepOffset> forward_half_mask() {
    std::vector<SweepOffset> offs;
    for (int dk = -1; dk <= 0; ++dk)
        for (int dj = -1; dj <= 1; ++dj)
            for (int di = -1; di <= 1; ++di) {
                const bool earlier = dk < 0 || (dk == 0 && (dj < 0 || (dj == 0 && di < 0)));
                if (!earlier) continue;
                const int steps = (di != 0) + (dj != 0) + (dk != 0);
                offs.push_back({di, dj, dk, steps == 1 ? 3 : steps == 2 ? 4 : 5});
            }
    return offs;
}

constexpr std::int32_t kInf = std::numeric_limits<std::int32_t>::max() / 2;

}  // namespace

DistanceMap chamfer_dt(const BinaryMask& mask) {
    mask.validate();
    const auto& d = mask.geom.dims;
    const std::size_t n = mask.geom.voxel_count();

    bool has_background = false;
    std::vector<std::int32_t> dist(n);
    for (std::size_t v = 0; v < n; ++v) {
        dist[v] = mask.data[v] ? kInf : 0;
        has_background |= !mask.data[v];
    }
    if (!has_background)
        throw std::invalid_argument("chamfer_dt: mask has no background voxel");

    static const std::vector<SweepOffset> half = forward_half_mask();

    auto sweep = [&](bool forward) {
        const int k0 = forward ? 0 : d.nz - 1, k1 = forward ? d.nz : -1, ks = forward ? 1 : -1;
        const int j0 = forward ? 0 : d.ny - 1, j1 = forward ? d.ny : -1;
        const int i0 = forward ? 0 : d.nx - 1, i1 = forward ? d.nx : -1;
        const int sgn = forward ? 1 : -1;
        for (int k = k0; k != k1; k += ks)
            for (int j = j0; j != j1; j += ks)
                for (int i = i0; i != i1; i += ks) {
                    std::int32_t best = dist[mask.geom.index(i, j, k)];
                    if (best == 0) continue;
                    for (const auto& o : half) {
                        const int ii = i + sgn * o.di, jj = j + sgn * o.dj, kk = k + sgn * o.dk;
                        if (!mask.geom.in_bounds(ii, jj, kk)) continue;
                        best = std::min(best, dist[mask.geom.index(ii, jj, kk)] + o.w);
                    }
                    dist[mask.geom.index(i, j, k)] = best;
                }
    };
    sweep(true);
    sweep(false);

    DistanceMap out(mask.geom);
    for (std::size_t v = 0; v < n; ++v) out.data[v] = static_cast<float>(dist[v]) / 3.0f;
    return out;
}

DistanceMap regression_target(const BinaryMask& mask, double d_max_vox) {
    if (!(d_max_vox > 0)) throw std::invalid_argument("regression_target: d_max_vox must be > 0");
    DistanceMap dm = chamfer_dt(mask);
    const float d_max = static_cast<float>(d_max_vox);
    for (auto& v : dm.data) v = std::min(v, d_max) / d_max;
    return dm;
}

double mse_loss(const DistanceMap& pred, const DistanceMap& target, double weight_norm_sq,
                double alpha) {
    if (!(pred.geom.dims == target.geom.dims))
        throw std::invalid_argument("mse_loss: dimension mismatch");
    double acc = 0.0;
    for (std::size_t v = 0; v < pred.data.size(); ++v) {
        const double e = static_cast<double>(pred.data[v]) - static_cast<double>(target.data[v]);
        acc += e * e;
    }
    return acc / static_cast<double>(pred.data.size()) + alpha * weight_norm_sq;
}

BinaryMask binarize(const DistanceMap& pred, double tau_vox) {
    if (tau_vox < 0) throw std::invalid_argument("binarize: tau_vox must be >= 0");
    BinaryMask out(pred.geom);
    for (std::size_t v = 0; v < pred.data.size(); ++v)
        out.data[v] = pred.data[v] > tau_vox ? 1 : 0;
    return out;
}

LabelMap assemble(std::span<const std::pair<Box3, DistanceMap>> instances, const GridGeom& canvas,
                  double tau_vox) {
    canvas.validate();
    LabelMap out(canvas);
    std::vector<float> best(canvas.voxel_count(), 0.0f);

    const Vec3 cmin = canvas.extent_min(), cmax = canvas.extent_max();
    for (std::size_t n = 0; n < instances.size(); ++n) {
        const auto& [box, dm] = instances[n];
        box.validate();
        for (int ax = 0; ax < 3; ++ax)
            if (box.min_mm[ax] < cmin[ax] - 1e-9 || box.max_mm[ax] > cmax[ax] + 1e-9)
                throw std::invalid_argument("assemble: instance box leaves the canvas");

        const Label label = box.tooth_id ? static_cast<Label>(*box.tooth_id)
                                         : static_cast<Label>(n + 1);

        // canvas index range covered by the box
        int lo[3], hi[3];
        for (int ax = 0; ax < 3; ++ax) {
            lo[ax] = std::max(0, static_cast<int>(std::ceil(
                                     (box.min_mm[ax] - canvas.origin[ax]) / canvas.spacing[ax] -
                                     1e-9)));
            hi[ax] = std::min(canvas.dims[ax] - 1,
                              static_cast<int>(std::floor(
                                  (box.max_mm[ax] - canvas.origin[ax]) / canvas.spacing[ax] +
                                  1e-9)));
        }

        for (int k = lo[2]; k <= hi[2]; ++k)
            for (int j = lo[1]; j <= hi[1]; ++j)
                for (int i = lo[0]; i <= hi[0]; ++i) {
                    const Vec3 w = canvas.voxel_center(i, j, k);
                    if (!box.contains(w)) continue;
                    const Vec3 ci = world_to_crop_index(box, dm.geom.dims, w);
                    const float v = sample_trilinear_ci(dm, ci);
                    if (v > tau_vox && v > best[canvas.index(i, j, k)]) {
                        best[canvas.index(i, j, k)] = v;
                        out.at(i, j, k) = label;
                    }
                }
    }
    return out;
}

}  // namespace toothseg
