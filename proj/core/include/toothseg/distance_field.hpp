#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "toothseg/detector.hpp"
#include "toothseg/geometry.hpp"
#include "toothseg/volume.hpp"

namespace toothseg {

/// Per-voxel {0,1} mask on a world grid.
struct BinaryMask {
    GridGeom geom;
    std::vector<std::uint8_t> data;

    BinaryMask() = default;
    explicit BinaryMask(const GridGeom& g) : geom(g), data(g.voxel_count(), 0) { g.validate(); }

    std::uint8_t at(int i, int j, int k) const { return data[geom.index(i, j, k)]; }
    std::uint8_t& at(int i, int j, int k) { return data[geom.index(i, j, k)]; }

    void validate() const {
        geom.validate();
        if (data.size() != geom.voxel_count())
            throw std::invalid_argument("mask: data length != nx*ny*nz");
    }
};

/// Nonnegative per-voxel distances in voxel units (one face step = 1).
struct DistanceMap {
    GridGeom geom;
    std::vector<float> data;

    DistanceMap() = default;
    explicit DistanceMap(const GridGeom& g) : geom(g), data(g.voxel_count(), 0.0f) {
        g.validate();
    }

    float at(int i, int j, int k) const { return data[geom.index(i, j, k)]; }
    float& at(int i, int j, int k) { return data[geom.index(i, j, k)]; }
};

/// Chamfer distance transform with local weights 3 (face), 4 (edge),
/// 5 (corner), computed by one forward and one backward integer sweep and
/// divided by 3, so a single face step measures 1.0. Background voxels are
/// exactly 0; foreground voxels are > 0. Throws if the mask has no
/// background voxel.
DistanceMap chamfer_dt(const BinaryMask& mask);

/// chamfer_dt clamped at d_max_vox and divided by d_max_vox: regression
/// targets in [0, 1].
DistanceMap regression_target(const BinaryMask& mask, double d_max_vox);

/// Mean over voxels of (pred - target)^2 plus alpha * weight_norm_sq.
double mse_loss(const DistanceMap& pred, const DistanceMap& target, double weight_norm_sq,
                double alpha = 0.1);

/// voxel -> 1 iff pred > tau_vox.
BinaryMask binarize(const DistanceMap& pred, double tau_vox);

/// Pastes each instance's thresholded distance map into a label map on the
/// canvas grid. Each instance's map lives on the standard crop frame of its
/// box (see augment.hpp); canvas voxels inside the box sample it trilinearly.
/// A voxel claimed by several instances goes to the one with the larger
/// predicted distance there. Labels are the instance's tooth_id when present,
/// else 1-based position in the sequence. Throws if a box leaves the canvas.
LabelMap assemble(std::span<const std::pair<Box3, DistanceMap>> instances, const GridGeom& canvas,
                  double tau_vox);

}  // namespace toothseg
