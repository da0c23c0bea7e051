#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "toothseg/detector.hpp"
#include "toothseg/distance_field.hpp"
#include "toothseg/geometry.hpp"
#include "toothseg/volume.hpp"

namespace toothseg {

/// Cutout: a randomly sized zero box with per-axis side between lo_frac and
/// hi_frac of the axis length, centered anywhere on the grid (clipped at the
/// borders).
struct CutoutSpec {
    double probability = 0.8;
    double lo_frac = 1.0 / 5.0;
    double hi_frac = 1.0 / 4.0;
    float fill = 0.0f;

    void validate() const {
        if (!(probability >= 0.0 && probability <= 1.0))
            throw std::invalid_argument("cutout: probability must be in [0, 1]");
        if (!(0.0 < lo_frac && lo_frac <= hi_frac && hi_frac < 1.0))
            throw std::invalid_argument("cutout: need 0 < lo_frac <= hi_frac < 1");
    }
};

/// Voxel-index box, inclusive on both ends, plus the drawn (unclipped) sides.
struct CutoutBox {
    std::array<int, 3> lo{};
    std::array<int, 3> hi{};
    std::array<int, 3> side{};
};

struct CutoutResult {
    Volume volume;
    std::optional<CutoutBox> box;  // nullopt when the probability gate skipped
};

/// Draw order under the seed: gate, sides (x,y,z), center (x,y,z).
CutoutResult cutout(const Volume& v, const CutoutSpec& spec, std::uint64_t seed);

struct AffineSpec {
    double probability = 0.8;
    double max_rotate_deg = 10.0;
    double max_scale_frac = 0.1;
    double max_translate_frac = 0.05;

    void validate() const {
        if (!(probability >= 0.0 && probability <= 1.0))
            throw std::invalid_argument("affine: probability must be in [0, 1]");
        if (max_rotate_deg < 0 || max_scale_frac < 0 || max_translate_frac < 0)
            throw std::invalid_argument("affine: magnitudes must be >= 0");
    }
};

struct AffineResult {
    Volume volume;
    std::optional<BinaryMask> mask;
    bool applied = false;
};

/// Random rotation (per-axis, +-max_rotate_deg, applied z*y*x about the
/// volume center), isotropic scale in 1 +- max_scale_frac, and translation of
/// +-max_translate_frac of the extent per axis. Volume samples trilinearly,
/// the mask nearest, both under the same transform. Draw order: gate,
/// rotations (x,y,z), scale, translations (x,y,z).
AffineResult random_affine(const Volume& v, const BinaryMask* labels, const AffineSpec& spec,
                           std::uint64_t seed);

/// The standard tooth-crop frame: the box is resampled to crop_dims with the
/// tooth (volume y) axis mapped to the crop's z axis and the volume z axis to
/// the crop's y axis, so the long 128-voxel axis runs along the tooth.
Vec3 crop_index_to_world(const Box3& box, const Dims3& crop_dims, const Vec3& idx);
Vec3 world_to_crop_index(const Box3& box, const Dims3& crop_dims, const Vec3& world);

/// Crops `box` from the volume into the standard 64 x 64 x 128 frame
/// (trilinear) and normalizes the result to [0, 1]. Throws if the box does
/// not intersect the volume.
Volume standardize_crop(const Volume& v, const Box3& box, const Dims3& crop_dims = {64, 64, 128});

/// Same geometry for one instance's mask, nearest-neighbor.
BinaryMask standardize_crop_mask(const LabelMap& labels, Label id, const Box3& box,
                                 const Dims3& crop_dims = {64, 64, 128});

}  // namespace toothseg
