#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace toothseg {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double operator[](int a) const { return a == 0 ? x : (a == 1 ? y : z); }
    double& operator[](int a) { return a == 0 ? x : (a == 1 ? y : z); }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }

    bool operator==(const Vec3&) const = default;
};

struct Dims3 {
    int nx = 0;
    int ny = 0;
    int nz = 0;

    int operator[](int a) const { return a == 0 ? nx : (a == 1 ? ny : nz); }
    bool operator==(const Dims3&) const = default;
    std::size_t total() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
               static_cast<std::size_t>(nz);
    }
};

/// Regular voxel grid in world millimeters. Voxel (i,j,k) has its *center* at
/// origin + (i*sx, j*sy, k*sz); data is stored x-fastest.
struct GridGeom {
    Dims3 dims;
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};

    bool operator==(const GridGeom&) const = default;

    void validate() const {
        if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1)
            throw std::invalid_argument("grid dims must be >= 1 per axis");
        if (!(spacing.x > 0.0 && spacing.y > 0.0 && spacing.z > 0.0))
            throw std::invalid_argument("grid spacing must be > 0 per axis");
    }

    std::size_t voxel_count() const { return dims.total(); }

    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims.nx) *
                   (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims.ny) * k);
    }

    bool in_bounds(int i, int j, int k) const {
        return i >= 0 && i < dims.nx && j >= 0 && j < dims.ny && k >= 0 && k < dims.nz;
    }

    Vec3 voxel_center(int i, int j, int k) const {
        return {origin.x + i * spacing.x, origin.y + j * spacing.y, origin.z + k * spacing.z};
    }

    /// Continuous voxel index of a world point. Values within 1e-7 of an
    /// integer are snapped so that voxel centers round-trip exactly.
    Vec3 continuous_index(const Vec3& world) const {
        Vec3 ci{(world.x - origin.x) / spacing.x, (world.y - origin.y) / spacing.y,
                (world.z - origin.z) / spacing.z};
        for (int a = 0; a < 3; ++a) {
            const double r = std::round(ci[a]);
            if (std::abs(ci[a] - r) < 1e-7) ci[a] = r;
        }
        return ci;
    }

    /// World-space extent covered by the voxels, including the half-voxel
    /// border around the outermost centers.
    Vec3 extent_min() const { return origin - spacing * 0.5; }
    Vec3 extent_max() const {
        return {origin.x + (dims.nx - 0.5) * spacing.x, origin.y + (dims.ny - 0.5) * spacing.y,
                origin.z + (dims.nz - 0.5) * spacing.z};
    }
};

/// Proper rigid motion: world' = rotation * world + translation.
/// Rows are stored row-major; columns must be orthonormal with det = +1.
struct RigidTransform {
    std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
    Vec3 translation{0.0, 0.0, 0.0};

    static RigidTransform identity() { return {}; }

    /// Rotation by `angle_deg` about the x-axis line through `pivot`
    /// (pivot.x is irrelevant). Positive angles rotate +y toward +z.
    static RigidTransform about_x(double angle_deg, const Vec3& pivot);

    Vec3 apply(const Vec3& p) const {
        return {rotation[0] * p.x + rotation[1] * p.y + rotation[2] * p.z + translation.x,
                rotation[3] * p.x + rotation[4] * p.y + rotation[5] * p.z + translation.y,
                rotation[6] * p.x + rotation[7] * p.y + rotation[8] * p.z + translation.z};
    }

    RigidTransform inverse() const;
    RigidTransform then(const RigidTransform& next) const;  // next ∘ this

    /// Throws unless columns are orthonormal and det = +1 (tolerance 1e-9).
    void validate() const;
};

}  // namespace toothseg
