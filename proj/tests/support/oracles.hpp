#pragma once

// Independent reference implementations used to verify the production
// kernels. Everything here is deliberately written from the definitions
// (shortest paths, all-pairs scans, direct loops) rather than reusing the
// library's algorithms.

#include <cstdint>
#include <utility>
#include <vector>

#include "toothseg/detector.hpp"
#include "toothseg/distance_field.hpp"
#include "toothseg/volume.hpp"

namespace oracles {

/// Dijkstra over the 26-neighborhood with edge weights 3/4/5, from the
/// background set; returns distances divided by 3 (same units as chamfer_dt).
std::vector<float> dijkstra_chamfer(const toothseg::BinaryMask& mask);

/// Exact Euclidean distance (in voxel units) from each voxel to the nearest
/// background voxel center, by brute force over all background voxels;
/// background voxels get 0.
std::vector<double> brute_euclidean_dt(const toothseg::BinaryMask& mask);

/// Greedy score-descending NMS written as a plain O(n^2) double loop.
std::vector<toothseg::Box3> brute_nms(const std::vector<toothseg::Box3>& boxes,
                                      double iou_threshold);

/// Direct 7-loop grouped cross-correlation on flat arrays.
/// x: (C,X,Y,Z), w: (OC,C/g,K,K,K), bias optional (size OC or empty).
std::vector<double> reference_conv3d(const std::vector<double>& x, const std::vector<int>& xs,
                                     const std::vector<double>& w, const std::vector<int>& ws,
                                     const std::vector<double>& bias, int stride, int padding,
                                     int groups, std::vector<int>& out_shape);

/// Transposed convolution as zero-stuffing + padding + direct convolution
/// with the spatially flipped kernel. x: (C,X,Y,Z), w: (IC,OC,2,2,2).
std::vector<double> zero_stuff_transposed(const std::vector<double>& x,
                                          const std::vector<int>& xs,
                                          const std::vector<double>& w, int oc);

/// All-pairs surface distances: returns {hausdorff_mm, assd_mm}. Surfaces are
/// 6-connectivity boundary voxels with the grid border counting as
/// background.
std::pair<double, double> brute_surface_metrics(const toothseg::BinaryMask& a,
                                                const toothseg::BinaryMask& b);

/// AJI by exhaustive search over injective gt->prediction assignments,
/// maximizing the final ratio. Feasible for a handful of instances.
double exhaustive_aji(const toothseg::LabelMap& gt, const toothseg::LabelMap& pred);

/// Scalar trilinear interpolation at a world point, zero outside.
float trilinear_at(const toothseg::Volume& v, const toothseg::Vec3& world);

}  // namespace oracles
