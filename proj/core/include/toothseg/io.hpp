#pragma once

#include <string>
#include <utility>
#include <vector>

#include "toothseg/detector.hpp"
#include "toothseg/distance_field.hpp"
#include "toothseg/metrics.hpp"
#include "toothseg/neural.hpp"
#include "toothseg/pose_align.hpp"
#include "toothseg/volume.hpp"

namespace toothseg {

/// Grid containers are a JSON header plus a raw little-endian sidecar file
/// (same basename, .raw extension) referenced by the header's "data" field.
/// Volumes and distance maps store f32, label maps u16, all x-fastest.
void write_volume(const std::string& json_path, const Volume& v);
Volume read_volume(const std::string& json_path);

void write_labels(const std::string& json_path, const LabelMap& labels);
LabelMap read_labels(const std::string& json_path);

void write_distance_map(const std::string& json_path, const DistanceMap& dm);
DistanceMap read_distance_map(const std::string& json_path);

void write_mask(const std::string& json_path, const BinaryMask& mask);
BinaryMask read_mask(const std::string& json_path);

/// 2D image container (dims [nu, nv], f32, u-fastest).
void write_image2d(const std::string& json_path, const Image2D& img);
Image2D read_image2d(const std::string& json_path);

void write_boxes(const std::string& path, const std::vector<Box3>& boxes);
std::vector<Box3> read_boxes(const std::string& path);

void write_poses(const std::string& path, const std::vector<PoseEstimate>& poses);
std::vector<PoseEstimate> read_poses(const std::string& path);

void write_transforms(const std::string& path,
                      const std::vector<std::pair<std::string, VoiResult>>& jaws);

/// Metrics report JSON; box-level entries (ap50, oir, mean_or) are optional
/// and skipped when negative.
void write_metrics_report(const std::string& path, const MetricsReport& report, double ap50 = -1,
                          double oir_mean = -1, double mean_or = -1);

/// Network checkpoint: flat ordered list of named f64 arrays (parameters,
/// then batch-norm running stats) with a raw sidecar payload.
void write_checkpoint(const std::string& json_path, TsnetParams& params);
void read_checkpoint(const std::string& json_path, TsnetParams& params);

}  // namespace toothseg
