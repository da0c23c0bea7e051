#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "toothseg/augment.hpp"
#include "toothseg/detector.hpp"
#include "toothseg/pose_align.hpp"

namespace toothseg {

/// One document holding every module's knobs. Defaults are the toolkit's
/// operating values; unknown keys in a config file are hard errors.
struct PipelineConfig {
    VoiSpec voi;          // depth 12 mm, margin 2 mm, 224 x 224 x 112
    CutoutSpec cutout;    // p = 0.8, sides in [L/5, L/4], fill 0
    AffineSpec affine;    // p = 0.8, +-10 deg, +-10 % scale, +-5 % shift
    SamplerConfig sampler;  // t_pos 0.5, t_neg 0.1, nms 0.3, 32/32
    double d_max_vox = 20.0;
    double tau_vox = 0.5;
    double dilate_mm = 2.0;
    double nms_iou = 0.3;
    std::array<double, 3> anchor_sizes_mm{6.0, 8.0, 11.0};
    std::array<double, 3> anchor_stride_mm{4.0, 4.0, 4.0};
    std::array<int, 4> net_widths{16, 32, 64, 128};
    int net_groups = 4;
    std::uint64_t seed = 0;

    void validate() const;
};

PipelineConfig load_config(const std::string& path);
void save_config(const std::string& path, const PipelineConfig& cfg);

}  // namespace toothseg
