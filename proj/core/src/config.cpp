#include "toothseg/config.hpp"

#include <fstream>

#include <json.hpp>

namespace toothseg {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, std::initializer_list<const char*> keys,
                    const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* k : keys) known |= key == k;
        if (!known)
            throw std::invalid_argument("config: unknown key \"" + where + key + "\"");
    }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void PipelineConfig::validate() const {
    voi.validate();
    cutout.validate();
    affine.validate();
    if (!(0.0 <= sampler.t_neg && sampler.t_neg < sampler.t_pos && sampler.t_pos <= 1.0))
        throw std::invalid_argument("config: sampler thresholds need 0 <= t_neg < t_pos <= 1");
    if (sampler.max_pos < 1 || sampler.max_neg < 0)
        throw std::invalid_argument("config: sampler counts out of range");
    if (!(d_max_vox > 0)) throw std::invalid_argument("config: d_max_vox must be > 0");
    if (tau_vox < 0) throw std::invalid_argument("config: tau_vox must be >= 0");
    if (dilate_mm < 0) throw std::invalid_argument("config: dilate_mm must be >= 0");
    if (!(nms_iou >= 0 && nms_iou <= 1))
        throw std::invalid_argument("config: nms_iou must be in [0, 1]");
    for (int w : net_widths)
        if (w < 1) throw std::invalid_argument("config: net widths must be >= 1");
    if (net_groups < 1) throw std::invalid_argument("config: net_groups must be >= 1");
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config: malformed JSON: " + std::string(e.what()));
    }

    PipelineConfig cfg;
    reject_unknown(j, {"voi", "cutout", "affine", "sampler", "distance", "detect", "net", "seed"},
                   "");

    if (j.contains("voi")) {
        const json& v = j["voi"];
        reject_unknown(v, {"depth_mm", "margin_mm", "out_dims"}, "voi.");
        maybe(v, "depth_mm", cfg.voi.depth_mm);
        maybe(v, "margin_mm", cfg.voi.margin_mm);
        if (v.contains("out_dims")) {
            cfg.voi.out_dims = {v["out_dims"][0].get<int>(), v["out_dims"][1].get<int>(),
                                v["out_dims"][2].get<int>()};
        }
    }
    if (j.contains("cutout")) {
        const json& c = j["cutout"];
        reject_unknown(c, {"probability", "lo_frac", "hi_frac", "fill"}, "cutout.");
        maybe(c, "probability", cfg.cutout.probability);
        maybe(c, "lo_frac", cfg.cutout.lo_frac);
        maybe(c, "hi_frac", cfg.cutout.hi_frac);
        maybe(c, "fill", cfg.cutout.fill);
    }
    if (j.contains("affine")) {
        const json& a = j["affine"];
        reject_unknown(a, {"probability", "max_rotate_deg", "max_scale_frac", "max_translate_frac"},
                       "affine.");
        maybe(a, "probability", cfg.affine.probability);
        maybe(a, "max_rotate_deg", cfg.affine.max_rotate_deg);
        maybe(a, "max_scale_frac", cfg.affine.max_scale_frac);
        maybe(a, "max_translate_frac", cfg.affine.max_translate_frac);
    }
    if (j.contains("sampler")) {
        const json& s = j["sampler"];
        reject_unknown(s, {"t_pos", "t_neg", "nms_iou", "max_pos", "max_neg"}, "sampler.");
        maybe(s, "t_pos", cfg.sampler.t_pos);
        maybe(s, "t_neg", cfg.sampler.t_neg);
        maybe(s, "nms_iou", cfg.sampler.nms_iou);
        maybe(s, "max_pos", cfg.sampler.max_pos);
        maybe(s, "max_neg", cfg.sampler.max_neg);
    }
    if (j.contains("distance")) {
        const json& d = j["distance"];
        reject_unknown(d, {"d_max_vox", "tau_vox"}, "distance.");
        maybe(d, "d_max_vox", cfg.d_max_vox);
        maybe(d, "tau_vox", cfg.tau_vox);
    }
    if (j.contains("detect")) {
        const json& d = j["detect"];
        reject_unknown(d, {"nms_iou", "dilate_mm", "anchor_sizes_mm", "anchor_stride_mm"},
                       "detect.");
        maybe(d, "nms_iou", cfg.nms_iou);
        maybe(d, "dilate_mm", cfg.dilate_mm);
        maybe(d, "anchor_sizes_mm", cfg.anchor_sizes_mm);
        maybe(d, "anchor_stride_mm", cfg.anchor_stride_mm);
    }
    if (j.contains("net")) {
        const json& n = j["net"];
        reject_unknown(n, {"widths", "groups"}, "net.");
        maybe(n, "widths", cfg.net_widths);
        maybe(n, "groups", cfg.net_groups);
    }
    maybe(j, "seed", cfg.seed);

    cfg.validate();
    return cfg;
}

void save_config(const std::string& path, const PipelineConfig& cfg) {
    json j;
    j["voi"] = {{"depth_mm", cfg.voi.depth_mm},
                {"margin_mm", cfg.voi.margin_mm},
                {"out_dims", {cfg.voi.out_dims.nx, cfg.voi.out_dims.ny, cfg.voi.out_dims.nz}}};
    j["cutout"] = {{"probability", cfg.cutout.probability},
                   {"lo_frac", cfg.cutout.lo_frac},
                   {"hi_frac", cfg.cutout.hi_frac},
                   {"fill", cfg.cutout.fill}};
    j["affine"] = {{"probability", cfg.affine.probability},
                   {"max_rotate_deg", cfg.affine.max_rotate_deg},
                   {"max_scale_frac", cfg.affine.max_scale_frac},
                   {"max_translate_frac", cfg.affine.max_translate_frac}};
    j["sampler"] = {{"t_pos", cfg.sampler.t_pos},
                    {"t_neg", cfg.sampler.t_neg},
                    {"nms_iou", cfg.sampler.nms_iou},
                    {"max_pos", cfg.sampler.max_pos},
                    {"max_neg", cfg.sampler.max_neg}};
    j["distance"] = {{"d_max_vox", cfg.d_max_vox}, {"tau_vox", cfg.tau_vox}};
    j["detect"] = {{"nms_iou", cfg.nms_iou},
                   {"dilate_mm", cfg.dilate_mm},
                   {"anchor_sizes_mm", cfg.anchor_sizes_mm},
                   {"anchor_stride_mm", cfg.anchor_stride_mm}};
    j["net"] = {{"widths", cfg.net_widths}, {"groups", cfg.net_groups}};
    j["seed"] = cfg.seed;

    std::ofstream out(path);
    if (!out) throw std::invalid_argument("config: cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
}

}  // namespace toothseg
