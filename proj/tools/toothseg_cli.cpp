#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "toothseg/augment.hpp"
#include "toothseg/config.hpp"
#include "toothseg/detector.hpp"
#include "toothseg/distance_field.hpp"
#include "toothseg/gradcheck.hpp"
#include "toothseg/io.hpp"
#include "toothseg/metrics.hpp"
#include "toothseg/neural.hpp"
#include "toothseg/phantom.hpp"
#include "toothseg/pose_align.hpp"
#include "toothseg/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace toothseg;

namespace {

// exit codes: 0 success, 1 usage, 2 validation, 3 numerical failure
constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

struct Global {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    bool json_errors = false;

    PipelineConfig config() const {
        PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : load_config(config_path);
        if (seed) cfg.seed = *seed;
        cfg.validate();
        return cfg;
    }
    fs::path out(const std::string& name) const {
        fs::create_directories(out_dir);
        return fs::path(out_dir) / name;
    }
};

std::set<int> parse_id_list(const std::string& csv) {
    std::set<int> ids;
    std::string token;
    std::istringstream in(csv);
    while (std::getline(in, token, ',')) {
        if (token.empty()) continue;
        ids.insert(std::stoi(token));
    }
    return ids;
}

double mean_overlap_ratio(const std::vector<Box3>& boxes, double grid_mm = 0.1) {
    if (boxes.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        std::vector<Box3> neighbors;
        for (std::size_t n = 0; n < boxes.size(); ++n)
            if (n != i) neighbors.push_back(boxes[n]);
        acc += overlap_ratio(boxes[i], neighbors, grid_mm);
    }
    return acc / static_cast<double>(boxes.size());
}

Box3 extent_box(const GridGeom& g) {
    Box3 b;
    b.min_mm = g.extent_min();
    b.max_mm = g.extent_max();
    return b;
}

int cmd_phantom(const Global& g, const PhantomSpec& spec) {
    const PhantomTruth truth = generate(spec);
    write_volume(g.out("volume.json").string(), truth.volume);
    write_labels(g.out("labels.json").string(), truth.labels);
    write_boxes(g.out("boxes.json").string(), truth.boxes);
    write_poses(g.out("poses.json").string(), truth.poses);

    std::cout << "phantom: " << truth.boxes.size() << " teeth, dims " << spec.dims.nx << "x"
              << spec.dims.ny << "x" << spec.dims.nz << ", tilt " << spec.tilt_deg << " deg\n";
    std::cout << "mean overlap ratio of ground-truth boxes: " << mean_overlap_ratio(truth.boxes)
              << "\n";
    return 0;
}

int cmd_mip(const Global&, const std::string& volume_path, const std::string& out_path) {
    const Volume v = read_volume(volume_path);
    const Image2D img = mip_x(normalize01(v));
    write_image2d(out_path, img);
    std::cout << "mip: " << img.nu << "x" << img.nv << " -> " << out_path << "\n";
    return 0;
}

int cmd_realign(const Global& g, const std::string& volume_path, const std::string& poses_path,
                const std::string& labels_path) {
    const PipelineConfig cfg = g.config();
    const Volume v = read_volume(volume_path);
    const std::vector<PoseEstimate> poses = read_poses(poses_path);

    const PoseEstimate* upper = nullptr;
    const PoseEstimate* lower = nullptr;
    for (const auto& p : poses) (p.jaw == Jaw::Upper ? upper : lower) = &p;
    if (!upper || !lower)
        throw std::invalid_argument("realign: need one pose per jaw (upper and lower)");

    std::vector<std::pair<std::string, VoiResult>> jaws;
    jaws.emplace_back("upper", realign_voi(v, *upper, cfg.voi));
    jaws.emplace_back("lower", realign_voi(v, *lower, cfg.voi));

    std::optional<LabelMap> labels;
    if (!labels_path.empty()) labels = read_labels(labels_path);

    for (const auto& [name, voi] : jaws) {
        write_volume(g.out("voi_" + name + ".json").string(), voi.volume);
        if (labels)
            write_labels(g.out("labels_" + name + ".json").string(), realign_labels(*labels, voi));
        std::cout << "realign: " << name << " VOI " << voi.voi_geom().dims.nx << "x"
                  << voi.voi_geom().dims.ny << "x" << voi.voi_geom().dims.nz
                  << (voi.y_flipped ? " (y-flipped)" : "") << "\n";
    }
    write_transforms(g.out("transforms.json").string(), jaws);
    return 0;
}

int cmd_detect_post(const Global& g, const std::string& boxes_path, const std::string& out_path,
                    const std::string& bounds_from, const std::string& metal_csv,
                    const std::string& eval_gt_path, const std::string& labels_path,
                    const std::string& report_path) {
    const PipelineConfig cfg = g.config();
    std::vector<Box3> boxes = read_boxes(boxes_path);
    const std::set<int> metal = parse_id_list(metal_csv);

    bool any_score = false;
    for (const auto& b : boxes) any_score |= b.score.has_value();
    if (any_score) {
        for (auto& b : boxes)
            if (!b.score) b.score = 0.0;
        boxes = nms(boxes, cfg.nms_iou);
    }
    // AP50 is evaluated on the localized boxes; the dilation margin below
    // exists to raise OIR and would wreck every IoU
    const std::vector<Box3> pre_margin = boxes;

    std::optional<LabelMap> labels;
    if (!labels_path.empty()) labels = read_labels(labels_path);

    Box3 bounds;
    if (!bounds_from.empty()) {
        bounds = extent_box(read_volume(bounds_from).geom);
    } else if (labels) {
        bounds = extent_box(labels->geom);
    } else {
        bounds.min_mm = {-1e9, -1e9, -1e9};
        bounds.max_mm = {1e9, 1e9, 1e9};
    }

    for (auto& b : boxes) {
        b = dilate(b, cfg.dilate_mm, bounds);
        if (b.tooth_id) {
            const bool is_metal =
                metal.count(*b.tooth_id) > 0 || (b.group && *b.group == ToothGroup::Metal);
            b.group = assign_group(*b.tooth_id, is_metal);
        }
    }
    write_boxes(out_path, boxes);
    std::cout << "detect-post: " << boxes.size() << " boxes -> " << out_path << "\n";

    if (!eval_gt_path.empty()) {
        const std::vector<Box3> gt = read_boxes(eval_gt_path);
        json rep;
        rep["mean_or"] = mean_overlap_ratio(gt);

        std::vector<Box3> scored = pre_margin;
        for (auto& b : scored)
            if (!b.score) b.score = 1.0;
        rep["ap50"] = average_precision_50(gt, scored);

        if (labels) {
            json per_tooth = json::object();
            double acc = 0.0, mn = 1.0;
            int counted = 0;
            for (const auto& gt_box : gt) {
                if (!gt_box.tooth_id) continue;
                const Box3* det = nullptr;
                for (const auto& b : boxes)
                    if (b.tooth_id && *b.tooth_id == *gt_box.tooth_id) det = &b;
                if (!det) continue;
                const double oir =
                    object_include_ratio(*labels, static_cast<Label>(*gt_box.tooth_id), *det);
                per_tooth[std::to_string(*gt_box.tooth_id)] = oir;
                acc += oir;
                mn = std::min(mn, oir);
                ++counted;
            }
            rep["oir"] = {{"mean", counted ? acc / counted : 0.0},
                          {"min", counted ? mn : 0.0},
                          {"per_tooth", per_tooth}};
        }
        const std::string rp =
            report_path.empty() ? g.out("detect_report.json").string() : report_path;
        std::ofstream out(rp);
        out << rep.dump(2) << "\n";
        std::cout << "detect-post: report -> " << rp << "\n";
    }
    return 0;
}

int cmd_distmap(const Global& g, const std::string& labels_path, const std::string& boxes_path) {
    const PipelineConfig cfg = g.config();
    const LabelMap labels = read_labels(labels_path);
    std::vector<Box3> boxes =
        boxes_path.empty() ? boxes_from_labels(labels) : read_boxes(boxes_path);
    const Box3 bounds = extent_box(labels.geom);

    json index = json::array();
    for (const Box3& box : boxes) {
        if (!box.tooth_id) throw std::invalid_argument("distmap: boxes need tooth ids");
        const Box3 dilated = dilate(box, cfg.dilate_mm, bounds);
        const BinaryMask mask =
            standardize_crop_mask(labels, static_cast<Label>(*box.tooth_id), dilated);
        const DistanceMap dm = regression_target(mask, cfg.d_max_vox);

        const std::string name = "target_" + std::to_string(*box.tooth_id) + ".json";
        write_distance_map(g.out(name).string(), dm);
        json e;
        e["tooth_id"] = *box.tooth_id;
        e["box_min_mm"] = {dilated.min_mm.x, dilated.min_mm.y, dilated.min_mm.z};
        e["box_max_mm"] = {dilated.max_mm.x, dilated.max_mm.y, dilated.max_mm.z};
        e["map"] = name;
        index.push_back(e);
    }
    std::ofstream out(g.out("targets.json"));
    out << index.dump(2) << "\n";
    std::cout << "distmap: " << boxes.size() << " targets -> " << g.out("targets.json").string()
              << "\n";
    return 0;
}

int cmd_augment(const Global& g, const std::string& volume_path, const std::string& mask_path,
                bool do_cutout, bool do_affine) {
    const PipelineConfig cfg = g.config();
    Volume v = read_volume(volume_path);
    std::optional<BinaryMask> mask;
    if (!mask_path.empty()) mask = read_mask(mask_path);

    if (do_affine) {
        AffineResult r = random_affine(v, mask ? &*mask : nullptr, cfg.affine, cfg.seed);
        v = std::move(r.volume);
        if (r.mask) mask = std::move(r.mask);
        std::cout << "augment: affine " << (r.applied ? "applied" : "skipped") << "\n";
    }
    if (do_cutout) {
        CutoutResult r = cutout(v, cfg.cutout, cfg.seed + 1);
        v = std::move(r.volume);
        if (r.box)
            std::cout << "augment: cutout box [" << r.box->lo[0] << "," << r.box->lo[1] << ","
                      << r.box->lo[2] << "]..[" << r.box->hi[0] << "," << r.box->hi[1] << ","
                      << r.box->hi[2] << "]\n";
        else
            std::cout << "augment: cutout skipped\n";
    }
    write_volume(g.out("augmented.json").string(), v);
    if (mask) write_mask(g.out("augmented_mask.json").string(), *mask);
    return 0;
}

int cmd_assemble(const Global& g, const std::string& targets_path, const std::string& canvas_path,
                 const std::string& out_path) {
    const PipelineConfig cfg = g.config();
    std::ifstream in(targets_path);
    if (!in) throw std::invalid_argument("assemble: cannot open " + targets_path);
    json index;
    in >> index;

    const fs::path dir = fs::path(targets_path).parent_path();
    std::vector<std::pair<Box3, DistanceMap>> instances;
    for (const auto& e : index) {
        Box3 b;
        b.tooth_id = e["tooth_id"].get<int>();
        b.min_mm = {e["box_min_mm"][0], e["box_min_mm"][1], e["box_min_mm"][2]};
        b.max_mm = {e["box_max_mm"][0], e["box_max_mm"][1], e["box_max_mm"][2]};
        instances.emplace_back(b, read_distance_map((dir / e["map"].get<std::string>()).string()));
    }

    const GridGeom canvas = read_labels(canvas_path).geom;
    const double tau = cfg.tau_vox / cfg.d_max_vox;  // targets live in normalized units
    const LabelMap out = assemble(instances, canvas, tau);
    write_labels(out_path, out);
    std::cout << "assemble: " << instances.size() << " instances -> " << out_path << "\n";
    return 0;
}

int cmd_eval(const Global&, const std::string& gt_path, const std::string& pred_path,
             const std::string& out_path, const std::string& gt_boxes_path,
             const std::string& pred_boxes_path) {
    const LabelMap gt = read_labels(gt_path);
    const LabelMap pred = read_labels(pred_path);
    const MetricsReport rep = per_instance_report(gt, pred);

    double ap50 = -1, oir_mean = -1, mean_or = -1;
    if (!gt_boxes_path.empty()) {
        const std::vector<Box3> gt_boxes = read_boxes(gt_boxes_path);
        mean_or = mean_overlap_ratio(gt_boxes);
        if (!pred_boxes_path.empty()) {
            std::vector<Box3> pred_boxes = read_boxes(pred_boxes_path);
            for (auto& b : pred_boxes)
                if (!b.score) b.score = 1.0;
            ap50 = average_precision_50(gt_boxes, pred_boxes);
            double acc = 0.0;
            int counted = 0;
            for (const auto& gt_box : gt_boxes) {
                if (!gt_box.tooth_id) continue;
                for (const auto& b : pred_boxes)
                    if (b.tooth_id && *b.tooth_id == *gt_box.tooth_id) {
                        acc += object_include_ratio(gt, static_cast<Label>(*gt_box.tooth_id), b);
                        ++counted;
                        break;
                    }
            }
            if (counted) oir_mean = acc / counted;
        }
    }
    write_metrics_report(out_path, rep, ap50, oir_mean, mean_or);
    std::cout << "eval: f1 " << rep.f1_mean << " +- " << rep.f1_std << ", aji " << rep.aji
              << ", hd " << rep.hd_mm << " mm, assd " << rep.assd_mm << " mm -> " << out_path
              << "\n";
    return 0;
}

int cmd_gradcheck(const Global& g, double tolerance, int samples) {
    const PipelineConfig cfg = g.config();
    const GradCheckReport rep = run_gradcheck(cfg.seed, tolerance, samples);
    for (const auto& e : rep.entries)
        std::cout << (e.pass ? "pass" : "FAIL") << "  " << e.name << "  (" << e.checked
                  << " params, max rel err " << e.max_rel_err << ")\n";
    if (!rep.pass) throw NumericError("gradcheck: gradient verification failed");
    std::cout << "gradcheck: all layers within " << rep.tolerance << "\n";
    return 0;
}

int cmd_traintoy(const Global& g, int steps, double lr, const std::string& csv_path) {
    const PipelineConfig cfg = g.config();

    PhantomSpec spec;
    spec.seed = cfg.seed;
    const PhantomTruth truth = generate(spec);
    if (truth.boxes.empty()) throw std::invalid_argument("traintoy: phantom has no teeth");
    const Box3& box = truth.boxes.front();
    const Box3 dilated = dilate(box, cfg.dilate_mm, extent_box(truth.labels.geom));

    const Dims3 crop{16, 16, 32};
    const Volume vcrop = standardize_crop(truth.volume, dilated, crop);
    const BinaryMask mask =
        standardize_crop_mask(truth.labels, static_cast<Label>(*box.tooth_id), dilated, crop);
    const DistanceMap target = regression_target(mask, cfg.d_max_vox);

    std::vector<double> input(vcrop.data.begin(), vcrop.data.end());
    std::vector<double> target_d(target.data.begin(), target.data.end());
    const std::vector<int> shape{1, crop.nx, crop.ny, crop.nz};
    std::vector<std::pair<Tensor, Tensor>> batch{
        {Tensor::from(shape, std::move(input)), Tensor::from(shape, std::move(target_d))}};

    TsnetParams params = make_tsnet({4, 8, 16, 32}, 4, cfg.seed);

    std::ofstream csv(csv_path.empty() ? g.out("loss_curve.csv").string() : csv_path);
    csv << "step,loss\n";
    double initial = 0.0, final_loss = 0.0;
    for (int s = 0; s < steps; ++s) {
        const double loss = train_step(params, batch, lr, 0.1);
        if (s == 0) initial = loss;
        final_loss = loss;
        csv << s << "," << loss << "\n";
    }
    write_checkpoint(g.out("toy_checkpoint.json").string(), params);
    std::cout << "traintoy: initial loss " << initial << ", final loss " << final_loss
              << ", ratio " << (initial > 0 ? final_loss / initial : 0.0) << "\n";
    return 0;
}

int cmd_pipeline(const Global& g, PhantomSpec spec) {
    const PipelineConfig cfg = g.config();
    spec.seed = cfg.seed;

    const PhantomTruth truth = generate(spec);
    write_volume(g.out("volume.json").string(), truth.volume);
    write_labels(g.out("labels.json").string(), truth.labels);
    write_boxes(g.out("boxes.json").string(), truth.boxes);
    write_poses(g.out("poses.json").string(), truth.poses);

    std::vector<std::pair<std::string, VoiResult>> jaws;
    for (const auto& pose : truth.poses)
        jaws.emplace_back(pose.jaw == Jaw::Upper ? "upper" : "lower",
                          realign_voi(truth.volume, pose, cfg.voi));
    write_transforms(g.out("transforms.json").string(), jaws);

    double min_dice = 1.0, min_aji = 1.0;
    for (const auto& [name, voi] : jaws) {
        const LabelMap voi_labels = realign_labels(truth.labels, voi);
        write_volume(g.out("voi_" + name + ".json").string(), voi.volume);
        write_labels(g.out("labels_" + name + ".json").string(), voi_labels);

        const Box3 bounds = extent_box(voi_labels.geom);
        const std::vector<Box3> boxes = boxes_from_labels(voi_labels);

        std::vector<std::pair<Box3, DistanceMap>> instances;
        for (const Box3& b : boxes) {
            const Box3 dilated = dilate(b, cfg.dilate_mm, bounds);
            const BinaryMask mask =
                standardize_crop_mask(voi_labels, static_cast<Label>(*b.tooth_id), dilated);
            instances.emplace_back(dilated, regression_target(mask, cfg.d_max_vox));
        }
        const LabelMap assembled =
            assemble(instances, voi_labels.geom, cfg.tau_vox / cfg.d_max_vox);
        write_labels(g.out("pred_" + name + ".json").string(), assembled);

        const MetricsReport rep = per_instance_report(voi_labels, assembled);
        write_metrics_report(g.out("report_" + name + ".json").string(), rep);
        double jaw_min_dice = 1.0;
        for (const auto& im : rep.per_instance) jaw_min_dice = std::min(jaw_min_dice, im.f1);
        min_dice = std::min(min_dice, jaw_min_dice);
        min_aji = std::min(min_aji, rep.aji);
        std::cout << "pipeline: " << name << " jaw: " << rep.per_instance.size()
                  << " teeth, min dice " << jaw_min_dice << ", aji " << rep.aji << "\n";
    }
    std::cout << "pipeline: min per-tooth dice " << min_dice << ", min jaw aji " << min_aji
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pose-aware tooth instance segmentation toolkit"};
    app.require_subcommand(1);

    Global g;
    app.add_option("--config", g.config_path, "pipeline config JSON");
    app.add_option("--seed", g.seed, "override the config seed");
    app.add_option("--out", g.out_dir, "output directory");
    app.add_flag("--json", g.json_errors, "machine-readable errors on stderr");

    PhantomSpec phantom_spec;
    std::string missing_csv, metal_csv;
    std::vector<int> dims_opt;
    double spacing_opt = 0.4;
    auto* phantom_cmd = app.add_subcommand("phantom", "generate a CBCT-like jaw phantom");
    phantom_cmd->add_option("--dims", dims_opt, "voxel counts nx ny nz")->expected(3);
    phantom_cmd->add_option("--spacing", spacing_opt, "isotropic spacing in mm");
    phantom_cmd->add_option("--teeth-per-jaw", phantom_spec.teeth_per_jaw);
    phantom_cmd->add_option("--tilt", phantom_spec.tilt_deg, "scene tilt about x in degrees");
    phantom_cmd->add_option("--missing", missing_csv, "comma-separated FDI ids to omit");
    phantom_cmd->add_option("--metal", metal_csv, "comma-separated FDI ids with metal crowns");
    phantom_cmd->add_option("--noise-sigma", phantom_spec.noise_sigma);

    std::string mip_volume, mip_out = "mip.json";
    auto* mip_cmd = app.add_subcommand("mip", "maximum intensity projection along x");
    mip_cmd->add_option("--volume", mip_volume)->required();
    mip_cmd->add_option("--output", mip_out, "output image container path");

    std::string re_volume, re_poses, re_labels;
    auto* realign_cmd = app.add_subcommand("realign", "pose-aware VOI extraction per jaw");
    realign_cmd->add_option("--volume", re_volume)->required();
    realign_cmd->add_option("--poses", re_poses)->required();
    realign_cmd->add_option("--labels", re_labels, "also realign this label map");

    std::string dp_boxes, dp_out = "boxes_post.json", dp_bounds, dp_metal, dp_eval, dp_labels,
                           dp_report;
    auto* detect_cmd = app.add_subcommand("detect-post", "NMS, dilation and grouping of boxes");
    detect_cmd->add_option("--boxes", dp_boxes)->required();
    detect_cmd->add_option("--output", dp_out);
    detect_cmd->add_option("--bounds-from", dp_bounds, "volume container providing clamp bounds");
    detect_cmd->add_option("--metal", dp_metal, "comma-separated FDI ids with metal");
    detect_cmd->add_option("--eval", dp_eval, "ground-truth boxes for the OR/OIR/AP50 report");
    detect_cmd->add_option("--labels", dp_labels, "label map (enables OIR, provides bounds)");
    detect_cmd->add_option("--report", dp_report, "report output path");

    std::string dm_labels, dm_boxes;
    auto* distmap_cmd = app.add_subcommand("distmap", "distance-regression targets per tooth");
    distmap_cmd->add_option("--labels", dm_labels)->required();
    distmap_cmd->add_option("--boxes", dm_boxes, "boxes to crop (default: tight from labels)");

    std::string au_volume, au_mask;
    bool au_no_cutout = false, au_no_affine = false;
    auto* augment_cmd = app.add_subcommand("augment", "cutout and random affine");
    augment_cmd->add_option("--volume", au_volume)->required();
    augment_cmd->add_option("--mask", au_mask, "binary mask transformed alongside");
    augment_cmd->add_flag("--no-cutout", au_no_cutout, "skip cutout");
    augment_cmd->add_flag("--no-affine", au_no_affine, "skip the affine");

    std::string as_targets, as_canvas, as_out = "assembled.json";
    auto* assemble_cmd = app.add_subcommand("assemble", "paste per-tooth maps into a label map");
    assemble_cmd->add_option("--targets", as_targets)->required();
    assemble_cmd->add_option("--canvas", as_canvas, "label container defining the output grid")
        ->required();
    assemble_cmd->add_option("--output", as_out);

    std::string ev_gt, ev_pred, ev_out = "report.json", ev_gt_boxes, ev_pred_boxes;
    auto* eval_cmd = app.add_subcommand("eval", "segmentation metrics report");
    eval_cmd->add_option("--gt", ev_gt)->required();
    eval_cmd->add_option("--pred", ev_pred)->required();
    eval_cmd->add_option("--output", ev_out);
    eval_cmd->add_option("--gt-boxes", ev_gt_boxes);
    eval_cmd->add_option("--pred-boxes", ev_pred_boxes);

    double gc_tol = 1e-4;
    int gc_samples = 50;
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    gradcheck_cmd->add_option("--tolerance", gc_tol);
    gradcheck_cmd->add_option("--samples", gc_samples, "sampled parameters per layer");

    int tt_steps = 200;
    double tt_lr = 0.05;
    std::string tt_csv;
    auto* traintoy_cmd = app.add_subcommand("traintoy", "fit one phantom tooth at toy scale");
    traintoy_cmd->add_option("--steps", tt_steps);
    traintoy_cmd->add_option("--lr", tt_lr);
    traintoy_cmd->add_option("--csv", tt_csv, "loss curve output (default <out>/loss_curve.csv)");

    PhantomSpec pipe_spec;
    std::string pipe_missing, pipe_metal;
    auto* pipeline_cmd =
        app.add_subcommand("pipeline", "phantom -> realign -> targets -> assemble -> eval");
    pipeline_cmd->add_option("--tilt", pipe_spec.tilt_deg);
    pipeline_cmd->add_option("--missing", pipe_missing);
    pipeline_cmd->add_option("--metal", pipe_metal);

    for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; }))
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;  // usage errors are exit code 1
    }

    try {
        if (*phantom_cmd) {
            if (dims_opt.size() == 3) phantom_spec.dims = {dims_opt[0], dims_opt[1], dims_opt[2]};
            phantom_spec.spacing = {spacing_opt, spacing_opt, spacing_opt};
            phantom_spec.missing = parse_id_list(missing_csv);
            phantom_spec.metal = parse_id_list(metal_csv);
            phantom_spec.seed = g.seed.value_or(phantom_spec.seed);
            return cmd_phantom(g, phantom_spec);
        }
        if (*mip_cmd) return cmd_mip(g, mip_volume, mip_out);
        if (*realign_cmd) return cmd_realign(g, re_volume, re_poses, re_labels);
        if (*detect_cmd)
            return cmd_detect_post(g, dp_boxes, dp_out, dp_bounds, dp_metal, dp_eval, dp_labels,
                                   dp_report);
        if (*distmap_cmd) return cmd_distmap(g, dm_labels, dm_boxes);
        if (*augment_cmd) return cmd_augment(g, au_volume, au_mask, !au_no_cutout, !au_no_affine);
        if (*assemble_cmd) return cmd_assemble(g, as_targets, as_canvas, as_out);
        if (*eval_cmd) return cmd_eval(g, ev_gt, ev_pred, ev_out, ev_gt_boxes, ev_pred_boxes);
        if (*gradcheck_cmd) return cmd_gradcheck(g, gc_tol, gc_samples);
        if (*traintoy_cmd) return cmd_traintoy(g, tt_steps, tt_lr, tt_csv);
        if (*pipeline_cmd) {
            pipe_spec.missing = parse_id_list(pipe_missing);
            pipe_spec.metal = parse_id_list(pipe_metal);
            return cmd_pipeline(g, pipe_spec);
        }
        return 1;
    } catch (const NumericError& e) {
        if (g.json_errors)
            std::cerr << json{{"error", e.what()}, {"exit_code", kExitNumeric}}.dump() << "\n";
        else
            std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        if (g.json_errors)
            std::cerr << json{{"error", e.what()}, {"exit_code", kExitValidation}}.dump() << "\n";
        else
            std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}
