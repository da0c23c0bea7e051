// Acceptance suite: runs every release criterion end to end and prints one
// pass/fail line each. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "toothseg/augment.hpp"
#include "toothseg/detector.hpp"
#include "toothseg/distance_field.hpp"
#include "toothseg/gradcheck.hpp"
#include "toothseg/metrics.hpp"
#include "toothseg/neural.hpp"
#include "toothseg/phantom.hpp"
#include "toothseg/pose_align.hpp"
#include "toothseg/rng.hpp"
#include "toothseg/volume.hpp"

using namespace toothseg;

namespace {

int g_pass = 0, g_fail = 0;

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

void report(int number, const char* name, bool pass, const std::string& detail) {
    std::printf("[%s] %2d. %-34s %s\n", pass ? "PASS" : "FAIL", number, name, detail.c_str());
    (pass ? g_pass : g_fail)++;
}

std::string fmt(const char* format, ...) {
    char buffer[256];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buffer, sizeof(buffer), format, args);
    va_end(args);
    return buffer;
}

double mean_or(const std::vector<Box3>& boxes, double grid = 0.1) {
    double acc = 0.0;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        std::vector<Box3> others;
        for (std::size_t n = 0; n < boxes.size(); ++n)
            if (n != i) others.push_back(boxes[n]);
        acc += overlap_ratio(boxes[i], others, grid);
    }
    return boxes.empty() ? 0.0 : acc / static_cast<double>(boxes.size());
}

Box3 extent_box(const GridGeom& g) {
    Box3 b;
    b.min_mm = g.extent_min();
    b.max_mm = g.extent_max();
    return b;
}

// 1. chamfer_dt equals the 26-neighborhood weighted shortest-path oracle
//    exactly on 50 random 16^3 masks, and stays within 15 % of the exact
//    Euclidean distance; under 30 s.
void criterion_1() {
    Timer timer;
    bool exact_ok = true;
    double worst_rel = 0.0;
    int masks = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        BinaryMask mask(GridGeom{{16, 16, 16}, {1, 1, 1}, {}});
        Rng rng(9000 + seed);
        const double density = rng.uniform(0.3, 0.8);
        bool any_bg = false;
        for (auto& v : mask.data) {
            v = rng.uniform() < density ? 1 : 0;
            any_bg |= !v;
        }
        if (!any_bg) mask.data[0] = 0;
        ++masks;

        const DistanceMap dm = chamfer_dt(mask);
        if (dm.data != oracles::dijkstra_chamfer(mask)) exact_ok = false;

        const std::vector<double> euclid = oracles::brute_euclidean_dt(mask);
        for (std::size_t v = 0; v < mask.data.size(); ++v) {
            if (!mask.data[v]) continue;
            const double rel = std::abs(dm.data[v] - euclid[v]) / euclid[v];
            worst_rel = std::max(worst_rel, rel);
        }
    }
    const double secs = timer.seconds();
    const bool pass = exact_ok && worst_rel <= 0.15 && secs < 30.0;
    report(1, "chamfer oracle equivalence",
           pass,
           fmt("%d masks, sweep==dijkstra %s, max euclid rel err %.4f (<=0.15), %.1fs (<30s)",
               masks, exact_ok ? "yes" : "NO", worst_rel, secs));
}

// 2. every neural op and the full toy network pass central finite
//    differences at 1e-4 with 50 sampled parameters per layer; under 2 min.
void criterion_2() {
    Timer timer;
    const GradCheckReport rep = run_gradcheck(0, 1e-4, 50);
    double worst = 0.0;
    for (const auto& e : rep.entries) worst = std::max(worst, e.max_rel_err);
    const double secs = timer.seconds();
    const bool pass = rep.pass && secs < 120.0;
    report(2, "gradient verification", pass,
           fmt("%zu layers, max rel err %.2e (<=1e-4), %.1fs (<120s)", rep.entries.size(), worst,
               secs));
}

// 3. 200 full-gradient steps on one phantom tooth's distance regression
//    reduce the loss to <= 10 % of its initial value; under 5 min.
void criterion_3() {
    Timer timer;
    PhantomSpec spec;
    spec.seed = 0;
    const PhantomTruth truth = generate(spec);
    const Box3& box = truth.boxes.front();
    const Box3 dilated = dilate(box, 2.0, extent_box(truth.labels.geom));

    const Dims3 crop{16, 16, 32};
    const Volume vcrop = standardize_crop(truth.volume, dilated, crop);
    const BinaryMask mask =
        standardize_crop_mask(truth.labels, static_cast<Label>(*box.tooth_id), dilated, crop);
    const DistanceMap target = regression_target(mask, 20.0);

    const std::vector<int> shape{1, crop.nx, crop.ny, crop.nz};
    std::vector<std::pair<Tensor, Tensor>> batch{
        {Tensor::from(shape, std::vector<double>(vcrop.data.begin(), vcrop.data.end())),
         Tensor::from(shape, std::vector<double>(target.data.begin(), target.data.end()))}};

    TsnetParams params = make_tsnet({4, 8, 16, 32}, 4, 0);
    double initial = 0.0, final_loss = 0.0;
    for (int s = 0; s < 200; ++s) {
        final_loss = train_step(params, batch, 0.05, 0.1);
        if (s == 0) initial = final_loss;
    }
    const double ratio = final_loss / initial;
    const double secs = timer.seconds();
    const bool pass = ratio <= 0.10 && secs < 300.0;
    report(3, "toy training convergence", pass,
           fmt("loss %.3f -> %.3f, ratio %.4f (<=0.10), %.1fs (<300s)", initial, final_loss,
               ratio, secs));
}

// 4. nms matches the O(n^2) greedy oracle on 1000 random box sets, and the
//    RPN sampler achieves per-gt coverage with the pairwise IoU bound on the
//    phantom anchor grid, checked against the exhaustive IoU matrix.
void criterion_4() {
    Timer timer;
    Rng rng(4100);
    bool nms_ok = true;
    int sets = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = rng.uniform_int(2, 60);
        std::vector<Box3> boxes;
        for (int b = 0; b < n; ++b) {
            Box3 box;
            box.min_mm = {rng.uniform(0, 20), rng.uniform(0, 20), rng.uniform(0, 20)};
            box.max_mm = box.min_mm + Vec3{rng.uniform(1, 6), rng.uniform(1, 6), rng.uniform(1, 6)};
            box.score = rng.uniform();
            boxes.push_back(box);
        }
        const double threshold = rng.uniform(0.1, 0.6);
        const auto fast = nms(boxes, threshold);
        const auto ref = oracles::brute_nms(boxes, threshold);
        if (fast.size() != ref.size()) nms_ok = false;
        for (std::size_t i = 0; nms_ok && i < fast.size(); ++i)
            if (!(fast[i].min_mm == ref[i].min_mm && fast[i].score == ref[i].score))
                nms_ok = false;
        ++sets;
    }

    PhantomSpec spec;
    spec.seed = 4;
    const PhantomTruth truth = generate(spec);
    AnchorGrid grid;
    grid.extent = extent_box(truth.labels.geom);
    const std::vector<Box3> anchors = grid.generate();

    SamplerConfig cfg;
    cfg.seed = 4;
    const RpnTargets targets = sample_rpn_targets(anchors, truth.boxes, cfg);

    // exhaustive IoU matrix
    std::vector<std::vector<double>> iou_matrix(anchors.size(),
                                                std::vector<double>(truth.boxes.size()));
    for (std::size_t a = 0; a < anchors.size(); ++a)
        for (std::size_t g = 0; g < truth.boxes.size(); ++g)
            iou_matrix[a][g] = iou(anchors[a], truth.boxes[g]);

    std::vector<bool> covered(truth.boxes.size(), false);
    bool sampler_ok = true;
    for (const auto& p : targets.positives) {
        covered[p.gt_index] = true;
        if (std::abs(iou_matrix[p.anchor_index][p.gt_index] - p.iou_to_gt) > 1e-12)
            sampler_ok = false;
        if (!p.forced) {
            double best = 0.0;
            for (std::size_t g = 0; g < truth.boxes.size(); ++g)
                best = std::max(best, iou_matrix[p.anchor_index][g]);
            if (best < cfg.t_pos) sampler_ok = false;  // candidate threshold violated
        }
    }
    for (bool c : covered) sampler_ok &= c;
    for (std::size_t i = 0; i < targets.positives.size(); ++i)
        for (std::size_t j = i + 1; j < targets.positives.size(); ++j) {
            if (targets.positives[i].forced || targets.positives[j].forced) continue;
            if (iou(anchors[targets.positives[i].anchor_index],
                    anchors[targets.positives[j].anchor_index]) > cfg.nms_iou + 1e-12)
                sampler_ok = false;
        }
    for (int idx : targets.negative_indices) {
        double best = 0.0;
        for (std::size_t g = 0; g < truth.boxes.size(); ++g)
            best = std::max(best, iou_matrix[idx][g]);
        if (best > cfg.t_neg) sampler_ok = false;
    }

    const bool pass = nms_ok && sampler_ok;
    report(4, "nms and sampler oracles", pass,
           fmt("%d nms sets %s; sampler on %zu anchors x %zu gt %s, %.1fs", sets,
               nms_ok ? "match" : "MISMATCH", anchors.size(), truth.boxes.size(),
               sampler_ok ? "ok" : "VIOLATED", timer.seconds()));
}

// 5. on a 15-degree phantom, realigning with ground-truth poses lowers the
//    mean box overlap ratio by at least 20 %.
void criterion_5() {
    Timer timer;
    PhantomSpec spec;
    spec.seed = 5;
    spec.tilt_deg = 15.0;
    const PhantomTruth tilted = generate(spec);
    const double or_unaligned = mean_or(tilted.boxes);

    VoiSpec voi_spec;
    std::vector<Box3> upper, lower;
    for (const auto& pose : tilted.poses) {
        const VoiResult voi = realign_voi(tilted.volume, pose, voi_spec);
        const LabelMap labels = realign_labels(tilted.labels, voi);
        auto boxes = boxes_from_labels(labels);
        (pose.jaw == Jaw::Upper ? upper : lower) = std::move(boxes);
    }
    const double or_realigned =
        (mean_or(upper) * upper.size() + mean_or(lower) * lower.size()) /
        static_cast<double>(upper.size() + lower.size());

    const bool pass = or_realigned <= 0.8 * or_unaligned;
    report(5, "realignment overlap reduction", pass,
           fmt("mean OR %.4f -> %.4f (reduction %.1f%%, need >=20%%), %.1fs", or_unaligned,
               or_realigned, 100.0 * (1.0 - or_realigned / or_unaligned), timer.seconds()));
}

// 6. dilating the tight ground-truth boxes by 2 mm yields OIR = 1.00 for
//    every tooth.
void criterion_6() {
    Timer timer;
    PhantomSpec spec;
    spec.seed = 6;
    const PhantomTruth truth = generate(spec);
    const Box3 bounds = extent_box(truth.labels.geom);

    double min_oir = 1.0;
    for (const Box3& b : truth.boxes) {
        const Box3 grown = dilate(b, 2.0, bounds);
        min_oir = std::min(
            min_oir, object_include_ratio(truth.labels, static_cast<Label>(*b.tooth_id), grown));
    }
    const bool pass = min_oir == 1.0;
    report(6, "object include ratio with margin", pass,
           fmt("%zu teeth, min OIR %.4f (== 1.00), %.1fs", truth.boxes.size(), min_oir,
               timer.seconds()));
}

// 7. AJI, HD and ASSD match brute-force computations on hand-built toys and
//    20 random blob pairs within 1e-9 mm; identical inputs give (1, 0, 0).
void criterion_7() {
    Timer timer;
    bool ok = true;
    std::string why;

    {  // hand-built toy: two gt instances, three predictions
        LabelMap gt(GridGeom{{6, 6, 1}, {1, 1, 1}, {}});
        LabelMap pred(gt.geom);
        for (int j = 0; j < 3; ++j)
            for (int i = 0; i < 3; ++i) gt.at(i, j, 0) = 1;
        for (int j = 3; j < 6; ++j)
            for (int i = 3; i < 6; ++i) gt.at(i, j, 0) = 2;
        for (int j = 0; j < 2; ++j)
            for (int i = 0; i < 3; ++i) pred.at(i, j, 0) = 1;
        for (int j = 3; j < 5; ++j)
            for (int i = 3; i < 6; ++i) pred.at(i, j, 0) = 2;
        for (int j = 4; j < 6; ++j)
            for (int i = 0; i < 2; ++i) pred.at(i, j, 0) = 3;
        if (std::abs(aji(gt, pred) - 12.0 / 22.0) > 1e-12) {
            ok = false;
            why = "toy aji";
        }
        if (std::abs(aji(gt, pred) - oracles::exhaustive_aji(gt, pred)) > 1e-12) {
            ok = false;
            why = "toy aji vs exhaustive";
        }
    }

    double worst_gap = 0.0;
    Rng rng(7100);
    for (int pair = 0; pair < 20; ++pair) {
        const Vec3 spacing{rng.uniform(0.4, 1.2), rng.uniform(0.4, 1.2), rng.uniform(0.4, 1.2)};
        GridGeom g{{14, 13, 12}, spacing, {}};
        BinaryMask a(g), b(g);
        const Vec3 ca{rng.uniform(4, 9), rng.uniform(4, 8), rng.uniform(4, 7)};
        const Vec3 cb{rng.uniform(4, 9), rng.uniform(4, 8), rng.uniform(4, 7)};
        const double ra = rng.uniform(2.0, 3.5), rb = rng.uniform(2.0, 3.5);
        for (int k = 0; k < 12; ++k)
            for (int j = 0; j < 13; ++j)
                for (int i = 0; i < 14; ++i) {
                    const Vec3 p{static_cast<double>(i), static_cast<double>(j),
                                 static_cast<double>(k)};
                    if ((p - ca).norm() <= ra) a.at(i, j, k) = 1;
                    if ((p - cb).norm() <= rb) b.at(i, j, k) = 1;
                }

        const auto [hd_ref, assd_ref] = oracles::brute_surface_metrics(a, b);
        worst_gap = std::max(worst_gap, std::abs(hausdorff_mm(a, b) - hd_ref));
        worst_gap = std::max(worst_gap, std::abs(assd_mm(a, b) - assd_ref));

        LabelMap ga(g), gb(g);
        for (std::size_t v = 0; v < a.data.size(); ++v) {
            ga.data[v] = a.data[v] ? 3 : 0;
            gb.data[v] = b.data[v] ? 5 : 0;
        }
        worst_gap = std::max(worst_gap,
                             std::abs(aji(ga, gb) - oracles::exhaustive_aji(ga, gb)));

        // identical inputs: (aji, hd, assd) == (1, 0, 0) exactly
        if (aji(ga, ga) != 1.0 || hausdorff_mm(a, a) != 0.0 || assd_mm(a, a) != 0.0) {
            ok = false;
            why = "identical inputs not exact";
        }
    }
    if (worst_gap > 1e-9) {
        ok = false;
        why = "oracle gap " + fmt("%.2e", worst_gap);
    }
    report(7, "metric oracles", ok,
           fmt("toy + 20 blob pairs, worst |production - brute force| %.2e (<=1e-9)%s%s, %.1fs",
               worst_gap, why.empty() ? "" : "; ", why.c_str(), timer.seconds()));
}

// 8. end-to-end phantom round trip with ground-truth poses, dilated gt boxes
//    and oracle distance targets reaches per-tooth dice >= 0.95 and
//    AJI >= 0.90; under 3 min.
void criterion_8() {
    Timer timer;
    PhantomSpec spec;
    spec.seed = 8;
    spec.tilt_deg = 10.0;
    spec.metal = {16, 41};
    const PhantomTruth truth = generate(spec);

    VoiSpec voi_spec;
    double min_dice = 1.0, min_aji = 1.0;
    int teeth = 0;
    for (const auto& pose : truth.poses) {
        const VoiResult voi = realign_voi(truth.volume, pose, voi_spec);
        const LabelMap voi_labels = realign_labels(truth.labels, voi);
        const Box3 bounds = extent_box(voi_labels.geom);

        std::vector<std::pair<Box3, DistanceMap>> instances;
        for (const Box3& b : boxes_from_labels(voi_labels)) {
            const Box3 dilated = dilate(b, 2.0, bounds);
            const BinaryMask mask =
                standardize_crop_mask(voi_labels, static_cast<Label>(*b.tooth_id), dilated);
            instances.emplace_back(dilated, regression_target(mask, 20.0));
        }
        const LabelMap assembled = assemble(instances, voi_labels.geom, 0.5 / 20.0);
        const MetricsReport rep = per_instance_report(voi_labels, assembled);
        for (const auto& im : rep.per_instance) {
            min_dice = std::min(min_dice, im.f1);
            ++teeth;
        }
        min_aji = std::min(min_aji, rep.aji);
    }
    const double secs = timer.seconds();
    const bool pass = min_dice >= 0.95 && min_aji >= 0.90 && secs < 180.0;
    report(8, "end-to-end phantom round trip", pass,
           fmt("%d teeth, min dice %.4f (>=0.95), min aji %.4f (>=0.90), %.1fs (<180s)", teeth,
               min_dice, min_aji, secs));
}

// 9. shape contracts at paper scale: 224x224x112 VOI, 64x64x128 crops, and
//    the network preserves 64x64x128 spatial dims (forward only).
void criterion_9() {
    Timer timer;
    PhantomSpec spec;
    spec.seed = 9;
    const PhantomTruth truth = generate(spec);

    VoiSpec voi_spec;
    const VoiResult voi = realign_voi(truth.volume, truth.poses[0], voi_spec);
    const bool voi_ok = voi.voi_geom().dims == Dims3{224, 224, 112};

    const Box3 bounds = extent_box(truth.labels.geom);
    const Box3 crop_box = dilate(truth.boxes.front(), 2.0, bounds);
    const Volume crop = standardize_crop(truth.volume, crop_box);
    const bool crop_ok = crop.geom.dims == Dims3{64, 64, 128};

    bool net_ok = false;
    {
        NoGradGuard ng;
        TsnetParams params = make_tsnet({16, 32, 64, 128}, 4, 9);
        std::vector<double> input(crop.data.begin(), crop.data.end());
        const Tensor x = Tensor::from({1, 64, 64, 128}, std::move(input));
        const Tensor y = tsnet_forward(x, params, NetMode::Eval);
        net_ok = y.shape() == std::vector<int>{1, 64, 64, 128};
    }

    const bool pass = voi_ok && crop_ok && net_ok;
    report(9, "paper-scale shape contracts", pass,
           fmt("voi %s, crop %s, network %s, %.1fs", voi_ok ? "224x224x112" : "WRONG",
               crop_ok ? "64x64x128" : "WRONG", net_ok ? "64x64x128" : "WRONG",
               timer.seconds()));
}

// 10. cutout geometry: 10 000 seeded draws on 64^3 produce sides only in
//     [13, 16] and modify exactly the reported box.
void criterion_10() {
    Timer timer;
    Volume v(GridGeom{{64, 64, 64}, {1, 1, 1}, {}});
    Rng fill(10100);
    for (auto& x : v.data) x = static_cast<float>(fill.uniform(0.25, 1.0));

    CutoutSpec spec;
    spec.probability = 1.0;
    bool sides_ok = true, region_ok = true;
    int draws = 0;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
        const CutoutResult r = cutout(v, spec, seed);
        ++draws;
        const auto& b = *r.box;
        for (int ax = 0; ax < 3; ++ax)
            if (b.side[ax] < 13 || b.side[ax] > 16) sides_ok = false;
        for (int k = 0; k < 64 && region_ok; ++k)
            for (int j = 0; j < 64 && region_ok; ++j)
                for (int i = 0; i < 64; ++i) {
                    const bool inside = i >= b.lo[0] && i <= b.hi[0] && j >= b.lo[1] &&
                                        j <= b.hi[1] && k >= b.lo[2] && k <= b.hi[2];
                    const float expect = inside ? spec.fill : v.at(i, j, k);
                    if (r.volume.at(i, j, k) != expect) {
                        region_ok = false;
                        break;
                    }
                }
        if (!sides_ok && !region_ok) break;
    }
    const bool pass = sides_ok && region_ok;
    report(10, "cutout geometry", pass,
           fmt("%d draws, sides in [13,16] %s, modified region exact %s, %.1fs", draws,
               sides_ok ? "yes" : "NO", region_ok ? "yes" : "NO", timer.seconds()));
}

}  // namespace

int main() {
    std::printf("acceptance suite\n");
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    std::printf("\n%d passed, %d failed\n", g_pass, g_fail);
    return g_fail > 0 ? 1 : 0;
}
