#include <doctest.h>

#include <algorithm>
#include <vector>

#include "oracles.hpp"
#include "toothseg/detector.hpp"
#include "toothseg/rng.hpp"

using namespace toothseg;

namespace {

Box3 box(Vec3 mn, Vec3 mx, std::optional<double> score = std::nullopt) {
    Box3 b;
    b.min_mm = mn;
    b.max_mm = mx;
    b.score = score;
    return b;
}

std::vector<Box3> random_boxes(Rng& rng, int n, double extent = 20.0) {
    std::vector<Box3> boxes;
    for (int i = 0; i < n; ++i) {
        Vec3 mn{rng.uniform(0, extent), rng.uniform(0, extent), rng.uniform(0, extent)};
        Vec3 sz{rng.uniform(1, 6), rng.uniform(1, 6), rng.uniform(1, 6)};
        boxes.push_back(box(mn, mn + sz, rng.uniform()));
    }
    return boxes;
}

}  // namespace

TEST_CASE("iou basics") {
    const Box3 a = box({0, 0, 0}, {1, 1, 1});
    CHECK(iou(a, a) == doctest::Approx(1.0));
    CHECK(iou(a, box({5, 5, 5}, {6, 6, 6})) == 0.0);
    // unit cubes overlapping half of one axis: 0.5 / 1.5
    CHECK(iou(a, box({0.5, 0, 0}, {1.5, 1, 1})) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("iou is symmetric and bounded on random boxes") {
    Rng rng(31);
    auto boxes = random_boxes(rng, 30);
    for (std::size_t i = 0; i < boxes.size(); ++i)
        for (std::size_t j = i + 1; j < boxes.size(); ++j) {
            const double ab = iou(boxes[i], boxes[j]);
            CHECK(ab == doctest::Approx(iou(boxes[j], boxes[i])).epsilon(1e-12));
            CHECK(ab >= 0.0);
            CHECK(ab <= 1.0);
        }
}

TEST_CASE("nms keeps a single box") {
    std::vector<Box3> in{box({0, 0, 0}, {1, 1, 1}, 0.5)};
    CHECK(nms(in, 0.3).size() == 1);
}

TEST_CASE("nms keeps only the higher-scoring of two identical boxes") {
    std::vector<Box3> in{box({0, 0, 0}, {1, 1, 1}, 0.9), box({0, 0, 0}, {1, 1, 1}, 0.8)};
    const auto kept = nms(in, 0.5);
    REQUIRE(kept.size() == 1);
    CHECK(*kept[0].score == 0.9);
}

TEST_CASE("nms matches the brute-force oracle on random sets") {
    Rng rng(32);
    for (int trial = 0; trial < 20; ++trial) {
        auto boxes = random_boxes(rng, 100, 15.0);
        const auto fast = nms(boxes, 0.3);
        const auto ref = oracles::brute_nms(boxes, 0.3);
        REQUIRE(fast.size() == ref.size());
        for (std::size_t i = 0; i < fast.size(); ++i) {
            CHECK(fast[i].min_mm == ref[i].min_mm);
            CHECK(fast[i].score == ref[i].score);
        }
    }
}

TEST_CASE("nms output preserves descending score order") {
    Rng rng(33);
    const auto kept = nms(random_boxes(rng, 60), 0.4);
    for (std::size_t i = 0; i + 1 < kept.size(); ++i) CHECK(*kept[i].score >= *kept[i + 1].score);
}

TEST_CASE("assign_group follows FDI positions with a metal override") {
    CHECK(assign_group(12, false) == ToothGroup::OneRooted);
    CHECK(assign_group(16, false) == ToothGroup::Others);
    CHECK(assign_group(33, true) == ToothGroup::Metal);
    CHECK(assign_group(43, false) == ToothGroup::OneRooted);
    CHECK(assign_group(48, false) == ToothGroup::Others);
    CHECK_THROWS_AS(assign_group(9, false), std::invalid_argument);
    CHECK_THROWS_AS(assign_group(50, false), std::invalid_argument);
    CHECK_THROWS_AS(assign_group(19, false), std::invalid_argument);
}

TEST_CASE("dilate grows and clamps") {
    const Box3 bounds = box({-10, -10, -10}, {10, 10, 10});
    const Box3 unit = box({0, 0, 0}, {1, 1, 1});
    const Box3 same = dilate(unit, 0.0, bounds);
    CHECK(same.min_mm == unit.min_mm);
    CHECK(same.max_mm == unit.max_mm);

    const Box3 grown = dilate(unit, 2.0, bounds);
    CHECK(grown.min_mm == Vec3{-2, -2, -2});
    CHECK(grown.max_mm == Vec3{3, 3, 3});

    const Box3 corner = dilate(box({-10, -10, -10}, {-8, -8, -8}), 2.0, bounds);
    CHECK(corner.min_mm == Vec3{-10, -10, -10});
    CHECK(corner.max_mm == Vec3{-6, -6, -6});
    corner.validate();
}

TEST_CASE("dilate is monotone before clamping") {
    Rng rng(34);
    const Box3 bounds = box({-50, -50, -50}, {50, 50, 50});
    for (const Box3& b : random_boxes(rng, 20)) {
        const Box3 grown = dilate(b, 1.5, bounds);
        for (int ax = 0; ax < 3; ++ax) {
            CHECK(grown.min_mm[ax] <= b.min_mm[ax]);
            CHECK(grown.max_mm[ax] >= b.max_mm[ax]);
        }
    }
}

TEST_CASE("overlap_ratio basics") {
    const Box3 a = box({0, 0, 0}, {2, 2, 2});
    std::vector<Box3> none{box({10, 10, 10}, {11, 11, 11})};
    CHECK(overlap_ratio(a, none) == 0.0);

    std::vector<Box3> self{a};
    CHECK(overlap_ratio(a, self) == doctest::Approx(1.0));

    std::vector<Box3> half{box({1, 0, 0}, {3, 2, 2})};
    CHECK(overlap_ratio(a, half) == doctest::Approx(0.5));
}

TEST_CASE("overlap_ratio is monotone in the neighbor set") {
    Rng rng(35);
    const Box3 a = box({5, 5, 5}, {9, 9, 9});
    auto neighbors = random_boxes(rng, 8, 12.0);
    double prev = 0.0;
    for (std::size_t n = 1; n <= neighbors.size(); ++n) {
        const double r =
            overlap_ratio(a, std::span<const Box3>(neighbors.data(), n), 0.2);
        CHECK(r >= prev - 1e-12);
        prev = r;
    }
}

TEST_CASE("object_include_ratio counts foreground voxel centers") {
    LabelMap m(GridGeom{{10, 10, 10}, {1, 1, 1}, {}});
    // a 4x4x4 block of label 1 at [2,6)
    for (int k = 2; k < 6; ++k)
        for (int j = 2; j < 6; ++j)
            for (int i = 2; i < 6; ++i) m.at(i, j, k) = 1;

    CHECK(object_include_ratio(m, 1, box({-1, -1, -1}, {20, 20, 20})) == doctest::Approx(1.0));
    CHECK(object_include_ratio(m, 1, box({7, 7, 7}, {9, 9, 9})) == 0.0);
    // half the block along x: centers 2,3 of 2..5
    CHECK(object_include_ratio(m, 1, box({1.5, 0, 0}, {3.5, 9, 9})) == doctest::Approx(0.5));
    CHECK_THROWS_AS(object_include_ratio(m, 7, box({0, 0, 0}, {1, 1, 1})), std::invalid_argument);
}

TEST_CASE("average_precision_50 basics") {
    std::vector<Box3> gt{box({0, 0, 0}, {1, 1, 1}), box({10, 0, 0}, {11, 1, 1}),
                         box({20, 0, 0}, {21, 1, 1})};
    std::vector<Box3> perfect = gt;
    perfect[0].score = 0.3;
    perfect[1].score = 0.9;
    perfect[2].score = 0.5;
    CHECK(average_precision_50(gt, perfect) == doctest::Approx(1.0));
    CHECK(average_precision_50(gt, {}) == 0.0);
}

TEST_CASE("average_precision_50 matches a hand-computed PR integral") {
    std::vector<Box3> gt{box({0, 0, 0}, {1, 1, 1}), box({10, 0, 0}, {11, 1, 1}),
                         box({20, 0, 0}, {21, 1, 1})};
    std::vector<Box3> pred{
        box({0, 0, 0}, {1, 1, 1}, 0.9),     // TP
        box({40, 0, 0}, {41, 1, 1}, 0.8),   // FP
        box({10, 0, 0}, {11, 1, 1}, 0.7),   // TP
        box({10, 0, 0}, {11, 1, 1}, 0.6),   // duplicate -> FP
    };
    // PR points: (1/3,1), (1/3,1/2), (2/3,2/3), (2/3,1/2); all-point AP = 1/3 + (1/3)(2/3)
    CHECK(average_precision_50(gt, pred) == doctest::Approx(5.0 / 9.0));
}

TEST_CASE("anchor grid centers stay inside the extent") {
    AnchorGrid grid;
    grid.extent = box({0, 0, 0}, {10, 10, 10});
    grid.stride_mm = {5, 5, 5};
    const auto anchors = grid.generate();
    CHECK(anchors.size() == 3 * 3 * 3 * grid.base_sizes_mm.size());
    for (const Box3& a : anchors) {
        const Vec3 c = (a.min_mm + a.max_mm) * 0.5;
        CHECK(grid.extent.contains(c));
    }
}

TEST_CASE("sampler returns the coincident anchor as sole positive") {
    std::vector<Box3> anchors{box({0, 0, 0}, {2, 2, 2}), box({10, 10, 10}, {12, 12, 12})};
    std::vector<Box3> gt{box({0, 0, 0}, {2, 2, 2})};
    gt[0].group = ToothGroup::OneRooted;

    SamplerConfig cfg;
    const RpnTargets t = sample_rpn_targets(anchors, gt, cfg);
    REQUIRE(t.positives.size() == 1);
    CHECK(t.positives[0].anchor_index == 0);
    CHECK(t.positives[0].iou_to_gt == doctest::Approx(1.0));
    CHECK(t.positives[0].group == ToothGroup::OneRooted);
    CHECK(!t.positives[0].forced);
}

TEST_CASE("sampler force-includes the best anchor when nothing clears t_pos") {
    std::vector<Box3> anchors{box({0, 0, 0}, {1, 1, 1}), box({5, 0, 0}, {6, 1, 1}),
                              box({30, 30, 30}, {31, 31, 31})};
    std::vector<Box3> gt{box({5.5, 0, 0}, {6.5, 1, 1}), box({50, 50, 50}, {51, 51, 51})};
    SamplerConfig cfg;
    const RpnTargets t = sample_rpn_targets(anchors, gt, cfg);
    REQUIRE(t.positives.size() == 2);
    for (const auto& p : t.positives) CHECK(p.forced);
    // gt 0 overlaps anchor 1; gt 1 overlaps nothing and takes any unused anchor
    CHECK(t.positives[0].anchor_index == 1);
}

TEST_CASE("sampler covers every gt and respects the pairwise bound") {
    Rng rng(36);
    std::vector<Box3> gt;
    for (int i = 0; i < 6; ++i) {
        Vec3 mn{i * 8.0, rng.uniform(0, 2), rng.uniform(0, 2)};
        Box3 b = box(mn, mn + Vec3{5, 5, 5});
        b.group = ToothGroup::Others;
        gt.push_back(b);
    }
    AnchorGrid grid;
    grid.extent = box({-2, -2, -2}, {50, 10, 10});
    grid.stride_mm = {3, 3, 3};
    const auto anchors = grid.generate();

    SamplerConfig cfg;
    cfg.seed = 9;
    const RpnTargets t = sample_rpn_targets(anchors, gt, cfg);

    std::vector<bool> covered(gt.size(), false);
    for (const auto& p : t.positives) covered[p.gt_index] = true;
    for (bool c : covered) CHECK(c);

    for (std::size_t a = 0; a < t.positives.size(); ++a)
        for (std::size_t b = a + 1; b < t.positives.size(); ++b) {
            if (t.positives[a].forced || t.positives[b].forced) continue;
            CHECK(iou(anchors[t.positives[a].anchor_index],
                      anchors[t.positives[b].anchor_index]) <= cfg.nms_iou + 1e-12);
        }

    CHECK(static_cast<int>(t.negative_indices.size()) <= cfg.max_neg);
    for (int idx : t.negative_indices) {
        double best = 0.0;
        for (const Box3& g : gt) best = std::max(best, iou(anchors[idx], g));
        CHECK(best <= cfg.t_neg + 1e-12);
    }
}

TEST_CASE("sampler with empty gt returns negatives only") {
    Rng rng(37);
    const auto anchors = random_boxes(rng, 40);
    SamplerConfig cfg;
    const RpnTargets t = sample_rpn_targets(anchors, {}, cfg);
    CHECK(t.positives.empty());
    CHECK(t.negative_indices.size() == 32);
}

TEST_CASE("sampler is deterministic under its seed") {
    Rng rng(38);
    const auto anchors = random_boxes(rng, 50);
    std::vector<Box3> gt{box({2, 2, 2}, {7, 7, 7})};
    SamplerConfig cfg;
    cfg.seed = 123;
    const RpnTargets a = sample_rpn_targets(anchors, gt, cfg);
    const RpnTargets b = sample_rpn_targets(anchors, gt, cfg);
    CHECK(a.negative_indices == b.negative_indices);
    REQUIRE(a.positives.size() == b.positives.size());
    for (std::size_t i = 0; i < a.positives.size(); ++i)
        CHECK(a.positives[i].anchor_index == b.positives[i].anchor_index);
}
