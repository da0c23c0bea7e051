#include <doctest.h>

#include <algorithm>
#include <map>
#include <queue>
#include <set>

#include "oracles.hpp"
#include "toothseg/augment.hpp"
#include "toothseg/detector.hpp"
#include "toothseg/distance_field.hpp"
#include "toothseg/metrics.hpp"
#include "toothseg/phantom.hpp"
#include "toothseg/pose_align.hpp"

using namespace toothseg;

namespace {

const PhantomTruth& default_phantom() {
    static const PhantomTruth truth = [] {
        PhantomSpec spec;
        spec.seed = 7;
        return generate(spec);
    }();
    return truth;
}

double mean_or(const std::vector<Box3>& boxes, double grid = 0.2) {
    double acc = 0.0;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        std::vector<Box3> others;
        for (std::size_t n = 0; n < boxes.size(); ++n)
            if (n != i) others.push_back(boxes[n]);
        acc += overlap_ratio(boxes[i], others, grid);
    }
    return acc / static_cast<double>(boxes.size());
}

}  // namespace

TEST_CASE("phantom generation is bit-deterministic under its seed") {
    PhantomSpec spec;
    spec.seed = 3;
    spec.tilt_deg = 7.0;
    spec.metal = {11};
    const PhantomTruth a = generate(spec);
    const PhantomTruth b = generate(spec);
    CHECK(a.volume.data == b.volume.data);
    CHECK(a.labels.data == b.labels.data);
    REQUIRE(a.boxes.size() == b.boxes.size());
    for (std::size_t n = 0; n < a.boxes.size(); ++n) {
        CHECK(a.boxes[n].min_mm == b.boxes[n].min_mm);
        CHECK(a.boxes[n].max_mm == b.boxes[n].max_mm);
    }
    REQUIRE(a.poses.size() == b.poses.size());
    for (std::size_t n = 0; n < a.poses.size(); ++n) {
        CHECK(a.poses[n].point_u == b.poses[n].point_u);
        CHECK(a.poses[n].angle_deg == b.poses[n].angle_deg);
    }
}

TEST_CASE("default phantom places 28 teeth with valid FDI groups") {
    const PhantomTruth& truth = default_phantom();
    CHECK(truth.boxes.size() == 28);
    std::set<int> ids;
    for (const Box3& b : truth.boxes) {
        REQUIRE(b.tooth_id.has_value());
        ids.insert(*b.tooth_id);
        REQUIRE(b.group.has_value());
        const int position = *b.tooth_id % 10;
        if (position <= 3) CHECK(*b.group == ToothGroup::OneRooted);
        if (position > 3) CHECK(*b.group == ToothGroup::Others);
    }
    CHECK(ids.size() == 28);
    CHECK(ids.count(11) == 1);
    CHECK(ids.count(27) == 1);
    CHECK(ids.count(31) == 1);
    CHECK(ids.count(47) == 1);
}

TEST_CASE("missing teeth are omitted from labels and boxes") {
    PhantomSpec spec;
    spec.seed = 4;
    spec.missing = {36};
    const PhantomTruth truth = generate(spec);
    CHECK(truth.boxes.size() == 27);
    for (const Box3& b : truth.boxes) CHECK(*b.tooth_id != 36);
    for (Label l : truth.labels.data) CHECK(l != 36);
}

TEST_CASE("metal crowns are the brightest structures") {
    PhantomSpec spec;
    spec.seed = 5;
    spec.metal = {11};
    const PhantomTruth truth = generate(spec);

    std::map<Label, std::pair<double, std::int64_t>> sums;
    for (std::size_t v = 0; v < truth.labels.data.size(); ++v) {
        const Label l = truth.labels.data[v];
        if (!l) continue;
        sums[l].first += truth.volume.data[v];
        sums[l].second += 1;
    }
    const double metal_mean = sums.at(11).first / sums.at(11).second;
    for (const auto& [label, s] : sums) {
        if (label == 11) continue;
        CHECK(metal_mean > s.first / s.second);
    }
}

TEST_CASE("each tooth label is a single 26-connected component") {
    const PhantomTruth& truth = default_phantom();
    const auto& g = truth.labels.geom;
    const auto& d = g.dims;

    std::map<Label, std::int64_t> voxels;
    std::map<Label, std::array<int, 3>> seed;
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) {
                const Label l = truth.labels.at(i, j, k);
                if (!l) continue;
                ++voxels[l];
                seed[l] = {i, j, k};
            }

    for (const auto& [label, count] : voxels) {
        std::vector<bool> seen(g.voxel_count(), false);
        std::queue<std::array<int, 3>> queue;
        queue.push(seed[label]);
        seen[g.index(seed[label][0], seed[label][1], seed[label][2])] = true;
        std::int64_t reached = 0;
        while (!queue.empty()) {
            const auto [i, j, k] = queue.front();
            queue.pop();
            ++reached;
            for (int dk = -1; dk <= 1; ++dk)
                for (int dj = -1; dj <= 1; ++dj)
                    for (int di = -1; di <= 1; ++di) {
                        const int ii = i + di, jj = j + dj, kk = k + dk;
                        if (!g.in_bounds(ii, jj, kk)) continue;
                        const std::size_t idx = g.index(ii, jj, kk);
                        if (seen[idx] || truth.labels.data[idx] != label) continue;
                        seen[idx] = true;
                        queue.push({ii, jj, kk});
                    }
        }
        INFO("label ", label);
        CHECK(reached == count);
    }
}

TEST_CASE("boxes tightly bound their labels") {
    const PhantomTruth& truth = default_phantom();
    const auto& g = truth.labels.geom;
    const auto& d = g.dims;

    std::map<Label, std::array<int, 6>> extents;  // lo xyz, hi xyz
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) {
                const Label l = truth.labels.at(i, j, k);
                if (!l) continue;
                auto it = extents.find(l);
                if (it == extents.end()) {
                    extents[l] = {i, j, k, i, j, k};
                } else {
                    auto& e = it->second;
                    e[0] = std::min(e[0], i);
                    e[1] = std::min(e[1], j);
                    e[2] = std::min(e[2], k);
                    e[3] = std::max(e[3], i);
                    e[4] = std::max(e[4], j);
                    e[5] = std::max(e[5], k);
                }
            }

    for (const Box3& b : truth.boxes) {
        const auto& e = extents.at(static_cast<Label>(*b.tooth_id));
        for (int ax = 0; ax < 3; ++ax) {
            CHECK(b.min_mm[ax] ==
                  doctest::Approx(g.origin[ax] + (e[ax] - 0.5) * g.spacing[ax]).epsilon(1e-12));
            CHECK(b.max_mm[ax] ==
                  doctest::Approx(g.origin[ax] + (e[3 + ax] + 0.5) * g.spacing[ax])
                      .epsilon(1e-12));
        }
    }
}

TEST_CASE("poses carry the tilt angle and sit on the occlusal lines") {
    PhantomSpec spec;
    spec.seed = 6;
    spec.tilt_deg = 15.0;
    const PhantomTruth truth = generate(spec);
    REQUIRE(truth.poses.size() == 2);
    CHECK(truth.poses[0].jaw == Jaw::Upper);
    CHECK(truth.poses[1].jaw == Jaw::Lower);
    for (const auto& p : truth.poses) CHECK(p.angle_deg == 15.0);

    // untilted: the anchors sit just past the crown tips of each jaw
    PhantomSpec flat = spec;
    flat.tilt_deg = 0.0;
    const PhantomTruth flat_truth = generate(flat);
    const auto& g = flat_truth.labels.geom;
    const double upper_anchor_y =
        g.origin.y + flat_truth.poses[0].point_u * g.spacing.y;
    const double lower_anchor_y =
        g.origin.y + flat_truth.poses[1].point_u * g.spacing.y;

    double upper_min_y = 1e9, lower_max_y = -1e9;
    for (const Box3& b : flat_truth.boxes) {
        if (*b.tooth_id / 10 <= 2)
            upper_min_y = std::min(upper_min_y, b.min_mm.y);
        else
            lower_max_y = std::max(lower_max_y, b.max_mm.y);
    }
    CHECK(std::abs(upper_anchor_y - upper_min_y) < 1.5);
    CHECK(std::abs(lower_anchor_y - lower_max_y) < 1.5);
}

TEST_CASE("tilting raises the mean overlap ratio and realignment restores it") {
    PhantomSpec spec;
    spec.seed = 7;
    const PhantomTruth flat = generate(spec);
    spec.tilt_deg = 15.0;
    const PhantomTruth tilted = generate(spec);

    const double or_flat = mean_or(flat.boxes);
    const double or_tilted = mean_or(tilted.boxes);
    CHECK(or_tilted > or_flat);

    VoiSpec voi_spec;  // 224 x 224 x 112, 12 + 2 mm
    std::vector<Box3> realigned_boxes;
    for (const auto& pose : tilted.poses) {
        const VoiResult voi = realign_voi(tilted.volume, pose, voi_spec);
        const LabelMap voi_labels = realign_labels(tilted.labels, voi);
        for (const Box3& b : boxes_from_labels(voi_labels)) realigned_boxes.push_back(b);
    }
    REQUIRE(realigned_boxes.size() == 28);

    // per jaw, boxes live in separate VOI frames; OR within each jaw
    std::vector<Box3> upper(realigned_boxes.begin(), realigned_boxes.begin() + 14);
    std::vector<Box3> lower(realigned_boxes.begin() + 14, realigned_boxes.end());
    const double or_realigned = (mean_or(upper) * 14 + mean_or(lower) * 14) / 28.0;

    CHECK(or_realigned < or_tilted);
    CHECK(or_realigned <= or_flat + 0.02);
}

TEST_CASE("oracle distance targets have zero background and survive the round trip") {
    const PhantomTruth& truth = default_phantom();
    const auto targets = oracle_distance_targets(truth);
    REQUIRE(targets.size() == truth.boxes.size());

    for (const auto& [box, dm] : targets) {
        const BinaryMask mask =
            standardize_crop_mask(truth.labels, static_cast<Label>(*box.tooth_id), box);
        for (std::size_t v = 0; v < dm.data.size(); ++v) {
            if (!mask.data[v]) CHECK(dm.data[v] == 0.0f);
            if (mask.data[v]) CHECK(dm.data[v] > 0.0f);
        }
    }

    const LabelMap assembled = assemble(targets, truth.labels.geom, 0.5 / 20.0);
    const MetricsReport rep = per_instance_report(truth.labels, assembled);
    for (const auto& im : rep.per_instance) {
        INFO("tooth ", im.gt_label);
        CHECK(im.f1 >= 0.95);
    }
}

TEST_CASE("targets depend on labels only, not intensities") {
    PhantomSpec spec;
    spec.seed = 8;
    const PhantomTruth plain = generate(spec);
    spec.metal = {11, 36};
    const PhantomTruth metal = generate(spec);
    REQUIRE(plain.labels.data == metal.labels.data);

    const auto t0 = oracle_distance_targets(plain);
    const auto t1 = oracle_distance_targets(metal);
    REQUIRE(t0.size() == t1.size());
    for (std::size_t n = 0; n < t0.size(); ++n) CHECK(t0[n].second.data == t1[n].second.data);
}

TEST_CASE("phantom validation rejects bad specs") {
    PhantomSpec spec;
    spec.dims = {32, 96, 128};
    CHECK_THROWS_AS(generate(spec), std::invalid_argument);
    spec = PhantomSpec{};
    spec.teeth_per_jaw = 15;
    CHECK_THROWS_AS(generate(spec), std::invalid_argument);
    spec = PhantomSpec{};
    spec.missing = {99};
    CHECK_THROWS_AS(generate(spec), std::invalid_argument);
    spec = PhantomSpec{};
    spec.arch_width_mm = 8.0;  // slots shrink below the overlap tolerance
    CHECK_THROWS_AS(generate(spec), std::invalid_argument);
}
