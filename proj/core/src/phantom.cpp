#include "toothseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "toothseg/augment.hpp"
#include "toothseg/rng.hpp"

namespace toothseg {

void PhantomSpec::validate() const {
    GridGeom{dims, spacing, {}}.validate();
    if (dims.nx < 64 || dims.ny < 64 || dims.nz < 64)
        throw std::invalid_argument("phantom: dims must be >= 64 per axis");
    if (teeth_per_jaw < 2 || teeth_per_jaw > 16 || teeth_per_jaw % 2 != 0)
        throw std::invalid_argument("phantom: teeth_per_jaw must be even and in [2, 16]");
    if (arch_bow_mm <= 0 || arch_width_mm <= 0 || occlusal_gap_mm < 0)
        throw std::invalid_argument("phantom: arch parameters must be positive");
    if (noise_sigma < 0) throw std::invalid_argument("phantom: noise_sigma must be >= 0");
    auto check_fdi = [](int id, const char* what) {
        const int q = id / 10, p = id % 10;
        if (q < 1 || q > 4 || p < 1 || p > 8)
            throw std::invalid_argument(std::string("phantom: invalid FDI code in ") + what +
                                        ": " + std::to_string(id));
    };
    for (int id : missing) check_fdi(id, "missing");
    for (int id : metal) check_fdi(id, "metal");
}

namespace {

struct ArchPoint {
    Vec3 pos;      // on the arch curve, y = 0
    double tx, tz;  // unit tangent in the (x, z) plane
};

/// Arc-length parameterized parabola x = apex_x - bow * (z / half_w)^2.
struct Arch {
    double apex_x, half_w, bow, center_z;
    std::vector<double> zs, arc;  // fine samples and cumulative arc length

    Arch(double apex, double width, double b, double cz)
        : apex_x(apex), half_w(width / 2.0), bow(b), center_z(cz) {
        const int n = 4000;
        zs.resize(n + 1);
        arc.resize(n + 1);
        double prev_x = 0, prev_z = 0;
        for (int i = 0; i <= n; ++i) {
            const double zn = -half_w + 2.0 * half_w * i / n;
            const double x = x_of(zn);
            zs[i] = zn;
            arc[i] = i == 0 ? 0.0 : arc[i - 1] + std::hypot(x - prev_x, zn - prev_z);
            prev_x = x;
            prev_z = zn;
        }
    }

    double x_of(double zn) const { return apex_x - bow * (zn / half_w) * (zn / half_w); }
    double total() const { return arc.back(); }

    ArchPoint at_arc(double s) const {
        const auto it = std::lower_bound(arc.begin(), arc.end(), s);
        const std::size_t i = std::min<std::size_t>(arc.size() - 1,
                                                    static_cast<std::size_t>(it - arc.begin()));
        const double zn = zs[i];
        const double dxdz = -2.0 * bow * zn / (half_w * half_w);
        const double norm = std::hypot(1.0, dxdz);
        ArchPoint p;
        p.pos = {x_of(zn), 0.0, center_z + zn};
        p.tx = dxdz / norm;
        p.tz = 1.0 / norm;
        return p;
    }

    /// Distance from an (x, z) point to the sampled curve.
    double plane_distance(double x, double z) const {
        double best = 1e300;
        for (std::size_t i = 0; i < zs.size(); i += 16) {
            const double dx = x - x_of(zs[i]);
            const double dz = z - (center_z + zs[i]);
            best = std::min(best, dx * dx + dz * dz);
        }
        return std::sqrt(best);
    }
};

struct Tooth {
    int fdi = 0;
    Jaw jaw = Jaw::Upper;
    bool metal = false;
    Vec3 tip;              // crown tip (occlusal) point, untilted world
    double up = 1.0;       // +1 roots point +y, -1 roots point -y
    double tx = 0, tz = 1;  // arch tangent
    double nx = 1, nz = 0;  // arch normal
    double a_c = 2, b_c = 2.5, crown_len = 4, root_len = 7;
    double a_r = 1, b_r = 1, lobe_off = 0;
    int lobes = 1;
    double streak_phase = 0;

    double total_len() const { return crown_len + root_len; }

    /// Positive inside; larger is deeper. Evaluated in the untilted frame.
    double insideness(const Vec3& p) const {
        const double eta = up * (p.y - tip.y);
        if (eta < -0.5 || eta > total_len() + 0.5) return -1.0;
        const double rx = p.x - tip.x, rz = p.z - tip.z;
        const double xi = rx * tx + rz * tz;
        const double zeta = rx * nx + rz * nz;
        if (std::abs(xi) > 3.0 * a_c || std::abs(zeta) > 3.0 * b_c) return -1.0;

        constexpr double e = 2.5;
        const double hc = crown_len / 2.0;
        double best = 1.0 - (std::pow(std::abs(xi) / a_c, e) +
                             std::pow(std::abs(zeta) / b_c, e) +
                             std::pow(std::abs(eta - hc) / hc, e));

        const double eta0 = 0.6 * crown_len;
        if (eta >= eta0) {
            const double t = (eta - eta0) / (total_len() - eta0);
            double w = 1.0 - 0.72 * t;
            w = std::max(w, 0.55 / std::min(a_r, b_r));  // blunt tip, >= half a voxel
            for (int l = 0; l < lobes; ++l) {
                const double off = lobes == 1 ? 0.0 : (l == 0 ? -lobe_off : lobe_off);
                const double fx = (xi - off) / (a_r * w);
                const double fz = zeta / (b_r * w);
                best = std::max(best, 1.0 - (fx * fx + fz * fz));
            }
        }
        return best;
    }

    bool in_crown(const Vec3& p) const {
        const double eta = up * (p.y - tip.y);
        return eta >= -0.25 && eta <= crown_len;
    }
};

int fdi_for(Jaw jaw, int index_along_arch, int per_quadrant) {
    // teeth walk the arch from -z to +z; quadrants 1/4 sit at z < 0
    const bool right_side = index_along_arch < per_quadrant;
    const int position =
        right_side ? per_quadrant - index_along_arch : index_along_arch - per_quadrant + 1;
    const int quadrant = jaw == Jaw::Upper ? (right_side ? 1 : 2) : (right_side ? 4 : 3);
    return 10 * quadrant + position;
}

}  // namespace

PhantomTruth generate(const PhantomSpec& spec) {
    spec.validate();

    GridGeom geom{spec.dims, spec.spacing, {0, 0, 0}};
    const Vec3 lo = geom.extent_min(), hi = geom.extent_max();
    const Vec3 center = (lo + hi) * 0.5;

    const Arch arch(center.x + spec.arch_bow_mm / 2.0, spec.arch_width_mm, spec.arch_bow_mm,
                    center.z);
    const double slot = arch.total() / spec.teeth_per_jaw;
    if (slot < 3.0)
        throw std::invalid_argument(
            "phantom: teeth would overlap (arch slot " + std::to_string(slot) +
            " mm < 3 mm); widen the arch or reduce teeth_per_jaw");

    Rng root(spec.seed);
    const int per_quadrant = spec.teeth_per_jaw / 2;

    std::vector<Tooth> teeth;
    for (Jaw jaw : {Jaw::Upper, Jaw::Lower}) {
        const double occ_y = jaw == Jaw::Upper ? center.y + spec.occlusal_gap_mm / 2.0
                                               : center.y - spec.occlusal_gap_mm / 2.0;
        for (int t = 0; t < spec.teeth_per_jaw; ++t) {
            const int fdi = fdi_for(jaw, t, per_quadrant);
            if (spec.missing.count(fdi)) continue;

            Rng jitter = root.split(static_cast<std::uint64_t>(fdi));
            const double j = 1.0 + jitter.uniform(-0.06, 0.06);

            const int position = fdi % 10;
            const ToothSizes& sz = position <= 3   ? spec.one_rooted
                                   : position <= 5 ? spec.premolar
                                                   : spec.molar;
            const double tangential_frac = position <= 3 ? 0.55 : position <= 5 ? 0.60 : 0.64;

            Tooth tooth;
            tooth.fdi = fdi;
            tooth.jaw = jaw;
            tooth.metal = spec.metal.count(fdi) > 0;
            const ArchPoint ap = arch.at_arc((t + 0.5) * slot);
            tooth.tip = {ap.pos.x, occ_y, ap.pos.z};
            tooth.up = jaw == Jaw::Upper ? 1.0 : -1.0;
            tooth.tx = ap.tx;
            tooth.tz = ap.tz;
            tooth.nx = -ap.tz;
            tooth.nz = ap.tx;
            tooth.a_c = tangential_frac * slot / 2.0 * j;
            tooth.b_c = sz.crown_radial_half * j;
            tooth.crown_len = sz.crown_len * j;
            tooth.root_len = sz.root_len * j;
            tooth.a_r = 0.55 * tooth.a_c;
            tooth.b_r = 0.60 * tooth.b_c;
            tooth.lobes = sz.root_lobes;
            tooth.lobe_off = tooth.lobes == 2 ? 0.45 * tooth.a_c : 0.0;
            tooth.streak_phase = jitter.uniform(0.0, 2.0 * M_PI);
            teeth.push_back(tooth);
        }
    }

    // scene tilt about the x axis through the volume center
    const RigidTransform tilt = RigidTransform::about_x(spec.tilt_deg, center);
    const RigidTransform untilt = tilt.inverse();

    PhantomTruth truth;
    truth.volume = Volume(geom);
    truth.labels = LabelMap(geom);

    const double root_band_lo = 0.3;  // bone starts partway up the crown
    Rng noise = root.split(0xbeefULL);

    const auto& d = geom.dims;
    for (int k = 0; k < d.nz; ++k)
        for (int jy = 0; jy < d.ny; ++jy)
            for (int i = 0; i < d.nx; ++i) {
                const Vec3 p = untilt.apply(geom.voxel_center(i, jy, k));

                double best = 0.0;
                const Tooth* owner = nullptr;
                for (const Tooth& tooth : teeth) {
                    const double ins = tooth.insideness(p);
                    if (ins > best) {
                        best = ins;
                        owner = &tooth;
                    }
                }

                float value = 0.0f;
                bool metal_crown = false;
                if (owner) {
                    truth.labels.at(i, jy, k) = static_cast<Label>(owner->fdi);
                    metal_crown = owner->metal && owner->in_crown(p);
                    value = metal_crown ? spec.metal_value : spec.tooth_value;
                } else {
                    // alveolar bone: a shell around the arch at root height
                    const double up_y = p.y - center.y;
                    const double occ = spec.occlusal_gap_mm / 2.0;
                    const double max_len = 12.0;
                    const bool in_band =
                        (up_y > occ + root_band_lo * 4.0 && up_y < occ + max_len + 1.5) ||
                        (up_y < -occ - root_band_lo * 4.0 && up_y > -occ - max_len - 1.5);
                    if (in_band && arch.plane_distance(p.x, p.z) < spec.bone_radius_mm)
                        value = spec.bone_value;
                }

                if (!metal_crown) {
                    // radial streaks in the axial (constant-y) planes of metal crowns
                    for (const Tooth& tooth : teeth) {
                        if (!tooth.metal) continue;
                        const double eta = tooth.up * (p.y - tooth.tip.y);
                        if (eta < -1.0 || eta > tooth.crown_len + 1.0) continue;
                        const double dx = p.x - tooth.tip.x, dz = p.z - tooth.tip.z;
                        const double r = std::hypot(dx, dz);
                        if (r > 8.0 || r < 1e-6) continue;
                        const double phi = std::atan2(dz, dx);
                        const double ray = std::sin(12.0 * phi + tooth.streak_phase);
                        value += static_cast<float>(8.0 * spec.noise_sigma * (ray >= 0 ? 1 : -1) *
                                                    (1.0 - r / 8.0));
                    }
                }

                if (spec.noise_sigma > 0)
                    value += static_cast<float>(spec.noise_sigma * noise.normal());
                truth.volume.at(i, jy, k) = value;
            }

    truth.boxes = boxes_from_labels(truth.labels);
    for (Box3& b : truth.boxes) b.group = assign_group(*b.tooth_id, spec.metal.count(*b.tooth_id) > 0);

    for (Jaw jaw : {Jaw::Upper, Jaw::Lower}) {
        const double occ_y = jaw == Jaw::Upper ? center.y + spec.occlusal_gap_mm / 2.0
                                               : center.y - spec.occlusal_gap_mm / 2.0;
        const Vec3 anchor = tilt.apply({center.x, occ_y, center.z});
        PoseEstimate pose;
        pose.jaw = jaw;
        pose.angle_deg = spec.tilt_deg;
        pose.point_u = (anchor.y - geom.origin.y) / geom.spacing.y;
        pose.point_v = (anchor.z - geom.origin.z) / geom.spacing.z;
        truth.poses.push_back(pose);
    }
    return truth;
}

std::vector<std::pair<Box3, DistanceMap>> oracle_distance_targets(const PhantomTruth& truth,
                                                                  double dilate_mm,
                                                                  double d_max_vox,
                                                                  Dims3 crop_dims) {
    Box3 bounds;
    bounds.min_mm = truth.labels.geom.extent_min();
    bounds.max_mm = truth.labels.geom.extent_max();

    std::vector<std::pair<Box3, DistanceMap>> out;
    for (const Box3& box : truth.boxes) {
        const Box3 dilated = dilate(box, dilate_mm, bounds);
        const BinaryMask mask = standardize_crop_mask(truth.labels,
                                                      static_cast<Label>(*box.tooth_id), dilated,
                                                      crop_dims);
        out.emplace_back(dilated, regression_target(mask, d_max_vox));
    }
    return out;
}

}  // namespace toothseg
