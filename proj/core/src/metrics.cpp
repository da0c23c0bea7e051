#include "toothseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace toothseg {

F1Result f1(const ConfusionCounts& c) {
    if (c.tp < 0 || c.fp < 0 || c.fn < 0) throw std::invalid_argument("f1: negative counts");
    if (c.tp + c.fp == 0) throw std::invalid_argument("f1: tp+fp is zero (no predictions)");
    if (c.tp + c.fn == 0) throw std::invalid_argument("f1: tp+fn is zero (no ground truth)");
    F1Result r;
    r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    r.sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    r.f1 = 2.0 * r.precision * r.sensitivity / (r.precision + r.sensitivity);
    return r;
}

ConfusionCounts confusion(const BinaryMask& gt, const BinaryMask& pred) {
    gt.validate();
    pred.validate();
    if (!(gt.geom == pred.geom)) throw std::invalid_argument("confusion: geometry mismatch");
    ConfusionCounts c;
    for (std::size_t v = 0; v < gt.data.size(); ++v) {
        const bool g = gt.data[v] != 0, p = pred.data[v] != 0;
        c.tp += g && p;
        c.fp += !g && p;
        c.fn += g && !p;
    }
    return c;
}

namespace {

struct InstanceSets {
    std::map<Label, std::int64_t> sizes;
    // per gt label: overlap count against each pred label
    std::map<Label, std::map<Label, std::int64_t>> overlap;
};

InstanceSets instance_overlaps(const LabelMap& gt, const LabelMap& pred,
                               std::map<Label, std::int64_t>& pred_sizes) {
    InstanceSets s;
    for (std::size_t v = 0; v < gt.data.size(); ++v) {
        const Label g = gt.data[v], p = pred.data[v];
        if (g) ++s.sizes[g];
        if (p) ++pred_sizes[p];
        if (g && p) ++s.overlap[g][p];
    }
    return s;
}

struct Matching {
    // gt label -> matched pred label (absent when unmatched)
    std::map<Label, Label> match;
};

/// Greedy matching in ascending gt-label order; each prediction usable once;
/// ties broken toward the smaller predicted label.
Matching greedy_match(const InstanceSets& s, const std::map<Label, std::int64_t>& pred_sizes) {
    Matching m;
    std::map<Label, bool> used;
    for (const auto& [p, sz] : pred_sizes) used[p] = false;
    for (const auto& [g, gsz] : s.sizes) {
        double best_j = 0.0;
        Label best_p = 0;
        const auto it = s.overlap.find(g);
        if (it != s.overlap.end()) {
            for (const auto& [p, inter] : it->second) {
                if (used.at(p)) continue;
                const double uni =
                    static_cast<double>(gsz) + static_cast<double>(pred_sizes.at(p)) - inter;
                const double j = static_cast<double>(inter) / uni;
                if (j > best_j) {
                    best_j = j;
                    best_p = p;
                }
            }
        }
        if (best_p != 0) {
            m.match[g] = best_p;
            used[best_p] = true;
        }
    }
    return m;
}

}  // namespace

double aji(const LabelMap& gt, const LabelMap& pred) {
    gt.validate();
    pred.validate();
    if (!(gt.geom == pred.geom)) throw std::invalid_argument("aji: geometry mismatch");

    std::map<Label, std::int64_t> pred_sizes;
    const InstanceSets s = instance_overlaps(gt, pred, pred_sizes);
    const Matching m = greedy_match(s, pred_sizes);

    std::int64_t num = 0, den = 0;
    std::map<Label, bool> pred_used;
    for (const auto& [p, sz] : pred_sizes) pred_used[p] = false;
    for (const auto& [g, gsz] : s.sizes) {
        const auto it = m.match.find(g);
        if (it == m.match.end()) {
            den += gsz;  // unmatched gt counts in full
            continue;
        }
        const Label p = it->second;
        const std::int64_t inter = s.overlap.at(g).at(p);
        num += inter;
        den += gsz + pred_sizes.at(p) - inter;
        pred_used[p] = true;
    }
    for (const auto& [p, used] : pred_used)
        if (!used) den += pred_sizes.at(p);
    if (den == 0) throw std::invalid_argument("aji: both maps are empty");
    return static_cast<double>(num) / static_cast<double>(den);
}

std::vector<Vec3> surface_voxels(const BinaryMask& mask) {
    mask.validate();
    const auto& d = mask.geom.dims;
    auto bg = [&](int i, int j, int k) {
        return !mask.geom.in_bounds(i, j, k) || mask.at(i, j, k) == 0;
    };
    std::vector<Vec3> surf;
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) {
                if (!mask.at(i, j, k)) continue;
                if (bg(i - 1, j, k) || bg(i + 1, j, k) || bg(i, j - 1, k) || bg(i, j + 1, k) ||
                    bg(i, j, k - 1) || bg(i, j, k + 1))
                    surf.push_back(mask.geom.voxel_center(i, j, k));
            }
    return surf;
}

namespace {

constexpr double kHuge = std::numeric_limits<double>::max() / 4;

// 1D lower-envelope pass of the exact squared Euclidean distance transform,
// with anisotropic step s: out[i] = min_j ((i-j)*s)^2 + f[j].
void edt_1d(const std::vector<double>& f, double s, std::vector<double>& out) {
    const int n = static_cast<int>(f.size());
    std::vector<int> v(n);
    std::vector<double> z(n + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -kHuge;
    z[1] = kHuge;
    const double s2 = s * s;
    for (int q = 1; q < n; ++q) {
        if (f[q] >= kHuge) continue;
        while (true) {
            const int p = v[k];
            if (f[p] >= kHuge) {
                // drop unreachable parabola
                if (k == 0) {
                    v[0] = q;
                    z[0] = -kHuge;
                    z[1] = kHuge;
                    break;
                }
                --k;
                continue;
            }
            const double inter =
                ((f[q] - f[p]) / s2 + static_cast<double>(q) * q - static_cast<double>(p) * p) /
                (2.0 * (q - p));
            if (inter <= z[k]) {
                --k;
                continue;
            }
            ++k;
            v[k] = q;
            z[k] = inter;
            z[k + 1] = kHuge;
            break;
        }
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const int p = v[k];
        out[q] = f[p] >= kHuge ? kHuge : s2 * (q - p) * (q - p) + f[p];
    }
}

/// Exact squared Euclidean distance (mm^2) from every voxel center to the
/// nearest seed voxel center.
std::vector<double> squared_edt(const GridGeom& geom, const std::vector<bool>& seed) {
    const auto& d = geom.dims;
    std::vector<double> dist(geom.voxel_count());
    for (std::size_t v = 0; v < dist.size(); ++v) dist[v] = seed[v] ? 0.0 : kHuge;

    std::vector<double> line, out;
    // x pass
    line.resize(d.nx);
    out.resize(d.nx);
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j) {
            for (int i = 0; i < d.nx; ++i) line[i] = dist[geom.index(i, j, k)];
            edt_1d(line, geom.spacing.x, out);
            for (int i = 0; i < d.nx; ++i) dist[geom.index(i, j, k)] = out[i];
        }
    // y pass
    line.resize(d.ny);
    out.resize(d.ny);
    for (int k = 0; k < d.nz; ++k)
        for (int i = 0; i < d.nx; ++i) {
            for (int j = 0; j < d.ny; ++j) line[j] = dist[geom.index(i, j, k)];
            edt_1d(line, geom.spacing.y, out);
            for (int j = 0; j < d.ny; ++j) dist[geom.index(i, j, k)] = out[j];
        }
    // z pass
    line.resize(d.nz);
    out.resize(d.nz);
    for (int j = 0; j < d.ny; ++j)
        for (int i = 0; i < d.nx; ++i) {
            for (int k = 0; k < d.nz; ++k) line[k] = dist[geom.index(i, j, k)];
            edt_1d(line, geom.spacing.z, out);
            for (int k = 0; k < d.nz; ++k) dist[geom.index(i, j, k)] = out[k];
        }
    return dist;
}

struct SurfaceDistances {
    double max_ab = 0.0, max_ba = 0.0;  // directed maxima
    double sum_ab = 0.0, sum_ba = 0.0;  // directed sums
    std::size_t na = 0, nb = 0;
};

std::vector<bool> surface_indicator(const BinaryMask& mask, std::size_t& count) {
    const auto& d = mask.geom.dims;
    auto bg = [&](int i, int j, int k) {
        return !mask.geom.in_bounds(i, j, k) || mask.at(i, j, k) == 0;
    };
    std::vector<bool> ind(mask.geom.voxel_count(), false);
    count = 0;
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) {
                if (!mask.at(i, j, k)) continue;
                if (bg(i - 1, j, k) || bg(i + 1, j, k) || bg(i, j - 1, k) || bg(i, j + 1, k) ||
                    bg(i, j, k - 1) || bg(i, j, k + 1)) {
                    ind[mask.geom.index(i, j, k)] = true;
                    ++count;
                }
            }
    return ind;
}

/// Restrict both masks to their joint foreground bounding box; all surface
/// voxels of either mask live inside it, so the EDTs below stay exact.
bool crop_to_joint_bbox(const BinaryMask& a, const BinaryMask& b, BinaryMask& ca, BinaryMask& cb) {
    const auto& d = a.geom.dims;
    int lo[3] = {d.nx, d.ny, d.nz}, hi[3] = {-1, -1, -1};
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) {
                if (!a.at(i, j, k) && !b.at(i, j, k)) continue;
                const int idx[3] = {i, j, k};
                for (int ax = 0; ax < 3; ++ax) {
                    lo[ax] = std::min(lo[ax], idx[ax]);
                    hi[ax] = std::max(hi[ax], idx[ax]);
                }
            }
    if (hi[0] < 0) return false;  // both empty
    GridGeom g;
    g.dims = {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1};
    g.spacing = a.geom.spacing;
    g.origin = a.geom.voxel_center(lo[0], lo[1], lo[2]);
    ca = BinaryMask(g);
    cb = BinaryMask(g);
    for (int k = 0; k < g.dims.nz; ++k)
        for (int j = 0; j < g.dims.ny; ++j)
            for (int i = 0; i < g.dims.nx; ++i) {
                ca.at(i, j, k) = a.at(i + lo[0], j + lo[1], k + lo[2]);
                cb.at(i, j, k) = b.at(i + lo[0], j + lo[1], k + lo[2]);
            }
    return true;
}

SurfaceDistances surface_distances(const BinaryMask& a_full, const BinaryMask& b_full) {
    a_full.validate();
    b_full.validate();
    if (!(a_full.geom == b_full.geom))
        throw std::invalid_argument("surface metrics: masks must share a grid");

    BinaryMask a, b;
    if (!crop_to_joint_bbox(a_full, b_full, a, b))
        throw std::invalid_argument("surface metrics: empty mask");

    SurfaceDistances r;
    std::vector<bool> sa = surface_indicator(a, r.na);
    std::vector<bool> sb = surface_indicator(b, r.nb);
    if (r.na == 0 || r.nb == 0)
        throw std::invalid_argument("surface metrics: empty mask");

    const std::vector<double> edt_b = squared_edt(a.geom, sb);
    const std::vector<double> edt_a = squared_edt(a.geom, sa);
    for (std::size_t v = 0; v < sa.size(); ++v) {
        if (sa[v]) {
            const double dist = std::sqrt(edt_b[v]);
            r.max_ab = std::max(r.max_ab, dist);
            r.sum_ab += dist;
        }
        if (sb[v]) {
            const double dist = std::sqrt(edt_a[v]);
            r.max_ba = std::max(r.max_ba, dist);
            r.sum_ba += dist;
        }
    }
    return r;
}

}  // namespace

double hausdorff_mm(const BinaryMask& a, const BinaryMask& b) {
    const SurfaceDistances r = surface_distances(a, b);
    return std::max(r.max_ab, r.max_ba);
}

double assd_mm(const BinaryMask& a, const BinaryMask& b) {
    const SurfaceDistances r = surface_distances(a, b);
    return (r.sum_ab + r.sum_ba) / static_cast<double>(r.na + r.nb);
}

namespace {
BinaryMask mask_of(const LabelMap& labels, Label id) {
    BinaryMask m(labels.geom);
    for (std::size_t v = 0; v < labels.data.size(); ++v) m.data[v] = labels.data[v] == id;
    return m;
}

BinaryMask foreground_of(const LabelMap& labels) {
    BinaryMask m(labels.geom);
    for (std::size_t v = 0; v < labels.data.size(); ++v) m.data[v] = labels.data[v] != 0;
    return m;
}
}  // namespace

MetricsReport per_instance_report(const LabelMap& gt, const LabelMap& pred) {
    gt.validate();
    pred.validate();
    if (!(gt.geom == pred.geom))
        throw std::invalid_argument("per_instance_report: geometry mismatch");

    std::map<Label, std::int64_t> pred_sizes;
    const InstanceSets s = instance_overlaps(gt, pred, pred_sizes);
    const Matching m = greedy_match(s, pred_sizes);

    MetricsReport rep;
    rep.aji = aji(gt, pred);
    for (const auto& [g, gsz] : s.sizes) {
        InstanceMetrics im;
        im.gt_label = g;
        const auto it = m.match.find(g);
        if (it != m.match.end()) {
            im.matched = true;
            im.matched_pred = it->second;
            const std::int64_t inter = s.overlap.at(g).at(it->second);
            const std::int64_t psz = pred_sizes.at(it->second);
            ConfusionCounts c{inter, psz - inter, gsz - inter};
            im.f1 = f1(c).f1;
            const BinaryMask gm = mask_of(gt, g), pm = mask_of(pred, it->second);
            const SurfaceDistances sd = surface_distances(gm, pm);
            im.hd_mm = std::max(sd.max_ab, sd.max_ba);
            im.assd_mm = (sd.sum_ab + sd.sum_ba) / static_cast<double>(sd.na + sd.nb);
        }
        rep.per_instance.push_back(im);
    }

    double mean = 0.0;
    for (const auto& im : rep.per_instance) mean += im.f1;
    mean /= std::max<std::size_t>(1, rep.per_instance.size());
    double var = 0.0;
    for (const auto& im : rep.per_instance) var += (im.f1 - mean) * (im.f1 - mean);
    var /= std::max<std::size_t>(1, rep.per_instance.size());
    rep.f1_mean = mean;
    rep.f1_std = std::sqrt(var);

    const BinaryMask gt_fg = foreground_of(gt), pred_fg = foreground_of(pred);
    const SurfaceDistances sd = surface_distances(gt_fg, pred_fg);
    rep.hd_mm = std::max(sd.max_ab, sd.max_ba);
    rep.assd_mm = (sd.sum_ab + sd.sum_ba) / static_cast<double>(sd.na + sd.nb);
    return rep;
}

}  // namespace toothseg
