#include "toothseg/neural.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace toothseg {

namespace detail {

struct TensorNode {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backprop;

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (int s : shape) n *= s;
        return n;
    }
    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
};

thread_local bool g_grad_enabled = true;

struct TensorAccess {
    static std::shared_ptr<TensorNode> node(const Tensor& t) { return t.node_; }
    static Tensor wrap(std::shared_ptr<TensorNode> n) { return Tensor(std::move(n)); }
};

}  // namespace detail

using detail::TensorAccess;
using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

NoGradGuard::NoGradGuard() : previous_(detail::g_grad_enabled) {
    detail::g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { detail::g_grad_enabled = previous_; }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value.assign(static_cast<std::size_t>(n->numel()), value);
    n->requires_grad = requires_grad;
    return TensorAccess::wrap(std::move(n));
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    if (static_cast<std::int64_t>(data.size()) != n->numel())
        throw std::invalid_argument("tensor: data length does not match shape");
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return TensorAccess::wrap(std::move(n));
}

const std::vector<int>& Tensor::shape() const { return node_->shape; }
std::int64_t Tensor::numel() const { return node_->numel(); }
std::vector<double>& Tensor::values() { return node_->value; }
const std::vector<double>& Tensor::values() const { return node_->value; }
bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw std::runtime_error("tensor: no gradient recorded");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.assign(node_->value.size(), 0.0);
}

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("tensor: item() needs a scalar");
    return node_->value[0];
}

void Tensor::backward() const {
    if (numel() != 1) throw std::invalid_argument("backward: root must be scalar");

    // iterative post-order DFS gives a topological order
    std::vector<TensorNode*> topo;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            TensorNode* p = n->parents[next++].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            topo.push_back(n);
            stack.pop_back();
        }
    }

    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop(**it);
}

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

/// Op factory: the closure is recorded only when autograd is on and some
/// parent requires gradients.
Tensor make_op(std::vector<int> shape, const std::vector<Tensor>& parents,
               std::function<void(TensorNode&)> backprop) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value.assign(static_cast<std::size_t>(n->numel()), 0.0);
    bool needs = false;
    for (const auto& p : parents) needs |= p.defined() && p.requires_grad();
    if (detail::g_grad_enabled && needs) {
        n->requires_grad = true;
        for (const auto& p : parents)
            if (p.defined()) n->parents.push_back(TensorAccess::node(p));
        n->backprop = std::move(backprop);
    }
    return TensorAccess::wrap(std::move(n));
}

bool wants_grad(const NodePtr& n) { return n && n->requires_grad; }

}  // namespace

// ---------------------------------------------------------------------------
// elementwise and reduction ops
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
    NodePtr xn = TensorAccess::node(x);
    Tensor out = make_op(x.shape(), {x}, [xn](TensorNode& self) {
        if (!wants_grad(xn)) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.value.size(); ++i)
            if (xn->value[i] > 0.0) xn->grad[i] += self.grad[i];
    });
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::max(0.0, xn->value[i]);
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "add: shape mismatch");
    NodePtr an = TensorAccess::node(a), bn = TensorAccess::node(b);
    Tensor out = make_op(a.shape(), {a, b}, [an, bn](TensorNode& self) {
        for (const NodePtr& p : {an, bn}) {
            if (!wants_grad(p)) continue;
            p->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
    });
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = an->value[i] + bn->value[i];
    return out;
}

Tensor scale(const Tensor& a, double s) {
    NodePtr an = TensorAccess::node(a);
    Tensor out = make_op(a.shape(), {a}, [an, s](TensorNode& self) {
        if (!wants_grad(an)) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += s * self.grad[i];
    });
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = s * an->value[i];
    return out;
}

Tensor mse(const Tensor& pred, const Tensor& target) {
    require(pred.shape() == target.shape(), "mse: shape mismatch");
    NodePtr pn = TensorAccess::node(pred), tn = TensorAccess::node(target);
    const double inv_n = 1.0 / static_cast<double>(pred.numel());
    Tensor out = make_op({1}, {pred, target}, [pn, tn, inv_n](TensorNode& self) {
        const double g = self.grad[0];
        if (wants_grad(pn)) {
            pn->ensure_grad();
            for (std::size_t i = 0; i < pn->value.size(); ++i)
                pn->grad[i] += g * 2.0 * inv_n * (pn->value[i] - tn->value[i]);
        }
        if (wants_grad(tn)) {
            tn->ensure_grad();
            for (std::size_t i = 0; i < tn->value.size(); ++i)
                tn->grad[i] -= g * 2.0 * inv_n * (pn->value[i] - tn->value[i]);
        }
    });
    double acc = 0.0;
    for (std::size_t i = 0; i < pn->value.size(); ++i) {
        const double e = pn->value[i] - tn->value[i];
        acc += e * e;
    }
    out.values()[0] = acc * inv_n;
    return out;
}

Tensor sum_squares(const Tensor& a) {
    NodePtr an = TensorAccess::node(a);
    Tensor out = make_op({1}, {a}, [an](TensorNode& self) {
        if (!wants_grad(an)) return;
        an->ensure_grad();
        const double g = self.grad[0];
        for (std::size_t i = 0; i < an->value.size(); ++i)
            an->grad[i] += g * 2.0 * an->value[i];
    });
    double acc = 0.0;
    for (double v : an->value) acc += v * v;
    out.values()[0] = acc;
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require(a.shape().size() == 4 && b.shape().size() == 4, "concat: need 4-d tensors");
    require(a.shape()[1] == b.shape()[1] && a.shape()[2] == b.shape()[2] &&
                a.shape()[3] == b.shape()[3],
            "concat: spatial dims differ");
    NodePtr an = TensorAccess::node(a), bn = TensorAccess::node(b);
    const std::size_t na = an->value.size(), nb = bn->value.size();
    std::vector<int> shape = a.shape();
    shape[0] += b.shape()[0];
    Tensor out = make_op(shape, {a, b}, [an, bn, na, nb](TensorNode& self) {
        if (wants_grad(an)) {
            an->ensure_grad();
            for (std::size_t i = 0; i < na; ++i) an->grad[i] += self.grad[i];
        }
        if (wants_grad(bn)) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < nb; ++i) bn->grad[i] += self.grad[na + i];
        }
    });
    auto& ov = out.values();
    std::copy(an->value.begin(), an->value.end(), ov.begin());
    std::copy(bn->value.begin(), bn->value.end(), ov.begin() + static_cast<std::ptrdiff_t>(na));
    return out;
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
    int C, X, Y, Z;
    int OC, Cg, K;
    int OX, OY, OZ;
    int groups, stride, padding;
    int ocg;  // out channels per group
};

ConvDims conv_dims(const std::vector<int>& xs, const std::vector<int>& ws, int stride, int padding,
                   int groups) {
    require(xs.size() == 4, "conv3d: input must be (C, X, Y, Z)");
    require(ws.size() == 5, "conv3d: weight must be (OC, C/groups, K, K, K)");
    require(stride >= 1 && padding >= 0 && groups >= 1, "conv3d: bad stride/padding/groups");
    ConvDims d;
    d.C = xs[0];
    d.X = xs[1];
    d.Y = xs[2];
    d.Z = xs[3];
    d.OC = ws[0];
    d.Cg = ws[1];
    d.K = ws[2];
    require(ws[3] == d.K && ws[4] == d.K, "conv3d: kernel must be cubic");
    require(d.C % groups == 0 && d.OC % groups == 0, "conv3d: channels not divisible by groups");
    require(d.Cg * groups == d.C, "conv3d: weight in-channels disagree with input");
    d.groups = groups;
    d.stride = stride;
    d.padding = padding;
    d.ocg = d.OC / groups;
    auto out_len = [&](int in) { return (in + 2 * padding - d.K) / stride + 1; };
    d.OX = out_len(d.X);
    d.OY = out_len(d.Y);
    d.OZ = out_len(d.Z);
    require(d.OX >= 1 && d.OY >= 1 && d.OZ >= 1, "conv3d: output would be empty");
    return d;
}

// out[oc,ox,oy,:] += w * x[ic,ix,iy,:] rows, stride-1 fast path inside.
void conv_forward(const ConvDims& d, const double* xv, const double* wv, const double* bv,
                  double* ov) {
    const std::size_t xcs = static_cast<std::size_t>(d.X) * d.Y * d.Z;
    const std::size_t ocs = static_cast<std::size_t>(d.OX) * d.OY * d.OZ;
    for (int oc = 0; oc < d.OC; ++oc) {
        const int g = oc / d.ocg;
        double* oplane = ov + oc * ocs;
        if (bv) {
            const double b = bv[oc];
            for (std::size_t i = 0; i < ocs; ++i) oplane[i] = b;
        }
        for (int icl = 0; icl < d.Cg; ++icl) {
            const int ic = g * d.Cg + icl;
            const double* xplane = xv + ic * xcs;
            const double* wk =
                wv + ((static_cast<std::size_t>(oc) * d.Cg + icl) * d.K * d.K * d.K);
            for (int kx = 0; kx < d.K; ++kx)
                for (int ky = 0; ky < d.K; ++ky)
                    for (int kz = 0; kz < d.K; ++kz) {
                        const double wgt = wk[(kx * d.K + ky) * d.K + kz];
                        if (wgt == 0.0) continue;
                        for (int ox = 0; ox < d.OX; ++ox) {
                            const int ix = ox * d.stride - d.padding + kx;
                            if (ix < 0 || ix >= d.X) continue;
                            for (int oy = 0; oy < d.OY; ++oy) {
                                const int iy = oy * d.stride - d.padding + ky;
                                if (iy < 0 || iy >= d.Y) continue;
                                double* orow = oplane + (static_cast<std::size_t>(ox) * d.OY + oy) * d.OZ;
                                const double* xrow =
                                    xplane + (static_cast<std::size_t>(ix) * d.Y + iy) * d.Z;
                                if (d.stride == 1) {
                                    const int oz0 = std::max(0, d.padding - kz);
                                    const int oz1 = std::min(d.OZ, d.Z + d.padding - kz);
                                    const int shift = kz - d.padding;
                                    for (int oz = oz0; oz < oz1; ++oz)
                                        orow[oz] += wgt * xrow[oz + shift];
                                } else {
                                    for (int oz = 0; oz < d.OZ; ++oz) {
                                        const int iz = oz * d.stride - d.padding + kz;
                                        if (iz < 0 || iz >= d.Z) continue;
                                        orow[oz] += wgt * xrow[iz];
                                    }
                                }
                            }
                        }
                    }
        }
    }
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding,
              int groups) {
    const ConvDims d = conv_dims(x.shape(), w.shape(), stride, padding, groups);
    if (bias.defined())
        require(bias.shape() == std::vector<int>{d.OC}, "conv3d: bias must have shape (OC)");

    NodePtr xn = TensorAccess::node(x), wn = TensorAccess::node(w),
            bn = bias.defined() ? TensorAccess::node(bias) : nullptr;

    Tensor out = make_op({d.OC, d.OX, d.OY, d.OZ}, {x, w, bias}, [d, xn, wn, bn](TensorNode& self) {
        const std::size_t xcs = static_cast<std::size_t>(d.X) * d.Y * d.Z;
        const std::size_t ocs = static_cast<std::size_t>(d.OX) * d.OY * d.OZ;
        const double* go = self.grad.data();

        if (wants_grad(bn)) {
            bn->ensure_grad();
            for (int oc = 0; oc < d.OC; ++oc) {
                double acc = 0.0;
                const double* gplane = go + oc * ocs;
                for (std::size_t i = 0; i < ocs; ++i) acc += gplane[i];
                bn->grad[oc] += acc;
            }
        }

        const bool want_x = wants_grad(xn), want_w = wants_grad(wn);
        if (!want_x && !want_w) return;
        if (want_x) xn->ensure_grad();
        if (want_w) wn->ensure_grad();

        for (int oc = 0; oc < d.OC; ++oc) {
            const int g = oc / d.ocg;
            const double* gplane = go + oc * ocs;
            for (int icl = 0; icl < d.Cg; ++icl) {
                const int ic = g * d.Cg + icl;
                const double* xplane = xn->value.data() + ic * xcs;
                double* dxplane = want_x ? xn->grad.data() + ic * xcs : nullptr;
                const std::size_t wbase =
                    (static_cast<std::size_t>(oc) * d.Cg + icl) * d.K * d.K * d.K;
                for (int kx = 0; kx < d.K; ++kx)
                    for (int ky = 0; ky < d.K; ++ky)
                        for (int kz = 0; kz < d.K; ++kz) {
                            const std::size_t widx = wbase + (kx * d.K + ky) * d.K + kz;
                            const double wgt = wn->value[widx];
                            double wacc = 0.0;
                            for (int ox = 0; ox < d.OX; ++ox) {
                                const int ix = ox * d.stride - d.padding + kx;
                                if (ix < 0 || ix >= d.X) continue;
                                for (int oy = 0; oy < d.OY; ++oy) {
                                    const int iy = oy * d.stride - d.padding + ky;
                                    if (iy < 0 || iy >= d.Y) continue;
                                    const double* grow =
                                        gplane + (static_cast<std::size_t>(ox) * d.OY + oy) * d.OZ;
                                    const std::size_t xoff =
                                        (static_cast<std::size_t>(ix) * d.Y + iy) * d.Z;
                                    if (d.stride == 1) {
                                        const int oz0 = std::max(0, d.padding - kz);
                                        const int oz1 = std::min(d.OZ, d.Z + d.padding - kz);
                                        const int shift = kz - d.padding;
                                        const double* xrow = xplane + xoff;
                                        if (want_w)
                                            for (int oz = oz0; oz < oz1; ++oz)
                                                wacc += grow[oz] * xrow[oz + shift];
                                        if (want_x) {
                                            double* dxrow = dxplane + xoff;
                                            for (int oz = oz0; oz < oz1; ++oz)
                                                dxrow[oz + shift] += wgt * grow[oz];
                                        }
                                    } else {
                                        for (int oz = 0; oz < d.OZ; ++oz) {
                                            const int iz = oz * d.stride - d.padding + kz;
                                            if (iz < 0 || iz >= d.Z) continue;
                                            if (want_w) wacc += grow[oz] * xplane[xoff + iz];
                                            if (want_x)
                                                dxplane[xoff + iz] += wgt * grow[oz];
                                        }
                                    }
                                }
                            }
                            if (want_w) wn->grad[widx] += wacc;
                        }
            }
        }
    });

    conv_forward(d, xn->value.data(), wn->value.data(), bn ? bn->value.data() : nullptr,
                 out.values().data());
    return out;
}

// ---------------------------------------------------------------------------
// pooling / transposed convolution
// ---------------------------------------------------------------------------

Tensor max_pool2(const Tensor& x) {
    const auto& s = x.shape();
    require(s.size() == 4, "max_pool2: input must be (C, X, Y, Z)");
    require(s[1] % 2 == 0 && s[2] % 2 == 0 && s[3] % 2 == 0,
            "max_pool2: spatial dims must be even");
    const int C = s[0], X = s[1], Y = s[2], Z = s[3];
    const int OX = X / 2, OY = Y / 2, OZ = Z / 2;

    NodePtr xn = TensorAccess::node(x);
    auto argmax = std::make_shared<std::vector<std::int64_t>>(
        static_cast<std::size_t>(C) * OX * OY * OZ);

    Tensor out = make_op({C, OX, OY, OZ}, {x}, [xn, argmax](TensorNode& self) {
        if (!wants_grad(xn)) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            xn->grad[(*argmax)[i]] += self.grad[i];
    });

    auto& ov = out.values();
    const auto& xv = xn->value;
    std::size_t o = 0;
    for (int c = 0; c < C; ++c)
        for (int ox = 0; ox < OX; ++ox)
            for (int oy = 0; oy < OY; ++oy)
                for (int oz = 0; oz < OZ; ++oz, ++o) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::int64_t best_idx = -1;
                    for (int dx = 0; dx < 2; ++dx)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dz = 0; dz < 2; ++dz) {
                                const std::size_t idx =
                                    ((static_cast<std::size_t>(c) * X + (2 * ox + dx)) * Y +
                                     (2 * oy + dy)) *
                                        Z +
                                    (2 * oz + dz);
                                if (xv[idx] > best) {  // strict: first index wins ties
                                    best = xv[idx];
                                    best_idx = static_cast<std::int64_t>(idx);
                                }
                            }
                    ov[o] = best;
                    (*argmax)[o] = best_idx;
                }
    return out;
}

Tensor transposed_conv2(const Tensor& x, const Tensor& w) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    require(xs.size() == 4, "transposed_conv2: input must be (C, X, Y, Z)");
    require(ws.size() == 5 && ws[2] == 2 && ws[3] == 2 && ws[4] == 2,
            "transposed_conv2: weight must be (IC, OC, 2, 2, 2)");
    require(ws[0] == xs[0], "transposed_conv2: weight in-channels disagree with input");
    const int IC = xs[0], X = xs[1], Y = xs[2], Z = xs[3];
    const int OC = ws[1];
    const int OX = 2 * X, OY = 2 * Y, OZ = 2 * Z;

    NodePtr xn = TensorAccess::node(x), wn = TensorAccess::node(w);
    Tensor out = make_op({OC, OX, OY, OZ}, {x, w}, [=](TensorNode& self) {
        const bool want_x = wants_grad(xn), want_w = wants_grad(wn);
        if (!want_x && !want_w) return;
        if (want_x) xn->ensure_grad();
        if (want_w) wn->ensure_grad();
        const std::size_t xcs = static_cast<std::size_t>(X) * Y * Z;
        const std::size_t ocs = static_cast<std::size_t>(OX) * OY * OZ;
        for (int ic = 0; ic < IC; ++ic)
            for (int oc = 0; oc < OC; ++oc)
                for (int dx = 0; dx < 2; ++dx)
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dz = 0; dz < 2; ++dz) {
                            const std::size_t widx =
                                ((static_cast<std::size_t>(ic) * OC + oc) * 2 + dx) * 4 +
                                dy * 2 + dz;
                            const double wgt = wn->value[widx];
                            double wacc = 0.0;
                            for (int px = 0; px < X; ++px)
                                for (int py = 0; py < Y; ++py) {
                                    const double* grow =
                                        self.grad.data() + oc * ocs +
                                        ((static_cast<std::size_t>(2 * px + dx) * OY) +
                                         (2 * py + dy)) *
                                            OZ +
                                        dz;
                                    const std::size_t xoff =
                                        ic * xcs + (static_cast<std::size_t>(px) * Y + py) * Z;
                                    for (int pz = 0; pz < Z; ++pz) {
                                        const double g = grow[2 * pz];
                                        if (want_w) wacc += g * xn->value[xoff + pz];
                                        if (want_x) xn->grad[xoff + pz] += wgt * g;
                                    }
                                }
                            if (want_w) wn->grad[widx] += wacc;
                        }
    });

    auto& ov = out.values();
    const std::size_t xcs = static_cast<std::size_t>(X) * Y * Z;
    const std::size_t ocs = static_cast<std::size_t>(OX) * OY * OZ;
    for (int ic = 0; ic < IC; ++ic)
        for (int oc = 0; oc < OC; ++oc)
            for (int dx = 0; dx < 2; ++dx)
                for (int dy = 0; dy < 2; ++dy)
                    for (int dz = 0; dz < 2; ++dz) {
                        const double wgt =
                            wn->value[((static_cast<std::size_t>(ic) * OC + oc) * 2 + dx) * 4 +
                                      dy * 2 + dz];
                        if (wgt == 0.0) continue;
                        for (int px = 0; px < X; ++px)
                            for (int py = 0; py < Y; ++py) {
                                double* orow = ov.data() + oc * ocs +
                                               ((static_cast<std::size_t>(2 * px + dx) * OY) +
                                                (2 * py + dy)) *
                                                   OZ +
                                               dz;
                                const double* xrow =
                                    xn->value.data() + ic * xcs +
                                    (static_cast<std::size_t>(px) * Y + py) * Z;
                                for (int pz = 0; pz < Z; ++pz) orow[2 * pz] += wgt * xrow[pz];
                            }
                    }
    return out;
}

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

BatchNormState BatchNormState::make(int channels) {
    BatchNormState bn;
    bn.gamma = Tensor::full({channels}, 1.0, true);
    bn.beta = Tensor::zeros({channels}, true);
    bn.running_mean.assign(channels, 0.0);
    bn.running_var.assign(channels, 1.0);
    return bn;
}

Tensor batch_norm(const Tensor& x, BatchNormState& bn, NetMode mode) {
    const auto& s = x.shape();
    require(s.size() == 4, "batch_norm: input must be (C, X, Y, Z)");
    const int C = s[0];
    const std::size_t n = static_cast<std::size_t>(s[1]) * s[2] * s[3];
    require(bn.gamma.shape() == std::vector<int>{C}, "batch_norm: gamma shape mismatch");
    if (mode == NetMode::Train && n <= 1)
        throw std::invalid_argument("batch_norm: single-voxel extent has undefined variance");

    NodePtr xn = TensorAccess::node(x);
    NodePtr gn = TensorAccess::node(bn.gamma), be = TensorAccess::node(bn.beta);

    auto mean = std::make_shared<std::vector<double>>(C, 0.0);
    auto invstd = std::make_shared<std::vector<double>>(C, 0.0);

    if (mode == NetMode::Train) {
        for (int c = 0; c < C; ++c) {
            const double* xp = xn->value.data() + c * n;
            double m = 0.0;
            for (std::size_t i = 0; i < n; ++i) m += xp[i];
            m /= static_cast<double>(n);
            double v = 0.0;
            for (std::size_t i = 0; i < n; ++i) v += (xp[i] - m) * (xp[i] - m);
            v /= static_cast<double>(n);
            (*mean)[c] = m;
            (*invstd)[c] = 1.0 / std::sqrt(v + bn.eps);
            bn.running_mean[c] = (1.0 - bn.momentum) * bn.running_mean[c] + bn.momentum * m;
            bn.running_var[c] = (1.0 - bn.momentum) * bn.running_var[c] + bn.momentum * v;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            (*mean)[c] = bn.running_mean[c];
            (*invstd)[c] = 1.0 / std::sqrt(bn.running_var[c] + bn.eps);
        }
    }

    const bool train = mode == NetMode::Train;
    Tensor out =
        make_op(s, {x, bn.gamma, bn.beta}, [xn, gn, be, mean, invstd, n, C, train](TensorNode& self) {
            for (int c = 0; c < C; ++c) {
                const double m = (*mean)[c], is = (*invstd)[c], g = gn->value[c];
                const double* xp = xn->value.data() + c * n;
                const double* gop = self.grad.data() + c * n;

                double sum_go = 0.0, sum_go_xhat = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    sum_go += gop[i];
                    sum_go_xhat += gop[i] * (xp[i] - m) * is;
                }
                if (wants_grad(gn)) {
                    gn->ensure_grad();
                    gn->grad[c] += sum_go_xhat;
                }
                if (wants_grad(be)) {
                    be->ensure_grad();
                    be->grad[c] += sum_go;
                }
                if (wants_grad(xn)) {
                    xn->ensure_grad();
                    double* dxp = xn->grad.data() + c * n;
                    if (train) {
                        const double inv_n = 1.0 / static_cast<double>(n);
                        for (std::size_t i = 0; i < n; ++i) {
                            const double xhat = (xp[i] - m) * is;
                            dxp[i] += g * is *
                                      (gop[i] - inv_n * sum_go - xhat * inv_n * sum_go_xhat);
                        }
                    } else {
                        for (std::size_t i = 0; i < n; ++i) dxp[i] += g * is * gop[i];
                    }
                }
            }
        });

    auto& ov = out.values();
    for (int c = 0; c < C; ++c) {
        const double m = (*mean)[c], is = (*invstd)[c];
        const double g = gn->value[c], b = be->value[c];
        const double* xp = xn->value.data() + c * n;
        double* op = ov.data() + c * n;
        for (std::size_t i = 0; i < n; ++i) op[i] = g * (xp[i] - m) * is + b;
    }
    return out;
}

// ---------------------------------------------------------------------------
// blocks and the network
// ---------------------------------------------------------------------------

namespace {

Tensor xavier(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::int64_t n = 1;
    for (int s : shape) n *= s;
    std::vector<double> data(static_cast<std::size_t>(n));
    for (auto& v : data) v = rng.uniform(-bound, bound);
    return Tensor::from(std::move(shape), std::move(data), true);
}

}  // namespace

SkipBlockParams SkipBlockParams::make(int in_channels, int out_channels, int groups, Rng& rng) {
    require(in_channels >= 1 && out_channels >= 1 && groups >= 1, "skip block: bad channels");
    require(in_channels % groups == 0, "skip block: in_channels not divisible by groups");
    SkipBlockParams p;
    p.in_channels = in_channels;
    p.out_channels = out_channels;
    p.groups = groups;
    const int cg = in_channels / groups;
    p.stage1_w = xavier({in_channels, cg, 3, 3, 3}, cg * 27, cg * 27, rng);
    p.stage2_w = xavier({in_channels, cg, 3, 3, 3}, cg * 27, cg * 27, rng);
    p.bn1 = BatchNormState::make(in_channels);
    p.bn2 = BatchNormState::make(in_channels);
    p.merge_w = xavier({out_channels, in_channels, 1, 1, 1}, in_channels, out_channels, rng);
    p.merge_b = Tensor::zeros({out_channels}, true);
    if (in_channels != out_channels)
        p.proj_w = xavier({out_channels, in_channels, 1, 1, 1}, in_channels, out_channels, rng);
    return p;
}

void SkipBlockParams::collect_params(const std::string& prefix,
                                     std::vector<std::pair<std::string, Tensor>>& out) const {
    out.emplace_back(prefix + ".stage1.weight", stage1_w);
    out.emplace_back(prefix + ".bn1.gamma", bn1.gamma);
    out.emplace_back(prefix + ".bn1.beta", bn1.beta);
    out.emplace_back(prefix + ".stage2.weight", stage2_w);
    out.emplace_back(prefix + ".bn2.gamma", bn2.gamma);
    out.emplace_back(prefix + ".bn2.beta", bn2.beta);
    out.emplace_back(prefix + ".merge.weight", merge_w);
    out.emplace_back(prefix + ".merge.bias", merge_b);
    if (proj_w.defined()) out.emplace_back(prefix + ".proj.weight", proj_w);
}

Tensor skip_block(const Tensor& x, SkipBlockParams& p, NetMode mode) {
    require(x.shape().size() == 4 && x.shape()[0] == p.in_channels,
            "skip_block: input channels disagree with params");
    Tensor h = relu(batch_norm(conv3d(x, p.stage1_w, {}, 1, 1, p.groups), p.bn1, mode));
    h = relu(batch_norm(conv3d(h, p.stage2_w, {}, 1, 1, p.groups), p.bn2, mode));
    Tensor merged = conv3d(h, p.merge_w, p.merge_b, 1, 0, 1);
    Tensor skip = p.proj_w.defined() ? conv3d(x, p.proj_w, {}, 1, 0, 1) : x;
    return add(merged, skip);
}

TsnetParams make_tsnet(std::array<int, 4> widths, int groups, std::uint64_t seed,
                       int in_channels) {
    for (int w : widths) require(w >= 1, "make_tsnet: widths must be >= 1");
    TsnetParams p;
    p.widths = widths;
    p.groups = groups;
    p.in_channels = in_channels;
    Rng rng = Rng(seed).split(0x7e4);

    auto block_groups = [&](int c) { return std::gcd(groups, c); };
    p.encoder.push_back(SkipBlockParams::make(in_channels, widths[0], block_groups(in_channels), rng));
    p.encoder.push_back(SkipBlockParams::make(widths[0], widths[1], block_groups(widths[0]), rng));
    p.encoder.push_back(SkipBlockParams::make(widths[1], widths[2], block_groups(widths[1]), rng));
    p.encoder.push_back(SkipBlockParams::make(widths[2], widths[3], block_groups(widths[2]), rng));

    const int up_in[3] = {widths[3], widths[2], widths[1]};
    const int up_out[3] = {widths[2], widths[1], widths[0]};
    for (int u = 0; u < 3; ++u) {
        p.up_w.push_back(xavier({up_in[u], up_out[u], 2, 2, 2}, up_in[u] * 8, up_out[u] * 8, rng));
        const int cat = 2 * up_out[u];
        p.decoder.push_back(SkipBlockParams::make(cat, up_out[u], block_groups(cat), rng));
    }

    p.head_w = xavier({1, widths[0], 1, 1, 1}, widths[0], 1, rng);
    p.head_b = Tensor::zeros({1}, true);
    return p;
}

std::vector<std::pair<std::string, Tensor>> TsnetParams::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < encoder.size(); ++i)
        encoder[i].collect_params("enc" + std::to_string(i), out);
    for (std::size_t u = 0; u < up_w.size(); ++u) {
        out.emplace_back("up" + std::to_string(u) + ".weight", up_w[u]);
        decoder[u].collect_params("dec" + std::to_string(u), out);
    }
    out.emplace_back("head.weight", head_w);
    out.emplace_back("head.bias", head_b);
    return out;
}

std::vector<Tensor> TsnetParams::decayed_params() const {
    std::vector<Tensor> out;
    for (const auto& b : encoder) {
        out.push_back(b.stage1_w);
        out.push_back(b.stage2_w);
        out.push_back(b.merge_w);
        if (b.proj_w.defined()) out.push_back(b.proj_w);
    }
    for (std::size_t u = 0; u < up_w.size(); ++u) {
        out.push_back(up_w[u]);
        out.push_back(decoder[u].stage1_w);
        out.push_back(decoder[u].stage2_w);
        out.push_back(decoder[u].merge_w);
        if (decoder[u].proj_w.defined()) out.push_back(decoder[u].proj_w);
    }
    out.push_back(head_w);
    return out;
}

Tensor tsnet_forward(const Tensor& x, TsnetParams& p, NetMode mode) {
    const auto& s = x.shape();
    require(s.size() == 4 && s[0] == p.in_channels, "tsnet: input channels mismatch");
    require(s[1] % 8 == 0 && s[2] % 8 == 0 && s[3] % 8 == 0,
            "tsnet: spatial dims must be divisible by 8");

    Tensor e1 = skip_block(x, p.encoder[0], mode);
    Tensor e2 = skip_block(max_pool2(e1), p.encoder[1], mode);
    Tensor e3 = skip_block(max_pool2(e2), p.encoder[2], mode);
    Tensor bottom = skip_block(max_pool2(e3), p.encoder[3], mode);

    Tensor d = skip_block(concat_channels(transposed_conv2(bottom, p.up_w[0]), e3), p.decoder[0],
                          mode);
    d = skip_block(concat_channels(transposed_conv2(d, p.up_w[1]), e2), p.decoder[1], mode);
    d = skip_block(concat_channels(transposed_conv2(d, p.up_w[2]), e1), p.decoder[2], mode);
    return conv3d(d, p.head_w, p.head_b, 1, 0, 1);
}

double train_step(TsnetParams& p, const std::vector<std::pair<Tensor, Tensor>>& batch, double lr,
                  double alpha) {
    require(!batch.empty(), "train_step: empty batch");
    require(lr >= 0.0, "train_step: lr must be >= 0");

    auto params = p.named_params();
    for (auto& [name, t] : params) t.zero_grad();

    Tensor data_loss;
    for (const auto& [input, target] : batch) {
        Tensor y = tsnet_forward(input, p, NetMode::Train);
        Tensor li = mse(y, target);
        data_loss = data_loss.defined() ? add(data_loss, li) : li;
    }
    Tensor loss = scale(data_loss, 1.0 / static_cast<double>(batch.size()));

    if (alpha != 0.0) {
        Tensor wd;
        for (const Tensor& w : p.decayed_params()) {
            Tensor sq = sum_squares(w);
            wd = wd.defined() ? add(wd, sq) : sq;
        }
        loss = add(loss, scale(wd, alpha));
    }

    const double value = loss.item();
    if (!std::isfinite(value)) throw NumericError("train_step: non-finite loss");
    loss.backward();

    for (auto& [name, t] : params) {
        if (!t.has_grad()) continue;
        auto& v = t.values();
        const auto& g = t.grad();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    }
    return value;
}

}  // namespace toothseg
