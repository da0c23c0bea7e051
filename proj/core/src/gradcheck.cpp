#include "toothseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "toothseg/neural.hpp"
#include "toothseg/rng.hpp"

namespace toothseg {

namespace {

constexpr double kStep = 1e-5;

Tensor random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad, double lo = -1.0,
                     double hi = 1.0) {
    std::int64_t n = 1;
    for (int s : shape) n *= s;
    std::vector<double> data(static_cast<std::size_t>(n));
    for (auto& v : data) v = rng.uniform(lo, hi);
    return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

/// Values kept away from 0 so ReLU kinks cannot sit inside the probe step.
Tensor random_tensor_off_zero(std::vector<int> shape, Rng& rng, bool requires_grad) {
    Tensor t = random_tensor(std::move(shape), rng, requires_grad);
    for (auto& v : t.values())
        if (std::abs(v) < 1e-3) v = v < 0 ? v - 1e-3 : v + 1e-3;
    return t;
}

/// Distinct, well-separated values in random order, so max-pool argmaxes
/// cannot flip inside the probe step.
Tensor random_tensor_distinct(std::vector<int> shape, Rng& rng, bool requires_grad) {
    std::int64_t n = 1;
    for (int s : shape) n *= s;
    std::vector<double> data(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = static_cast<double>(i) * 1e-2 + rng.uniform(0.0, 2e-3);
    for (std::size_t i = data.size(); i-- > 1;)
        std::swap(data[i], data[rng.uniform_int(0, static_cast<int>(i))]);
    return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

struct CheckCase {
    std::string name;
    std::vector<Tensor> params;       // tensors whose gradients are verified
    std::function<Tensor()> forward;  // builds a fresh scalar loss
};

/// Scalar loss sum((out + offset)^2) with a fixed random offset; gradients
/// stay dense and well-scaled.
std::function<Tensor()> offset_quadratic(std::function<Tensor()> out_fn, Rng& rng,
                                         const std::vector<int>& out_shape) {
    Tensor offset = random_tensor(out_shape, rng, false, 0.5, 1.5);
    return [out_fn = std::move(out_fn), offset]() { return sum_squares(add(out_fn(), offset)); };
}

GradCheckEntry check_case(const CheckCase& c, Rng& rng, double tol, int samples) {
    GradCheckEntry e;
    e.name = c.name;

    for (const Tensor& t : c.params) {
        Tensor handle = t;
        handle.zero_grad();
    }
    Tensor loss = c.forward();
    loss.backward();

    std::vector<std::vector<double>> analytic;
    for (const Tensor& t : c.params)
        analytic.push_back(t.has_grad() ? t.grad() : std::vector<double>(t.values().size(), 0.0));

    // flat list of (param, element) coordinates
    std::vector<std::pair<int, std::size_t>> coords;
    for (std::size_t p = 0; p < c.params.size(); ++p)
        for (std::size_t i = 0; i < c.params[p].values().size(); ++i) coords.emplace_back(p, i);
    for (std::size_t i = coords.size(); i-- > 1;)
        std::swap(coords[i], coords[rng.uniform_int(0, static_cast<int>(i))]);
    const std::size_t take = std::min<std::size_t>(coords.size(), static_cast<std::size_t>(samples));

    e.pass = true;
    for (std::size_t s = 0; s < take; ++s) {
        const auto [p, idx] = coords[s];
        Tensor handle = c.params[p];
        auto& v = handle.values();
        const double saved = v[idx];

        double lp, lm;
        {
            NoGradGuard ng;
            v[idx] = saved + kStep;
            lp = c.forward().item();
            v[idx] = saved - kStep;
            lm = c.forward().item();
            v[idx] = saved;
        }
        const double numeric = (lp - lm) / (2.0 * kStep);
        const double a = analytic[p][idx];
        const double mag = std::max(std::abs(a), std::abs(numeric));
        double rel;
        if (mag < 1e-4) {
            rel = std::abs(a - numeric) <= 1e-8 ? 0.0 : 1.0;
        } else {
            rel = std::abs(a - numeric) / mag;
        }
        e.max_rel_err = std::max(e.max_rel_err, rel);
        if (rel > tol) e.pass = false;
        ++e.checked;
    }
    return e;
}

}  // namespace

GradCheckReport run_gradcheck(std::uint64_t seed, double tolerance, int samples_per_layer) {
    GradCheckReport rep;
    rep.tolerance = tolerance;
    Rng root(seed);
    std::vector<CheckCase> cases;

    {
        Rng r = root.split(1);
        Tensor x = random_tensor({3, 4, 5, 6}, r, true);
        Tensor w = random_tensor({4, 3, 3, 3, 3}, r, true);
        Tensor b = random_tensor({4}, r, true);
        auto fwd = [x, w, b]() mutable { return conv3d(x, w, b, 1, 1, 1); };
        cases.push_back({"conv3d_k3", {x, w, b}, offset_quadratic(fwd, r, {4, 4, 5, 6})});
    }
    {
        Rng r = root.split(2);
        Tensor x = random_tensor({4, 4, 4, 6}, r, true);
        Tensor w = random_tensor({6, 2, 3, 3, 3}, r, true);
        auto fwd = [x, w]() mutable { return conv3d(x, w, {}, 1, 1, 2); };
        cases.push_back({"conv3d_k3_grouped", {x, w}, offset_quadratic(fwd, r, {6, 4, 4, 6})});
    }
    {
        Rng r = root.split(3);
        Tensor x = random_tensor({3, 4, 4, 4}, r, true);
        Tensor w = random_tensor({5, 3, 1, 1, 1}, r, true);
        Tensor b = random_tensor({5}, r, true);
        auto fwd = [x, w, b]() mutable { return conv3d(x, w, b, 1, 0, 1); };
        cases.push_back({"conv3d_k1", {x, w, b}, offset_quadratic(fwd, r, {5, 4, 4, 4})});
    }
    {
        Rng r = root.split(4);
        Tensor x = random_tensor({2, 4, 4, 6}, r, true);
        Tensor w = random_tensor({3, 2, 3, 3, 3}, r, true);
        auto fwd = [x, w]() mutable { return conv3d(x, w, {}, 2, 1, 1); };
        cases.push_back({"conv3d_stride2", {x, w}, offset_quadratic(fwd, r, {3, 2, 2, 3})});
    }
    {
        Rng r = root.split(5);
        Tensor x = random_tensor({3, 4, 4, 4}, r, true);
        auto bn = std::make_shared<BatchNormState>(BatchNormState::make(3));
        auto fwd = [x, bn]() mutable { return batch_norm(x, *bn, NetMode::Train); };
        cases.push_back({"batch_norm_train", {x, bn->gamma, bn->beta}, offset_quadratic(fwd, r, {3, 4, 4, 4})});
    }
    {
        Rng r = root.split(6);
        Tensor x = random_tensor({3, 4, 4, 4}, r, true);
        auto bn = std::make_shared<BatchNormState>(BatchNormState::make(3));
        for (auto& v : bn->running_mean) v = r.uniform(-0.5, 0.5);
        for (auto& v : bn->running_var) v = r.uniform(0.5, 1.5);
        auto fwd = [x, bn]() mutable { return batch_norm(x, *bn, NetMode::Eval); };
        cases.push_back({"batch_norm_eval", {x, bn->gamma, bn->beta}, offset_quadratic(fwd, r, {3, 4, 4, 4})});
    }
    {
        Rng r = root.split(7);
        Tensor x = random_tensor_off_zero({4, 4, 4, 4}, r, true);
        auto fwd = [x]() mutable { return relu(x); };
        cases.push_back({"relu", {x}, offset_quadratic(fwd, r, {4, 4, 4, 4})});
    }
    {
        Rng r = root.split(8);
        Tensor x = random_tensor_distinct({2, 4, 4, 6}, r, true);
        auto fwd = [x]() mutable { return max_pool2(x); };
        cases.push_back({"max_pool2", {x}, offset_quadratic(fwd, r, {2, 2, 2, 3})});
    }
    {
        Rng r = root.split(9);
        Tensor x = random_tensor({3, 2, 3, 4}, r, true);
        Tensor w = random_tensor({3, 2, 2, 2, 2}, r, true);
        auto fwd = [x, w]() mutable { return transposed_conv2(x, w); };
        cases.push_back({"transposed_conv2", {x, w}, offset_quadratic(fwd, r, {2, 4, 6, 8})});
    }
    {
        Rng r = root.split(10);
        Tensor a = random_tensor({3, 4, 4, 4}, r, true);
        Tensor b = random_tensor({2, 4, 4, 4}, r, true);
        auto fwd = [a, b]() mutable { return concat_channels(a, b); };
        cases.push_back({"concat_channels", {a, b}, offset_quadratic(fwd, r, {5, 4, 4, 4})});
    }
    {
        Rng r = root.split(11);
        Rng pr = r.split(99);
        auto p = std::make_shared<SkipBlockParams>(SkipBlockParams::make(4, 4, 2, pr));
        Tensor x = random_tensor({4, 4, 4, 4}, r, true);
        auto fwd = [x, p]() mutable { return skip_block(x, *p, NetMode::Train); };
        std::vector<std::pair<std::string, Tensor>> named;
        p->collect_params("blk", named);
        std::vector<Tensor> params{x};
        for (auto& [n, t] : named) params.push_back(t);
        cases.push_back({"skip_block_identity_skip", params, offset_quadratic(fwd, r, {4, 4, 4, 4})});
    }
    {
        Rng r = root.split(12);
        Rng pr = r.split(99);
        auto p = std::make_shared<SkipBlockParams>(SkipBlockParams::make(4, 6, 2, pr));
        Tensor x = random_tensor({4, 4, 4, 4}, r, true);
        auto fwd = [x, p]() mutable { return skip_block(x, *p, NetMode::Train); };
        std::vector<std::pair<std::string, Tensor>> named;
        p->collect_params("blk", named);
        std::vector<Tensor> params{x};
        for (auto& [n, t] : named) params.push_back(t);
        cases.push_back({"skip_block_projected_skip", params, offset_quadratic(fwd, r, {6, 4, 4, 4})});
    }
    {
        Rng r = root.split(13);
        auto p = std::make_shared<TsnetParams>(make_tsnet({4, 8, 16, 32}, 4, seed ^ 0x75));
        Tensor x = random_tensor({1, 16, 16, 32}, r, true);
        Tensor target = random_tensor({1, 16, 16, 32}, r, false, 0.0, 1.0);
        auto fwd = [x, p, target]() mutable {
            return mse(tsnet_forward(x, *p, NetMode::Train), target);
        };
        std::vector<Tensor> params;
        for (auto& [n, t] : p->named_params()) params.push_back(t);
        cases.push_back({"tsnet_full", params, fwd});
    }

    rep.pass = true;
    for (std::size_t c = 0; c < cases.size(); ++c) {
        Rng r = root.split(1000 + c);
        GradCheckEntry e = check_case(cases[c], r, tolerance, samples_per_layer);
        rep.pass &= e.pass;
        rep.entries.push_back(std::move(e));
    }
    return rep;
}

}  // namespace toothseg
