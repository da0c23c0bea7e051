#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "toothseg/rng.hpp"

namespace toothseg {

/// Thrown when training produces a non-finite loss.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {
struct TensorNode;
struct TensorAccess;
}

/// Reverse-mode differentiable n-d array of 64-bit floats. Feature maps are
/// channels-first (C, X, Y, Z). Handles share the underlying node; ops record
/// the graph unless autograd is disabled (see NoGradGuard).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<double> data,
                       bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const;
    std::int64_t numel() const;

    std::vector<double>& values();
    const std::vector<double>& values() const;

    bool requires_grad() const;
    bool has_grad() const;
    const std::vector<double>& grad() const;
    void zero_grad();

    /// Backpropagates from a scalar tensor (numel == 1).
    void backward() const;

    /// Value of a scalar tensor.
    double item() const;

private:
    friend struct detail::TensorAccess;
    explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::TensorNode> node_;
};

/// Disables graph recording while alive (inference / finite differences).
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

enum class NetMode { Train, Eval };

/// Grouped cross-correlation. x: (C, X, Y, Z); w: (OC, C/groups, K, K, K);
/// optional bias (OC). Output spatial dims follow (in + 2*padding - K) /
/// stride + 1.
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding,
              int groups);

struct BatchNormState {
    Tensor gamma;  // scale, shape (C)
    Tensor beta;   // shift, shape (C)
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double eps = 1e-5;
    double momentum = 0.1;

    static BatchNormState make(int channels);
};

/// Train mode normalizes by the statistics of this forward pass (the batch)
/// and updates running stats; eval mode uses the running stats. Throws in
/// train mode when the spatial extent is a single voxel.
Tensor batch_norm(const Tensor& x, BatchNormState& bn, NetMode mode);

Tensor relu(const Tensor& x);

/// 2^3 max pooling with stride 2; gradient routes to the argmax (first index
/// on ties). Throws on odd spatial dims.
Tensor max_pool2(const Tensor& x);

/// 2^3 transposed convolution with stride 2; w: (IC, OC, 2, 2, 2). Doubles
/// every spatial dim.
Tensor transposed_conv2(const Tensor& x, const Tensor& w);

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// Mean of (pred - target)^2 over all elements; scalar output.
Tensor mse(const Tensor& pred, const Tensor& target);
/// Sum of squares of all elements; scalar output.
Tensor sum_squares(const Tensor& a);

/// Residual unit: two stages of (grouped 3^3 conv -> batch norm -> ReLU) at
/// the input width, a 1^3 merge convolution to out_channels, and a skip path
/// (identity, or a 1^3 projection when the widths differ) added to the merge
/// output.
struct SkipBlockParams {
    int in_channels = 0;
    int out_channels = 0;
    int groups = 1;
    Tensor stage1_w, stage2_w;  // (in, in/groups, 3, 3, 3)
    BatchNormState bn1, bn2;
    Tensor merge_w;  // (out, in, 1, 1, 1)
    Tensor merge_b;  // (out)
    Tensor proj_w;   // (out, in, 1, 1, 1); defined iff in != out

    static SkipBlockParams make(int in_channels, int out_channels, int groups, Rng& rng);
    void collect_params(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor>>& out) const;
};

Tensor skip_block(const Tensor& x, SkipBlockParams& p, NetMode mode);

/// U-shaped distance-regression network: four resolution steps of SkipBlocks
/// with 2^3 max-pool downsampling, 2^3 transposed-conv upsampling, encoder
/// skip concatenation, and a linear 1^3 regression head to one channel.
struct TsnetParams {
    std::array<int, 4> widths{16, 32, 64, 128};
    int groups = 4;
    int in_channels = 1;
    std::vector<SkipBlockParams> encoder;  // 4 blocks
    std::vector<SkipBlockParams> decoder;  // 3 blocks
    std::vector<Tensor> up_w;              // 3 transposed-conv kernels
    Tensor head_w, head_b;

    /// Stable checkpoint names, in definition order.
    std::vector<std::pair<std::string, Tensor>> named_params() const;
    /// Convolution kernels subject to L2 weight decay (biases and batch-norm
    /// affine params excluded).
    std::vector<Tensor> decayed_params() const;
};

TsnetParams make_tsnet(std::array<int, 4> widths, int groups, std::uint64_t seed,
                       int in_channels = 1);

/// Forward pass; spatial dims must be divisible by 8. Output is single
/// channel with the input's spatial dims.
Tensor tsnet_forward(const Tensor& x, TsnetParams& p, NetMode mode);

/// One full-gradient descent step on mean-over-batch MSE plus alpha times the
/// squared kernel norm. Updates params in place and returns the pre-step
/// loss. Throws NumericError on a non-finite loss.
double train_step(TsnetParams& p, const std::vector<std::pair<Tensor, Tensor>>& batch, double lr,
                  double alpha = 0.1);

}  // namespace toothseg
