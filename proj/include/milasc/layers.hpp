#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "milasc/rng.hpp"
#include "milasc/tensor.hpp"

namespace milasc {

enum class Mode { train, eval };

/// One named slot of layer state. `grad` is null for non-learned buffers
/// (batch-norm running statistics).
struct NamedTensor {
    std::string name;
    Tensor* value = nullptr;
    Tensor* grad = nullptr;
};

/// Base for everything holding parameters. Layers cache whatever the backward
/// pass needs during forward; backward() consumes the most recent forward.
/// Parameter gradients accumulate (+=) until zero_grad().
class Layer {
public:
    virtual ~Layer() = default;
    virtual void collect(const std::string& prefix, std::vector<NamedTensor>& params,
                         std::vector<NamedTensor>& buffers) = 0;
    void zero_grad();
};

// ---------------------------------------------------------------------------
// 2D convolution, stride 1, zero padding
// ---------------------------------------------------------------------------

class Conv2d : public Layer {
public:
    Conv2d(int in_ch, int out_ch, int kh, int kw, int pad_h, int pad_w, Rng& rng);

    /// (B, in_ch, H, W) -> (B, out_ch, H + 2*pad_h - kh + 1, W + 2*pad_w - kw + 1)
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

    void collect(const std::string& prefix, std::vector<NamedTensor>& params,
                 std::vector<NamedTensor>& buffers) override;

    Tensor weight;      // (out_ch, in_ch, kh, kw)
    Tensor bias;        // (out_ch)
    Tensor weight_grad;
    Tensor bias_grad;

private:
    int in_ch_, out_ch_, kh_, kw_, ph_, pw_;
    Tensor cached_x_;
};

// ---------------------------------------------------------------------------
// 1D convolution with dilation, stride 1, zero padding
// ---------------------------------------------------------------------------

class Conv1d : public Layer {
public:
    Conv1d(int in_ch, int out_ch, int k, int dilation, int pad, Rng& rng);

    /// Symmetric padding that keeps the time axis fixed: dilation*(k-1)/2.
    /// Rejects spans that cannot be split evenly (even k with odd dilation span).
    static int same_padding(int k, int dilation);

    /// (B, in_ch, T) -> (B, out_ch, T + 2*pad - dilation*(k-1))
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

    void collect(const std::string& prefix, std::vector<NamedTensor>& params,
                 std::vector<NamedTensor>& buffers) override;

    Tensor weight;      // (out_ch, in_ch, k)
    Tensor bias;        // (out_ch)
    Tensor weight_grad;
    Tensor bias_grad;

private:
    int in_ch_, out_ch_, k_, dil_, pad_;
    Tensor cached_x_;
};

// ---------------------------------------------------------------------------
// Batch normalization over the channel axis of (B, C, ...) tensors
// ---------------------------------------------------------------------------

class BatchNorm : public Layer {
public:
    explicit BatchNorm(int channels, double eps = 1e-5, double momentum = 0.1);

    /// Train mode normalizes by batch statistics (requires B >= 2) and updates
    /// running stats; eval mode normalizes by the frozen running stats.
    Tensor forward(const Tensor& x, Mode mode);

    /// Train-mode backward carries the full coupling through the batch mean
    /// and variance; eval-mode backward is the per-element affine derivative.
    Tensor backward(const Tensor& grad_out);

    void collect(const std::string& prefix, std::vector<NamedTensor>& params,
                 std::vector<NamedTensor>& buffers) override;

    Tensor gamma, beta;
    Tensor gamma_grad, beta_grad;
    Tensor running_mean, running_var;

private:
    int channels_;
    double eps_, momentum_;
    Mode cached_mode_ = Mode::train;
    Tensor cached_xhat_;       // (B, C, S) normalized input
    std::vector<double> cached_inv_std_; // per channel
    std::vector<int> cached_shape_;
};

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2, floor semantics
// ---------------------------------------------------------------------------

class MaxPool2d {
public:
    /// (B, C, H, W) -> (B, C, floor(H/2), floor(W/2)). Trailing odd row/column
    /// is dropped. Ties break to the first element in row-major window order.
    Tensor forward(const Tensor& x);

    /// Routes each upstream value to its window's argmax; everything else
    /// (including dropped rows/columns) receives zero.
    Tensor backward(const Tensor& grad_out);

private:
    std::vector<int> argmax_;      // flat input index per output element
    std::vector<int> cached_in_shape_;
};

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Softmax along `axis` with max subtraction for overflow safety. Each slice
/// along the axis sums to 1 within 1e-12.
Tensor softmax(const Tensor& x, int axis);

class ReLU {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out) const;

private:
    std::vector<std::uint8_t> mask_;
};

class SigmoidLayer {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out) const;

private:
    Tensor cached_y_;
};

/// Gradient of softmax given its output y and upstream grad, along `axis`.
Tensor softmax_backward(const Tensor& y, const Tensor& grad_out, int axis);

/// Fan-in scaled uniform init in +/- sqrt(6 / fan_in), the library-wide default.
void init_uniform_fan_in(Tensor& t, int fan_in, Rng& rng);

} // namespace milasc
