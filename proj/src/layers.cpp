#include "milasc/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "milasc/errors.hpp"

namespace milasc {

void Layer::zero_grad() {
    std::vector<NamedTensor> params, buffers;
    collect("", params, buffers);
    for (auto& p : params) {
        if (p.grad) p.grad->fill(0.0);
    }
}

void init_uniform_fan_in(Tensor& t, int fan_in, Rng& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (int i = 0; i < t.size(); ++i) {
        t[i] = rng.uniform(-bound, bound);
    }
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

Conv2d::Conv2d(int in_ch, int out_ch, int kh, int kw, int pad_h, int pad_w, Rng& rng)
    : weight({out_ch, in_ch, kh, kw}),
      bias({out_ch}),
      weight_grad({out_ch, in_ch, kh, kw}),
      bias_grad({out_ch}),
      in_ch_(in_ch), out_ch_(out_ch), kh_(kh), kw_(kw), ph_(pad_h), pw_(pad_w) {
    if (kh <= 0 || kw <= 0 || pad_h < 0 || pad_w < 0) {
        throw ValidationError("conv2d: kernel must be positive and padding non-negative");
    }
    init_uniform_fan_in(weight, in_ch * kh * kw, rng);
}

Tensor Conv2d::forward(const Tensor& x) {
    if (x.rank() != 4) {
        throw ValidationError("conv2d: expected rank-4 input, got " + x.shape_str());
    }
    if (x.dim(1) != in_ch_) {
        throw ValidationError("conv2d: input has " + std::to_string(x.dim(1)) +
                              " channels but weight tensor " + weight.shape_str() + " expects " +
                              std::to_string(in_ch_));
    }
    const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
    if (H + 2 * ph_ < kh_ || W + 2 * pw_ < kw_) {
        throw ValidationError("conv2d: input " + x.shape_str() + " smaller than kernel after padding");
    }
    const int OH = H + 2 * ph_ - kh_ + 1;
    const int OW = W + 2 * pw_ - kw_ + 1;

    Tensor out({B, out_ch_, OH, OW});
    for (int b = 0; b < B; ++b) {
        for (int oc = 0; oc < out_ch_; ++oc) {
            double* obase = out.data() + (static_cast<std::size_t>(b) * out_ch_ + oc) * OH * OW;
            std::fill(obase, obase + OH * OW, bias[oc]);
        }
    }
    for (int b = 0; b < B; ++b) {
        for (int oc = 0; oc < out_ch_; ++oc) {
            double* obase = out.data() + (static_cast<std::size_t>(b) * out_ch_ + oc) * OH * OW;
            for (int ic = 0; ic < in_ch_; ++ic) {
                const double* xbase = x.data() + (static_cast<std::size_t>(b) * in_ch_ + ic) * H * W;
                for (int kh = 0; kh < kh_; ++kh) {
                    const int oh_lo = std::max(0, ph_ - kh);
                    const int oh_hi = std::min(OH, H + ph_ - kh);
                    for (int kw = 0; kw < kw_; ++kw) {
                        const double w = weight.at(oc, ic, kh, kw);
                        if (w == 0.0) continue;
                        const int ow_lo = std::max(0, pw_ - kw);
                        const int ow_hi = std::min(OW, W + pw_ - kw);
                        for (int oh = oh_lo; oh < oh_hi; ++oh) {
                            const double* xrow = xbase + (oh + kh - ph_) * W + (ow_lo + kw - pw_);
                            double* orow = obase + oh * OW + ow_lo;
                            const int n = ow_hi - ow_lo;
                            for (int i = 0; i < n; ++i) orow[i] += w * xrow[i];
                        }
                    }
                }
            }
        }
    }
    cached_x_ = x;
    return out;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
    const Tensor& x = cached_x_;
    if (x.empty()) throw ValidationError("conv2d: backward before forward");
    const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
    const int OH = grad_out.dim(2), OW = grad_out.dim(3);
    require_shape(grad_out, {B, out_ch_, H + 2 * ph_ - kh_ + 1, W + 2 * pw_ - kw_ + 1},
                  "conv2d backward");

    Tensor gin({B, in_ch_, H, W});
    for (int b = 0; b < B; ++b) {
        for (int oc = 0; oc < out_ch_; ++oc) {
            const double* gbase = grad_out.data() + (static_cast<std::size_t>(b) * out_ch_ + oc) * OH * OW;
            // bias: plain sum of upstream
            double bsum = 0.0;
            for (int i = 0; i < OH * OW; ++i) bsum += gbase[i];
            bias_grad[oc] += bsum;

            for (int ic = 0; ic < in_ch_; ++ic) {
                const double* xbase = x.data() + (static_cast<std::size_t>(b) * in_ch_ + ic) * H * W;
                double* ibase = gin.data() + (static_cast<std::size_t>(b) * in_ch_ + ic) * H * W;
                for (int kh = 0; kh < kh_; ++kh) {
                    const int oh_lo = std::max(0, ph_ - kh);
                    const int oh_hi = std::min(OH, H + ph_ - kh);
                    for (int kw = 0; kw < kw_; ++kw) {
                        const int ow_lo = std::max(0, pw_ - kw);
                        const int ow_hi = std::min(OW, W + pw_ - kw);
                        const int n = ow_hi - ow_lo;
                        if (n <= 0 || oh_hi <= oh_lo) continue;
                        const double w = weight.at(oc, ic, kh, kw);
                        double wacc = 0.0;
                        for (int oh = oh_lo; oh < oh_hi; ++oh) {
                            const double* grow = gbase + oh * OW + ow_lo;
                            const double* xrow = xbase + (oh + kh - ph_) * W + (ow_lo + kw - pw_);
                            double* irow = ibase + (oh + kh - ph_) * W + (ow_lo + kw - pw_);
                            for (int i = 0; i < n; ++i) {
                                wacc += grow[i] * xrow[i];
                                irow[i] += w * grow[i];
                            }
                        }
                        weight_grad.at(oc, ic, kh, kw) += wacc;
                    }
                }
            }
        }
    }
    return gin;
}

void Conv2d::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                     std::vector<NamedTensor>& buffers) {
    (void)buffers;
    params.push_back({prefix + "weight", &weight, &weight_grad});
    params.push_back({prefix + "bias", &bias, &bias_grad});
}

// ---------------------------------------------------------------------------
// Conv1d (dilated)
// ---------------------------------------------------------------------------

int Conv1d::same_padding(int k, int dilation) {
    int span = dilation * (k - 1);
    if (span % 2 != 0) {
        throw ValidationError("conv1d: dilation span " + std::to_string(span) +
                              " cannot be padded symmetrically (even kernel with odd span)");
    }
    return span / 2;
}

Conv1d::Conv1d(int in_ch, int out_ch, int k, int dilation, int pad, Rng& rng)
    : weight({out_ch, in_ch, k}),
      bias({out_ch}),
      weight_grad({out_ch, in_ch, k}),
      bias_grad({out_ch}),
      in_ch_(in_ch), out_ch_(out_ch), k_(k), dil_(dilation), pad_(pad) {
    if (k <= 0 || dilation <= 0 || pad < 0) {
        throw ValidationError("conv1d: kernel and dilation must be positive, padding non-negative");
    }
    init_uniform_fan_in(weight, in_ch * k, rng);
}

Tensor Conv1d::forward(const Tensor& x) {
    if (x.rank() != 3) {
        throw ValidationError("conv1d: expected rank-3 input, got " + x.shape_str());
    }
    if (x.dim(1) != in_ch_) {
        throw ValidationError("conv1d: input has " + std::to_string(x.dim(1)) +
                              " channels but weight tensor " + weight.shape_str() + " expects " +
                              std::to_string(in_ch_));
    }
    const int B = x.dim(0), T = x.dim(2);
    const int span = dil_ * (k_ - 1);
    if (T + 2 * pad_ < span + 1) {
        throw ValidationError("conv1d: input " + x.shape_str() + " shorter than dilated kernel span");
    }
    const int OT = T + 2 * pad_ - span;

    Tensor out({B, out_ch_, OT});
    for (int b = 0; b < B; ++b) {
        for (int oc = 0; oc < out_ch_; ++oc) {
            double* obase = out.data() + (static_cast<std::size_t>(b) * out_ch_ + oc) * OT;
            std::fill(obase, obase + OT, bias[oc]);
            for (int ic = 0; ic < in_ch_; ++ic) {
                const double* xbase = x.data() + (static_cast<std::size_t>(b) * in_ch_ + ic) * T;
                for (int k = 0; k < k_; ++k) {
                    const double w = weight.at(oc, ic, k);
                    const int off = k * dil_ - pad_; // input index = t + off
                    const int t_lo = std::max(0, -off);
                    const int t_hi = std::min(OT, T - off);
                    const double* xrow = xbase + t_lo + off;
                    double* orow = obase + t_lo;
                    const int n = t_hi - t_lo;
                    for (int i = 0; i < n; ++i) orow[i] += w * xrow[i];
                }
            }
        }
    }
    cached_x_ = x;
    return out;
}

Tensor Conv1d::backward(const Tensor& grad_out) {
    const Tensor& x = cached_x_;
    if (x.empty()) throw ValidationError("conv1d: backward before forward");
    const int B = x.dim(0), T = x.dim(2);
    const int OT = T + 2 * pad_ - dil_ * (k_ - 1);
    require_shape(grad_out, {B, out_ch_, OT}, "conv1d backward");

    Tensor gin({B, in_ch_, T});
    for (int b = 0; b < B; ++b) {
        for (int oc = 0; oc < out_ch_; ++oc) {
            const double* gbase = grad_out.data() + (static_cast<std::size_t>(b) * out_ch_ + oc) * OT;
            double bsum = 0.0;
            for (int i = 0; i < OT; ++i) bsum += gbase[i];
            bias_grad[oc] += bsum;

            for (int ic = 0; ic < in_ch_; ++ic) {
                const double* xbase = x.data() + (static_cast<std::size_t>(b) * in_ch_ + ic) * T;
                double* ibase = gin.data() + (static_cast<std::size_t>(b) * in_ch_ + ic) * T;
                for (int k = 0; k < k_; ++k) {
                    const double w = weight.at(oc, ic, k);
                    const int off = k * dil_ - pad_;
                    const int t_lo = std::max(0, -off);
                    const int t_hi = std::min(OT, T - off);
                    const int n = t_hi - t_lo;
                    if (n <= 0) continue;
                    const double* grow = gbase + t_lo;
                    const double* xrow = xbase + t_lo + off;
                    double* irow = ibase + t_lo + off;
                    double wacc = 0.0;
                    for (int i = 0; i < n; ++i) {
                        wacc += grow[i] * xrow[i];
                        irow[i] += w * grow[i];
                    }
                    weight_grad.at(oc, ic, k) += wacc;
                }
            }
        }
    }
    return gin;
}

void Conv1d::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                     std::vector<NamedTensor>& buffers) {
    (void)buffers;
    params.push_back({prefix + "weight", &weight, &weight_grad});
    params.push_back({prefix + "bias", &bias, &bias_grad});
}

// ---------------------------------------------------------------------------
// BatchNorm
// ---------------------------------------------------------------------------

BatchNorm::BatchNorm(int channels, double eps, double momentum)
    : gamma({channels}, 1.0),
      beta({channels}),
      gamma_grad({channels}),
      beta_grad({channels}),
      running_mean({channels}),
      running_var({channels}, 1.0),
      channels_(channels), eps_(eps), momentum_(momentum) {}

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
    if (x.rank() < 2 || x.dim(1) != channels_) {
        throw ValidationError("batchnorm: expected (B, " + std::to_string(channels_) +
                              ", ...) input, got " + x.shape_str());
    }
    const int B = x.dim(0);
    int S = 1;
    for (int i = 2; i < x.rank(); ++i) S *= x.dim(i);
    const int C = channels_;
    const std::size_t cstride = static_cast<std::size_t>(S);
    const std::size_t bstride = static_cast<std::size_t>(C) * S;

    if (mode == Mode::train && B < 2) {
        throw ValidationError("batchnorm: train mode needs batch size >= 2, got " +
                              std::to_string(B));
    }

    Tensor out(x.shape());
    cached_mode_ = mode;
    cached_shape_ = x.shape();
    cached_inv_std_.assign(static_cast<std::size_t>(C), 0.0);

    if (mode == Mode::train) {
        cached_xhat_ = Tensor(x.shape());
        const double n = static_cast<double>(B) * S;
        for (int c = 0; c < C; ++c) {
            double sum = 0.0;
            for (int b = 0; b < B; ++b) {
                const double* xc = x.data() + b * bstride + c * cstride;
                for (int s = 0; s < S; ++s) sum += xc[s];
            }
            const double mean = sum / n;
            double sq = 0.0;
            for (int b = 0; b < B; ++b) {
                const double* xc = x.data() + b * bstride + c * cstride;
                for (int s = 0; s < S; ++s) {
                    const double d = xc[s] - mean;
                    sq += d * d;
                }
            }
            const double var = sq / n; // biased, used for normalization
            const double inv_std = 1.0 / std::sqrt(var + eps_);
            cached_inv_std_[static_cast<std::size_t>(c)] = inv_std;

            const double g = gamma[c], bta = beta[c];
            for (int b = 0; b < B; ++b) {
                const double* xc = x.data() + b * bstride + c * cstride;
                double* hc = cached_xhat_.data() + b * bstride + c * cstride;
                double* oc = out.data() + b * bstride + c * cstride;
                for (int s = 0; s < S; ++s) {
                    const double xh = (xc[s] - mean) * inv_std;
                    hc[s] = xh;
                    oc[s] = g * xh + bta;
                }
            }
            // running stats track the unbiased variance
            const double unbiased = n > 1.0 ? sq / (n - 1.0) : var;
            running_mean[c] = (1.0 - momentum_) * running_mean[c] + momentum_ * mean;
            running_var[c] = (1.0 - momentum_) * running_var[c] + momentum_ * unbiased;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            const double inv_std = 1.0 / std::sqrt(running_var[c] + eps_);
            cached_inv_std_[static_cast<std::size_t>(c)] = inv_std;
            const double mean = running_mean[c];
            const double g = gamma[c], bta = beta[c];
            for (int b = 0; b < B; ++b) {
                const double* xc = x.data() + b * bstride + c * cstride;
                double* oc = out.data() + b * bstride + c * cstride;
                for (int s = 0; s < S; ++s) oc[s] = g * (xc[s] - mean) * inv_std + bta;
            }
        }
        cached_xhat_ = Tensor(); // not needed in eval backward
    }
    return out;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
    if (cached_shape_.empty()) throw ValidationError("batchnorm: backward before forward");
    require_shape(grad_out, cached_shape_, "batchnorm backward");
    const int B = cached_shape_[0];
    const int C = channels_;
    int S = 1;
    for (std::size_t i = 2; i < cached_shape_.size(); ++i) S *= cached_shape_[i];
    const std::size_t cstride = static_cast<std::size_t>(S);
    const std::size_t bstride = static_cast<std::size_t>(C) * S;

    Tensor gin(cached_shape_);
    if (cached_mode_ == Mode::eval) {
        for (int c = 0; c < C; ++c) {
            const double scale = gamma[c] * cached_inv_std_[static_cast<std::size_t>(c)];
            for (int b = 0; b < B; ++b) {
                const double* gc = grad_out.data() + b * bstride + c * cstride;
                double* ic = gin.data() + b * bstride + c * cstride;
                for (int s = 0; s < S; ++s) ic[s] = gc[s] * scale;
            }
        }
        return gin;
    }

    // Train mode: y = gamma * xhat + beta, xhat = (x - mu) * inv_std with
    // mu, var functions of the batch. Standard closed form:
    //   dL/dx_i = inv_std/n * (n*gh_i - sum(gh) - xhat_i * sum(gh*xhat)) with gh = gamma*dL/dy
    const double n = static_cast<double>(B) * S;
    for (int c = 0; c < C; ++c) {
        const double inv_std = cached_inv_std_[static_cast<std::size_t>(c)];
        const double g = gamma[c];
        double sum_g = 0.0, sum_gx = 0.0;
        for (int b = 0; b < B; ++b) {
            const double* gc = grad_out.data() + b * bstride + c * cstride;
            const double* hc = cached_xhat_.data() + b * bstride + c * cstride;
            for (int s = 0; s < S; ++s) {
                sum_g += gc[s];
                sum_gx += gc[s] * hc[s];
            }
        }
        gamma_grad[c] += sum_gx;
        beta_grad[c] += sum_g;

        const double k1 = g * inv_std;
        for (int b = 0; b < B; ++b) {
            const double* gc = grad_out.data() + b * bstride + c * cstride;
            const double* hc = cached_xhat_.data() + b * bstride + c * cstride;
            double* ic = gin.data() + b * bstride + c * cstride;
            for (int s = 0; s < S; ++s) {
                ic[s] = k1 * (gc[s] - sum_g / n - hc[s] * sum_gx / n);
            }
        }
    }
    return gin;
}

void BatchNorm::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                        std::vector<NamedTensor>& buffers) {
    params.push_back({prefix + "gamma", &gamma, &gamma_grad});
    params.push_back({prefix + "beta", &beta, &beta_grad});
    buffers.push_back({prefix + "running_mean", &running_mean, nullptr});
    buffers.push_back({prefix + "running_var", &running_var, nullptr});
}

// ---------------------------------------------------------------------------
// MaxPool2d
// ---------------------------------------------------------------------------

Tensor MaxPool2d::forward(const Tensor& x) {
    if (x.rank() != 4) {
        throw ValidationError("maxpool2d: expected rank-4 input, got " + x.shape_str());
    }
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H < 2 || W < 2) {
        throw ValidationError("maxpool2d: input " + x.shape_str() + " smaller than 2x2 window");
    }
    const int OH = H / 2, OW = W / 2;
    Tensor out({B, C, OH, OW});
    argmax_.assign(static_cast<std::size_t>(out.size()), 0);
    cached_in_shape_ = x.shape();

    int o = 0;
    for (int bc = 0; bc < B * C; ++bc) {
        const double* xb = x.data() + static_cast<std::size_t>(bc) * H * W;
        for (int oh = 0; oh < OH; ++oh) {
            for (int ow = 0; ow < OW; ++ow, ++o) {
                const int base = (2 * oh) * W + 2 * ow;
                // row-major window order; strictly-greater keeps the first tie
                int best = base;
                double bv = xb[base];
                if (xb[base + 1] > bv) { best = base + 1; bv = xb[base + 1]; }
                if (xb[base + W] > bv) { best = base + W; bv = xb[base + W]; }
                if (xb[base + W + 1] > bv) { best = base + W + 1; bv = xb[base + W + 1]; }
                out[o] = bv;
                argmax_[static_cast<std::size_t>(o)] = bc * H * W + best;
            }
        }
    }
    return out;
}

Tensor MaxPool2d::backward(const Tensor& grad_out) {
    if (cached_in_shape_.empty()) throw ValidationError("maxpool2d: backward before forward");
    const int B = cached_in_shape_[0], C = cached_in_shape_[1];
    const int H = cached_in_shape_[2], W = cached_in_shape_[3];
    require_shape(grad_out, {B, C, H / 2, W / 2}, "maxpool2d backward");
    Tensor gin(cached_in_shape_);
    for (int o = 0; o < grad_out.size(); ++o) {
        gin[argmax_[static_cast<std::size_t>(o)]] += grad_out[o];
    }
    return gin;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
    Tensor y(x.shape());
    for (int i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y(x.shape());
    for (int i = 0; i < x.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
    return y;
}

Tensor softmax(const Tensor& x, int axis) {
    if (axis < 0 || axis >= x.rank()) {
        throw ValidationError("softmax: axis " + std::to_string(axis) + " out of range for " +
                              x.shape_str());
    }
    const int n = x.dim(axis);
    const int step = x.stride(axis);
    const int inner = step;
    int outer = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    const int block = n * step;

    Tensor y(x.shape());
    for (int o = 0; o < outer; ++o) {
        for (int i = 0; i < inner; ++i) {
            const double* xs = x.data() + static_cast<std::size_t>(o) * block + i;
            double* ys = y.data() + static_cast<std::size_t>(o) * block + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < n; ++j) mx = std::max(mx, xs[j * step]);
            double sum = 0.0;
            for (int j = 0; j < n; ++j) {
                const double e = std::exp(xs[j * step] - mx);
                ys[j * step] = e;
                sum += e;
            }
            for (int j = 0; j < n; ++j) ys[j * step] /= sum;
        }
    }
    return y;
}

Tensor softmax_backward(const Tensor& y, const Tensor& grad_out, int axis) {
    const int n = y.dim(axis);
    const int step = y.stride(axis);
    const int inner = step;
    int outer = 1;
    for (int i = 0; i < axis; ++i) outer *= y.dim(i);
    const int block = n * step;

    Tensor gin(y.shape());
    for (int o = 0; o < outer; ++o) {
        for (int i = 0; i < inner; ++i) {
            const double* ys = y.data() + static_cast<std::size_t>(o) * block + i;
            const double* gs = grad_out.data() + static_cast<std::size_t>(o) * block + i;
            double* is = gin.data() + static_cast<std::size_t>(o) * block + i;
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += gs[j * step] * ys[j * step];
            for (int j = 0; j < n; ++j) is[j * step] = ys[j * step] * (gs[j * step] - dot);
        }
    }
    return gin;
}

Tensor ReLU::forward(const Tensor& x) {
    mask_.assign(static_cast<std::size_t>(x.size()), 0);
    Tensor y(x.shape());
    for (int i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0) {
            y[i] = x[i];
            mask_[static_cast<std::size_t>(i)] = 1;
        }
    }
    return y;
}

Tensor ReLU::backward(const Tensor& grad_out) const {
    Tensor gin(grad_out.shape());
    for (int i = 0; i < grad_out.size(); ++i) {
        if (mask_[static_cast<std::size_t>(i)]) gin[i] = grad_out[i];
    }
    return gin;
}

Tensor SigmoidLayer::forward(const Tensor& x) {
    cached_y_ = sigmoid(x);
    return cached_y_;
}

Tensor SigmoidLayer::backward(const Tensor& grad_out) const {
    Tensor gin(grad_out.shape());
    for (int i = 0; i < grad_out.size(); ++i) {
        const double y = cached_y_[i];
        gin[i] = grad_out[i] * y * (1.0 - y);
    }
    return gin;
}

} // namespace milasc
