#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "milasc/layers.hpp"
#include "milasc/tensor.hpp"

namespace milasc {

enum class HeadKind { sd, md };

/// Selects one of the four network variants: {SD, MD} x {MTS on, off}.
struct ModelConfig {
    HeadKind head = HeadKind::sd;
    bool mts = false;
    int sub_detectors = 4;   // K, MD head only
    int classes = 10;
    std::vector<int> block_channels = {32, 64, 128};
    int instance_dim = 256;
    int bands = 40;
    int frames = 500;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Time extent of the bag produced from `frames` input frames: three 2x2
/// pools halve (with floor) three times.
int instance_count(int frames);

/// Frequency extent surviving the three pools; the full-height kernel of the
/// final convolution.
int pooled_bands(int bands);

/// Temporal stride of one instance in input frames (2^3 for the three pools).
inline constexpr int kInstanceStride = 8;

/// Per-clip model output retained for event localization: bag scores, the
/// full instance-score matrix and the instance index attaining each class's
/// bag score.
struct Prediction {
    Tensor bag_scores;               // (C)
    Tensor instance_scores;          // (C, m)
    std::vector<int> argmax_instance; // per class
};

/// Max-pools instance scores (C, m) into a Prediction (Eq-style SMI
/// aggregation: bag score = max over instances; ties keep the first index).
Prediction aggregate(const Tensor& instance_scores);

/// Batched variant over (B, C, m).
std::vector<Prediction> aggregate_batch(const Tensor& instance_scores);

/// Argmax over bag scores; ties resolve to the lowest class index.
int classify(const Prediction& p);
int classify(const Tensor& bag_scores);

// ---------------------------------------------------------------------------
// Network parts
// ---------------------------------------------------------------------------

/// One VGG-style block: two 3x3 same convolutions, each with batch norm and
/// ReLU, then 2x2 max pooling.
class ConvBlock : public Layer {
public:
    ConvBlock(int in_ch, int out_ch, Rng& rng);
    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out);
    void collect(const std::string& prefix, std::vector<NamedTensor>& params,
                 std::vector<NamedTensor>& buffers) override;

private:
    Conv2d conv1_, conv2_;
    BatchNorm bn1_, bn2_;
    ReLU relu1_, relu2_;
    MaxPool2d pool_;
};

/// Spectrogram (B, 1, bands, frames) -> bag of instances (B, d, m). Batch
/// norm is applied to the raw input, three conv blocks widen the channels,
/// and a full-height (pooled_bands x 1) convolution collapses frequency.
class InstanceGenerator : public Layer {
public:
    InstanceGenerator(const ModelConfig& config, Rng& rng);
    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out);
    void collect(const std::string& prefix, std::vector<NamedTensor>& params,
                 std::vector<NamedTensor>& buffers) override;

private:
    int bands_;
    int instance_dim_;
    BatchNorm input_bn_;
    std::vector<std::unique_ptr<ConvBlock>> blocks_;
    Conv2d final_conv_;
    BatchNorm final_bn_;
    ReLU final_relu_;
    std::vector<int> pre_squeeze_shape_;
};

/// Multi-temporal-scale module: three stacked dilated 1D convolutions
/// (kernel 3, dilation 1, 2, 4, each with batch norm and ReLU, zero padded to
/// keep the time axis fixed), the input and the three outputs concatenated
/// over channels and fused by a size-1 convolution back to d channels.
class MtsModule : public Layer {
public:
    MtsModule(int dim, Rng& rng);
    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out);
    void collect(const std::string& prefix, std::vector<NamedTensor>& params,
                 std::vector<NamedTensor>& buffers) override;

private:
    int dim_;
    Conv1d dil1_, dil2_, dil3_;
    BatchNorm bn1_, bn2_, bn3_;
    ReLU relu1_, relu2_, relu3_;
    Conv1d fuse_;
};

/// Single detector per class: size-1 convolution to C channels + sigmoid.
/// Each score is an independent posterior in (0, 1).
class SdHead : public Layer {
public:
    SdHead(int dim, int classes, Rng& rng);
    Tensor forward(const Tensor& bag, Mode mode);
    Tensor backward(const Tensor& grad_out);
    void collect(const std::string& prefix, std::vector<NamedTensor>& params,
                 std::vector<NamedTensor>& buffers) override;

    Conv1d proj;

private:
    SigmoidLayer sig_;
};

/// K sub-detectors per class: size-1 convolution to C*K channels, max over
/// the K affine scores per class, then softmax across classes, so each
/// instance's scores form a distribution over classes.
class MdHead : public Layer {
public:
    MdHead(int dim, int classes, int sub_detectors, Rng& rng);
    Tensor forward(const Tensor& bag, Mode mode);
    Tensor backward(const Tensor& grad_out);
    void collect(const std::string& prefix, std::vector<NamedTensor>& params,
                 std::vector<NamedTensor>& buffers) override;

    /// Max-over-K affine scores from the last forward, shape (B, C, m);
    /// exposed for inspection of the pre-softmax evidence.
    const Tensor& last_evidence() const { return evidence_; }

    Conv1d proj;

private:
    int classes_, k_;
    Tensor evidence_;            // (B, C, m)
    Tensor softmax_out_;
    std::vector<int> argmax_k_;  // winning sub-detector per (b, c, t)
};

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

class MilModel : public Layer {
public:
    explicit MilModel(const ModelConfig& config);

    struct Output {
        Tensor instance_scores;          // (B, C, m)
        Tensor bag_scores;               // (B, C)
        std::vector<int> argmax_instance; // B*C, instance attaining each bag score
    };

    Output forward(const Tensor& x, Mode mode);

    /// Backward from dLoss/dBagScores (B, C); gradient flows only into each
    /// class's argmax instance, then back through the head and the CNN.
    void backward(const Tensor& grad_bag_scores);

    /// Gradient w.r.t. the spectrogram input from the most recent backward.
    const Tensor& last_input_gradient() const { return last_input_grad_; }

    void collect(const std::string& prefix, std::vector<NamedTensor>& params,
                 std::vector<NamedTensor>& buffers) override;

    const ModelConfig& config() const { return config_; }
    int instance_axis_length() const { return instance_count(config_.frames); }

    /// Deep copy of all parameters and buffers, in collection order.
    std::vector<std::pair<std::string, Tensor>> state_dict();
    void load_state_dict(const std::vector<std::pair<std::string, Tensor>>& state);

private:
    ModelConfig config_;
    std::unique_ptr<InstanceGenerator> gen_;
    std::unique_ptr<MtsModule> mts_;
    std::unique_ptr<SdHead> sd_;
    std::unique_ptr<MdHead> md_;
    std::vector<int> last_argmax_;
    std::vector<int> last_inst_shape_;
    Tensor last_input_grad_;
};

} // namespace milasc
