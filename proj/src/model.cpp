#include "milasc/model.hpp"

#include <algorithm>
#include <cmath>

#include "milasc/errors.hpp"

namespace milasc {

void ModelConfig::validate() const {
    if (classes < 2) throw ValidationError("model: need at least 2 classes");
    if (head == HeadKind::md && sub_detectors < 1) {
        throw ValidationError("model: MD head needs at least one sub-detector");
    }
    if (block_channels.size() != 3) {
        throw ValidationError("model: exactly three conv blocks are expected");
    }
    for (int c : block_channels) {
        if (c < 1) throw ValidationError("model: block channel count must be positive");
    }
    if (instance_dim < 1) throw ValidationError("model: instance dim must be positive");
    if (pooled_bands(bands) < 1) {
        throw ValidationError("model: " + std::to_string(bands) +
                              " mel bands do not survive three 2x2 pools");
    }
    const int m = instance_count(frames);
    if (m < 1) {
        throw ValidationError("model: " + std::to_string(frames) +
                              " frames do not survive three 2x2 pools");
    }
    if (mts && m < 9) {
        throw ValidationError("model: MTS needs at least 9 instances (largest dilated span), got " +
                              std::to_string(m));
    }
}

int instance_count(int frames) { return frames / 2 / 2 / 2; }

int pooled_bands(int bands) { return bands / 2 / 2 / 2; }

// ---------------------------------------------------------------------------
// Aggregation / decision
// ---------------------------------------------------------------------------

Prediction aggregate(const Tensor& instance_scores) {
    if (instance_scores.rank() != 2) {
        throw ValidationError("aggregate: expected (C, m) scores, got " +
                              instance_scores.shape_str());
    }
    const int classes = instance_scores.dim(0), m = instance_scores.dim(1);
    Prediction p;
    p.instance_scores = instance_scores;
    p.bag_scores = Tensor({classes});
    p.argmax_instance.assign(static_cast<std::size_t>(classes), 0);
    for (int c = 0; c < classes; ++c) {
        const double* row = instance_scores.data() + static_cast<std::size_t>(c) * m;
        int best = 0;
        for (int j = 1; j < m; ++j) {
            if (row[j] > row[best]) best = j;
        }
        p.bag_scores[c] = row[best];
        p.argmax_instance[static_cast<std::size_t>(c)] = best;
    }
    return p;
}

std::vector<Prediction> aggregate_batch(const Tensor& instance_scores) {
    if (instance_scores.rank() != 3) {
        throw ValidationError("aggregate: expected (B, C, m) scores, got " +
                              instance_scores.shape_str());
    }
    const int batch = instance_scores.dim(0);
    const int classes = instance_scores.dim(1);
    const int m = instance_scores.dim(2);
    std::vector<Prediction> out;
    out.reserve(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) {
        Tensor slice({classes, m});
        std::copy_n(instance_scores.data() + static_cast<std::size_t>(b) * classes * m,
                    static_cast<std::size_t>(classes) * m, slice.data());
        out.push_back(aggregate(slice));
    }
    return out;
}

int classify(const Tensor& bag_scores) {
    int best = 0;
    for (int c = 1; c < bag_scores.size(); ++c) {
        if (bag_scores[c] > bag_scores[best]) best = c;
    }
    return best;
}

int classify(const Prediction& p) { return classify(p.bag_scores); }

// ---------------------------------------------------------------------------
// ConvBlock
// ---------------------------------------------------------------------------

ConvBlock::ConvBlock(int in_ch, int out_ch, Rng& rng)
    : conv1_(in_ch, out_ch, 3, 3, 1, 1, rng),
      conv2_(out_ch, out_ch, 3, 3, 1, 1, rng),
      bn1_(out_ch),
      bn2_(out_ch) {}

Tensor ConvBlock::forward(const Tensor& x, Mode mode) {
    Tensor h = relu1_.forward(bn1_.forward(conv1_.forward(x), mode));
    h = relu2_.forward(bn2_.forward(conv2_.forward(h), mode));
    return pool_.forward(h);
}

Tensor ConvBlock::backward(const Tensor& grad_out) {
    Tensor g = pool_.backward(grad_out);
    g = conv2_.backward(bn2_.backward(relu2_.backward(g)));
    g = conv1_.backward(bn1_.backward(relu1_.backward(g)));
    return g;
}

void ConvBlock::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                        std::vector<NamedTensor>& buffers) {
    conv1_.collect(prefix + "conv1.", params, buffers);
    bn1_.collect(prefix + "bn1.", params, buffers);
    conv2_.collect(prefix + "conv2.", params, buffers);
    bn2_.collect(prefix + "bn2.", params, buffers);
}

// ---------------------------------------------------------------------------
// InstanceGenerator
// ---------------------------------------------------------------------------

InstanceGenerator::InstanceGenerator(const ModelConfig& config, Rng& rng)
    : bands_(config.bands),
      instance_dim_(config.instance_dim),
      input_bn_(1),
      final_conv_(config.block_channels[2], config.instance_dim, pooled_bands(config.bands), 1, 0, 0,
                  rng),
      final_bn_(config.instance_dim) {
    int in_ch = 1;
    for (int c : config.block_channels) {
        blocks_.push_back(std::make_unique<ConvBlock>(in_ch, c, rng));
        in_ch = c;
    }
}

Tensor InstanceGenerator::forward(const Tensor& x, Mode mode) {
    if (x.rank() != 4 || x.dim(1) != 1) {
        throw ValidationError("instance generator: expected (B, 1, bands, frames), got " +
                              x.shape_str());
    }
    if (x.dim(2) != bands_) {
        throw ValidationError("instance generator: input has " + std::to_string(x.dim(2)) +
                              " bands but the full-height kernel was built for " +
                              std::to_string(bands_));
    }
    Tensor h = input_bn_.forward(x, mode);
    for (auto& block : blocks_) h = block->forward(h, mode);
    h = final_relu_.forward(final_bn_.forward(final_conv_.forward(h), mode));
    pre_squeeze_shape_ = h.shape(); // (B, d, 1, m)
    return h.reshaped({h.dim(0), h.dim(1), h.dim(3)});
}

Tensor InstanceGenerator::backward(const Tensor& grad_out) {
    Tensor g = grad_out.reshaped(pre_squeeze_shape_);
    g = final_conv_.backward(final_bn_.backward(final_relu_.backward(g)));
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = (*it)->backward(g);
    return input_bn_.backward(g);
}

void InstanceGenerator::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                                std::vector<NamedTensor>& buffers) {
    input_bn_.collect(prefix + "input_bn.", params, buffers);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        blocks_[i]->collect(prefix + "block" + std::to_string(i + 1) + ".", params, buffers);
    }
    final_conv_.collect(prefix + "final_conv.", params, buffers);
    final_bn_.collect(prefix + "final_bn.", params, buffers);
}

// ---------------------------------------------------------------------------
// MtsModule
// ---------------------------------------------------------------------------

MtsModule::MtsModule(int dim, Rng& rng)
    : dim_(dim),
      dil1_(dim, dim, 3, 1, Conv1d::same_padding(3, 1), rng),
      dil2_(dim, dim, 3, 2, Conv1d::same_padding(3, 2), rng),
      dil3_(dim, dim, 3, 4, Conv1d::same_padding(3, 4), rng),
      bn1_(dim),
      bn2_(dim),
      bn3_(dim),
      fuse_(4 * dim, dim, 1, 1, 0, rng) {}

Tensor MtsModule::forward(const Tensor& x, Mode mode) {
    if (x.rank() != 3 || x.dim(1) != dim_) {
        throw ValidationError("mts: expected (B, " + std::to_string(dim_) + ", m) bag, got " +
                              x.shape_str());
    }
    const int B = x.dim(0), m = x.dim(2);
    Tensor o1 = relu1_.forward(bn1_.forward(dil1_.forward(x), mode));
    Tensor o2 = relu2_.forward(bn2_.forward(dil2_.forward(o1), mode));
    Tensor o3 = relu3_.forward(bn3_.forward(dil3_.forward(o2), mode));

    Tensor cat({B, 4 * dim_, m});
    const std::size_t chunk = static_cast<std::size_t>(dim_) * m;
    for (int b = 0; b < B; ++b) {
        double* dst = cat.data() + static_cast<std::size_t>(b) * 4 * chunk;
        std::copy_n(x.data() + b * chunk, chunk, dst);
        std::copy_n(o1.data() + b * chunk, chunk, dst + chunk);
        std::copy_n(o2.data() + b * chunk, chunk, dst + 2 * chunk);
        std::copy_n(o3.data() + b * chunk, chunk, dst + 3 * chunk);
    }
    return fuse_.forward(cat);
}

Tensor MtsModule::backward(const Tensor& grad_out) {
    Tensor gcat = fuse_.backward(grad_out);
    const int B = gcat.dim(0), m = gcat.dim(2);
    const std::size_t chunk = static_cast<std::size_t>(dim_) * m;

    Tensor gx({B, dim_, m}), g1({B, dim_, m}), g2({B, dim_, m}), g3({B, dim_, m});
    for (int b = 0; b < B; ++b) {
        const double* src = gcat.data() + static_cast<std::size_t>(b) * 4 * chunk;
        std::copy_n(src, chunk, gx.data() + b * chunk);
        std::copy_n(src + chunk, chunk, g1.data() + b * chunk);
        std::copy_n(src + 2 * chunk, chunk, g2.data() + b * chunk);
        std::copy_n(src + 3 * chunk, chunk, g3.data() + b * chunk);
    }

    Tensor t = dil3_.backward(bn3_.backward(relu3_.backward(g3)));
    for (int i = 0; i < g2.size(); ++i) g2[i] += t[i];
    t = dil2_.backward(bn2_.backward(relu2_.backward(g2)));
    for (int i = 0; i < g1.size(); ++i) g1[i] += t[i];
    t = dil1_.backward(bn1_.backward(relu1_.backward(g1)));
    for (int i = 0; i < gx.size(); ++i) gx[i] += t[i];
    return gx;
}

void MtsModule::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                        std::vector<NamedTensor>& buffers) {
    dil1_.collect(prefix + "dil1.", params, buffers);
    bn1_.collect(prefix + "bn1.", params, buffers);
    dil2_.collect(prefix + "dil2.", params, buffers);
    bn2_.collect(prefix + "bn2.", params, buffers);
    dil3_.collect(prefix + "dil3.", params, buffers);
    bn3_.collect(prefix + "bn3.", params, buffers);
    fuse_.collect(prefix + "fuse.", params, buffers);
}

// ---------------------------------------------------------------------------
// Heads
// ---------------------------------------------------------------------------

SdHead::SdHead(int dim, int classes, Rng& rng) : proj(dim, classes, 1, 1, 0, rng) {}

Tensor SdHead::forward(const Tensor& bag, Mode mode) {
    (void)mode;
    return sig_.forward(proj.forward(bag));
}

Tensor SdHead::backward(const Tensor& grad_out) { return proj.backward(sig_.backward(grad_out)); }

void SdHead::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                     std::vector<NamedTensor>& buffers) {
    proj.collect(prefix + "detector.", params, buffers);
}

MdHead::MdHead(int dim, int classes, int sub_detectors, Rng& rng)
    : proj(dim, classes * sub_detectors, 1, 1, 0, rng), classes_(classes), k_(sub_detectors) {}

Tensor MdHead::forward(const Tensor& bag, Mode mode) {
    (void)mode;
    // scores: (B, C*K, m), sub-detector k of class c lives at channel c*K + k
    Tensor scores = proj.forward(bag);
    const int B = scores.dim(0), m = scores.dim(2);

    evidence_ = Tensor({B, classes_, m});
    argmax_k_.assign(static_cast<std::size_t>(B) * classes_ * m, 0);
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < classes_; ++c) {
            for (int t = 0; t < m; ++t) {
                int best = 0;
                double bv = scores.at(b, c * k_, t);
                for (int k = 1; k < k_; ++k) {
                    const double v = scores.at(b, c * k_ + k, t);
                    if (v > bv) {
                        bv = v;
                        best = k;
                    }
                }
                evidence_.at(b, c, t) = bv;
                argmax_k_[(static_cast<std::size_t>(b) * classes_ + c) * m + t] = best;
            }
        }
    }
    softmax_out_ = softmax(evidence_, 1);
    return softmax_out_;
}

Tensor MdHead::backward(const Tensor& grad_out) {
    Tensor gev = softmax_backward(softmax_out_, grad_out, 1);
    const int B = gev.dim(0), m = gev.dim(2);
    Tensor gscores({B, classes_ * k_, m});
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < classes_; ++c) {
            for (int t = 0; t < m; ++t) {
                const int k = argmax_k_[(static_cast<std::size_t>(b) * classes_ + c) * m + t];
                gscores.at(b, c * k_ + k, t) = gev.at(b, c, t);
            }
        }
    }
    return proj.backward(gscores);
}

void MdHead::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                     std::vector<NamedTensor>& buffers) {
    proj.collect(prefix + "detectors.", params, buffers);
}

// ---------------------------------------------------------------------------
// MilModel
// ---------------------------------------------------------------------------

MilModel::MilModel(const ModelConfig& config) : config_(config) {
    config_.validate();
    // one init stream threaded through the parts in construction order keeps
    // initialization a pure function of the seed
    Rng rng(Rng::mix(config_.seed, 0x9d8a7b6c5d4e3f21ull));
    gen_ = std::make_unique<InstanceGenerator>(config_, rng);
    if (config_.mts) mts_ = std::make_unique<MtsModule>(config_.instance_dim, rng);
    if (config_.head == HeadKind::sd) {
        sd_ = std::make_unique<SdHead>(config_.instance_dim, config_.classes, rng);
    } else {
        md_ = std::make_unique<MdHead>(config_.instance_dim, config_.classes, config_.sub_detectors,
                                       rng);
    }
}

MilModel::Output MilModel::forward(const Tensor& x, Mode mode) {
    Tensor bag = gen_->forward(x, mode);
    if (mts_) bag = mts_->forward(bag, mode);
    Tensor inst = sd_ ? sd_->forward(bag, mode) : md_->forward(bag, mode);

    const int B = inst.dim(0), C = inst.dim(1), m = inst.dim(2);
    Output out;
    out.instance_scores = inst;
    out.bag_scores = Tensor({B, C});
    out.argmax_instance.assign(static_cast<std::size_t>(B) * C, 0);
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            const double* row = inst.data() + (static_cast<std::size_t>(b) * C + c) * m;
            int best = 0;
            for (int j = 1; j < m; ++j) {
                if (row[j] > row[best]) best = j;
            }
            out.bag_scores.at(b, c) = row[best];
            out.argmax_instance[static_cast<std::size_t>(b) * C + c] = best;
        }
    }
    last_argmax_ = out.argmax_instance;
    last_inst_shape_ = inst.shape();
    return out;
}

void MilModel::backward(const Tensor& grad_bag_scores) {
    if (last_inst_shape_.empty()) throw ValidationError("model: backward before forward");
    const int B = last_inst_shape_[0], C = last_inst_shape_[1];
    require_shape(grad_bag_scores, {B, C}, "model backward");

    // max aggregator: the whole bag gradient lands on the argmax instance
    Tensor ginst(last_inst_shape_);
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            const int j = last_argmax_[static_cast<std::size_t>(b) * C + c];
            ginst.at(b, c, j) = grad_bag_scores.at(b, c);
        }
    }
    Tensor gbag = sd_ ? sd_->backward(ginst) : md_->backward(ginst);
    if (mts_) gbag = mts_->backward(gbag);
    last_input_grad_ = gen_->backward(gbag);
}

void MilModel::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                       std::vector<NamedTensor>& buffers) {
    gen_->collect(prefix + "gen.", params, buffers);
    if (mts_) mts_->collect(prefix + "mts.", params, buffers);
    if (sd_) sd_->collect(prefix + "head.", params, buffers);
    if (md_) md_->collect(prefix + "head.", params, buffers);
}

std::vector<std::pair<std::string, Tensor>> MilModel::state_dict() {
    std::vector<NamedTensor> params, buffers;
    collect("", params, buffers);
    std::vector<std::pair<std::string, Tensor>> state;
    state.reserve(params.size() + buffers.size());
    for (const auto& p : params) state.emplace_back(p.name, *p.value);
    for (const auto& b : buffers) state.emplace_back(b.name, *b.value);
    return state;
}

void MilModel::load_state_dict(const std::vector<std::pair<std::string, Tensor>>& state) {
    std::vector<NamedTensor> params, buffers;
    collect("", params, buffers);
    std::vector<NamedTensor> all = params;
    all.insert(all.end(), buffers.begin(), buffers.end());
    if (state.size() != all.size()) {
        throw ValidationError("model: state has " + std::to_string(state.size()) +
                              " tensors, model expects " + std::to_string(all.size()));
    }
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (state[i].first != all[i].name) {
            throw ValidationError("model: state entry '" + state[i].first +
                                  "' does not match expected '" + all[i].name + "'");
        }
        if (!state[i].second.same_shape(*all[i].value)) {
            throw ValidationError("model: shape mismatch for '" + all[i].name + "': checkpoint " +
                                  state[i].second.shape_str() + " vs model " +
                                  all[i].value->shape_str());
        }
        *all[i].value = state[i].second;
    }
}

} // namespace milasc
