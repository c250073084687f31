#include "milasc/gradsuite.hpp"

#include <cmath>

#include "milasc/layers.hpp"
#include "milasc/model.hpp"
#include "milasc/rng.hpp"
#include "milasc/training.hpp"

namespace milasc {

namespace {

Tensor random_tensor(const std::vector<int>& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

double weighted_sum(const Tensor& y, const Tensor& coefs) {
    double s = 0.0;
    for (int i = 0; i < y.size(); ++i) s += coefs[i] * y[i];
    return s;
}

// Minimal pairwise gap among `count` values strided by `step` starting at p.
double min_gap(const double* p, int count, int step) {
    double gap = 1e300;
    for (int i = 0; i < count; ++i) {
        for (int j = i + 1; j < count; ++j) {
            gap = std::min(gap, std::fabs(p[i * step] - p[j * step]));
        }
    }
    return gap;
}

double check_conv2d(std::uint64_t seed, bool large) {
    Rng rng(Rng::mix(seed, 1));
    const std::vector<int> in_shape = large ? std::vector<int>{2, 3, 12, 16} : std::vector<int>{2, 3, 8, 8};
    Conv2d conv(3, 4, 3, 3, 1, 1, rng);
    Tensor x = random_tensor(in_shape, rng);

    conv.zero_grad();
    Tensor y = conv.forward(x);
    Tensor coefs = random_tensor(y.shape(), rng);
    Tensor xgrad = conv.backward(coefs);

    auto loss = [&]() { return weighted_sum(conv.forward(x), coefs); };
    const auto r = grad_check(loss, {{"x", &x, &xgrad},
                                     {"weight", &conv.weight, &conv.weight_grad},
                                     {"bias", &conv.bias, &conv.bias_grad}});
    return r.max_rel_error;
}

double check_conv1d_dilated(std::uint64_t seed, bool large) {
    Rng rng(Rng::mix(seed, 2));
    const int t_len = large ? 40 : 16;
    Conv1d conv(4, 3, 3, 2, Conv1d::same_padding(3, 2), rng);
    Tensor x = random_tensor({2, 4, t_len}, rng);

    conv.zero_grad();
    Tensor y = conv.forward(x);
    Tensor coefs = random_tensor(y.shape(), rng);
    Tensor xgrad = conv.backward(coefs);

    auto loss = [&]() { return weighted_sum(conv.forward(x), coefs); };
    const auto r = grad_check(loss, {{"x", &x, &xgrad},
                                     {"weight", &conv.weight, &conv.weight_grad},
                                     {"bias", &conv.bias, &conv.bias_grad}});
    return r.max_rel_error;
}

double check_batchnorm(std::uint64_t seed, bool large) {
    Rng rng(Rng::mix(seed, 3));
    const std::vector<int> shape = large ? std::vector<int>{6, 3, 7, 7} : std::vector<int>{4, 2, 5, 5};
    BatchNorm bn(shape[1]);
    // non-default affine parameters so their gradients are generic
    for (int c = 0; c < shape[1]; ++c) {
        bn.gamma[c] = rng.uniform(0.5, 1.5);
        bn.beta[c] = rng.uniform(-0.5, 0.5);
    }
    Tensor x = random_tensor(shape, rng);

    bn.zero_grad();
    Tensor y = bn.forward(x, Mode::train);
    Tensor coefs = random_tensor(y.shape(), rng);
    Tensor xgrad = bn.backward(coefs);

    auto loss = [&]() { return weighted_sum(bn.forward(x, Mode::train), coefs); };
    const auto r = grad_check(loss, {{"x", &x, &xgrad},
                                     {"gamma", &bn.gamma, &bn.gamma_grad},
                                     {"beta", &bn.beta, &bn.beta_grad}});
    return r.max_rel_error;
}

double check_maxpool(std::uint64_t seed, bool large) {
    Rng rng(Rng::mix(seed, 4));
    const std::vector<int> shape = large ? std::vector<int>{2, 3, 10, 12} : std::vector<int>{2, 2, 6, 8};
    MaxPool2d pool;

    // resample until every pooling window is comfortably tie-free at h=1e-5
    Tensor x;
    for (int attempt = 0; attempt < 64; ++attempt) {
        x = random_tensor(shape, rng);
        double gap = 1e300;
        const int H = shape[2], W = shape[3];
        for (int bc = 0; bc < shape[0] * shape[1]; ++bc) {
            const double* base = x.data() + static_cast<std::size_t>(bc) * H * W;
            for (int oh = 0; oh + 1 < H; oh += 2) {
                for (int ow = 0; ow + 1 < W; ow += 2) {
                    const double v[4] = {base[oh * W + ow], base[oh * W + ow + 1],
                                         base[(oh + 1) * W + ow], base[(oh + 1) * W + ow + 1]};
                    gap = std::min(gap, min_gap(v, 4, 1));
                }
            }
        }
        if (gap > 1e-3) break;
    }

    Tensor y = pool.forward(x);
    Tensor coefs = random_tensor(y.shape(), rng);
    Tensor xgrad = pool.backward(coefs);

    auto loss = [&]() { return weighted_sum(pool.forward(x), coefs); };
    const auto r = grad_check(loss, {{"x", &x, &xgrad}});
    return r.max_rel_error;
}

double check_sd_head(std::uint64_t seed, bool large) {
    Rng rng(Rng::mix(seed, 5));
    const int dim = large ? 12 : 6, m = large ? 20 : 10, classes = 3;
    SdHead head(dim, classes, rng);
    Tensor x = random_tensor({2, dim, m}, rng);

    head.zero_grad();
    Tensor y = head.forward(x, Mode::train);
    Tensor coefs = random_tensor(y.shape(), rng);
    Tensor xgrad = head.backward(coefs);

    auto loss = [&]() { return weighted_sum(head.forward(x, Mode::train), coefs); };
    const auto r = grad_check(loss, {{"x", &x, &xgrad},
                                     {"weight", &head.proj.weight, &head.proj.weight_grad},
                                     {"bias", &head.proj.bias, &head.proj.bias_grad}});
    return r.max_rel_error;
}

double check_md_head(std::uint64_t seed, bool large) {
    const int dim = large ? 12 : 6, m = large ? 20 : 10, classes = 3, k = 4;
    // resample until sub-detector scores are tie-free everywhere
    for (int attempt = 0;; ++attempt) {
        Rng rng(Rng::mix(Rng::mix(seed, 6), static_cast<std::uint64_t>(attempt)));
        MdHead head(dim, classes, k, rng);
        Tensor x = random_tensor({2, dim, m}, rng);

        head.zero_grad();
        Tensor y = head.forward(x, Mode::train);
        Tensor scores = head.proj.forward(x); // affine scores, (B, C*K, m)
        double gap = 1e300;
        for (int b = 0; b < 2; ++b) {
            for (int c = 0; c < classes; ++c) {
                for (int t = 0; t < m; ++t) {
                    double v[4];
                    for (int kk = 0; kk < k; ++kk) v[kk] = scores.at(b, c * k + kk, t);
                    gap = std::min(gap, min_gap(v, k, 1));
                }
            }
        }
        if (gap < 1e-3 && attempt < 64) continue;

        head.zero_grad();
        y = head.forward(x, Mode::train);
        Tensor coefs = random_tensor(y.shape(), rng);
        Tensor xgrad = head.backward(coefs);

        auto loss = [&]() { return weighted_sum(head.forward(x, Mode::train), coefs); };
        const auto r = grad_check(loss, {{"x", &x, &xgrad},
                                         {"weight", &head.proj.weight, &head.proj.weight_grad},
                                         {"bias", &head.proj.bias, &head.proj.bias_grad}});
        return r.max_rel_error;
    }
}

double check_aggregator(std::uint64_t seed, bool large) {
    Rng rng(Rng::mix(seed, 7));
    const int B = 2, C = 3, m = large ? 15 : 7;

    Tensor scores;
    for (int attempt = 0; attempt < 64; ++attempt) {
        scores = random_tensor({B, C, m}, rng, 0.0, 1.0);
        double gap = 1e300;
        for (int b = 0; b < B; ++b) {
            for (int c = 0; c < C; ++c) {
                gap = std::min(gap, min_gap(scores.data() + (static_cast<std::size_t>(b) * C + c) * m, m, 1));
            }
        }
        if (gap > 1e-3) break;
    }

    Tensor coefs = random_tensor({B, C}, rng);
    // analytic: the bag gradient lands on each class's argmax instance
    Tensor sgrad(scores.shape());
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            const double* row = scores.data() + (static_cast<std::size_t>(b) * C + c) * m;
            int best = 0;
            for (int j = 1; j < m; ++j) {
                if (row[j] > row[best]) best = j;
            }
            sgrad.at(b, c, best) = coefs.at(b, c);
        }
    }
    auto loss = [&]() {
        double s = 0.0;
        for (int b = 0; b < B; ++b) {
            for (int c = 0; c < C; ++c) {
                const double* row = scores.data() + (static_cast<std::size_t>(b) * C + c) * m;
                double mx = row[0];
                for (int j = 1; j < m; ++j) mx = std::max(mx, row[j]);
                s += coefs.at(b, c) * mx;
            }
        }
        return s;
    };
    const auto r = grad_check(loss, {{"scores", &scores, &sgrad}});
    return r.max_rel_error;
}

double check_weighted_bce(std::uint64_t seed, bool large) {
    Rng rng(Rng::mix(seed, 8));
    const int B = large ? 8 : 4, C = 5;
    Tensor scores = random_tensor({B, C}, rng, 0.05, 0.95);
    std::vector<int> labels(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) labels[static_cast<std::size_t>(b)] = rng.uniform_int(0, C - 1);
    const Tensor targets = one_hot(labels, C);
    const double alpha = static_cast<double>(C - 1);

    Tensor grad;
    weighted_bce(scores, targets, alpha, &grad);
    auto loss = [&]() { return weighted_bce(scores, targets, alpha, nullptr); };
    const auto r = grad_check(loss, {{"scores", &scores, &grad}});
    return r.max_rel_error;
}

double check_model(const ModelConfig& config, std::uint64_t seed, int coords) {
    Rng rng(Rng::mix(seed, 9));
    MilModel model(config);

    // probe away from ReLU kinks and pooling ties: positive batch-norm shifts
    // keep most activations strictly positive, making the model smooth in a
    // neighbourhood of the probe point
    {
        std::vector<NamedTensor> params, buffers;
        model.collect("", params, buffers);
        for (auto& p : params) {
            if (p.name.size() > 5 && p.name.rfind(".beta") == p.name.size() - 5) {
                for (int i = 0; i < p.value->size(); ++i) (*p.value)[i] = rng.uniform(0.5, 1.0);
            }
        }
    }
    Tensor x = random_tensor({2, 1, config.bands, config.frames}, rng);
    std::vector<int> labels = {rng.uniform_int(0, config.classes - 1),
                               rng.uniform_int(0, config.classes - 1)};
    const Tensor targets = one_hot(labels, config.classes);
    const double alpha = static_cast<double>(config.classes - 1);

    model.zero_grad();
    auto out = model.forward(x, Mode::train);
    Tensor grad_bag;
    weighted_bce(out.bag_scores, targets, alpha, &grad_bag);
    model.backward(grad_bag);
    const Tensor xgrad = model.last_input_gradient();

    std::vector<NamedTensor> params, buffers;
    model.collect("", params, buffers);
    std::vector<GradCheckTarget> targets_list;
    targets_list.push_back({"input", &x, &xgrad});
    for (auto& p : params) targets_list.push_back({p.name, p.value, p.grad});

    auto loss = [&]() {
        auto o = model.forward(x, Mode::train);
        return weighted_bce(o.bag_scores, targets, alpha, nullptr);
    };
    GradCheckOptions opt;
    opt.step = 1e-6; // composite net: smaller step keeps probes off ReLU kinks
    opt.max_coords_per_tensor = coords;
    opt.subsample_seed = seed;
    const auto r = grad_check(loss, targets_list, opt);
    return r.max_rel_error;
}

} // namespace

std::vector<SuiteEntry> layer_gradient_suite(std::uint64_t seed, bool large) {
    return {
        {"conv2d", check_conv2d(seed, large)},
        {"conv1d_dilated", check_conv1d_dilated(seed, large)},
        {"batchnorm", check_batchnorm(seed, large)},
        {"maxpool2d", check_maxpool(seed, large)},
        {"sd_head", check_sd_head(seed, large)},
        {"md_head", check_md_head(seed, large)},
        {"max_aggregator", check_aggregator(seed, large)},
        {"weighted_bce", check_weighted_bce(seed, large)},
    };
}

std::vector<SuiteEntry> model_gradient_suite(std::uint64_t seed, int coords_per_tensor) {
    ModelConfig reduced;
    reduced.classes = 4;
    reduced.block_channels = {4, 8, 16};
    reduced.instance_dim = 16;
    reduced.bands = 40;
    reduced.frames = 40;
    reduced.seed = seed;

    std::vector<SuiteEntry> out;
    ModelConfig sd = reduced;
    out.push_back({"model_sd", check_model(sd, seed, coords_per_tensor)});
    ModelConfig md = reduced;
    md.head = HeadKind::md;
    md.sub_detectors = 3;
    out.push_back({"model_md", check_model(md, seed, coords_per_tensor)});
    ModelConfig sd_mts = reduced;
    sd_mts.mts = true;
    sd_mts.frames = 80; // MTS needs at least 9 instances
    out.push_back({"model_sd_mts", check_model(sd_mts, seed, coords_per_tensor)});
    ModelConfig md_mts = md;
    md_mts.mts = true;
    md_mts.frames = 80;
    out.push_back({"model_md_mts", check_model(md_mts, seed, coords_per_tensor)});
    return out;
}

} // namespace milasc
