#include "milasc/training.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

#include "milasc/errors.hpp"
#include "milasc/rng.hpp"

namespace milasc {

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

namespace {

void check_one_hot(const Tensor& labels) {
    const int B = labels.dim(0), C = labels.dim(1);
    for (int b = 0; b < B; ++b) {
        int ones = 0;
        for (int c = 0; c < C; ++c) {
            const double v = labels.at(b, c);
            if (v == 1.0) {
                ++ones;
            } else if (v != 0.0) {
                throw ValidationError("loss: labels must be one-hot (row " + std::to_string(b) +
                                      " has value " + std::to_string(v) + ")");
            }
        }
        if (ones != 1) {
            throw ValidationError("loss: labels must be one-hot (row " + std::to_string(b) +
                                  " has " + std::to_string(ones) + " ones)");
        }
    }
}

} // namespace

Tensor one_hot(const std::vector<int>& labels, int classes) {
    Tensor t({static_cast<int>(labels.size()), classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        t.at(static_cast<int>(i), labels[i]) = 1.0;
    }
    return t;
}

double weighted_bce(const Tensor& bag_scores, const Tensor& labels, double alpha, Tensor* grad) {
    if (bag_scores.rank() != 2 || !bag_scores.same_shape(labels)) {
        throw ValidationError("loss: scores " + bag_scores.shape_str() + " and labels " +
                              labels.shape_str() + " must both be (batch, classes)");
    }
    if (alpha <= 0.0) throw ValidationError("loss: positive weight must be > 0");
    check_one_hot(labels);

    const int B = bag_scores.dim(0), C = bag_scores.dim(1);
    const double lo = kScoreClamp, hi = 1.0 - kScoreClamp;
    if (grad != nullptr) *grad = Tensor({B, C});

    double total = 0.0;
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            const double raw = bag_scores.at(b, c);
            const double y = std::clamp(raw, lo, hi);
            const double target = labels.at(b, c);
            total += -(alpha * target * std::log(y) + (1.0 - target) * std::log(1.0 - y));
            if (grad != nullptr && raw > lo && raw < hi) {
                grad->at(b, c) = -(alpha * target / y - (1.0 - target) / (1.0 - y)) / B;
            } // clamped scores sit on a flat piece: zero gradient
        }
    }
    return total / B;
}

double categorical_ce(const Tensor& bag_scores, const Tensor& labels, Tensor* grad) {
    if (bag_scores.rank() != 2 || !bag_scores.same_shape(labels)) {
        throw ValidationError("loss: scores " + bag_scores.shape_str() + " and labels " +
                              labels.shape_str() + " must both be (batch, classes)");
    }
    check_one_hot(labels);
    const int B = bag_scores.dim(0), C = bag_scores.dim(1);
    const double lo = kScoreClamp, hi = 1.0 - kScoreClamp;
    if (grad != nullptr) *grad = Tensor({B, C});

    double total = 0.0;
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            if (labels.at(b, c) != 1.0) continue;
            const double raw = bag_scores.at(b, c);
            const double y = std::clamp(raw, lo, hi);
            total += -std::log(y);
            if (grad != nullptr && raw > lo && raw < hi) grad->at(b, c) = -1.0 / (y * B);
        }
    }
    return total / B;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<NamedTensor>& params) {
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.value->shape());
            v_.emplace_back(p.value->shape());
        }
    }
    if (m_.size() != params.size()) {
        throw ValidationError("adam: parameter list changed between steps");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i].value;
        const Tensor& g = *params[i].grad;
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (int j = 0; j < p.size(); ++j) {
            const double gj = g[j];
            if (!std::isfinite(gj)) {
                throw NumericalError("adam: non-finite gradient in " + params[i].name);
            }
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

// ---------------------------------------------------------------------------
// Scheduler
// ---------------------------------------------------------------------------

PlateauScheduler::PlateauScheduler(double factor, int patience)
    : factor_(factor), patience_(patience), best_(-std::numeric_limits<double>::infinity()) {}

double PlateauScheduler::step(double val_accuracy, double current_lr) {
    if (val_accuracy > best_) {
        best_ = val_accuracy;
        since_ = 0;
        return current_lr;
    }
    if (++since_ >= patience_) {
        since_ = 0;
        return current_lr * factor_;
    }
    return current_lr;
}

// ---------------------------------------------------------------------------
// Confusion matrix
// ---------------------------------------------------------------------------

long long ConfusionMatrix::total() const {
    long long t = 0;
    for (long long v : counts) t += v;
    return t;
}

long long ConfusionMatrix::row_sum(int truth) const {
    long long t = 0;
    for (int c = 0; c < classes; ++c) t += at(truth, c);
    return t;
}

double ConfusionMatrix::accuracy() const {
    const long long n = total();
    if (n == 0) return 0.0;
    long long trace = 0;
    for (int c = 0; c < classes; ++c) trace += at(c, c);
    return static_cast<double>(trace) / static_cast<double>(n);
}

double ConfusionMatrix::recall(int cls) const {
    const long long n = row_sum(cls);
    return n == 0 ? 0.0 : static_cast<double>(at(cls, cls)) / static_cast<double>(n);
}

std::string ConfusionMatrix::to_csv(const std::vector<std::string>& class_names) const {
    std::ostringstream os;
    os << "true\\pred";
    for (int c = 0; c < classes; ++c) os << "," << class_names[static_cast<std::size_t>(c)];
    os << ",recall\n";
    for (int r = 0; r < classes; ++r) {
        os << class_names[static_cast<std::size_t>(r)];
        for (int c = 0; c < classes; ++c) os << "," << at(r, c);
        os << "," << recall(r) << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

Tensor make_batch(const SceneDataset& dataset, const std::vector<int>& order, int first, int count) {
    const Tensor& probe = dataset.items[static_cast<std::size_t>(order[static_cast<std::size_t>(first)])].features;
    const int bands = probe.dim(0), frames = probe.dim(1);
    Tensor batch({count, 1, bands, frames});
    for (int i = 0; i < count; ++i) {
        const auto& item = dataset.items[static_cast<std::size_t>(order[static_cast<std::size_t>(first + i)])];
        require_shape(item.features, {bands, frames}, "batch: clip " + item.id);
        std::copy_n(item.features.data(), static_cast<std::size_t>(bands) * frames,
                    batch.data() + static_cast<std::size_t>(i) * bands * frames);
    }
    return batch;
}

EvalResult evaluate(MilModel& model, const SceneDataset& dataset) {
    if (dataset.items.empty()) throw ValidationError("evaluate: empty dataset");
    EvalResult result;
    result.confusion = ConfusionMatrix(model.config().classes);

    const int eval_batch = 32;
    const int n = static_cast<int>(dataset.items.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    for (int first = 0; first < n; first += eval_batch) {
        const int count = std::min(eval_batch, n - first);
        const Tensor batch = make_batch(dataset, order, first, count);
        const auto out = model.forward(batch, Mode::eval);
        const auto preds = aggregate_batch(out.instance_scores);
        for (int i = 0; i < count; ++i) {
            const int truth = dataset.items[static_cast<std::size_t>(first + i)].label;
            result.confusion.add(truth, classify(preds[static_cast<std::size_t>(i)]));
            result.predictions.push_back(preds[static_cast<std::size_t>(i)]);
            result.true_labels.push_back(truth);
        }
    }
    result.accuracy = result.confusion.accuracy();
    return result;
}

TrainResult train(const ModelConfig& config, const SceneDataset& train_set,
                  const SceneDataset& val_set, const TrainOptions& options) {
    if (train_set.items.empty() || val_set.items.empty()) {
        throw ValidationError("train: empty dataset");
    }
    const int n = static_cast<int>(train_set.items.size());
    int batch = options.batch;
    if (batch < 1) throw ValidationError("train: batch must be positive");
    if (batch > n) {
        std::cerr << "train: batch " << batch << " larger than dataset (" << n
                  << " clips); clamping\n";
        batch = n;
    }

    ModelConfig seeded = config;
    seeded.seed = options.seed;
    MilModel model(seeded);
    const double alpha = options.loss.resolved_alpha(seeded.classes);

    std::vector<NamedTensor> params, buffers;
    model.collect("", params, buffers);
    Adam adam(options.lr, options.beta1, options.beta2, options.eps);
    PlateauScheduler scheduler(options.sched_factor, options.sched_patience);

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    TrainResult result;
    double lr = options.lr;
    for (int epoch = 1; epoch <= options.epochs; ++epoch) {
        Rng shuffle_rng(Rng::mix(options.seed, 0xe19c0de5ull + static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        adam.set_learning_rate(lr);
        double loss_sum = 0.0;
        for (int first = 0; first < n; first += batch) {
            const int count = std::min(batch, n - first);
            const Tensor x = make_batch(train_set, order, first, count);
            std::vector<int> labels(static_cast<std::size_t>(count));
            for (int i = 0; i < count; ++i) {
                labels[static_cast<std::size_t>(i)] =
                    train_set.items[static_cast<std::size_t>(order[static_cast<std::size_t>(first + i)])].label;
            }
            const Tensor targets = one_hot(labels, seeded.classes);

            model.zero_grad();
            const auto out = model.forward(x, Mode::train);
            Tensor grad;
            double loss = 0.0;
            if (options.loss.type == LossType::weighted_bce) {
                loss = weighted_bce(out.bag_scores, targets, alpha, &grad);
            } else {
                loss = categorical_ce(out.bag_scores, targets, &grad);
            }
            if (!std::isfinite(loss)) {
                throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch));
            }
            model.backward(grad);
            adam.step(params); // rejects non-finite gradients
            loss_sum += loss * count;
        }

        const EvalResult val = evaluate(model, val_set);
        result.log.push_back({epoch, loss_sum / n, val.accuracy, lr});
        if (!options.quiet) {
            std::cerr << "epoch " << epoch << " loss " << loss_sum / n << " val " << val.accuracy
                      << " lr " << lr << "\n";
        }
        if (val.accuracy > result.best_accuracy || result.best_epoch == 0) {
            result.best_accuracy = val.accuracy;
            result.best_epoch = epoch;
            result.best_state = model.state_dict();
        }
        lr = scheduler.step(val.accuracy, lr);
    }
    return result;
}

std::string log_to_tsv(const std::vector<EpochRecord>& log) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch\ttrain_loss\tval_accuracy\tlearning_rate\n";
    for (const auto& r : log) {
        os << r.epoch << "\t" << r.train_loss << "\t" << r.val_accuracy << "\t" << r.learning_rate
           << "\n";
    }
    return os.str();
}

} // namespace milasc
