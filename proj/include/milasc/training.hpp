#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "milasc/data.hpp"
#include "milasc/layers.hpp"
#include "milasc/model.hpp"
#include "milasc/tensor.hpp"

namespace milasc {

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

enum class LossType { weighted_bce, categorical_ce };

struct LossConfig {
    /// Positive-term weight; <= 0 selects the default classes - 1.
    double alpha = 0.0;
    LossType type = LossType::weighted_bce;

    double resolved_alpha(int classes) const {
        return alpha > 0.0 ? alpha : static_cast<double>(classes - 1);
    }
};

inline constexpr double kScoreClamp = 1e-12;

/// Per-sample sum over classes of -(alpha*Y*ln(Yhat) + (1-Y)*ln(1-Yhat)),
/// averaged over the batch. Scores are clamped to [1e-12, 1 - 1e-12] before
/// the logs. Labels must be one-hot rows. When `grad` is non-null it receives
/// dLoss/dScores.
double weighted_bce(const Tensor& bag_scores, const Tensor& labels, double alpha,
                    Tensor* grad = nullptr);

/// -ln(Yhat_true), clamped, mean over batch. Alternative objective for the
/// MD head whose bag scores derive from a softmax.
double categorical_ce(const Tensor& bag_scores, const Tensor& labels, Tensor* grad = nullptr);

/// One-hot encode labels into (batch, classes).
Tensor one_hot(const std::vector<int>& labels, int classes);

// ---------------------------------------------------------------------------
// Optimizer / scheduler
// ---------------------------------------------------------------------------

class Adam {
public:
    Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    /// Bias-corrected moment update on every parameter:
    /// p -= lr * mhat / (sqrt(vhat) + eps). Rejects non-finite gradients.
    void step(const std::vector<NamedTensor>& params);

    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }
    int step_count() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<Tensor> m_, v_; // lazily sized to the first step's params
};

/// Halve-on-plateau: when validation accuracy fails to improve strictly for
/// `patience` consecutive epochs, multiply the rate by `factor` and restart
/// the count.
class PlateauScheduler {
public:
    PlateauScheduler(double factor = 0.5, int patience = 3);

    double step(double val_accuracy, double current_lr);

    double best() const { return best_; }
    int epochs_since_improvement() const { return since_; }
    void prime(double best) { best_ = best; } // preset the best (for traces/tests)

private:
    double factor_;
    int patience_;
    double best_;
    int since_ = 0;
};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
    int classes = 0;
    std::vector<long long> counts; // row = true class, column = predicted

    explicit ConfusionMatrix(int classes_ = 0)
        : classes(classes_), counts(static_cast<std::size_t>(classes_) * classes_, 0) {}

    void add(int truth, int predicted) {
        ++counts[static_cast<std::size_t>(truth) * classes + predicted];
    }
    long long at(int truth, int predicted) const {
        return counts[static_cast<std::size_t>(truth) * classes + predicted];
    }
    long long total() const;
    long long row_sum(int truth) const;
    double accuracy() const; // trace / total
    double recall(int cls) const;

    /// CSV with a header row/column of class names and a trailing recall column.
    std::string to_csv(const std::vector<std::string>& class_names) const;
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainOptions {
    int epochs = 50;
    int batch = 256;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double sched_factor = 0.5;
    int sched_patience = 3;
    LossConfig loss;
    std::uint64_t seed = 1;
    bool quiet = true; // progress lines to stderr when false
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
    double learning_rate = 0.0; // rate in effect while training this epoch
};

struct TrainResult {
    std::vector<EpochRecord> log;
    int best_epoch = 0;
    double best_accuracy = 0.0;
    std::vector<std::pair<std::string, Tensor>> best_state;
};

/// Seeded end-to-end training: shuffling and parameter init both derive from
/// options.seed (the model is rebuilt with that seed), so identical calls
/// produce bit-identical logs and states. The final partial batch is kept.
/// A batch larger than the dataset is clamped with a warning.
TrainResult train(const ModelConfig& config, const SceneDataset& train_set,
                  const SceneDataset& val_set, const TrainOptions& options);

/// Tab-separated log: epoch, train-loss, val-accuracy, learning-rate.
std::string log_to_tsv(const std::vector<EpochRecord>& log);

struct EvalResult {
    double accuracy = 0.0;
    ConfusionMatrix confusion;
    std::vector<Prediction> predictions; // per clip, dataset order
    std::vector<int> true_labels;
};

/// Eval-mode forward over every clip; accuracy and confusion counts, with
/// per-clip predictions retained for localization and inspection.
EvalResult evaluate(MilModel& model, const SceneDataset& dataset);

/// Stack dataset items [first, first+count) into a (count, 1, bands, frames) batch.
Tensor make_batch(const SceneDataset& dataset, const std::vector<int>& order, int first, int count);

} // namespace milasc
