#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "milasc/model.hpp"
#include "milasc/tensor.hpp"

namespace milasc {

/// Materialized dataset: one (bands, frames) feature map per clip.
struct SceneDataset {
    struct Item {
        std::string id;
        Tensor features; // (bands, frames)
        int label = 0;
    };
    std::vector<Item> items;
    std::vector<std::string> class_names;
    std::string fold;

    int classes() const { return static_cast<int>(class_names.size()); }
};

/// One line of a DCASE-style meta file before features exist.
struct MetaDataset {
    struct Entry {
        std::string path;  // relative to the audio root
        std::string label;
        int label_index = 0;
    };
    std::vector<Entry> entries;
    std::vector<std::string> class_names;
    std::string fold;
    int missing_files = 0; // referenced audio files absent under the root
};

/// Parses a tab-separated meta file (path, scene label, extra columns
/// ignored; an optional header line is auto-detected). Labels map to
/// sorted-unique class indices unless `known_classes` pins the mapping, in
/// which case an unseen label is an error. Duplicate paths are an error.
/// When `device_filter` is non-empty, only paths whose filename contains it
/// are kept (e.g. "-a.wav" for device A).
MetaDataset load_dcase_meta(const std::string& meta_path, const std::string& audio_root,
                            const std::vector<std::string>* known_classes = nullptr,
                            const std::string& device_filter = "");

// ---------------------------------------------------------------------------
// Synthetic scenes with exact instance-level ground truth
// ---------------------------------------------------------------------------

/// Recipe for feature-space synthetic scenes. Every clip carries background
/// noise, a few "common" events drawn from a pool shared by all classes, and
/// at least one event distinct to its class; distinct templates occupy
/// disjoint frequency bands, so no clip of class l can contain the distinct
/// event of any other class.
struct SyntheticSpec {
    int classes = 4;
    int events_per_class = 1;       // distinct templates per class (1 or 2)
    int bands = 40;
    int frames = 100;
    int events_per_clip_min = 1;    // distinct events planted per clip
    int events_per_clip_max = 2;
    // durations span 2-3 full instance windows (stride 8), so the strict
    // center-window ground-truth rule marks the instances a detector peaks on
    int event_duration_min = 16;    // frames
    int event_duration_max = 28;
    int common_pool = 2;            // shared templates
    int common_per_clip_min = 1;
    int common_per_clip_max = 2;
    double noise_level = 0.25;
    double event_amplitude = 3.0;
    bool overlap_allowed = true;
    int clips_per_class = 50;
    std::uint64_t seed = 7;

    void validate() const;
};

/// Which instances of which class overlap a planted distinct event, one
/// (classes x instances) binary mask per clip, aligned with the dataset
/// items. An instance j covers input frames [8j, 8j+8); it is marked when a
/// distinct event of the clip's class overlaps that window by at least half
/// the event duration, or covers the window entirely.
struct InstanceGroundTruth {
    int classes = 0;
    int instances = 0;
    std::vector<std::string> clip_ids;
    std::vector<std::vector<std::uint8_t>> positive; // per clip, classes*instances

    bool is_positive(std::size_t clip, int cls, int instance) const {
        return positive[clip][static_cast<std::size_t>(cls) * instances + instance] != 0;
    }
};

struct SyntheticResult {
    SceneDataset data;
    InstanceGroundTruth truth;
};

/// Deterministic in (spec, fold_salt): each clip derives its own stream from
/// the seed and its global index.
SyntheticResult generate_synthetic(const SyntheticSpec& spec, const std::string& fold,
                                   std::uint64_t fold_salt = 0);

// ---------------------------------------------------------------------------
// Localization oracle
// ---------------------------------------------------------------------------

/// For each correctly classified clip, was the argmax instance of the true
/// class a ground-truth positive? Misclassified clips are excluded from the
/// denominator. `random_baseline` is the analytic hit rate of a uniformly
/// random argmax over the counted clips.
struct LocalizationScore {
    std::vector<double> per_class_precision;
    std::vector<int> per_class_counted;
    double pooled_precision = 0.0;
    int pooled_counted = 0;
    double random_baseline = 0.0;
};

LocalizationScore localization_score(const std::vector<Prediction>& predictions,
                                     const std::vector<int>& true_labels,
                                     const InstanceGroundTruth& truth);

} // namespace milasc
