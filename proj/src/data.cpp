#include "milasc/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "milasc/errors.hpp"
#include "milasc/rng.hpp"

namespace milasc {

// ---------------------------------------------------------------------------
// DCASE meta
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == '\t') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

std::string basename_of(const std::string& path) {
    const std::size_t slash = path.find_last_of('/');
    return slash == std::string::npos ? path : path.substr(slash + 1);
}

} // namespace

MetaDataset load_dcase_meta(const std::string& meta_path, const std::string& audio_root,
                            const std::vector<std::string>* known_classes,
                            const std::string& device_filter) {
    std::ifstream in(meta_path);
    if (!in) throw ValidationError("meta: cannot open " + meta_path);

    MetaDataset meta;
    std::set<std::string> seen_paths;
    std::vector<std::string> duplicates;
    std::string line;
    int line_no = 0;
    bool first_content_line = true;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto cols = split_tabs(line);
        if (cols.size() < 2 || cols[0].empty() || cols[1].empty()) {
            throw ValidationError("meta: " + meta_path + " line " + std::to_string(line_no) +
                                  " is not <path>\\t<label>");
        }
        // header detection: a first line whose path column has no file extension
        if (first_content_line) {
            first_content_line = false;
            const std::string& p = cols[0];
            if (p.find('.') == std::string::npos &&
                (p == "filename" || p == "file" || p == "path" || cols[1] == "scene_label" ||
                 cols[1] == "label")) {
                continue;
            }
        }
        if (!device_filter.empty() &&
            basename_of(cols[0]).find(device_filter) == std::string::npos) {
            continue;
        }
        if (!seen_paths.insert(cols[0]).second) duplicates.push_back(cols[0]);
        meta.entries.push_back({cols[0], cols[1], -1});
    }
    if (!duplicates.empty()) {
        std::string list;
        for (const auto& d : duplicates) list += " " + d;
        throw ValidationError("meta: duplicate path entries:" + list);
    }
    if (meta.entries.empty()) {
        throw ValidationError("meta: " + meta_path + " contains no usable entries");
    }

    if (known_classes != nullptr) {
        meta.class_names = *known_classes;
    } else {
        std::set<std::string> labels;
        for (const auto& e : meta.entries) labels.insert(e.label);
        meta.class_names.assign(labels.begin(), labels.end()); // sorted by set order
    }
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < meta.class_names.size(); ++i) {
        index[meta.class_names[i]] = static_cast<int>(i);
    }
    for (auto& e : meta.entries) {
        auto it = index.find(e.label);
        if (it == index.end()) {
            throw ValidationError("meta: label '" + e.label + "' not among the known classes");
        }
        e.label_index = it->second;
    }

    if (!audio_root.empty()) {
        for (const auto& e : meta.entries) {
            if (!std::filesystem::exists(std::filesystem::path(audio_root) / e.path)) {
                ++meta.missing_files;
            }
        }
    }
    return meta;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
    if (classes < 2) throw ValidationError("synth: need at least 2 classes");
    if (events_per_class < 1 || events_per_class > 2) {
        throw ValidationError("synth: events_per_class must be 1 or 2");
    }
    if (events_per_clip_min < 1) {
        throw ValidationError("synth: every clip must contain at least one distinct event "
                              "(events_per_clip_min >= 1)");
    }
    if (events_per_clip_max < events_per_clip_min || common_per_clip_max < common_per_clip_min ||
        event_duration_max < event_duration_min) {
        throw ValidationError("synth: range fields must satisfy min <= max");
    }
    if (common_per_clip_min < 0) throw ValidationError("synth: common event count cannot be negative");
    if (common_per_clip_min > 0 && common_pool < 1) {
        throw ValidationError("synth: common events requested but the pool is empty");
    }
    if (event_duration_min < 1) throw ValidationError("synth: events need at least one frame");
    if (event_duration_max > frames) {
        throw ValidationError("synth: event duration " + std::to_string(event_duration_max) +
                              " exceeds the clip length " + std::to_string(frames));
    }
    if (clips_per_class < 1) throw ValidationError("synth: need at least one clip per class");
    const int templates = classes * events_per_class + common_pool;
    if (templates > bands) {
        throw ValidationError("synth: " + std::to_string(templates) +
                              " event templates do not fit " + std::to_string(bands) +
                              " disjoint frequency bands");
    }
    if (instance_count(frames) < 1) {
        throw ValidationError("synth: " + std::to_string(frames) +
                              " frames produce no instances");
    }
    if (!overlap_allowed) {
        const int worst = (events_per_clip_max + common_per_clip_max) * event_duration_max;
        if (worst > frames) {
            throw ValidationError("synth: non-overlapping events cannot fit the clip");
        }
    }
}

namespace {

struct EventTemplate {
    int band_lo = 0; // first frequency row
    int band_hi = 0; // one past last
};

struct PlannedEvent {
    EventTemplate tpl;
    int start = 0;
    int duration = 0;
    bool distinct = false;
};

// Greedy non-overlapping slot pick; the spec has already bounded total usage.
int pick_start(Rng& rng, int frames, int duration, bool overlap_allowed,
               const std::vector<PlannedEvent>& placed) {
    const int max_start = frames - duration;
    for (int attempt = 0; attempt < 256; ++attempt) {
        const int s = rng.uniform_int(0, max_start);
        if (overlap_allowed) return s;
        bool clash = false;
        for (const auto& e : placed) {
            if (s < e.start + e.duration && e.start < s + duration) {
                clash = true;
                break;
            }
        }
        if (!clash) return s;
    }
    // dense clip; fall back to overlap rather than looping forever
    return rng.uniform_int(0, max_start);
}

} // namespace

SyntheticResult generate_synthetic(const SyntheticSpec& spec, const std::string& fold,
                                   std::uint64_t fold_salt) {
    spec.validate();

    const int m = instance_count(spec.frames);
    const int template_count = spec.classes * spec.events_per_class + spec.common_pool;
    const int rows_per_template = spec.bands / template_count;

    // distinct templates first (class-major), then the common pool
    std::vector<EventTemplate> templates(static_cast<std::size_t>(template_count));
    for (int t = 0; t < template_count; ++t) {
        templates[static_cast<std::size_t>(t)] = {t * rows_per_template,
                                                  t * rows_per_template + rows_per_template};
    }

    SyntheticResult out;
    out.data.fold = fold;
    for (int c = 0; c < spec.classes; ++c) out.data.class_names.push_back("class" + std::to_string(c));
    out.truth.classes = spec.classes;
    out.truth.instances = m;

    int global_index = 0;
    for (int c = 0; c < spec.classes; ++c) {
        for (int i = 0; i < spec.clips_per_class; ++i, ++global_index) {
            Rng rng(Rng::mix(Rng::mix(spec.seed, fold_salt), static_cast<std::uint64_t>(global_index)));

            Tensor features({spec.bands, spec.frames});
            for (int v = 0; v < features.size(); ++v) features[v] = spec.noise_level * rng.normal();

            std::vector<PlannedEvent> events;
            const int n_distinct = rng.uniform_int(spec.events_per_clip_min, spec.events_per_clip_max);
            for (int e = 0; e < n_distinct; ++e) {
                PlannedEvent ev;
                const int variant = rng.uniform_int(0, spec.events_per_class - 1);
                ev.tpl = templates[static_cast<std::size_t>(c * spec.events_per_class + variant)];
                ev.duration = rng.uniform_int(spec.event_duration_min, spec.event_duration_max);
                ev.start = pick_start(rng, spec.frames, ev.duration, spec.overlap_allowed, events);
                ev.distinct = true;
                events.push_back(ev);
            }
            const int n_common =
                spec.common_per_clip_min > spec.common_per_clip_max
                    ? 0
                    : rng.uniform_int(spec.common_per_clip_min, spec.common_per_clip_max);
            for (int e = 0; e < n_common; ++e) {
                PlannedEvent ev;
                const int which = rng.uniform_int(0, spec.common_pool - 1);
                ev.tpl = templates[static_cast<std::size_t>(spec.classes * spec.events_per_class + which)];
                ev.duration = rng.uniform_int(spec.event_duration_min, spec.event_duration_max);
                ev.start = pick_start(rng, spec.frames, ev.duration, spec.overlap_allowed, events);
                ev.distinct = false;
                events.push_back(ev);
            }

            for (const auto& ev : events) {
                for (int row = ev.tpl.band_lo; row < ev.tpl.band_hi; ++row) {
                    double* r = features.data() + static_cast<std::size_t>(row) * spec.frames;
                    for (int t = ev.start; t < ev.start + ev.duration; ++t) {
                        r[t] += spec.event_amplitude + 0.1 * rng.normal();
                    }
                }
            }

            std::vector<std::uint8_t> mask(static_cast<std::size_t>(spec.classes) * m, 0);
            for (const auto& ev : events) {
                if (!ev.distinct) continue;
                for (int j = 0; j < m; ++j) {
                    const int w_lo = kInstanceStride * j;
                    const int w_hi = w_lo + kInstanceStride;
                    const int ov = std::min(ev.start + ev.duration, w_hi) - std::max(ev.start, w_lo);
                    const bool covers = ev.start <= w_lo && ev.start + ev.duration >= w_hi;
                    if (covers || 2 * std::max(ov, 0) >= ev.duration) {
                        mask[static_cast<std::size_t>(c) * m + j] = 1;
                    }
                }
            }

            std::ostringstream id;
            id << fold << "-c" << c << "-" << i;
            out.data.items.push_back({id.str(), std::move(features), c});
            out.truth.clip_ids.push_back(id.str());
            out.truth.positive.push_back(std::move(mask));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Localization
// ---------------------------------------------------------------------------

LocalizationScore localization_score(const std::vector<Prediction>& predictions,
                                     const std::vector<int>& true_labels,
                                     const InstanceGroundTruth& truth) {
    if (predictions.size() != truth.positive.size() || predictions.size() != true_labels.size()) {
        throw ValidationError("localization: prediction, label and truth counts differ");
    }
    const int classes = truth.classes;
    LocalizationScore score;
    score.per_class_precision.assign(static_cast<std::size_t>(classes), 0.0);
    score.per_class_counted.assign(static_cast<std::size_t>(classes), 0);
    std::vector<int> hits(static_cast<std::size_t>(classes), 0);
    double positive_fraction_sum = 0.0;

    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const Prediction& p = predictions[i];
        const int label = true_labels[i];
        if (p.instance_scores.dim(1) != truth.instances) {
            throw ValidationError("localization: prediction has " +
                                  std::to_string(p.instance_scores.dim(1)) +
                                  " instances, ground truth has " +
                                  std::to_string(truth.instances));
        }
        if (classify(p) != label) continue; // misclassified clips are excluded

        const int j = p.argmax_instance[static_cast<std::size_t>(label)];
        ++score.per_class_counted[static_cast<std::size_t>(label)];
        ++score.pooled_counted;
        if (truth.is_positive(i, label, j)) ++hits[static_cast<std::size_t>(label)];

        int positives = 0;
        for (int q = 0; q < truth.instances; ++q) {
            if (truth.is_positive(i, label, q)) ++positives;
        }
        positive_fraction_sum += static_cast<double>(positives) / truth.instances;
    }

    int pooled_hits = 0;
    for (int c = 0; c < classes; ++c) {
        const int n = score.per_class_counted[static_cast<std::size_t>(c)];
        score.per_class_precision[static_cast<std::size_t>(c)] =
            n > 0 ? static_cast<double>(hits[static_cast<std::size_t>(c)]) / n : 0.0;
        pooled_hits += hits[static_cast<std::size_t>(c)];
    }
    score.pooled_precision =
        score.pooled_counted > 0 ? static_cast<double>(pooled_hits) / score.pooled_counted : 0.0;
    score.random_baseline =
        score.pooled_counted > 0 ? positive_fraction_sum / score.pooled_counted : 0.0;
    return score;
}

} // namespace milasc
