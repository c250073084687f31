#pragma once

#include <map>
#include <string>

#include "milasc/data.hpp"
#include "milasc/model.hpp"
#include "milasc/training.hpp"

namespace milasc {

/// Flat key=value text (UTF-8, '#' comments, blank lines ignored).
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::map<std::string, std::string> parse_key_value_file(const std::string& path);

/// Everything a training run needs. Unknown keys are rejected; every run
/// writes the fully resolved form next to its outputs.
struct RunConfig {
    ModelConfig model;
    TrainOptions train;
    std::string data_train;
    std::string data_val;
    std::string out_dir;

    static RunConfig defaults();
    static RunConfig from_text(const std::string& text);
    static RunConfig from_file(const std::string& path);

    /// Applies key=value overrides (same schema as the file).
    void apply(const std::map<std::string, std::string>& kv);

    std::string resolved_text() const;
};

/// Parses just the model out of a resolved config (for checkpoint loading).
ModelConfig model_config_from_text(const std::string& text);

/// Synthetic dataset recipe file: synth.* keys plus per-fold clip counts.
struct SynthConfig {
    SyntheticSpec spec;
    int val_clips_per_class = 15;

    static SynthConfig defaults();
    static SynthConfig from_file(const std::string& path);
    void apply(const std::map<std::string, std::string>& kv);
    std::string resolved_text() const;
};

} // namespace milasc
