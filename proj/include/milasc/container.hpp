#pragma once

#include <string>
#include <vector>

#include "milasc/model.hpp"
#include "milasc/tensor.hpp"

namespace milasc {

/// Named-array file: magic "MILASC01", a free-form text meta section (the
/// resolved run config for checkpoints, front-end parameters for feature
/// files), a text manifest of (name, shape, byte offset) per array, then one
/// blob of raw little-endian 64-bit floats. Round trips are bit-exact.
class ArrayContainer {
public:
    std::string meta;

    void add(const std::string& name, Tensor tensor);
    const Tensor* find(const std::string& name) const;
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::size_t count() const { return entries_.size(); }

    void save(const std::string& path) const;
    static ArrayContainer load(const std::string& path);

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

inline constexpr char kContainerMagic[] = "MILASC01";

/// Checkpoint = container whose meta is the resolved run config and whose
/// arrays are the model's parameters and running statistics in collection
/// order.
void save_checkpoint(const std::string& path, MilModel& model, const std::string& resolved_config);

struct LoadedCheckpoint {
    ModelConfig config;
    std::string resolved_config;
    std::vector<std::pair<std::string, Tensor>> state;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

/// Rebuilds the model and restores its state.
MilModel restore_model(const LoadedCheckpoint& checkpoint);

} // namespace milasc
