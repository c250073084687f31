#pragma once

#include <string>
#include <vector>

#include "milasc/data.hpp"

namespace milasc {

/// Runs one CLI invocation (args exclude the program name). Exit codes:
/// 0 success, 1 validation/config error, 2 numerical failure.
int run_cli(const std::vector<std::string>& args);

/// Loads a featurized fold directory (features.milt + index.tsv). When
/// `known_classes` is given the label mapping is pinned and unseen labels
/// are rejected.
SceneDataset load_feature_dir(const std::string& dir,
                              const std::vector<std::string>* known_classes = nullptr);

/// Loads groundtruth.csv (clip_id,class,instance_index) aligned to `data`.
InstanceGroundTruth load_ground_truth(const std::string& dir, const SceneDataset& data);

/// Writes a SceneDataset (+ optional ground truth) as a fold directory.
void save_feature_dir(const std::string& dir, const SceneDataset& data,
                      const InstanceGroundTruth* truth, const std::string& meta);

} // namespace milasc
