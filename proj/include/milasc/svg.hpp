#pragma once

#include <string>
#include <vector>

#include "milasc/tensor.hpp"
#include "milasc/training.hpp"

namespace milasc {

/// Confusion heat map, rows = true class, columns = predicted, with the
/// per-class recall printed along the right margin.
std::string confusion_svg(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);

/// Simple line plot with point markers; xs and ys must have equal length.
std::string line_plot_svg(const std::vector<double>& xs, const std::vector<double>& ys,
                          const std::string& x_label, const std::string& y_label,
                          const std::string& title);

/// Input spectrogram stacked over the per-class instance-score matrix, with
/// the argmax instance of each class marked.
std::string inspect_svg(const Tensor& features, const Prediction& prediction,
                        const std::vector<std::string>& class_names);

} // namespace milasc
