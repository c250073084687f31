#include "milasc/svg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace milasc {

namespace {

// white -> deep blue ramp
std::string heat_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const int r = static_cast<int>(std::lround(255.0 - 205.0 * t));
    const int g = static_cast<int>(std::lround(255.0 - 175.0 * t));
    const int b = 255;
    std::ostringstream os;
    os << "rgb(" << r << "," << g << "," << b << ")";
    return os.str();
}

std::string fmt(double v, int digits = 3) {
    std::ostringstream os;
    os.precision(digits);
    os << std::fixed << v;
    return os.str();
}

} // namespace

std::string confusion_svg(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
    const int n = cm.classes;
    const int cell = 42;
    const int left = 140, top = 50, right = 90, bottom = 120;
    const int width = left + n * cell + right;
    const int height = top + n * cell + bottom;

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">Confusion matrix (rows: true, "
          "columns: predicted)</text>\n";

    for (int r = 0; r < n; ++r) {
        const long long rs = cm.row_sum(r);
        for (int c = 0; c < n; ++c) {
            const double frac = rs > 0 ? static_cast<double>(cm.at(r, c)) / static_cast<double>(rs) : 0.0;
            const int x = left + c * cell, y = top + r * cell;
            os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\""
               << cell << "\" fill=\"" << heat_color(frac) << "\" stroke=\"#ccc\"/>\n";
            os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
               << "\" text-anchor=\"middle\">" << cm.at(r, c) << "</text>\n";
        }
        // row label and recall margin
        os << "<text x=\"" << left - 6 << "\" y=\"" << top + r * cell + cell / 2 + 4
           << "\" text-anchor=\"end\">" << class_names[static_cast<std::size_t>(r)] << "</text>\n";
        os << "<text x=\"" << left + n * cell + 8 << "\" y=\"" << top + r * cell + cell / 2 + 4
           << "\">" << fmt(cm.recall(r)) << "</text>\n";
    }
    os << "<text x=\"" << left + n * cell + 8 << "\" y=\"" << top - 8 << "\">recall</text>\n";
    for (int c = 0; c < n; ++c) {
        const int x = left + c * cell + cell / 2;
        const int y = top + n * cell + 12;
        os << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"start\" transform=\"rotate(45 "
           << x << " " << y << ")\">" << class_names[static_cast<std::size_t>(c)] << "</text>\n";
    }
    os << "<text x=\"" << left << "\" y=\"" << height - 12 << "\">accuracy " << fmt(cm.accuracy())
       << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

std::string line_plot_svg(const std::vector<double>& xs, const std::vector<double>& ys,
                          const std::string& x_label, const std::string& y_label,
                          const std::string& title) {
    const int width = 520, height = 340;
    const int left = 70, top = 40, right = 20, bottom = 60;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;

    double x_lo = xs.empty() ? 0.0 : *std::min_element(xs.begin(), xs.end());
    double x_hi = xs.empty() ? 1.0 : *std::max_element(xs.begin(), xs.end());
    double y_lo = ys.empty() ? 0.0 : *std::min_element(ys.begin(), ys.end());
    double y_hi = ys.empty() ? 1.0 : *std::max_element(ys.begin(), ys.end());
    if (x_hi - x_lo < 1e-12) x_hi = x_lo + 1.0;
    if (y_hi - y_lo < 1e-12) y_hi = y_lo + 1.0;

    auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * plot_w; };
    auto py = [&](double y) { return top + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<text x=\"" << left << "\" y=\"22\" font-size=\"14\">" << title << "</text>\n";
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\""
       << plot_h << "\" fill=\"none\" stroke=\"#444\"/>\n";

    os << "<polyline fill=\"none\" stroke=\"#2060c0\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) os << px(xs[i]) << "," << py(ys[i]) << " ";
    os << "\"/>\n";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        os << "<circle cx=\"" << px(xs[i]) << "\" cy=\"" << py(ys[i])
           << "\" r=\"3.5\" fill=\"#2060c0\"/>\n";
        os << "<text x=\"" << px(xs[i]) << "\" y=\"" << py(ys[i]) - 8
           << "\" text-anchor=\"middle\">" << fmt(ys[i]) << "</text>\n";
        os << "<text x=\"" << px(xs[i]) << "\" y=\"" << top + plot_h + 16
           << "\" text-anchor=\"middle\">" << xs[i] << "</text>\n";
    }
    os << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 16
       << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
    os << "<text x=\"16\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 16 "
       << top + plot_h / 2 << ")\" text-anchor=\"middle\">" << y_label << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

std::string inspect_svg(const Tensor& features, const Prediction& prediction,
                        const std::vector<std::string>& class_names) {
    const int bands = features.dim(0), frames = features.dim(1);
    const int classes = prediction.instance_scores.dim(0);
    const int m = prediction.instance_scores.dim(1);

    const double spec_h = 200.0, spec_w = 620.0;
    const int left = 110, top = 40;
    const double row_h = 18.0;
    const int width = left + static_cast<int>(spec_w) + 40;
    const int height = top + static_cast<int>(spec_h) + 40 + static_cast<int>(row_h) * classes + 60;

    double lo = features[0], hi = features[0];
    for (int i = 0; i < features.size(); ++i) {
        lo = std::min(lo, features[i]);
        hi = std::max(hi, features[i]);
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
    os << "<text x=\"" << left << "\" y=\"20\" font-size=\"13\">Input features and per-class "
          "instance scores</text>\n";

    const double cw = spec_w / frames, ch = spec_h / bands;
    for (int b = 0; b < bands; ++b) {
        for (int t = 0; t < frames; ++t) {
            const double v = (features.at(b, t) - lo) / (hi - lo);
            os << "<rect x=\"" << left + t * cw << "\" y=\"" << top + (bands - 1 - b) * ch
               << "\" width=\"" << cw + 0.5 << "\" height=\"" << ch + 0.5 << "\" fill=\""
               << heat_color(v) << "\"/>\n";
        }
    }
    os << "<text x=\"" << left - 6 << "\" y=\"" << top + spec_h / 2
       << "\" text-anchor=\"end\">mel bands</text>\n";

    const double inst_top = top + spec_h + 30.0;
    const double iw = spec_w / m;
    for (int c = 0; c < classes; ++c) {
        const double y = inst_top + c * row_h;
        for (int j = 0; j < m; ++j) {
            os << "<rect x=\"" << left + j * iw << "\" y=\"" << y << "\" width=\"" << iw + 0.5
               << "\" height=\"" << row_h - 2 << "\" fill=\""
               << heat_color(prediction.instance_scores.at(c, j)) << "\"/>\n";
        }
        const int jstar = prediction.argmax_instance[static_cast<std::size_t>(c)];
        os << "<rect x=\"" << left + jstar * iw << "\" y=\"" << y << "\" width=\"" << iw
           << "\" height=\"" << row_h - 2 << "\" fill=\"none\" stroke=\"#d03020\" "
              "stroke-width=\"2\"/>\n";
        os << "<text x=\"" << left - 6 << "\" y=\"" << y + row_h - 6 << "\" text-anchor=\"end\">"
           << class_names[static_cast<std::size_t>(c)] << " ("
           << fmt(prediction.bag_scores[c]) << ")</text>\n";
    }
    os << "<text x=\"" << left << "\" y=\"" << inst_top + classes * row_h + 20
       << "\">instance index (time), red box = argmax instance per class</text>\n";
    os << "</svg>\n";
    return os.str();
}

} // namespace milasc
