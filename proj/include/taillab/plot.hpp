#pragma once

#include <string>

namespace taillab {

// Static SVG renderers over the recorded CSV files. Pure functions of their
// input text, so re-plotting is byte-identical.

// Accuracy-vs-epoch curves from a run CSV (overall and balanced).
std::string svg_accuracy_curves(const std::string& run_csv);

// Per-class accuracy vs training count scatter.
std::string svg_per_class_scatter(const std::string& per_class_csv);

// Clean/noisy loss histogram bars, one panel per class.
std::string svg_loss_histograms(const std::string& histogram_csv);

}  // namespace taillab
