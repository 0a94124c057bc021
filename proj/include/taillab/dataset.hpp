#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "taillab/matrix.hpp"

namespace taillab {

// Training data with observed (possibly corrupted) labels. True labels are
// carried only for evaluation and never seen by any training path.
struct LabeledDataset {
    Matrix features;                                // N x d
    std::vector<int> observed_labels;               // length N, values in [0, C)
    std::optional<std::vector<int>> true_labels;    // length N when present
    int num_classes = 0;
    std::vector<std::int64_t> observed_counts;      // length C, counts of observed labels

    std::size_t size() const { return observed_labels.size(); }
    std::size_t dim() const { return features.cols(); }

    void recompute_counts();
    // Checks the structural invariants; throws std::invalid_argument on violation.
    void validate() const;
};

// Flat CSV format: header line "C d N has_true_labels", then one line per
// sample "observed_label[,true_label],f_1,...,f_d". Features round-trip
// bit-exactly (17 significant digits).
void save_dataset(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_dataset(const std::string& path);

// Canonical double formatting used by every exporter (17 significant digits).
std::string format_double(double v);

}  // namespace taillab
