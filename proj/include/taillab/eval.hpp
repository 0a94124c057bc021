#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "taillab/dataset.hpp"
#include "taillab/net.hpp"

namespace taillab {

struct EvalReport {
    double overall_accuracy = 0.0;
    double balanced_accuracy = 0.0;  // unweighted mean of per-class rates
    std::vector<double> per_class_accuracy;
    Matrix confusion;  // row = true class, column = predicted, counts
    std::vector<std::int64_t> class_counts;
};

// Argmax with ties broken by the lowest class id.
int predict_class(std::span<const double> probabilities);

// Mean-softmax ensemble prediction for one input row.
int ensemble_predict(const std::vector<const Classifier*>& models, std::span<const double> x);

EvalReport evaluate(const Classifier& model, const LabeledDataset& test_set);
EvalReport evaluate_ensemble(const std::vector<const Classifier*>& models,
                             const LabeledDataset& test_set);

}  // namespace taillab
