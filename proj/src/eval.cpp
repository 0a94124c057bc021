#include "taillab/eval.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

namespace taillab {

int predict_class(std::span<const double> probabilities) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probabilities.size(); ++i) {
        if (probabilities[i] > probabilities[best]) best = i;
    }
    return static_cast<int>(best);
}

int ensemble_predict(const std::vector<const Classifier*>& models, std::span<const double> x) {
    if (models.empty()) throw std::invalid_argument("ensemble_predict: no models");
    const int c = models.front()->num_classes();
    for (const Classifier* m : models) {
        if (m->num_classes() != c)
            throw std::invalid_argument("ensemble_predict: class-count mismatch");
    }
    Matrix one(1, x.size());
    std::copy(x.begin(), x.end(), one.data().begin());
    std::vector<double> mean(static_cast<std::size_t>(c), 0.0);
    for (const Classifier* m : models) {
        const Matrix logits = forward(*m, one);
        const auto p = softmax(logits.row(0));
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += p[j];
    }
    for (double& v : mean) v /= static_cast<double>(models.size());
    return predict_class(mean);
}

namespace {

EvalReport evaluate_with(const LabeledDataset& test_set,
                         const std::function<int(std::size_t)>& predict_row) {
    if (test_set.size() == 0) throw std::invalid_argument("evaluate: empty test set");
    const auto& labels = test_set.true_labels ? *test_set.true_labels
                                              : test_set.observed_labels;
    const auto c = static_cast<std::size_t>(test_set.num_classes);
    EvalReport report;
    report.confusion = Matrix(c, c);
    report.class_counts.assign(c, 0);
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        const int pred = predict_row(i);
        const int truth = labels[i];
        report.confusion(static_cast<std::size_t>(truth), static_cast<std::size_t>(pred)) += 1.0;
        report.class_counts[static_cast<std::size_t>(truth)] += 1;
        correct += pred == truth ? 1 : 0;
    }
    report.overall_accuracy = static_cast<double>(correct) /
                              static_cast<double>(test_set.size());
    report.per_class_accuracy.assign(c, 0.0);
    double rate_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t k = 0; k < c; ++k) {
        if (report.class_counts[k] > 0) {
            report.per_class_accuracy[k] =
                report.confusion(k, k) / static_cast<double>(report.class_counts[k]);
            rate_sum += report.per_class_accuracy[k];
            ++present;
        }
    }
    report.balanced_accuracy = present > 0 ? rate_sum / static_cast<double>(present) : 0.0;
    return report;
}

}  // namespace

EvalReport evaluate(const Classifier& model, const LabeledDataset& test_set) {
    if (test_set.size() == 0) throw std::invalid_argument("evaluate: empty test set");
    const Matrix logits = forward(model, test_set.features);
    return evaluate_with(test_set, [&](std::size_t i) {
        const auto p = softmax(logits.row(i));
        return predict_class(p);
    });
}

EvalReport evaluate_ensemble(const std::vector<const Classifier*>& models,
                             const LabeledDataset& test_set) {
    if (models.empty()) throw std::invalid_argument("evaluate_ensemble: no models");
    if (test_set.size() == 0) throw std::invalid_argument("evaluate: empty test set");
    std::vector<Matrix> all_logits;
    all_logits.reserve(models.size());
    for (const Classifier* m : models) {
        if (m->num_classes() != test_set.num_classes)
            throw std::invalid_argument("evaluate_ensemble: class-count mismatch");
        all_logits.push_back(forward(*m, test_set.features));
    }
    const auto c = static_cast<std::size_t>(test_set.num_classes);
    return evaluate_with(test_set, [&](std::size_t i) {
        std::vector<double> mean(c, 0.0);
        for (const Matrix& logits : all_logits) {
            const auto p = softmax(logits.row(i));
            for (std::size_t j = 0; j < c; ++j) mean[j] += p[j];
        }
        for (double& v : mean) v /= static_cast<double>(models.size());
        return predict_class(mean);
    });
}

}  // namespace taillab
