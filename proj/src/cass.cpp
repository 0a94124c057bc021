#include "taillab/cass.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace taillab {

namespace {

double row_log_sum_exp(std::span<const double> row) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : row) m = std::max(m, v);
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - m);
    return m + std::log(sum);
}

}  // namespace

Partition make_partition(const LabeledDataset& ds, const std::vector<double>& posteriors,
                         std::vector<GmmFit> fits) {
    if (posteriors.size() != ds.size())
        throw std::invalid_argument("make_partition: posterior count != dataset size");
    Partition part;
    part.clean_indices.resize(static_cast<std::size_t>(ds.num_classes));
    part.clean_posteriors = posteriors;
    part.per_class_fits = std::move(fits);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (posteriors[i] > 0.5) {
            part.clean_indices[static_cast<std::size_t>(ds.observed_labels[i])].push_back(
                static_cast<int>(i));
        } else {
            part.unlabeled_indices.push_back(static_cast<int>(i));
        }
    }
    return part;
}

std::vector<double> sample_ce_losses(const Classifier& model, const LabeledDataset& ds) {
    if (model.num_classes() != ds.num_classes)
        throw std::invalid_argument("sample_ce_losses: model output dim != num_classes");
    const Matrix logits = forward(model, ds.features);
    std::vector<double> losses(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto row = logits.row(i);
        losses[i] = row_log_sum_exp(row) -
                    row[static_cast<std::size_t>(ds.observed_labels[i])];
    }
    return losses;
}

std::vector<std::vector<double>> per_class_losses(const Classifier& model,
                                                  const LabeledDataset& ds) {
    const auto losses = sample_ce_losses(model, ds);
    std::vector<std::vector<double>> grouped(static_cast<std::size_t>(ds.num_classes));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        grouped[static_cast<std::size_t>(ds.observed_labels[i])].push_back(losses[i]);
    }
    return grouped;
}

Partition select(const Classifier& model, const LabeledDataset& ds, const GmmConfig& gmm) {
    if (ds.size() == 0) throw std::invalid_argument("select: empty dataset");
    const auto losses = sample_ce_losses(model, ds);

    std::vector<std::vector<double>> class_losses(static_cast<std::size_t>(ds.num_classes));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        class_losses[static_cast<std::size_t>(ds.observed_labels[i])].push_back(losses[i]);
    }

    std::vector<GmmFit> fits(static_cast<std::size_t>(ds.num_classes));
    for (int c = 0; c < ds.num_classes; ++c) {
        const auto& v = class_losses[static_cast<std::size_t>(c)];
        if (v.empty()) {
            fits[static_cast<std::size_t>(c)].degenerate = true;  // empty class placeholder
        } else {
            fits[static_cast<std::size_t>(c)] = fit_gmm2(v, gmm);
        }
    }

    std::vector<double> posteriors(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        posteriors[i] = posterior_clean(
            fits[static_cast<std::size_t>(ds.observed_labels[i])], losses[i]);
    }
    return make_partition(ds, posteriors, std::move(fits));
}

Partition select_single_gmm(const Classifier& model, const LabeledDataset& ds,
                            const GmmConfig& gmm) {
    if (ds.size() == 0) throw std::invalid_argument("select_single_gmm: empty dataset");
    const auto losses = sample_ce_losses(model, ds);
    const GmmFit fit = fit_gmm2(losses, gmm);
    std::vector<double> posteriors(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) posteriors[i] = posterior_clean(fit, losses[i]);
    return make_partition(ds, posteriors,
                          std::vector<GmmFit>(static_cast<std::size_t>(ds.num_classes), fit));
}

Partition select_all_clean(const LabeledDataset& ds) {
    if (ds.size() == 0) throw std::invalid_argument("select_all_clean: empty dataset");
    std::vector<double> posteriors(ds.size(), 1.0);
    return make_partition(ds, posteriors,
                          std::vector<GmmFit>(static_cast<std::size_t>(ds.num_classes)));
}

SelectionQuality selection_quality(const Partition& partition, const LabeledDataset& ds,
                                   const SplitThresholds& splits) {
    if (!ds.true_labels)
        throw std::logic_error("selection_quality: dataset has no true labels");

    std::vector<bool> selected(ds.size(), false);
    for (const auto& cls : partition.clean_indices) {
        for (int i : cls) selected[static_cast<std::size_t>(i)] = true;
    }

    auto split_of = [&](int cls) -> int {
        const std::int64_t n = ds.observed_counts[static_cast<std::size_t>(cls)];
        if (n > splits.many_gt) return 0;
        if (n < splits.few_lt) return 2;
        return 1;
    };

    SelectionQuality q;
    SelectionStats* stats[3] = {&q.many, &q.medium, &q.few};
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const bool truly_clean = ds.observed_labels[i] == (*ds.true_labels)[i];
        SelectionStats* bucket = stats[split_of(ds.observed_labels[i])];
        for (SelectionStats* s : {&q.overall, bucket}) {
            s->selected += selected[i] ? 1 : 0;
            s->clean += truly_clean ? 1 : 0;
            s->hit += (selected[i] && truly_clean) ? 1 : 0;
        }
    }
    for (SelectionStats* s : {&q.overall, &q.many, &q.medium, &q.few}) {
        s->precision = s->selected > 0 ? static_cast<double>(s->hit) /
                                             static_cast<double>(s->selected)
                                       : 0.0;
        s->recall = s->clean > 0 ? static_cast<double>(s->hit) / static_cast<double>(s->clean)
                                 : 0.0;
    }
    return q;
}

}  // namespace taillab
