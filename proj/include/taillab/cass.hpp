#pragma once

#include <cstdint>
#include <vector>

#include "taillab/dataset.hpp"
#include "taillab/gmm.hpp"
#include "taillab/net.hpp"

namespace taillab {

// Clean/unlabeled split of the training set. clean_indices and
// unlabeled_indices are a disjoint cover of {0..N-1}; every index in
// clean_indices[c] has observed label c.
struct Partition {
    std::vector<std::vector<int>> clean_indices;  // per observed class, ascending
    std::vector<int> unlabeled_indices;           // ascending
    std::vector<double> clean_posteriors;         // length N
    std::vector<GmmFit> per_class_fits;           // C entries (single-GMM mode repeats one fit)

    std::size_t clean_count() const {
        std::size_t n = 0;
        for (const auto& v : clean_indices) n += v.size();
        return n;
    }
};

// Procedure 1's routing rule: a sample with posterior strictly above 1/2
// joins its class's clean list, everything else goes to the unlabeled set.
Partition make_partition(const LabeledDataset& ds, const std::vector<double>& posteriors,
                         std::vector<GmmFit> fits);

// Softmax cross-entropy loss of every sample against its observed label,
// in sample-index order.
std::vector<double> sample_ce_losses(const Classifier& model, const LabeledDataset& ds);

// The losses grouped by observed class, stable index order within a class.
std::vector<std::vector<double>> per_class_losses(const Classifier& model,
                                                  const LabeledDataset& ds);

// Class-aware selection: one loss-GMM per observed class, a sample is clean
// iff its clean posterior is strictly above 1/2.
Partition select(const Classifier& model, const LabeledDataset& ds, const GmmConfig& gmm = {});

// Ablation: a single GMM over the pooled losses of all classes.
Partition select_single_gmm(const Classifier& model, const LabeledDataset& ds,
                            const GmmConfig& gmm = {});

// Everything declared clean; used by the supervised-equivalence pipeline.
Partition select_all_clean(const LabeledDataset& ds);

// Class-size splits for selection diagnostics: Many (count > many_gt),
// Few (count < few_lt), Medium otherwise.
struct SplitThresholds {
    std::int64_t many_gt = 100;
    std::int64_t few_lt = 20;
};

struct SelectionStats {
    std::int64_t selected = 0;  // samples selected as clean
    std::int64_t clean = 0;     // samples whose observed label is the true label
    std::int64_t hit = 0;       // selected and truly clean
    double precision = 0.0;     // hit/selected, 0 when nothing selected
    double recall = 0.0;        // hit/clean, 0 when nothing is clean
};

struct SelectionQuality {
    SelectionStats overall, many, medium, few;
};

// Precision/recall of the clean selection against ground truth, overall and
// per class-size split. Requires true labels.
SelectionQuality selection_quality(const Partition& partition, const LabeledDataset& ds,
                                   const SplitThresholds& splits = {});

}  // namespace taillab
