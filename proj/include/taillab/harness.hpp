#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "taillab/cass.hpp"
#include "taillab/eval.hpp"
#include "taillab/trainer.hpp"

namespace taillab {

// Partition as JSON: per-class clean index lists, the unlabeled set, clean
// posteriors, and the fitted per-class mixture parameters.
std::string partition_to_json(const Partition& partition);

// Raw per-sample loss table plus binned clean/noisy histograms per class,
// the data behind the loss-distribution figures. Requires true labels.
// Writes <prefix>_losses.csv and <prefix>_histograms.csv.
void export_loss_histograms(const std::vector<double>& sample_losses,
                            const Partition& partition, const LabeledDataset& ds,
                            const std::string& path_prefix, int bins = 30);

// CSV of (class, train_count, test_accuracy) sorted by count, non-increasing.
void export_per_class_accuracy(const EvalReport& report,
                               const std::vector<std::int64_t>& observed_counts,
                               const std::string& path);

struct SeedOutcome {
    std::uint64_t seed = 0;
    double best = 0.0;
    double last = 0.0;
    double best_balanced = 0.0;
    double last_balanced = 0.0;
};

struct AblationRow {
    std::string variant;
    std::vector<SeedOutcome> outcomes;
    double mean_best = 0.0, mean_last = 0.0;
    double median_best = 0.0, median_last = 0.0;
    double mean_best_balanced = 0.0, mean_last_balanced = 0.0;
    double median_best_balanced = 0.0, median_last_balanced = 0.0;
    bool complete = false;
    std::string error;  // first failure message when incomplete
};

struct AblationTable {
    std::vector<AblationRow> rows;
    std::vector<std::uint64_t> seeds;
};

// Runs every (variant, seed) pair, optionally fanning out across worker
// threads; results are gathered in (variant, seed) order regardless of
// scheduling. Failed runs mark their row incomplete rather than aborting
// the table.
AblationTable run_ablation_suite(const TrainConfig& base, const std::vector<Variant>& variants,
                                 const std::vector<std::uint64_t>& seeds,
                                 const LabeledDataset& train, const LabeledDataset& test,
                                 int threads = 1);

std::string ablation_table_to_csv(const AblationTable& table);
std::string ablation_table_to_json(const AblationTable& table);

struct GammaCell {
    double gamma_sup = 0.0;
    double gamma_rel = 0.0;
    std::vector<SeedOutcome> outcomes;
    double mean_best = 0.0, mean_last = 0.0;
    double median_best = 0.0, median_last = 0.0;
    bool complete = false;
    std::string error;
};

struct GammaSweepTable {
    std::vector<GammaCell> cells;
    std::vector<std::uint64_t> seeds;  // shared across cells for paired comparison
};

GammaSweepTable gamma_sweep(const TrainConfig& base,
                            const std::vector<std::pair<double, double>>& gamma_grid,
                            const std::vector<std::uint64_t>& seeds,
                            const LabeledDataset& train, const LabeledDataset& test,
                            int threads = 1);

std::string gamma_sweep_to_csv(const GammaSweepTable& table);

}  // namespace taillab
