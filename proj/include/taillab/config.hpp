#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "taillab/datagen.hpp"
#include "taillab/trainer.hpp"

namespace taillab {

// Synthetic benchmark description: blob geometry, long-tail profile, noise.
struct DatasetConfig {
    int num_classes = 10;
    int dim = 16;
    std::int64_t base_count = 500;
    double imbalance_ratio = 100.0;
    std::string noise_kind = "symmetric";  // symmetric | asymmetric | none
    double noise_rate = 0.5;
    std::vector<std::pair<int, int>> asym_pairs = {{2, 3}, {4, 5}};
    double asym_flip_rate = 0.4;
    double asym_step_ratio = 10.0;
    double center_scale = 6.0;
    double cluster_stddev = 1.0;
    std::int64_t test_per_class = 100;
    std::uint64_t seed = 1;
    // When set, datasets are loaded from these files instead of generated.
    std::string train_path;
    std::string test_path;
};

struct HarnessConfig {
    std::string out_dir;  // empty = TAILLAB_OUT_DIR or current directory
    SplitThresholds splits;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::vector<std::string> variants = {"ssbl", "erm", "no_rebalance", "single_gmm"};
    std::vector<std::pair<double, double>> gamma_grid = {
        {3, 0}, {3, 0.5}, {3, 1}, {3, 2}, {3, 3}, {1, 1}, {2, 1}, {4, 1}};
    int threads = 1;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    TrainConfig trainer;
    HarnessConfig harness;
};

// Sectioned key=value text config. Unknown sections or keys are rejected;
// every constraint of the underlying types is revalidated. Keys left unset
// take the defaults above; bias_epochs and the lr drop epoch default to 3/4
// of epochs_total.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

// Canonical one-line-per-key rendering; its hash identifies a config.
std::string canonical_config_string(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);

struct DatasetPair {
    LabeledDataset train;
    LabeledDataset test;  // clean and balanced
};

// Generates (or loads, when paths are set) the train/test pair described by
// the dataset section. Test points use an independent noise stream from the
// same blob centers.
DatasetPair build_datasets(const DatasetConfig& cfg);

}  // namespace taillab
