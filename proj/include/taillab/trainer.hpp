#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "taillab/bias.hpp"
#include "taillab/cass.hpp"
#include "taillab/dataset.hpp"
#include "taillab/eval.hpp"
#include "taillab/gmm.hpp"
#include "taillab/net.hpp"
#include "taillab/ssl.hpp"

namespace taillab {

enum class Variant {
    ssbl,            // full method
    erm,             // plain cross-entropy baseline
    no_rebalance,    // balanced loss replaced by plain cross-entropy
    freq_rebalance,  // alpha from label frequency instead of model bias
    no_reg_warmup,   // lambda_warm = 0
    no_reg_all,      // lambda_warm = lambda_reg = 0
    single_gmm,      // one loss-GMM for all classes in selection
};

std::string variant_name(Variant v);
std::optional<Variant> variant_from_name(const std::string& name);

struct TrainConfig {
    int epochs_total = 200;
    int bias_epochs = 150;  // E; selection + bias estimation run until here
    int warmup_epochs = 10;
    int batch_size = 64;
    double lambda_warm = 0.2;
    double lambda_reg = 0.2;
    double ema_sigma = 0.9;
    double gamma_sup = 3.0;
    double gamma_rel = 1.0;
    SslConfig ssl;
    OptimizerConfig optimizer;
    std::vector<int> hidden_dims = {64, 64};
    std::uint64_t seed = 1;
    Variant variant = Variant::ssbl;
    GmmConfig gmm;
    SplitThresholds splits;
    // Test knob: skip selection and treat every sample as clean.
    bool force_all_clean = false;
};

struct EpochRecord {
    int epoch = 0;
    std::string phase;  // erm | warmup | estimation | main
    double loss_sup = 0.0;
    double loss_unsup = 0.0;
    double loss_reg = 0.0;
    double test_accuracy = 0.0;
    double test_balanced_accuracy = 0.0;
    std::int64_t clean_count = -1;  // |L| when selection ran, else -1
    std::optional<SelectionQuality> selection;
};

struct RunRecord {
    std::string variant;
    std::uint64_t seed = 0;
    std::vector<EpochRecord> epochs;
    Matrix ema;    // final M-bar (empty for erm)
    Matrix ratio;  // R
    Matrix alpha;  // frozen alpha used in the main phase
    bool alpha_fallback = false;  // no estimation epochs, alpha defaulted to ones
    std::uint64_t alpha_hash_first_main = 0;
    std::uint64_t alpha_hash_last_main = 0;
    double best_accuracy = 0.0;
    double last_accuracy = 0.0;
    double best_balanced_accuracy = 0.0;
    double last_balanced_accuracy = 0.0;
    // Paired comparison at the first main-phase epoch: class-aware vs
    // single-GMM selection quality from the same model state.
    std::optional<SelectionQuality> first_main_class_aware;
    std::optional<SelectionQuality> first_main_single_gmm;
    Classifier final_model;
};

// Runs Algorithm 1 (or the ERM loop / an ablation variant) end to end:
// warm-up, bias-estimation epochs with CASS + MixMatch + EMA accumulation,
// alpha freezing, then main-phase epochs with the balanced loss. Evaluates
// on the test set every epoch.
RunRecord run_experiment(const TrainConfig& cfg, const LabeledDataset& train,
                         const LabeledDataset& test);

// JSON report of a run (metrics, matrices, per-epoch stream; the model
// itself is checkpointed separately). Byte-stable for identical runs.
std::string run_record_to_json(const RunRecord& record);

// Per-epoch metrics as CSV rows for plotting.
std::string run_record_to_csv(const RunRecord& record);

}  // namespace taillab
