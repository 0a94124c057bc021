#include "taillab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "taillab/hash.hpp"
#include "taillab/rng.hpp"

namespace taillab {

namespace {

// rng stream purposes, fixed so reruns and the ERM-equivalence test line up
constexpr std::uint64_t kStreamShuffle = 0;
constexpr std::uint64_t kStreamUCycle = 1;
constexpr std::uint64_t kStreamSsl = 2;

struct Batch {
    Matrix inputs;
    std::vector<int> labels;
};

Batch gather_batch(const LabeledDataset& ds, std::span<const int> indices) {
    Batch batch{Matrix(indices.size(), ds.dim()), std::vector<int>(indices.size())};
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const auto i = static_cast<std::size_t>(indices[b]);
        for (std::size_t j = 0; j < ds.dim(); ++j) batch.inputs(b, j) = ds.features(i, j);
        batch.labels[b] = ds.observed_labels[i];
    }
    return batch;
}

Matrix one_hot(const std::vector<int>& labels, int num_classes) {
    Matrix out(labels.size(), static_cast<std::size_t>(num_classes));
    for (std::size_t b = 0; b < labels.size(); ++b) {
        out(b, static_cast<std::size_t>(labels[b])) = 1.0;
    }
    return out;
}

void add_gradients(Gradients& into, const Gradients& other) {
    for (std::size_t l = 0; l < into.weights.size(); ++l) {
        auto& w = into.weights[l].data();
        const auto& ow = other.weights[l].data();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] += ow[i];
        for (std::size_t i = 0; i < into.biases[l].size(); ++i)
            into.biases[l][i] += other.biases[l][i];
    }
}

// Cycles through the unlabeled set in shuffled order, reshuffling on wrap.
class UnlabeledCycler {
public:
    UnlabeledCycler(std::vector<int> indices, Rng rng)
        : order_(std::move(indices)), rng_(std::move(rng)) {
        rng_.shuffle(order_);
    }

    std::vector<int> next(std::size_t n) {
        std::vector<int> out;
        if (order_.empty()) return out;
        out.reserve(n);
        while (out.size() < n) {
            if (cursor_ == order_.size()) {
                rng_.shuffle(order_);
                cursor_ = 0;
            }
            out.push_back(order_[cursor_++]);
        }
        return out;
    }

private:
    std::vector<int> order_;
    Rng rng_;
    std::size_t cursor_ = 0;
};

struct EpochLosses {
    double sup = 0.0;
    double unsup = 0.0;
    double reg = 0.0;
};

// One epoch of supervised training on all samples with observed labels:
// CE plus optional lambda_reg_term * L_reg. Shared by the ERM loop and warm-up.
EpochLosses supervised_epoch(Classifier& model, OptimizerState& opt, const LabeledDataset& ds,
                             const std::vector<std::int64_t>& full_counts, double reg_lambda,
                             int epoch, std::uint64_t seed, int batch_size) {
    std::vector<int> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng = stream_for(seed, static_cast<std::uint64_t>(epoch), kStreamShuffle);
    shuffle_rng.shuffle(order);

    EpochLosses losses;
    std::size_t iters = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        const Batch batch = gather_batch(ds, {order.data() + start, end - start});
        ForwardTrace trace;
        const Matrix logits = forward_trace(model, batch.inputs, trace);
        LossResult ce = ce_loss_soft(logits, one_hot(batch.labels, ds.num_classes));
        losses.sup += ce.value;
        Matrix dlogits = std::move(ce.dlogits);
        if (reg_lambda != 0.0) {
            const LossResult reg = reg_loss(logits, batch.labels, full_counts);
            losses.reg += reg.value;
            for (std::size_t i = 0; i < dlogits.size(); ++i) {
                dlogits.data()[i] += reg_lambda * reg.dlogits.data()[i];
            }
        }
        const Gradients grads = backward(model, trace, dlogits);
        sgd_step(model, opt, grads, epoch);
        ++iters;
    }
    losses.sup /= static_cast<double>(iters);
    losses.reg /= static_cast<double>(iters);
    return losses;
}

struct MixmatchEpochResult {
    EpochLosses losses;
    Partition partition;
};

Partition run_selection(const TrainConfig& cfg, const Classifier& model,
                        const LabeledDataset& ds) {
    if (cfg.force_all_clean) return select_all_clean(ds);
    if (cfg.variant == Variant::single_gmm) return select_single_gmm(model, ds, cfg.gmm);
    return select(model, ds, cfg.gmm);
}

// One semi-supervised epoch: CASS, then ceil(|L|/B) paired mini-batches of
// MixMatch training. When `bias` is non-null (estimation phase) the raw
// labeled batch's softmax outputs are folded into the epoch bias matrix
// before mixing. `alpha` null means the plain CE supervised loss.
MixmatchEpochResult mixmatch_epoch(const TrainConfig& cfg, Classifier& model,
                                   OptimizerState& opt, const LabeledDataset& ds,
                                   const std::vector<std::int64_t>& full_counts, int epoch,
                                   BiasState* bias, const Matrix* alpha) {
    MixmatchEpochResult result;
    result.partition = run_selection(cfg, model, ds);

    std::vector<int> labeled;
    labeled.reserve(ds.size());
    for (const auto& cls : result.partition.clean_indices) {
        labeled.insert(labeled.end(), cls.begin(), cls.end());
    }
    std::sort(labeled.begin(), labeled.end());
    if (labeled.empty()) {
        throw std::runtime_error(
            "mixmatch epoch " + std::to_string(epoch) +
            ": selection produced an empty clean set; training cannot proceed");
    }

    Rng shuffle_rng = stream_for(cfg.seed, static_cast<std::uint64_t>(epoch), kStreamShuffle);
    shuffle_rng.shuffle(labeled);
    UnlabeledCycler cycler(result.partition.unlabeled_indices,
                           stream_for(cfg.seed, static_cast<std::uint64_t>(epoch), kStreamUCycle));
    Rng ssl_rng = stream_for(cfg.seed, static_cast<std::uint64_t>(epoch), kStreamSsl);

    const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t num_iters = (labeled.size() + batch_size - 1) / batch_size;
    const double lambda_u = cfg.ssl.lambda_u;

    for (std::size_t iter = 0; iter < num_iters; ++iter) {
        const std::size_t start = iter * batch_size;
        const std::size_t end = std::min(labeled.size(), start + batch_size);
        const Batch l_batch = gather_batch(ds, {labeled.data() + start, end - start});

        if (bias != nullptr) {
            const Matrix probs = softmax_rows(forward(model, l_batch.inputs));
            accumulate(*bias, probs, l_batch.labels);
        }

        const std::vector<int> u_indices = cycler.next(batch_size);
        Batch u_batch;
        if (!u_indices.empty()) u_batch = gather_batch(ds, u_indices);

        auto [mixed_l, mixed_u] =
            build_mixed_batches(l_batch.inputs, l_batch.labels, u_batch.inputs, model, cfg.ssl,
                                ssl_rng);

        ForwardTrace trace_l;
        const Matrix logits_l = forward_trace(model, mixed_l.inputs, trace_l);
        LossResult sup = alpha != nullptr
                             ? balanced_loss(logits_l, mixed_l.soft_labels, *alpha)
                             : ce_loss_soft(logits_l, mixed_l.soft_labels);
        result.losses.sup += sup.value;
        Matrix dlogits = std::move(sup.dlogits);
        if (cfg.lambda_reg != 0.0 && !(cfg.variant == Variant::no_reg_all)) {
            const LossResult reg = reg_loss(logits_l, mixed_l.hard_labels, full_counts);
            result.losses.reg += reg.value;
            for (std::size_t i = 0; i < dlogits.size(); ++i) {
                dlogits.data()[i] += cfg.lambda_reg * reg.dlogits.data()[i];
            }
        }
        Gradients grads = backward(model, trace_l, dlogits);

        if (lambda_u != 0.0 && mixed_u.inputs.rows() > 0) {
            ForwardTrace trace_u;
            const Matrix logits_u = forward_trace(model, mixed_u.inputs, trace_u);
            LossResult unsup = mse_loss(logits_u, mixed_u.soft_labels);
            result.losses.unsup += unsup.value;
            for (double& v : unsup.dlogits.data()) v *= lambda_u;
            add_gradients(grads, backward(model, trace_u, unsup.dlogits));
        }
        sgd_step(model, opt, grads, epoch);
    }
    if (bias != nullptr) finalize_epoch(*bias);

    const auto iters = static_cast<double>(num_iters);
    result.losses.sup /= iters;
    result.losses.unsup /= iters;
    result.losses.reg /= iters;
    return result;
}

void record_epoch(RunRecord& record, const TrainConfig& cfg, const Classifier& model,
                  const LabeledDataset& test, int epoch, const std::string& phase,
                  const EpochLosses& losses, const Partition* partition,
                  const LabeledDataset& train) {
    EpochRecord entry;
    entry.epoch = epoch;
    entry.phase = phase;
    entry.loss_sup = losses.sup;
    entry.loss_unsup = losses.unsup;
    entry.loss_reg = losses.reg;
    const EvalReport report = evaluate(model, test);
    entry.test_accuracy = report.overall_accuracy;
    entry.test_balanced_accuracy = report.balanced_accuracy;
    if (partition != nullptr) {
        entry.clean_count = static_cast<std::int64_t>(partition->clean_count());
        if (train.true_labels) {
            entry.selection = selection_quality(*partition, train, cfg.splits);
        }
    }
    record.epochs.push_back(std::move(entry));
}

std::uint64_t hash_matrix(const Matrix& m) { return fnv1a64(std::span<const double>(m.data())); }

void validate_config(const TrainConfig& cfg, const LabeledDataset& train,
                     const LabeledDataset& test) {
    if (cfg.epochs_total < 1) throw std::invalid_argument("trainer: epochs_total must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("trainer: batch_size must be >= 1");
    if (cfg.variant != Variant::erm) {
        if (cfg.warmup_epochs < 0 || cfg.warmup_epochs > cfg.bias_epochs ||
            cfg.bias_epochs > cfg.epochs_total) {
            throw std::invalid_argument(
                "trainer: need 0 <= warmup_epochs <= bias_epochs <= epochs_total");
        }
    }
    if (cfg.lambda_warm < 0.0 || cfg.lambda_reg < 0.0 || cfg.ssl.lambda_u < 0.0)
        throw std::invalid_argument("trainer: loss weights must be >= 0");
    if (!(cfg.ema_sigma >= 0.0 && cfg.ema_sigma < 1.0))
        throw std::invalid_argument("trainer: ema_sigma must be in [0,1)");
    if (train.size() == 0 || test.size() == 0)
        throw std::invalid_argument("trainer: train and test sets must be nonempty");
    if (train.num_classes != test.num_classes)
        throw std::invalid_argument("trainer: train/test class count mismatch");
    if (train.dim() != test.dim())
        throw std::invalid_argument("trainer: train/test feature width mismatch");
}

}  // namespace

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::ssbl: return "ssbl";
        case Variant::erm: return "erm";
        case Variant::no_rebalance: return "no_rebalance";
        case Variant::freq_rebalance: return "freq_rebalance";
        case Variant::no_reg_warmup: return "no_reg_warmup";
        case Variant::no_reg_all: return "no_reg_all";
        case Variant::single_gmm: return "single_gmm";
    }
    return "unknown";
}

std::optional<Variant> variant_from_name(const std::string& name) {
    for (Variant v : {Variant::ssbl, Variant::erm, Variant::no_rebalance,
                      Variant::freq_rebalance, Variant::no_reg_warmup, Variant::no_reg_all,
                      Variant::single_gmm}) {
        if (variant_name(v) == name) return v;
    }
    return std::nullopt;
}

RunRecord run_experiment(const TrainConfig& cfg, const LabeledDataset& train,
                         const LabeledDataset& test) {
    validate_config(cfg, train, test);

    RunRecord record;
    record.variant = variant_name(cfg.variant);
    record.seed = cfg.seed;

    std::vector<int> dims;
    dims.push_back(static_cast<int>(train.dim()));
    for (int h : cfg.hidden_dims) dims.push_back(h);
    dims.push_back(train.num_classes);
    Classifier model = init_model(dims, cfg.seed);
    OptimizerState opt = make_optimizer(model, cfg.optimizer);
    const std::vector<std::int64_t>& full_counts = train.observed_counts;

    if (cfg.variant == Variant::erm) {
        for (int epoch = 0; epoch < cfg.epochs_total; ++epoch) {
            const EpochLosses losses = supervised_epoch(model, opt, train, full_counts, 0.0,
                                                        epoch, cfg.seed, cfg.batch_size);
            record_epoch(record, cfg, model, test, epoch, "erm", losses, nullptr, train);
        }
    } else {
        const double lambda_warm =
            (cfg.variant == Variant::no_reg_warmup || cfg.variant == Variant::no_reg_all)
                ? 0.0
                : cfg.lambda_warm;

        for (int epoch = 0; epoch < cfg.warmup_epochs; ++epoch) {
            const EpochLosses losses = supervised_epoch(model, opt, train, full_counts,
                                                        lambda_warm, epoch, cfg.seed,
                                                        cfg.batch_size);
            record_epoch(record, cfg, model, test, epoch, "warmup", losses, nullptr, train);
        }

        BiasState bias = make_bias_state(train.num_classes, cfg.ema_sigma);
        for (int epoch = cfg.warmup_epochs; epoch < cfg.bias_epochs; ++epoch) {
            const MixmatchEpochResult r =
                mixmatch_epoch(cfg, model, opt, train, full_counts, epoch, &bias, nullptr);
            record_epoch(record, cfg, model, test, epoch, "estimation", r.losses, &r.partition,
                         train);
        }

        // alpha is computed once between the phases and frozen afterwards
        const auto c = static_cast<std::size_t>(train.num_classes);
        Matrix alpha;
        if (cfg.bias_epochs == cfg.warmup_epochs) {
            record.alpha_fallback = true;
            alpha = Matrix(c, c, 1.0);
            record.ratio = Matrix(c, c, 1.0);
        } else {
            record.ema = bias.ema_matrix;
            record.ratio = ratio_matrix(bias.ema_matrix);
            alpha = alpha_matrix(record.ratio, cfg.gamma_sup, cfg.gamma_rel);
        }
        if (cfg.variant == Variant::freq_rebalance) {
            alpha = frequency_alpha(full_counts, cfg.gamma_sup, cfg.gamma_rel);
        }
        bool alpha_is_identity = cfg.variant == Variant::no_rebalance || record.alpha_fallback;
        record.alpha = alpha_is_identity ? Matrix(c, c, 1.0) : alpha;
        for (std::size_t i = 0; i < c; ++i) record.alpha(i, i) = 1.0;

        for (int epoch = cfg.bias_epochs; epoch < cfg.epochs_total; ++epoch) {
            if (epoch == cfg.bias_epochs) {
                record.alpha_hash_first_main = hash_matrix(record.alpha);
                if (train.true_labels && !cfg.force_all_clean) {
                    // Paired class-aware vs single-GMM comparison from the
                    // model state entering the main phase.
                    record.first_main_class_aware =
                        selection_quality(select(model, train, cfg.gmm), train, cfg.splits);
                    record.first_main_single_gmm = selection_quality(
                        select_single_gmm(model, train, cfg.gmm), train, cfg.splits);
                }
            }
            const MixmatchEpochResult r =
                mixmatch_epoch(cfg, model, opt, train, full_counts, epoch, nullptr,
                               alpha_is_identity ? nullptr : &record.alpha);
            record_epoch(record, cfg, model, test, epoch, "main", r.losses, &r.partition, train);
            record.alpha_hash_last_main = hash_matrix(record.alpha);
        }
    }

    record.best_accuracy = 0.0;
    record.best_balanced_accuracy = 0.0;
    for (const EpochRecord& e : record.epochs) {
        record.best_accuracy = std::max(record.best_accuracy, e.test_accuracy);
        record.best_balanced_accuracy =
            std::max(record.best_balanced_accuracy, e.test_balanced_accuracy);
    }
    record.last_accuracy = record.epochs.back().test_accuracy;
    record.last_balanced_accuracy = record.epochs.back().test_balanced_accuracy;
    record.final_model = std::move(model);
    return record;
}

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json matrix_to_json(const Matrix& m) {
    ordered_json rows = ordered_json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

ordered_json stats_to_json(const SelectionStats& s) {
    return ordered_json{{"selected", s.selected}, {"clean", s.clean},   {"hit", s.hit},
                        {"precision", s.precision}, {"recall", s.recall}};
}

ordered_json quality_to_json(const SelectionQuality& q) {
    return ordered_json{{"overall", stats_to_json(q.overall)},
                        {"many", stats_to_json(q.many)},
                        {"medium", stats_to_json(q.medium)},
                        {"few", stats_to_json(q.few)}};
}

}  // namespace

std::string run_record_to_json(const RunRecord& record) {
    ordered_json j;
    j["variant"] = record.variant;
    j["seed"] = record.seed;
    j["best_accuracy"] = record.best_accuracy;
    j["last_accuracy"] = record.last_accuracy;
    j["best_balanced_accuracy"] = record.best_balanced_accuracy;
    j["last_balanced_accuracy"] = record.last_balanced_accuracy;
    j["alpha_fallback"] = record.alpha_fallback;
    j["alpha_hash_first_main"] = record.alpha_hash_first_main;
    j["alpha_hash_last_main"] = record.alpha_hash_last_main;
    j["ema"] = matrix_to_json(record.ema);
    j["ratio"] = matrix_to_json(record.ratio);
    j["alpha"] = matrix_to_json(record.alpha);
    if (record.first_main_class_aware) {
        j["first_main_class_aware"] = quality_to_json(*record.first_main_class_aware);
    }
    if (record.first_main_single_gmm) {
        j["first_main_single_gmm"] = quality_to_json(*record.first_main_single_gmm);
    }
    ordered_json epochs = ordered_json::array();
    for (const EpochRecord& e : record.epochs) {
        ordered_json entry;
        entry["epoch"] = e.epoch;
        entry["phase"] = e.phase;
        entry["loss_sup"] = e.loss_sup;
        entry["loss_unsup"] = e.loss_unsup;
        entry["loss_reg"] = e.loss_reg;
        entry["test_accuracy"] = e.test_accuracy;
        entry["test_balanced_accuracy"] = e.test_balanced_accuracy;
        entry["clean_count"] = e.clean_count;
        if (e.selection) entry["selection"] = quality_to_json(*e.selection);
        epochs.push_back(std::move(entry));
    }
    j["epochs"] = std::move(epochs);
    return j.dump(2) + "\n";
}

std::string run_record_to_csv(const RunRecord& record) {
    std::string out =
        "epoch,phase,loss_sup,loss_unsup,loss_reg,test_accuracy,test_balanced_accuracy,"
        "clean_count,sel_precision,sel_recall\n";
    for (const EpochRecord& e : record.epochs) {
        out += std::to_string(e.epoch) + "," + e.phase + "," + format_double(e.loss_sup) + "," +
               format_double(e.loss_unsup) + "," + format_double(e.loss_reg) + "," +
               format_double(e.test_accuracy) + "," + format_double(e.test_balanced_accuracy) +
               "," + std::to_string(e.clean_count);
        if (e.selection) {
            out += "," + format_double(e.selection->overall.precision) + "," +
                   format_double(e.selection->overall.recall);
        } else {
            out += ",,";
        }
        out += "\n";
    }
    return out;
}

}  // namespace taillab
