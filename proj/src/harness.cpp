#include "taillab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace taillab {

std::string partition_to_json(const Partition& partition) {
    nlohmann::ordered_json j;
    j["clean_indices"] = partition.clean_indices;
    j["unlabeled_indices"] = partition.unlabeled_indices;
    j["clean_posteriors"] = partition.clean_posteriors;
    nlohmann::ordered_json fits = nlohmann::ordered_json::array();
    for (const GmmFit& f : partition.per_class_fits) {
        fits.push_back({{"mean_clean", f.mean_clean},
                        {"mean_noisy", f.mean_noisy},
                        {"var_clean", f.var_clean},
                        {"var_noisy", f.var_noisy},
                        {"weight_clean", f.weight_clean},
                        {"weight_noisy", f.weight_noisy},
                        {"log_likelihood", f.log_likelihood},
                        {"iterations_used", f.iterations_used},
                        {"degenerate", f.degenerate}});
    }
    j["per_class_fits"] = std::move(fits);
    return j.dump(2) + "\n";
}

void export_loss_histograms(const std::vector<double>& sample_losses,
                            const Partition& partition, const LabeledDataset& ds,
                            const std::string& path_prefix, int bins) {
    if (!ds.true_labels)
        throw std::logic_error("export_loss_histograms: dataset has no true labels");
    if (sample_losses.size() != ds.size())
        throw std::invalid_argument("export_loss_histograms: loss count != dataset size");
    if (bins < 1) throw std::invalid_argument("export_loss_histograms: bins must be >= 1");

    std::vector<bool> selected(ds.size(), false);
    for (const auto& cls : partition.clean_indices) {
        for (int i : cls) selected[static_cast<std::size_t>(i)] = true;
    }

    const std::string loss_path = path_prefix + "_losses.csv";
    std::ofstream losses(loss_path);
    if (!losses) throw std::runtime_error("cannot open for writing: " + loss_path);
    losses << "loss,observed_class,is_truly_clean,selected_clean\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const bool clean = ds.observed_labels[i] == (*ds.true_labels)[i];
        losses << format_double(sample_losses[i]) << ',' << ds.observed_labels[i] << ','
               << (clean ? 1 : 0) << ',' << (selected[i] ? 1 : 0) << '\n';
    }

    const std::string hist_path = path_prefix + "_histograms.csv";
    std::ofstream hist(hist_path);
    if (!hist) throw std::runtime_error("cannot open for writing: " + hist_path);
    hist << "observed_class,bin,bin_lo,bin_hi,clean_count,noisy_count\n";
    for (int c = 0; c < ds.num_classes; ++c) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (ds.observed_labels[i] != c) continue;
            lo = std::min(lo, sample_losses[i]);
            hi = std::max(hi, sample_losses[i]);
        }
        if (!(lo <= hi)) continue;  // empty class
        const double width = hi > lo ? (hi - lo) / bins : 1.0;
        std::vector<std::int64_t> clean_count(static_cast<std::size_t>(bins), 0);
        std::vector<std::int64_t> noisy_count(static_cast<std::size_t>(bins), 0);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (ds.observed_labels[i] != c) continue;
            auto bin = static_cast<std::size_t>((sample_losses[i] - lo) / width);
            bin = std::min(bin, static_cast<std::size_t>(bins - 1));
            if (ds.observed_labels[i] == (*ds.true_labels)[i]) {
                clean_count[bin] += 1;
            } else {
                noisy_count[bin] += 1;
            }
        }
        for (int b = 0; b < bins; ++b) {
            hist << c << ',' << b << ',' << format_double(lo + b * width) << ','
                 << format_double(lo + (b + 1) * width) << ','
                 << clean_count[static_cast<std::size_t>(b)] << ','
                 << noisy_count[static_cast<std::size_t>(b)] << '\n';
        }
    }
}

void export_per_class_accuracy(const EvalReport& report,
                               const std::vector<std::int64_t>& observed_counts,
                               const std::string& path) {
    const std::size_t c = report.per_class_accuracy.size();
    if (observed_counts.size() != c)
        throw std::invalid_argument("export_per_class_accuracy: counts length mismatch");
    std::vector<std::size_t> order(c);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return observed_counts[a] > observed_counts[b];
    });
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "class,train_count,test_accuracy\n";
    for (std::size_t k : order) {
        out << k << ',' << observed_counts[k] << ','
            << format_double(report.per_class_accuracy[k]) << '\n';
    }
}

namespace {

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

SeedOutcome outcome_of(const RunRecord& record) {
    SeedOutcome o;
    o.seed = record.seed;
    o.best = record.best_accuracy;
    o.last = record.last_accuracy;
    o.best_balanced = record.best_balanced_accuracy;
    o.last_balanced = record.last_balanced_accuracy;
    return o;
}

// Runs jobs 0..n-1 on `threads` workers; job order of completion is
// irrelevant because each job writes only its own slot.
void parallel_for_jobs(std::size_t n, int threads, const std::function<void(std::size_t)>& job) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const auto workers = static_cast<std::size_t>(threads);
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                job(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

template <typename Row>
void aggregate_outcomes(Row& row) {
    std::vector<double> best, last, best_bal, last_bal;
    for (const SeedOutcome& o : row.outcomes) {
        best.push_back(o.best);
        last.push_back(o.last);
        best_bal.push_back(o.best_balanced);
        last_bal.push_back(o.last_balanced);
    }
    row.mean_best = mean_of(best);
    row.mean_last = mean_of(last);
    row.median_best = median_of(best);
    row.median_last = median_of(last);
    if constexpr (requires { row.mean_best_balanced; }) {
        row.mean_best_balanced = mean_of(best_bal);
        row.mean_last_balanced = mean_of(last_bal);
        row.median_best_balanced = median_of(best_bal);
        row.median_last_balanced = median_of(last_bal);
    }
}

}  // namespace

AblationTable run_ablation_suite(const TrainConfig& base, const std::vector<Variant>& variants,
                                 const std::vector<std::uint64_t>& seeds,
                                 const LabeledDataset& train, const LabeledDataset& test,
                                 int threads) {
    if (seeds.empty()) throw std::invalid_argument("run_ablation_suite: need >= 1 seed");
    if (variants.empty()) throw std::invalid_argument("run_ablation_suite: need >= 1 variant");

    struct Job {
        std::size_t variant_idx;
        std::uint64_t seed;
        bool ok = false;
        SeedOutcome outcome;
        std::string error;
    };
    std::vector<Job> jobs;
    for (std::size_t v = 0; v < variants.size(); ++v) {
        for (std::uint64_t s : seeds) jobs.push_back(Job{v, s, false, {}, {}});
    }

    parallel_for_jobs(jobs.size(), threads, [&](std::size_t k) {
        Job& job = jobs[k];
        TrainConfig cfg = base;
        cfg.variant = variants[job.variant_idx];
        cfg.seed = job.seed;
        try {
            job.outcome = outcome_of(run_experiment(cfg, train, test));
            job.ok = true;
        } catch (const std::exception& e) {
            job.error = e.what();
        }
    });

    AblationTable table;
    table.seeds = seeds;
    for (std::size_t v = 0; v < variants.size(); ++v) {
        AblationRow row;
        row.variant = variant_name(variants[v]);
        row.complete = true;
        for (const Job& job : jobs) {
            if (job.variant_idx != v) continue;
            if (job.ok) {
                row.outcomes.push_back(job.outcome);
            } else {
                row.complete = false;
                if (row.error.empty()) row.error = job.error;
            }
        }
        if (!row.outcomes.empty()) aggregate_outcomes(row);
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string ablation_table_to_csv(const AblationTable& table) {
    std::string out =
        "variant,complete,mean_best,median_best,mean_last,median_last,"
        "mean_best_balanced,median_best_balanced,mean_last_balanced,median_last_balanced\n";
    for (const AblationRow& r : table.rows) {
        out += r.variant + "," + (r.complete ? "1" : "0") + "," + format_double(r.mean_best) +
               "," + format_double(r.median_best) + "," + format_double(r.mean_last) + "," +
               format_double(r.median_last) + "," + format_double(r.mean_best_balanced) + "," +
               format_double(r.median_best_balanced) + "," + format_double(r.mean_last_balanced) +
               "," + format_double(r.median_last_balanced) + "\n";
    }
    return out;
}

std::string ablation_table_to_json(const AblationTable& table) {
    nlohmann::ordered_json j;
    j["seeds"] = table.seeds;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const AblationRow& r : table.rows) {
        nlohmann::ordered_json row;
        row["variant"] = r.variant;
        row["complete"] = r.complete;
        if (!r.error.empty()) row["error"] = r.error;
        nlohmann::ordered_json outs = nlohmann::ordered_json::array();
        for (const SeedOutcome& o : r.outcomes) {
            outs.push_back({{"seed", o.seed},
                            {"best", o.best},
                            {"last", o.last},
                            {"best_balanced", o.best_balanced},
                            {"last_balanced", o.last_balanced}});
        }
        row["outcomes"] = std::move(outs);
        row["mean_best"] = r.mean_best;
        row["median_best"] = r.median_best;
        row["mean_last"] = r.mean_last;
        row["median_last"] = r.median_last;
        row["mean_best_balanced"] = r.mean_best_balanced;
        row["median_best_balanced"] = r.median_best_balanced;
        row["mean_last_balanced"] = r.mean_last_balanced;
        row["median_last_balanced"] = r.median_last_balanced;
        rows.push_back(std::move(row));
    }
    j["rows"] = std::move(rows);
    return j.dump(2) + "\n";
}

GammaSweepTable gamma_sweep(const TrainConfig& base,
                            const std::vector<std::pair<double, double>>& gamma_grid,
                            const std::vector<std::uint64_t>& seeds,
                            const LabeledDataset& train, const LabeledDataset& test,
                            int threads) {
    if (gamma_grid.empty()) throw std::invalid_argument("gamma_sweep: empty grid");
    if (seeds.empty()) throw std::invalid_argument("gamma_sweep: need >= 1 seed");

    struct Job {
        std::size_t cell;
        std::uint64_t seed;
        bool ok = false;
        SeedOutcome outcome;
        std::string error;
    };
    std::vector<Job> jobs;
    for (std::size_t g = 0; g < gamma_grid.size(); ++g) {
        for (std::uint64_t s : seeds) jobs.push_back(Job{g, s, false, {}, {}});
    }

    parallel_for_jobs(jobs.size(), threads, [&](std::size_t k) {
        Job& job = jobs[k];
        TrainConfig cfg = base;
        cfg.gamma_sup = gamma_grid[job.cell].first;
        cfg.gamma_rel = gamma_grid[job.cell].second;
        cfg.seed = job.seed;
        try {
            job.outcome = outcome_of(run_experiment(cfg, train, test));
            job.ok = true;
        } catch (const std::exception& e) {
            job.error = e.what();
        }
    });

    GammaSweepTable table;
    table.seeds = seeds;
    for (std::size_t g = 0; g < gamma_grid.size(); ++g) {
        GammaCell cell;
        cell.gamma_sup = gamma_grid[g].first;
        cell.gamma_rel = gamma_grid[g].second;
        cell.complete = true;
        for (const Job& job : jobs) {
            if (job.cell != g) continue;
            if (job.ok) {
                cell.outcomes.push_back(job.outcome);
            } else {
                cell.complete = false;
                if (cell.error.empty()) cell.error = job.error;
            }
        }
        if (!cell.outcomes.empty()) aggregate_outcomes(cell);
        table.cells.push_back(std::move(cell));
    }
    return table;
}

std::string gamma_sweep_to_csv(const GammaSweepTable& table) {
    std::string out = "gamma_sup,gamma_rel,complete,mean_best,median_best,mean_last,median_last\n";
    for (const GammaCell& c : table.cells) {
        out += format_double(c.gamma_sup) + "," + format_double(c.gamma_rel) + "," +
               (c.complete ? "1" : "0") + "," + format_double(c.mean_best) + "," +
               format_double(c.median_best) + "," + format_double(c.mean_last) + "," +
               format_double(c.median_last) + "\n";
    }
    return out;
}

}  // namespace taillab
