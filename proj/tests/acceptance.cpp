// Acceptance suite: runs every release criterion at its pinned tolerance and
// prints one PASS/FAIL line per criterion. Exits nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "taillab/config.hpp"
#include "taillab/datagen.hpp"
#include "taillab/harness.hpp"
#include "taillab/trainer.hpp"

using namespace taillab;

namespace {

struct Criterion {
    int id;
    std::string name;
    bool ok;
    double seconds;
    std::string detail;
};

std::vector<Criterion> g_results;

void report(int id, const std::string& name, bool ok, double seconds,
            const std::string& detail) {
    g_results.push_back({id, name, ok, seconds, detail});
    std::printf("[%d/9] %s  %s (%.1fs)%s%s\n", id, ok ? "PASS" : "FAIL", name.c_str(), seconds,
                detail.empty() ? "" : "  -- ", detail.c_str());
    std::fflush(stdout);
}

template <typename Fn>
void criterion(int id, const std::string& name, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    std::string detail;
    try {
        ok = fn(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    const double dt =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(id, name, ok, dt, detail);
}

Matrix fd_gradient(const std::function<double(const Matrix&)>& f, const Matrix& at) {
    const double h = 1e-5;
    Matrix grad(at.rows(), at.cols());
    Matrix probe = at;
    for (std::size_t i = 0; i < at.size(); ++i) {
        const double saved = probe.data()[i];
        probe.data()[i] = saved + h;
        const double up = f(probe);
        probe.data()[i] = saved - h;
        const double down = f(probe);
        probe.data()[i] = saved;
        grad.data()[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double max_rel_err(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a.data()[i]), std::abs(b.data()[i]), 1e-3});
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / denom);
    }
    return worst;
}

Matrix random_logits(Rng& rng, std::size_t b, std::size_t c) {
    Matrix m(b, c);
    for (double& v : m.data()) v = rng.uniform(-3, 3);
    return m;
}

Matrix random_soft_labels(Rng& rng, std::size_t b, std::size_t c) {
    Matrix m(b, c);
    for (std::size_t i = 0; i < b; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            m(i, j) = -std::log(1.0 - rng.uniform01());
            sum += m(i, j);
        }
        for (std::size_t j = 0; j < c; ++j) m(i, j) /= sum;
    }
    return m;
}

// ---------------------------------------------------------------------------

bool criterion_gradients(std::string& detail) {
    Rng rng(101);
    double worst = 0.0;
    const std::size_t cs[2] = {3, 10};
    const std::size_t bs[2] = {1, 8};
    for (int probe = 0; probe < 100; ++probe) {
        const std::size_t c = cs[probe % 2];
        const std::size_t b = bs[(probe / 2) % 2];
        const Matrix logits = random_logits(rng, b, c);
        const Matrix q = random_soft_labels(rng, b, c);

        const auto ce = ce_loss_soft(logits, q);
        worst = std::max(worst, max_rel_err(ce.dlogits, fd_gradient([&](const Matrix& l) {
                             return ce_loss_soft(l, q).value;
                         }, logits)));

        const auto mse = mse_loss(logits, q);
        worst = std::max(worst, max_rel_err(mse.dlogits, fd_gradient([&](const Matrix& l) {
                             return mse_loss(l, q).value;
                         }, logits)));

        Matrix alpha(c, c, 1.0);
        for (std::size_t i = 0; i < c; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                if (i != j) alpha(i, j) = std::exp(rng.uniform(-1.5, 1.5));
            }
        }
        const auto bal = balanced_loss(logits, q, alpha);
        worst = std::max(worst, max_rel_err(bal.dlogits, fd_gradient([&](const Matrix& l) {
                             return balanced_loss(l, q, alpha).value;
                         }, logits)));

        std::vector<int> labels(b);
        for (auto& y : labels) y = static_cast<int>(rng.uniform_index(c));
        std::vector<std::int64_t> counts(c);
        for (auto& n : counts) n = 1 + static_cast<std::int64_t>(rng.uniform_index(500));
        const auto reg = reg_loss(logits, labels, counts);
        worst = std::max(worst, max_rel_err(reg.dlogits, fd_gradient([&](const Matrix& l) {
                             return reg_loss(l, labels, counts).value;
                         }, logits)));
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max rel err %.2e over 100 probes x 4 losses", worst);
    detail = buf;
    return worst <= 1e-5;
}

bool criterion_reductions(std::string& detail) {
    Rng rng(211);
    double worst_value = 0.0, worst_grad = 0.0;
    for (int probe = 0; probe < 1000; ++probe) {
        const std::size_t c = 2 + rng.uniform_index(9);
        const std::size_t b = 1 + rng.uniform_index(8);
        const Matrix logits = random_logits(rng, b, c);
        const Matrix q = random_soft_labels(rng, b, c);
        const Matrix ones(c, c, 1.0);
        const auto bal = balanced_loss(logits, q, ones);
        const auto ce = ce_loss_soft(logits, q);
        worst_value = std::max(worst_value, std::abs(bal.value - ce.value));
        for (std::size_t i = 0; i < bal.dlogits.size(); ++i) {
            worst_grad = std::max(worst_grad,
                                  std::abs(bal.dlogits.data()[i] - ce.dlogits.data()[i]));
        }
        // sharpening at T = 1 is the exact identity
        std::vector<double> row(q.row(0).begin(), q.row(0).end());
        if (sharpen(row, 1.0) != row) return false;
    }
    if (worst_value > 1e-12 || worst_grad > 1e-12) {
        detail = "balanced(1) vs CE diverged";
        return false;
    }

    // all-knobs-off pipeline vs ERM, 20 epochs, fixed seed
    const DatasetPair data = build_datasets(DatasetConfig{});
    TrainConfig off;
    off.variant = Variant::no_rebalance;
    off.epochs_total = 20;
    off.bias_epochs = 15;
    off.warmup_epochs = 5;
    off.optimizer.drop_epoch = 15;
    off.lambda_warm = 0.0;
    off.lambda_reg = 0.0;
    off.ssl.lambda_u = 0.0;
    off.ssl.augment_stddev = 0.0;
    off.ssl.num_augmentations = 1;
    off.ssl.sharpen_temperature = 1.0;
    off.ssl.identity_mix = true;
    off.force_all_clean = true;
    off.seed = 17;
    TrainConfig erm = off;
    erm.variant = Variant::erm;
    const RunRecord a = run_experiment(off, data.train, data.test);
    const RunRecord b = run_experiment(erm, data.train, data.test);
    for (std::size_t l = 0; l < a.final_model.num_layers(); ++l) {
        if (!(a.final_model.weights[l] == b.final_model.weights[l]) ||
            a.final_model.biases[l] != b.final_model.biases[l]) {
            detail = "knobs-off trajectory diverged from ERM";
            return false;
        }
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max |balanced(1)-CE| %.1e; 20-epoch trajectories identical",
                  worst_value);
    detail = buf;
    return true;
}

bool criterion_gmm(std::string& detail) {
    Rng rng(307);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> values;
        const std::size_t n = 10 + rng.uniform_index(400);
        const int shape = static_cast<int>(rng.uniform_index(3));
        for (std::size_t i = 0; i < n; ++i) {
            if (shape == 0) values.push_back(rng.uniform(0.0, 4.0));
            else if (shape == 1) values.push_back(std::exp(rng.normal(0.0, 0.8)));
            else values.push_back(rng.uniform01() < 0.6 ? rng.normal(0.3, 0.1)
                                                        : rng.normal(2.0, 0.5));
        }
        const GmmFit fit = fit_gmm2(values);
        for (std::size_t k = 1; k < fit.ll_trace.size(); ++k) {
            if (fit.ll_trace[k] < fit.ll_trace[k - 1] - 1e-9) {
                detail = "log-likelihood decreased";
                return false;
            }
        }
    }

    std::vector<double> planted;
    for (int i = 0; i < 300; ++i) planted.push_back(rng.normal(0.1, 0.05));
    for (int i = 0; i < 200; ++i) planted.push_back(rng.normal(3.0, 0.3));
    const GmmFit fit = fit_gmm2(planted);
    const double err_clean = std::abs(fit.mean_clean - 0.1) / 0.1;
    const double err_noisy = std::abs(fit.mean_noisy - 3.0) / 3.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < planted.size(); ++i) {
        correct += (posterior_clean(fit, planted[i]) > 0.5) == (i < 300) ? 1 : 0;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(planted.size());
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "means (%.4f, %.4f) rel err (%.1f%%, %.1f%%), membership %.1f%%",
                  fit.mean_clean, fit.mean_noisy, 100 * err_clean, 100 * err_noisy, 100 * acc);
    detail = buf;
    return err_clean <= 0.10 && err_noisy <= 0.10 && acc >= 0.99;
}

bool criterion_datagen(std::string& detail) {
    const auto counts = make_long_tail_counts(std::vector<std::int64_t>(10, 500), 100.0);
    const std::vector<std::int64_t> expected = {500, 299, 179, 107, 64, 38, 23, 13, 8, 5};
    if (counts != expected) {
        detail = "long-tail profile mismatch";
        return false;
    }

    // N = 10,000 corruption statistics at r in {0.2, 0.5}
    const BlobSpec spec = make_blob_spec(4, 2, 4.0, 0.4, 401);
    const auto ds = generate_blobs(spec, {4000, 3000, 2000, 1000});
    const double chi2_crit_df2 = 9.21034;  // significance 0.01
    std::string rates;
    for (double r : {0.2, 0.5}) {
        const Matrix t = build_symmetric_transition(ds.observed_counts, r);
        const auto noisy = corrupt_labels(ds, t, 4099);
        std::size_t flipped_total = 0;
        for (std::size_t i = 0; i < noisy.size(); ++i) {
            flipped_total += noisy.observed_labels[i] != (*noisy.true_labels)[i] ? 1 : 0;
        }
        const double rate =
            static_cast<double>(flipped_total) / static_cast<double>(noisy.size());
        rates += (rates.empty() ? "rates " : ", ") + std::to_string(rate);
        if (std::abs(rate - r) > 0.02) {
            detail = "empirical rate off: " + std::to_string(rate);
            return false;
        }
        for (int src = 0; src < 4; ++src) {
            double flipped = 0.0;
            std::vector<double> observed(4, 0.0);
            for (std::size_t i = 0; i < noisy.size(); ++i) {
                if ((*noisy.true_labels)[i] != src) continue;
                if (noisy.observed_labels[i] == src) continue;
                observed[static_cast<std::size_t>(noisy.observed_labels[i])] += 1.0;
                flipped += 1.0;
            }
            double total_others = 0.0;
            for (int j = 0; j < 4; ++j) {
                if (j != src) total_others += static_cast<double>(ds.observed_counts[j]);
            }
            double stat = 0.0;
            for (int j = 0; j < 4; ++j) {
                if (j == src) continue;
                const double e = flipped * static_cast<double>(ds.observed_counts[j]) /
                                 total_others;
                stat += (observed[j] - e) * (observed[j] - e) / e;
            }
            if (stat >= chi2_crit_df2) {
                detail = "chi-square failed for source class " + std::to_string(src) +
                         " at r=" + std::to_string(r) + " (stat " + std::to_string(stat) + ")";
                return false;
            }
        }
    }
    detail = "profile exact; " + rates;
    return true;
}

bool criterion_bias(std::string& detail) {
    Rng rng(503);
    // normalized epoch rows are probability vectors (sigma = 0 exposes them)
    for (int trial = 0; trial < 20; ++trial) {
        const int c = 2 + static_cast<int>(rng.uniform_index(9));
        BiasState state = make_bias_state(c, 0.0);
        for (int k = 0; k < 30; ++k) {
            Matrix probs(1, static_cast<std::size_t>(c));
            double sum = 0.0;
            for (std::size_t j = 0; j < static_cast<std::size_t>(c); ++j) {
                probs(0, j) = rng.uniform01() + 1e-4;
                sum += probs(0, j);
            }
            for (std::size_t j = 0; j < static_cast<std::size_t>(c); ++j) probs(0, j) /= sum;
            accumulate(state, probs, {static_cast<int>(rng.uniform_index(
                                         static_cast<std::size_t>(c)))});
        }
        finalize_epoch(state);
        for (std::size_t i = 0; i < static_cast<std::size_t>(c); ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < static_cast<std::size_t>(c); ++j) {
                if (state.ema_matrix(i, j) <= 0.0) {
                    detail = "non-positive normalized row entry";
                    return false;
                }
                sum += state.ema_matrix(i, j);
            }
            if (std::abs(sum - 1.0) > 1e-9) {
                detail = "normalized row does not sum to 1";
                return false;
            }
        }

        const Matrix r = ratio_matrix(state.ema_matrix);
        Matrix scaled = state.ema_matrix;
        for (double& v : scaled.data()) v *= 4.0;  // power of two: bit-exact
        if (!(ratio_matrix(scaled) == r)) {
            detail = "scale invariance violated";
            return false;
        }
        for (std::size_t i = 0; i < r.rows(); ++i) {
            if (r(i, i) != 1.0) {
                detail = "R diagonal not 1";
                return false;
            }
            for (std::size_t j = 0; j < r.cols(); ++j) {
                if (std::abs(r(i, j) * r(j, i) - 1.0) > 1e-9) {
                    detail = "R_ij R_ji != 1";
                    return false;
                }
            }
        }
        const Matrix a = alpha_matrix(r, 3.0, 1.0);
        for (std::size_t i = 0; i < r.rows(); ++i) {
            for (std::size_t j = 0; j < r.cols(); ++j) {
                if (i == j) continue;
                if (r(i, j) > 1.0 && !(a(i, j) > 1.0 && a(j, i) < 1.0)) {
                    detail = "suppress/relax dichotomy violated";
                    return false;
                }
            }
        }
    }
    Matrix r2(2, 2, 1.0);
    r2(0, 1) = 2.0;
    r2(1, 0) = 0.5;
    const Matrix a2 = alpha_matrix(r2, 3.0, 1.0);
    if (a2(0, 1) != 8.0 || a2(1, 0) != 0.5) {
        detail = "hand alpha values mismatch";
        return false;
    }
    detail = "rows stochastic, R identities exact, alpha(R=2,g=3)=8";
    return true;
}

// Shared state for criteria 6-9: the standard benchmark runs.
struct BenchmarkRuns {
    std::vector<RunRecord> ssbl, erm, no_rebalance, single_gmm;
    std::vector<double> run_seconds;
    DatasetPair data;
};

BenchmarkRuns g_bench;

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

bool criterion_benchmark(std::string& detail) {
    g_bench.data = build_datasets(DatasetConfig{});  // the standard synthetic benchmark
    const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

    double total = 0.0, worst = 0.0;
    for (Variant v : {Variant::ssbl, Variant::erm}) {
        for (std::uint64_t s : seeds) {
            TrainConfig cfg;
            cfg.variant = v;
            cfg.seed = s;
            const auto t0 = std::chrono::steady_clock::now();
            RunRecord r = run_experiment(cfg, g_bench.data.train, g_bench.data.test);
            const double dt =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            total += dt;
            worst = std::max(worst, dt);
            g_bench.run_seconds.push_back(dt);
            (v == Variant::ssbl ? g_bench.ssbl : g_bench.erm).push_back(std::move(r));
        }
    }

    int wins = 0;
    std::vector<double> ssbl_last, erm_last;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
        ssbl_last.push_back(g_bench.ssbl[k].last_balanced_accuracy);
        erm_last.push_back(g_bench.erm[k].last_balanced_accuracy);
        wins += g_bench.ssbl[k].last_balanced_accuracy >
                        g_bench.erm[k].last_balanced_accuracy
                    ? 1
                    : 0;
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "wins %d/5, medians ssbl %.3f vs erm %.3f, total %.0fs, worst run %.0fs",
                  wins, median(ssbl_last), median(erm_last), total, worst);
    detail = buf;
    return wins >= 4 && median(ssbl_last) > median(erm_last) && total <= 1800.0 &&
           worst <= 300.0;
}

bool criterion_ablation(std::string& detail) {
    const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    for (Variant v : {Variant::no_rebalance, Variant::single_gmm}) {
        for (std::uint64_t s : seeds) {
            TrainConfig cfg;
            cfg.variant = v;
            cfg.seed = s;
            RunRecord r = run_experiment(cfg, g_bench.data.train, g_bench.data.test);
            (v == Variant::no_rebalance ? g_bench.no_rebalance : g_bench.single_gmm)
                .push_back(std::move(r));
        }
    }
    std::vector<double> ssbl_last, noreb_last, sg_last;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
        ssbl_last.push_back(g_bench.ssbl[k].last_balanced_accuracy);
        noreb_last.push_back(g_bench.no_rebalance[k].last_balanced_accuracy);
        sg_last.push_back(g_bench.single_gmm[k].last_balanced_accuracy);
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "medians: ssbl %.3f, no_rebalance %.3f, single_gmm %.3f",
                  median(ssbl_last), median(noreb_last), median(sg_last));
    detail = buf;
    return median(ssbl_last) >= median(noreb_last) && median(ssbl_last) >= median(sg_last);
}

bool criterion_selection(std::string& detail) {
    int few_ok = 0, prec_ok = 0;
    for (const RunRecord& r : g_bench.ssbl) {
        if (!r.first_main_class_aware || !r.first_main_single_gmm) {
            detail = "missing first-main selection comparison";
            return false;
        }
        const SelectionQuality& ca = *r.first_main_class_aware;
        const SelectionQuality& sg = *r.first_main_single_gmm;
        few_ok += ca.few.recall >= sg.few.recall ? 1 : 0;
        prec_ok += ca.overall.precision >= sg.overall.precision - 0.02 ? 1 : 0;
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "few-split recall wins %d/5, precision within -0.02: %d/5",
                  few_ok, prec_ok);
    detail = buf;
    return few_ok >= 4 && prec_ok >= 4;
}

bool criterion_determinism(std::string& detail) {
    TrainConfig cfg;
    cfg.variant = Variant::ssbl;
    cfg.seed = 1;
    const RunRecord rerun = run_experiment(cfg, g_bench.data.train, g_bench.data.test);
    const std::string a = run_record_to_json(g_bench.ssbl[0]);
    const std::string b = run_record_to_json(rerun);
    detail = "rerun JSON " + std::to_string(b.size()) + " bytes";
    return a == b;
}

}  // namespace

int main() {
    std::printf("taillab acceptance suite\n");
    criterion(1, "gradient correctness (CE, MSE, balanced, regularizer)", criterion_gradients);
    criterion(2, "reduction identities and ERM equivalence", criterion_reductions);
    criterion(3, "GMM monotonicity and planted recovery", criterion_gmm);
    criterion(4, "data-generation statistics", criterion_datagen);
    criterion(5, "bias/rebalance invariants", criterion_bias);
    criterion(6, "benchmark: SSBL outperforms ERM (5 seeds)", criterion_benchmark);
    criterion(7, "ablation: SSBL >= no_rebalance, single_gmm (median)", criterion_ablation);
    criterion(8, "selection: class-aware vs single GMM at first main epoch",
              criterion_selection);
    criterion(9, "determinism: byte-identical rerun record", criterion_determinism);

    // runtime bounds pinned by the criteria themselves
    bool runtime_ok = true;
    for (const Criterion& c : g_results) {
        if (c.id == 1 && c.seconds >= 10.0) runtime_ok = false;
        if (c.id == 3 && c.seconds >= 5.0) runtime_ok = false;
    }
    if (!runtime_ok) {
        std::printf("runtime budget exceeded for criterion 1 or 3\n");
    }

    int failures = 0;
    for (const Criterion& c : g_results) failures += c.ok ? 0 : 1;
    std::printf("%d/9 criteria passed\n", 9 - failures);
    return (failures == 0 && runtime_ok) ? 0 : 1;
}
