// taillab command-line front end: dataset generation, experiment/ablation/
// sweep runs, plotting, and the self-verification suite.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "taillab/config.hpp"
#include "taillab/harness.hpp"
#include "taillab/plot.hpp"

namespace fs = std::filesystem;
using namespace taillab;

namespace {

constexpr const char* kVersion = "0.1.0";

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::string variant;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "experiment config file");
    cmd->add_option("--out", flags.out_dir, "output directory (overrides config)");
    cmd->add_option("--variant", flags.variant, "trainer variant (overrides config)");
    cmd->add_option_function<std::uint64_t>(
        "--seed",
        [&flags](std::uint64_t v) {
            flags.seed = v;
            flags.seed_set = true;
        },
        "trainer seed (overrides config)");
    cmd->add_option("--threads", flags.threads, "worker threads for suite runs");
}

// Precedence: flags > config file > defaults (TAILLAB_OUT_DIR fills in for
// an unset output directory).
ExperimentConfig resolve_config(const CommonFlags& flags) {
    ExperimentConfig cfg = flags.config_path.empty()
                               ? parse_experiment_config("")
                               : load_experiment_config(flags.config_path);
    if (flags.seed_set) cfg.trainer.seed = flags.seed;
    if (!flags.variant.empty()) {
        const auto v = variant_from_name(flags.variant);
        if (!v) throw std::invalid_argument("config field trainer.variant: unknown variant '" +
                                            flags.variant + "'");
        cfg.trainer.variant = *v;
    }
    if (!flags.out_dir.empty()) cfg.harness.out_dir = flags.out_dir;
    if (cfg.harness.out_dir.empty()) {
        const char* env = std::getenv("TAILLAB_OUT_DIR");
        cfg.harness.out_dir = env != nullptr && *env != '\0' ? env : ".";
    }
    if (flags.threads > 0) cfg.harness.threads = flags.threads;
    return cfg;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_manifest(const ExperimentConfig& cfg, const fs::path& dir,
                    const std::string& command) {
    nlohmann::ordered_json m;
    m["artifact"] = "taillab";
    m["version"] = kVersion;
    m["command"] = command;
    m["config_hash"] = hex64(config_hash(cfg));
    m["seed"] = cfg.trainer.seed;
    m["variant"] = variant_name(cfg.trainer.variant);
    write_file(dir / "manifest.json", m.dump(2) + "\n");
}

fs::path ensure_out_dir(const ExperimentConfig& cfg) {
    fs::path dir(cfg.harness.out_dir);
    fs::create_directories(dir);
    return dir;
}

int cmd_gen_data(const CommonFlags& flags) {
    const ExperimentConfig cfg = resolve_config(flags);
    const fs::path dir = ensure_out_dir(cfg);
    const DatasetPair data = build_datasets(cfg.dataset);
    save_dataset(data.train, (dir / "train.csv").string());
    save_dataset(data.test, (dir / "test.csv").string());
    write_manifest(cfg, dir, "gen-data");

    std::cout << "realized counts:";
    for (auto c : data.train.observed_counts) std::cout << ' ' << c;
    std::cout << '\n';
    double noise = 0.0;
    if (data.train.true_labels) {
        std::size_t flipped = 0;
        for (std::size_t i = 0; i < data.train.size(); ++i) {
            flipped += data.train.observed_labels[i] != (*data.train.true_labels)[i] ? 1 : 0;
        }
        noise = static_cast<double>(flipped) / static_cast<double>(data.train.size());
    }
    std::cout << "empirical noise rate: " << noise << '\n';
    std::cout << "status=ok cmd=gen-data n_train=" << data.train.size()
              << " n_test=" << data.test.size() << " noise=" << noise
              << " out=" << dir.string() << '\n';
    return 0;
}

int cmd_train(const CommonFlags& flags) {
    const ExperimentConfig cfg = resolve_config(flags);
    const fs::path dir = ensure_out_dir(cfg);
    const DatasetPair data = build_datasets(cfg.dataset);
    const RunRecord record = run_experiment(cfg.trainer, data.train, data.test);

    write_file(dir / "run.json", run_record_to_json(record));
    write_file(dir / "run.csv", run_record_to_csv(record));
    save_model(record.final_model, (dir / "model.txt").string());

    const EvalReport report = evaluate(record.final_model, data.test);
    export_per_class_accuracy(report, data.train.observed_counts,
                              (dir / "per_class.csv").string());
    if (data.train.true_labels && cfg.trainer.variant != Variant::erm) {
        const auto losses = sample_ce_losses(record.final_model, data.train);
        const Partition part = select(record.final_model, data.train, cfg.trainer.gmm);
        export_loss_histograms(losses, part, data.train, (dir / "losses").string());
        write_file(dir / "selection.json", partition_to_json(part));
    }
    write_manifest(cfg, dir, "train");

    std::cout << "status=ok cmd=train variant=" << record.variant << " seed=" << record.seed
              << " best=" << record.best_accuracy << " last=" << record.last_accuracy
              << " best_balanced=" << record.best_balanced_accuracy
              << " last_balanced=" << record.last_balanced_accuracy << " out=" << dir.string()
              << '\n';
    return 0;
}

int cmd_ablate(const CommonFlags& flags) {
    const ExperimentConfig cfg = resolve_config(flags);
    const fs::path dir = ensure_out_dir(cfg);
    const DatasetPair data = build_datasets(cfg.dataset);
    std::vector<Variant> variants;
    for (const auto& name : cfg.harness.variants) variants.push_back(*variant_from_name(name));
    const AblationTable table = run_ablation_suite(cfg.trainer, variants, cfg.harness.seeds,
                                                   data.train, data.test, cfg.harness.threads);
    write_file(dir / "ablation.csv", ablation_table_to_csv(table));
    write_file(dir / "ablation.json", ablation_table_to_json(table));
    write_manifest(cfg, dir, "ablate");

    bool all_complete = true;
    for (const auto& row : table.rows) {
        if (!row.complete) {
            all_complete = false;
            std::cerr << "incomplete variant " << row.variant << ": " << row.error << '\n';
        }
    }
    std::cout << "status=" << (all_complete ? "ok" : "incomplete") << " cmd=ablate rows="
              << table.rows.size() << " seeds=" << table.seeds.size()
              << " out=" << dir.string() << '\n';
    return all_complete ? 0 : 2;
}

int cmd_sweep(const CommonFlags& flags) {
    const ExperimentConfig cfg = resolve_config(flags);
    const fs::path dir = ensure_out_dir(cfg);
    const DatasetPair data = build_datasets(cfg.dataset);
    const GammaSweepTable table = gamma_sweep(cfg.trainer, cfg.harness.gamma_grid,
                                              cfg.harness.seeds, data.train, data.test,
                                              cfg.harness.threads);
    write_file(dir / "sweep.csv", gamma_sweep_to_csv(table));
    write_manifest(cfg, dir, "sweep");

    bool all_complete = true;
    for (const auto& cell : table.cells) all_complete = all_complete && cell.complete;
    std::cout << "status=" << (all_complete ? "ok" : "incomplete") << " cmd=sweep cells="
              << table.cells.size() << " out=" << dir.string() << '\n';
    return all_complete ? 0 : 2;
}

int cmd_plot(const std::string& run_dir, const std::string& kind) {
    const fs::path dir(run_dir);
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p);
        if (!in) throw std::runtime_error("missing input: " + p.string());
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    };
    if (kind == "curves") {
        write_file(dir / "curves.svg", svg_accuracy_curves(slurp(dir / "run.csv")));
    } else if (kind == "scatter") {
        write_file(dir / "scatter.svg", svg_per_class_scatter(slurp(dir / "per_class.csv")));
    } else if (kind == "hist") {
        write_file(dir / "hist.svg", svg_loss_histograms(slurp(dir / "losses_histograms.csv")));
    } else {
        std::cerr << "unknown plot kind '" << kind << "'; valid kinds: curves, scatter, hist\n";
        return 1;
    }
    std::cout << "status=ok cmd=plot kind=" << kind << " out=" << run_dir << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// selftest

struct CheckReporter {
    bool all_ok = true;

    void run(const std::string& name, bool ok, double seconds) {
        std::printf("%-52s %s (%.2fs)\n", name.c_str(), ok ? "[PASS]" : "[FAIL]", seconds);
        all_ok = all_ok && ok;
    }

    template <typename Fn>
    void timed(const std::string& name, Fn&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        bool ok = false;
        try {
            ok = fn();
        } catch (const std::exception& e) {
            std::printf("  exception: %s\n", e.what());
        }
        const double dt =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        run(name, ok, dt);
    }
};

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
        const double denom =
            std::max({std::abs(a.data()[i]), std::abs(b.data()[i]), 1e-3});
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / denom);
    }
    return worst;
}

bool gradient_checks(bool& canary_ok) {
    Rng rng(2025);
    auto random_logits = [&](std::size_t b, std::size_t c) {
        Matrix m(b, c);
        for (double& v : m.data()) v = rng.uniform(-3, 3);
        return m;
    };
    auto random_labels = [&](std::size_t b, std::size_t c) {
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
    };

    bool ok = true;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t c = trial % 2 == 0 ? 3 : 10;
        const std::size_t b = trial % 3 == 0 ? 1 : 8;
        const Matrix logits = random_logits(b, c);
        const Matrix q = random_labels(b, c);

        const auto ce = ce_loss_soft(logits, q);
        ok = ok && max_rel_err(ce.dlogits, fd_gradient([&](const Matrix& l) {
                       return ce_loss_soft(l, q).value;
                   }, logits)) <= 1e-5;

        const auto mse = mse_loss(logits, q);
        ok = ok && max_rel_err(mse.dlogits, fd_gradient([&](const Matrix& l) {
                       return mse_loss(l, q).value;
                   }, logits)) <= 1e-5;

        Matrix alpha(c, c, 1.0);
        for (std::size_t i = 0; i < c; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                if (i != j) alpha(i, j) = std::exp(rng.uniform(-1.5, 1.5));
            }
        }
        const auto bal = balanced_loss(logits, q, alpha);
        ok = ok && max_rel_err(bal.dlogits, fd_gradient([&](const Matrix& l) {
                       return balanced_loss(l, q, alpha).value;
                   }, logits)) <= 1e-5;

        std::vector<int> labels(b);
        for (auto& y : labels) y = static_cast<int>(rng.uniform_index(c));
        std::vector<std::int64_t> counts(c);
        for (auto& n : counts) n = 1 + static_cast<std::int64_t>(rng.uniform_index(500));
        const auto reg = reg_loss(logits, labels, counts);
        ok = ok && max_rel_err(reg.dlogits, fd_gradient([&](const Matrix& l) {
                       return reg_loss(l, labels, counts).value;
                   }, logits)) <= 1e-5;
    }

    // the checker must catch a deliberately broken gradient
    {
        const Matrix logits = random_logits(4, 5);
        const Matrix q = random_labels(4, 5);
        Matrix alpha(5, 5, 1.0);
        detail::balanced_loss_gradient_sign_flip = true;
        const auto broken = balanced_loss(logits, q, alpha);
        detail::balanced_loss_gradient_sign_flip = false;
        canary_ok = max_rel_err(broken.dlogits, fd_gradient([&](const Matrix& l) {
                        return balanced_loss(l, q, alpha).value;
                    }, logits)) > 1e-5;
    }
    return ok;
}

bool gmm_checks() {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> values;
        const std::size_t n = 20 + rng.uniform_index(200);
        for (std::size_t i = 0; i < n; ++i) {
            values.push_back(rng.uniform01() < 0.6 ? rng.normal(0.3, 0.1)
                                                   : rng.normal(2.0, 0.5));
        }
        const GmmFit fit = fit_gmm2(values);
        for (std::size_t k = 1; k < fit.ll_trace.size(); ++k) {
            if (fit.ll_trace[k] < fit.ll_trace[k - 1] - 1e-9) return false;
        }
    }
    std::vector<double> planted;
    for (int i = 0; i < 300; ++i) planted.push_back(rng.normal(0.1, 0.05));
    for (int i = 0; i < 200; ++i) planted.push_back(rng.normal(3.0, 0.3));
    const GmmFit fit = fit_gmm2(planted);
    if (std::abs(fit.mean_clean - 0.1) / 0.1 > 0.10) return false;
    if (std::abs(fit.mean_noisy - 3.0) / 3.0 > 0.10) return false;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < planted.size(); ++i) {
        const bool predicted = posterior_clean(fit, planted[i]) > 0.5;
        correct += predicted == (i < 300) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(planted.size()) >= 0.99;
}

bool datagen_checks() {
    const auto counts = make_long_tail_counts(std::vector<std::int64_t>(10, 500), 100.0);
    if (counts.front() != 500 || counts.back() != 5 || counts[1] != 299) return false;

    const BlobSpec spec = make_blob_spec(4, 3, 4.0, 0.5, 12);
    const auto ds = generate_blobs(spec, {4000, 3000, 2000, 1000});
    const Matrix t = build_symmetric_transition(ds.observed_counts, 0.2);
    const auto noisy = corrupt_labels(ds, t, 99);
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < noisy.size(); ++i) {
        flipped += noisy.observed_labels[i] != (*noisy.true_labels)[i] ? 1 : 0;
    }
    const double rate = static_cast<double>(flipped) / static_cast<double>(noisy.size());
    return std::abs(rate - 0.2) <= 0.02;
}

bool erm_equivalence_check() {
    DatasetConfig dcfg;
    dcfg.num_classes = 3;
    dcfg.dim = 4;
    dcfg.base_count = 30;
    dcfg.imbalance_ratio = 4.0;
    dcfg.noise_rate = 0.3;
    dcfg.center_scale = 4.0;
    dcfg.cluster_stddev = 0.6;
    dcfg.test_per_class = 20;
    dcfg.seed = 7;
    const DatasetPair data = build_datasets(dcfg);

    TrainConfig off;
    off.variant = Variant::no_rebalance;
    off.epochs_total = 10;
    off.bias_epochs = 7;
    off.warmup_epochs = 3;
    off.batch_size = 16;
    off.hidden_dims = {12};
    off.optimizer.drop_epoch = 7;
    off.lambda_warm = 0.0;
    off.lambda_reg = 0.0;
    off.ssl.lambda_u = 0.0;
    off.ssl.augment_stddev = 0.0;
    off.ssl.num_augmentations = 1;
    off.ssl.sharpen_temperature = 1.0;
    off.ssl.identity_mix = true;
    off.force_all_clean = true;
    off.seed = 5;

    TrainConfig erm = off;
    erm.variant = Variant::erm;

    const RunRecord a = run_experiment(off, data.train, data.test);
    const RunRecord b = run_experiment(erm, data.train, data.test);
    for (std::size_t l = 0; l < a.final_model.num_layers(); ++l) {
        if (!(a.final_model.weights[l] == b.final_model.weights[l])) return false;
        if (a.final_model.biases[l] != b.final_model.biases[l]) return false;
    }
    return true;
}

bool rebalance_invariant_checks() {
    Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t c = 2 + rng.uniform_index(8);
        Matrix ema(c, c);
        for (double& v : ema.data()) v = rng.uniform01() + 1e-3;
        const Matrix r = ratio_matrix(ema);
        const Matrix a = alpha_matrix(r, 3.0, 1.0);
        for (std::size_t i = 0; i < c; ++i) {
            if (r(i, i) != 1.0 || a(i, i) != 1.0) return false;
            for (std::size_t j = 0; j < c; ++j) {
                if (std::abs(r(i, j) * r(j, i) - 1.0) > 1e-9) return false;
                if (r(i, j) > 1.0 && !(a(i, j) > 1.0 && a(j, i) < 1.0)) return false;
            }
        }
    }
    Matrix r(2, 2, 1.0);
    r(0, 1) = 2.0;
    r(1, 0) = 0.5;
    const Matrix a = alpha_matrix(r, 3.0, 1.0);
    return a(0, 1) == 8.0 && a(1, 0) == 0.5;
}

int cmd_selftest() {
    CheckReporter report;
    bool canary_ok = false;
    report.timed("loss gradients vs central finite differences",
                 [&] { return gradient_checks(canary_ok); });
    report.run("gradient checker catches an injected sign flip", canary_ok, 0.0);
    report.timed("GMM likelihood monotonicity and planted recovery", [&] { return gmm_checks(); });
    report.timed("data generator statistics", [&] { return datagen_checks(); });
    report.timed("all-knobs-off pipeline equals the ERM loop",
                 [&] { return erm_equivalence_check(); });
    report.timed("R/alpha rebalance invariants", [&] { return rebalance_invariant_checks(); });
    std::cout << (report.all_ok ? "status=ok" : "status=fail") << " cmd=selftest\n";
    return report.all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"taillab: learning from long-tailed noisy data, batch experiments"};
    app.require_subcommand(1);

    CommonFlags gen_flags, train_flags, ablate_flags, sweep_flags;
    auto* gen = app.add_subcommand("gen-data", "generate train/test dataset files");
    add_common_flags(gen, gen_flags);
    auto* train = app.add_subcommand("train", "run one experiment");
    add_common_flags(train, train_flags);
    auto* ablate = app.add_subcommand("ablate", "run the variant ablation suite");
    add_common_flags(ablate, ablate_flags);
    auto* sweep = app.add_subcommand("sweep", "run the gamma grid sweep");
    add_common_flags(sweep, sweep_flags);

    std::string plot_dir, plot_kind;
    auto* plot = app.add_subcommand("plot", "render SVG plots from run outputs");
    plot->add_option("run_dir", plot_dir, "directory with run outputs")->required();
    plot->add_option("kind", plot_kind, "curves | scatter | hist")->required();

    app.add_subcommand("selftest", "run the built-in verification suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_flags);
        if (train->parsed()) return cmd_train(train_flags);
        if (ablate->parsed()) return cmd_ablate(ablate_flags);
        if (sweep->parsed()) return cmd_sweep(sweep_flags);
        if (plot->parsed()) return cmd_plot(plot_dir, plot_kind);
        return cmd_selftest();
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
