#include "taillab/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "taillab/hash.hpp"
#include "taillab/rng.hpp"

namespace taillab {

namespace {

struct RawConfig {
    // section -> key -> value, with insertion-order key tracking for errors
    std::map<std::string, std::map<std::string, std::string>> values;
};

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

RawConfig tokenize(const std::string& text) {
    RawConfig raw;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            raw.values[section];
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": key outside any [section]");
        if (raw.values[section].count(key))
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": duplicate key " + section + "." + key);
        raw.values[section][key] = value;
    }
    return raw;
}

[[noreturn]] void bad_field(const std::string& path, const std::string& what) {
    throw std::invalid_argument("config field " + path + ": " + what);
}

class SectionReader {
public:
    SectionReader(RawConfig& raw, std::string section)
        : raw_(raw), section_(std::move(section)) {}

    bool has(const std::string& key) {
        auto sect = raw_.values.find(section_);
        if (sect == raw_.values.end()) return false;
        if (sect->second.count(key)) {
            consumed_.push_back(key);
            return true;
        }
        return false;
    }

    std::string str(const std::string& key) { return raw_.values[section_][key]; }

    template <typename T, typename Parser>
    void read(const std::string& key, T& out, Parser parse) {
        if (!has(key)) return;
        try {
            out = parse(str(key));
        } catch (const std::invalid_argument& e) {
            // re-raise with the field path attached
            bad_field(section_ + "." + key, e.what());
        } catch (...) {
            bad_field(section_ + "." + key, "unparsable value '" + str(key) + "'");
        }
    }

    void finish() {
        auto sect = raw_.values.find(section_);
        if (sect == raw_.values.end()) return;
        for (const auto& [key, value] : sect->second) {
            if (std::find(consumed_.begin(), consumed_.end(), key) == consumed_.end()) {
                bad_field(section_ + "." + key, "unknown key");
            }
        }
        raw_.values.erase(sect);
    }

private:
    RawConfig& raw_;
    std::string section_;
    std::vector<std::string> consumed_;
};

int parse_int(const std::string& s) {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
}

std::int64_t parse_i64(const std::string& s) {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
}

std::uint64_t parse_u64(const std::string& s) {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
}

double parse_real(const std::string& s) {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, ',')) parts.push_back(trim(cur));
    return parts;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    for (const auto& p : split_list(s)) out.push_back(parse_int(p));
    return out;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    for (const auto& p : split_list(s)) out.push_back(parse_u64(p));
    return out;
}

std::vector<std::pair<int, int>> parse_pair_list(const std::string& s) {
    std::vector<std::pair<int, int>> out;
    for (const auto& p : split_list(s)) {
        const std::size_t colon = p.find(':');
        if (colon == std::string::npos) throw std::invalid_argument("expected a:b pairs");
        out.emplace_back(parse_int(trim(p.substr(0, colon))),
                         parse_int(trim(p.substr(colon + 1))));
    }
    return out;
}

std::vector<std::pair<double, double>> parse_gamma_grid(const std::string& s) {
    std::vector<std::pair<double, double>> out;
    for (const auto& p : split_list(s)) {
        const std::size_t colon = p.find(':');
        if (colon == std::string::npos) throw std::invalid_argument("expected sup:rel pairs");
        out.emplace_back(parse_real(trim(p.substr(0, colon))),
                         parse_real(trim(p.substr(colon + 1))));
    }
    return out;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
    RawConfig raw = tokenize(text);
    ExperimentConfig cfg;

    {
        SectionReader s(raw, "dataset");
        s.read("num_classes", cfg.dataset.num_classes, parse_int);
        s.read("dim", cfg.dataset.dim, parse_int);
        s.read("base_count", cfg.dataset.base_count, parse_i64);
        s.read("imbalance_ratio", cfg.dataset.imbalance_ratio, parse_real);
        s.read("noise_kind", cfg.dataset.noise_kind, [](const std::string& v) {
            if (v != "symmetric" && v != "asymmetric" && v != "none")
                throw std::invalid_argument("must be symmetric, asymmetric or none");
            return v;
        });
        s.read("noise_rate", cfg.dataset.noise_rate, parse_real);
        s.read("asym_pairs", cfg.dataset.asym_pairs, parse_pair_list);
        s.read("asym_flip_rate", cfg.dataset.asym_flip_rate, parse_real);
        s.read("asym_step_ratio", cfg.dataset.asym_step_ratio, parse_real);
        s.read("center_scale", cfg.dataset.center_scale, parse_real);
        s.read("cluster_stddev", cfg.dataset.cluster_stddev, parse_real);
        s.read("test_per_class", cfg.dataset.test_per_class, parse_i64);
        s.read("seed", cfg.dataset.seed, parse_u64);
        s.read("train_path", cfg.dataset.train_path, [](const std::string& v) { return v; });
        s.read("test_path", cfg.dataset.test_path, [](const std::string& v) { return v; });
        s.finish();
    }

    bool bias_epochs_set = false;
    bool drop_epoch_set = false;
    bool warmup_set = false;
    {
        SectionReader s(raw, "model");
        s.read("hidden_dims", cfg.trainer.hidden_dims, parse_int_list);
        s.finish();
    }
    {
        SectionReader s(raw, "trainer");
        s.read("epochs_total", cfg.trainer.epochs_total, parse_int);
        bias_epochs_set = s.has("bias_epochs");
        if (bias_epochs_set) cfg.trainer.bias_epochs = parse_int(s.str("bias_epochs"));
        warmup_set = s.has("warmup_epochs");
        if (warmup_set) cfg.trainer.warmup_epochs = parse_int(s.str("warmup_epochs"));
        s.read("batch_size", cfg.trainer.batch_size, parse_int);
        s.read("lambda_warm", cfg.trainer.lambda_warm, parse_real);
        s.read("lambda_reg", cfg.trainer.lambda_reg, parse_real);
        s.read("ema_sigma", cfg.trainer.ema_sigma, parse_real);
        s.read("gamma_sup", cfg.trainer.gamma_sup, parse_real);
        s.read("gamma_rel", cfg.trainer.gamma_rel, parse_real);
        s.read("seed", cfg.trainer.seed, parse_u64);
        s.read("variant", cfg.trainer.variant, [](const std::string& v) {
            const auto parsed = variant_from_name(v);
            if (!parsed) throw std::invalid_argument("unknown variant '" + v + "'");
            return *parsed;
        });
        s.finish();
    }
    {
        SectionReader s(raw, "ssl");
        s.read("num_augmentations", cfg.trainer.ssl.num_augmentations, parse_int);
        s.read("sharpen_temperature", cfg.trainer.ssl.sharpen_temperature, parse_real);
        s.read("mixup_concentration", cfg.trainer.ssl.mixup_concentration, parse_real);
        s.read("augment_stddev", cfg.trainer.ssl.augment_stddev, parse_real);
        s.read("lambda_u", cfg.trainer.ssl.lambda_u, parse_real);
        s.finish();
    }
    {
        SectionReader s(raw, "optimizer");
        s.read("momentum", cfg.trainer.optimizer.momentum, parse_real);
        s.read("weight_decay", cfg.trainer.optimizer.weight_decay, parse_real);
        s.read("initial_lr", cfg.trainer.optimizer.initial_lr, parse_real);
        drop_epoch_set = s.has("drop_epoch");
        if (drop_epoch_set) cfg.trainer.optimizer.drop_epoch = parse_int(s.str("drop_epoch"));
        s.read("drop_factor", cfg.trainer.optimizer.drop_factor, parse_real);
        s.finish();
    }
    {
        SectionReader s(raw, "harness");
        s.read("out_dir", cfg.harness.out_dir, [](const std::string& v) { return v; });
        s.read("many_gt", cfg.harness.splits.many_gt, parse_i64);
        s.read("few_lt", cfg.harness.splits.few_lt, parse_i64);
        s.read("seeds", cfg.harness.seeds, parse_u64_list);
        s.read("variants", cfg.harness.variants, [](const std::string& v) {
            auto names = split_list(v);
            for (const auto& n : names) {
                if (!variant_from_name(n))
                    throw std::invalid_argument("unknown variant '" + n + "'");
            }
            return names;
        });
        s.read("gamma_grid", cfg.harness.gamma_grid, parse_gamma_grid);
        s.read("threads", cfg.harness.threads, parse_int);
        s.finish();
    }

    for (const auto& [section, keys] : raw.values) {
        (void)keys;
        bad_field(section, "unknown section");
    }

    // Appendix-style derived defaults: the bias deadline and the lr drop sit
    // at 3/4 of the schedule unless pinned explicitly.
    if (!bias_epochs_set) cfg.trainer.bias_epochs = cfg.trainer.epochs_total * 3 / 4;
    if (!drop_epoch_set) cfg.trainer.optimizer.drop_epoch = cfg.trainer.epochs_total * 3 / 4;
    if (!warmup_set) cfg.trainer.warmup_epochs = std::min(10, cfg.trainer.bias_epochs);
    cfg.trainer.splits = cfg.harness.splits;

    // Revalidate field constraints eagerly so errors carry the field path.
    if (cfg.dataset.num_classes < 2) bad_field("dataset.num_classes", "must be >= 2");
    if (cfg.dataset.dim < 1) bad_field("dataset.dim", "must be >= 1");
    if (cfg.dataset.base_count < 1) bad_field("dataset.base_count", "must be >= 1");
    if (!(cfg.dataset.imbalance_ratio >= 1.0)) bad_field("dataset.imbalance_ratio", "must be >= 1");
    if (cfg.dataset.noise_rate < 0.0 || cfg.dataset.noise_rate > 1.0)
        bad_field("dataset.noise_rate", "must be in [0,1]");
    if (!(cfg.dataset.cluster_stddev > 0.0)) bad_field("dataset.cluster_stddev", "must be > 0");
    if (cfg.dataset.test_per_class < 1) bad_field("dataset.test_per_class", "must be >= 1");
    if (cfg.trainer.epochs_total < 1) bad_field("trainer.epochs_total", "must be >= 1");
    if (cfg.trainer.batch_size < 1) bad_field("trainer.batch_size", "must be >= 1");
    if (cfg.trainer.warmup_epochs < 0 || cfg.trainer.warmup_epochs > cfg.trainer.bias_epochs ||
        cfg.trainer.bias_epochs > cfg.trainer.epochs_total)
        bad_field("trainer.bias_epochs",
                  "need 0 <= warmup_epochs <= bias_epochs <= epochs_total");
    if (cfg.trainer.lambda_warm < 0.0) bad_field("trainer.lambda_warm", "must be >= 0");
    if (cfg.trainer.lambda_reg < 0.0) bad_field("trainer.lambda_reg", "must be >= 0");
    if (!(cfg.trainer.ema_sigma >= 0.0 && cfg.trainer.ema_sigma < 1.0))
        bad_field("trainer.ema_sigma", "must be in [0,1)");
    if (cfg.trainer.gamma_sup < 0.0) bad_field("trainer.gamma_sup", "must be >= 0");
    if (cfg.trainer.gamma_rel < 0.0) bad_field("trainer.gamma_rel", "must be >= 0");
    for (int h : cfg.trainer.hidden_dims) {
        if (h < 1) bad_field("model.hidden_dims", "entries must be >= 1");
    }
    if (cfg.trainer.ssl.num_augmentations < 1) bad_field("ssl.num_augmentations", "must be >= 1");
    if (!(cfg.trainer.ssl.sharpen_temperature > 0.0))
        bad_field("ssl.sharpen_temperature", "must be > 0");
    if (!(cfg.trainer.ssl.mixup_concentration > 0.0))
        bad_field("ssl.mixup_concentration", "must be > 0");
    if (cfg.trainer.ssl.augment_stddev < 0.0) bad_field("ssl.augment_stddev", "must be >= 0");
    if (cfg.trainer.ssl.lambda_u < 0.0) bad_field("ssl.lambda_u", "must be >= 0");
    if (cfg.harness.seeds.empty()) bad_field("harness.seeds", "need at least one seed");
    if (cfg.harness.threads < 1) bad_field("harness.threads", "must be >= 1");

    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse_experiment_config(text.str());
}

std::string canonical_config_string(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "dataset.num_classes=" << cfg.dataset.num_classes << '\n'
        << "dataset.dim=" << cfg.dataset.dim << '\n'
        << "dataset.base_count=" << cfg.dataset.base_count << '\n'
        << "dataset.imbalance_ratio=" << format_double(cfg.dataset.imbalance_ratio) << '\n'
        << "dataset.noise_kind=" << cfg.dataset.noise_kind << '\n'
        << "dataset.noise_rate=" << format_double(cfg.dataset.noise_rate) << '\n';
    out << "dataset.asym_pairs=";
    for (std::size_t i = 0; i < cfg.dataset.asym_pairs.size(); ++i) {
        if (i) out << ',';
        out << cfg.dataset.asym_pairs[i].first << ':' << cfg.dataset.asym_pairs[i].second;
    }
    out << '\n'
        << "dataset.asym_flip_rate=" << format_double(cfg.dataset.asym_flip_rate) << '\n'
        << "dataset.asym_step_ratio=" << format_double(cfg.dataset.asym_step_ratio) << '\n'
        << "dataset.center_scale=" << format_double(cfg.dataset.center_scale) << '\n'
        << "dataset.cluster_stddev=" << format_double(cfg.dataset.cluster_stddev) << '\n'
        << "dataset.test_per_class=" << cfg.dataset.test_per_class << '\n'
        << "dataset.seed=" << cfg.dataset.seed << '\n'
        << "dataset.train_path=" << cfg.dataset.train_path << '\n'
        << "dataset.test_path=" << cfg.dataset.test_path << '\n';
    out << "model.hidden_dims=";
    for (std::size_t i = 0; i < cfg.trainer.hidden_dims.size(); ++i) {
        if (i) out << ',';
        out << cfg.trainer.hidden_dims[i];
    }
    out << '\n'
        << "trainer.epochs_total=" << cfg.trainer.epochs_total << '\n'
        << "trainer.bias_epochs=" << cfg.trainer.bias_epochs << '\n'
        << "trainer.warmup_epochs=" << cfg.trainer.warmup_epochs << '\n'
        << "trainer.batch_size=" << cfg.trainer.batch_size << '\n'
        << "trainer.lambda_warm=" << format_double(cfg.trainer.lambda_warm) << '\n'
        << "trainer.lambda_reg=" << format_double(cfg.trainer.lambda_reg) << '\n'
        << "trainer.ema_sigma=" << format_double(cfg.trainer.ema_sigma) << '\n'
        << "trainer.gamma_sup=" << format_double(cfg.trainer.gamma_sup) << '\n'
        << "trainer.gamma_rel=" << format_double(cfg.trainer.gamma_rel) << '\n'
        << "trainer.seed=" << cfg.trainer.seed << '\n'
        << "trainer.variant=" << variant_name(cfg.trainer.variant) << '\n'
        << "ssl.num_augmentations=" << cfg.trainer.ssl.num_augmentations << '\n'
        << "ssl.sharpen_temperature=" << format_double(cfg.trainer.ssl.sharpen_temperature)
        << '\n'
        << "ssl.mixup_concentration=" << format_double(cfg.trainer.ssl.mixup_concentration)
        << '\n'
        << "ssl.augment_stddev=" << format_double(cfg.trainer.ssl.augment_stddev) << '\n'
        << "ssl.lambda_u=" << format_double(cfg.trainer.ssl.lambda_u) << '\n'
        << "optimizer.momentum=" << format_double(cfg.trainer.optimizer.momentum) << '\n'
        << "optimizer.weight_decay=" << format_double(cfg.trainer.optimizer.weight_decay) << '\n'
        << "optimizer.initial_lr=" << format_double(cfg.trainer.optimizer.initial_lr) << '\n'
        << "optimizer.drop_epoch=" << cfg.trainer.optimizer.drop_epoch << '\n'
        << "optimizer.drop_factor=" << format_double(cfg.trainer.optimizer.drop_factor) << '\n'
        << "harness.many_gt=" << cfg.harness.splits.many_gt << '\n'
        << "harness.few_lt=" << cfg.harness.splits.few_lt << '\n';
    out << "harness.seeds=";
    for (std::size_t i = 0; i < cfg.harness.seeds.size(); ++i) {
        if (i) out << ',';
        out << cfg.harness.seeds[i];
    }
    out << '\n' << "harness.variants=";
    for (std::size_t i = 0; i < cfg.harness.variants.size(); ++i) {
        if (i) out << ',';
        out << cfg.harness.variants[i];
    }
    out << '\n' << "harness.gamma_grid=";
    for (std::size_t i = 0; i < cfg.harness.gamma_grid.size(); ++i) {
        if (i) out << ',';
        out << format_double(cfg.harness.gamma_grid[i].first) << ':'
            << format_double(cfg.harness.gamma_grid[i].second);
    }
    out << '\n';
    // out_dir and threads are execution details, not part of the experiment
    return out.str();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    return fnv1a64(canonical_config_string(cfg));
}

DatasetPair build_datasets(const DatasetConfig& cfg) {
    DatasetPair pair;
    if (!cfg.train_path.empty()) {
        pair.train = load_dataset(cfg.train_path);
        if (cfg.test_path.empty())
            throw std::invalid_argument("dataset.test_path: required when train_path is set");
        pair.test = load_dataset(cfg.test_path);
        return pair;
    }

    const std::vector<std::int64_t> base(static_cast<std::size_t>(cfg.num_classes),
                                         cfg.base_count);
    const auto counts = make_long_tail_counts(base, cfg.imbalance_ratio);
    BlobSpec spec = make_blob_spec(cfg.num_classes, cfg.dim, cfg.center_scale,
                                   cfg.cluster_stddev, cfg.seed);
    pair.train = generate_blobs(spec, counts);

    if (cfg.noise_kind == "symmetric" && cfg.noise_rate > 0.0) {
        pair.train = apply_noise(pair.train, symmetric_noise(counts, cfg.noise_rate),
                                 splitmix64(cfg.seed ^ 0xc0557));
    } else if (cfg.noise_kind == "asymmetric") {
        pair.train = apply_noise(
            pair.train,
            asymmetric_noise(cfg.asym_pairs, cfg.asym_flip_rate, cfg.asym_step_ratio),
            splitmix64(cfg.seed ^ 0xa57e9));
    }

    BlobSpec test_spec = spec;  // same centers, independent point noise
    test_spec.seed = splitmix64(cfg.seed ^ 0x7e57);
    pair.test = generate_blobs(
        test_spec,
        std::vector<std::int64_t>(static_cast<std::size_t>(cfg.num_classes),
                                  cfg.test_per_class));
    return pair;
}

}  // namespace taillab
