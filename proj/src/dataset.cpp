#include "taillab/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace taillab {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void LabeledDataset::recompute_counts() {
    observed_counts.assign(static_cast<std::size_t>(num_classes), 0);
    for (int y : observed_labels) {
        observed_counts[static_cast<std::size_t>(y)] += 1;
    }
}

void LabeledDataset::validate() const {
    const std::size_t n = observed_labels.size();
    if (features.rows() != n) throw std::invalid_argument("dataset: feature rows != label count");
    if (num_classes < 1) throw std::invalid_argument("dataset: num_classes must be >= 1");
    if (observed_counts.size() != static_cast<std::size_t>(num_classes))
        throw std::invalid_argument("dataset: observed_counts length != num_classes");
    std::vector<std::int64_t> check(static_cast<std::size_t>(num_classes), 0);
    for (int y : observed_labels) {
        if (y < 0 || y >= num_classes) throw std::invalid_argument("dataset: label out of range");
        check[static_cast<std::size_t>(y)] += 1;
    }
    if (check != observed_counts)
        throw std::invalid_argument("dataset: observed_counts inconsistent with labels");
    if (true_labels) {
        if (true_labels->size() != n)
            throw std::invalid_argument("dataset: true_labels length != N");
        for (int y : *true_labels) {
            if (y < 0 || y >= num_classes)
                throw std::invalid_argument("dataset: true label out of range");
        }
    }
}

void save_dataset(const LabeledDataset& ds, const std::string& path) {
    ds.validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    const bool has_true = ds.true_labels.has_value();
    out << ds.num_classes << ' ' << ds.dim() << ' ' << ds.size() << ' ' << (has_true ? 1 : 0)
        << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.observed_labels[i];
        if (has_true) out << ',' << (*ds.true_labels)[i];
        for (std::size_t j = 0; j < ds.dim(); ++j) {
            out << ',' << format_double(ds.features(i, j));
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::size_t line, const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

LabeledDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);

    std::string line;
    if (!std::getline(in, line) || line.empty()) parse_fail(path, 1, "missing header");
    std::istringstream header(line);
    long long c = 0, d = 0, n = 0;
    int has_true = 0;
    if (!(header >> c >> d >> n >> has_true) || c < 1 || d < 1 || n < 0 ||
        (has_true != 0 && has_true != 1)) {
        parse_fail(path, 1, "malformed header (expected 'C d N has_true_labels')");
    }

    LabeledDataset ds;
    ds.num_classes = static_cast<int>(c);
    ds.features = Matrix(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
    ds.observed_labels.resize(static_cast<std::size_t>(n));
    if (has_true) ds.true_labels = std::vector<int>(static_cast<std::size_t>(n));

    for (long long i = 0; i < n; ++i) {
        const std::size_t lineno = static_cast<std::size_t>(i) + 2;
        if (!std::getline(in, line)) parse_fail(path, lineno, "unexpected end of file");
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t pos = line.find(',', start);
            fields.push_back(line.substr(start, pos == std::string::npos ? pos : pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        const std::size_t expected = 1 + static_cast<std::size_t>(has_true) +
                                     static_cast<std::size_t>(d);
        if (fields.size() != expected) {
            parse_fail(path, lineno,
                       "inconsistent row width (got " + std::to_string(fields.size()) +
                           " fields, expected " + std::to_string(expected) + ")");
        }
        std::size_t f = 0;
        try {
            const int obs = std::stoi(fields[f++]);
            if (obs < 0 || obs >= ds.num_classes)
                parse_fail(path, lineno, "observed label out of range [0," +
                                             std::to_string(ds.num_classes) + ")");
            ds.observed_labels[static_cast<std::size_t>(i)] = obs;
            if (has_true) {
                const int tru = std::stoi(fields[f++]);
                if (tru < 0 || tru >= ds.num_classes)
                    parse_fail(path, lineno, "true label out of range [0," +
                                                 std::to_string(ds.num_classes) + ")");
                (*ds.true_labels)[static_cast<std::size_t>(i)] = tru;
            }
            for (long long j = 0; j < d; ++j) {
                ds.features(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
                    std::stod(fields[f++]);
            }
        } catch (const std::invalid_argument&) {
            parse_fail(path, lineno, "non-numeric field");
        } catch (const std::out_of_range&) {
            parse_fail(path, lineno, "numeric field out of range");
        }
    }
    ds.recompute_counts();
    ds.validate();
    return ds;
}

}  // namespace taillab
