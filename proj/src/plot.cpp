#include "taillab/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace taillab {

namespace {

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t pos = line.find(',', start);
            fields.push_back(line.substr(start, pos == std::string::npos ? pos : pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        rows.push_back(std::move(fields));
    }
    if (rows.size() < 2) throw std::invalid_argument("plot: CSV has no data rows");
    return rows;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kMargin = 50;

double x_at(double t, double lo, double hi) {
    return kMargin + (t - lo) / (hi > lo ? hi - lo : 1.0) * (kWidth - 2 * kMargin);
}

double y_at(double v, double lo, double hi) {
    return kHeight - kMargin - (v - lo) / (hi > lo ? hi - lo : 1.0) * (kHeight - 2 * kMargin);
}

std::string svg_open() {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kWidth) +
           "\" height=\"" + std::to_string(kHeight) + "\">\n"
           "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string axes() {
    std::ostringstream out;
    out << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\""
        << kWidth - kMargin << "\" y2=\"" << kHeight - kMargin
        << "\" stroke=\"black\"/>\n<line x1=\"" << kMargin << "\" y1=\"" << kMargin
        << "\" x2=\"" << kMargin << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n";
    return out.str();
}

}  // namespace

std::string svg_accuracy_curves(const std::string& run_csv) {
    const auto rows = parse_csv(run_csv);
    const auto& header = rows.front();
    std::size_t epoch_col = 0, acc_col = 0, bal_col = 0;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "epoch") epoch_col = i;
        if (header[i] == "test_accuracy") acc_col = i;
        if (header[i] == "test_balanced_accuracy") bal_col = i;
    }
    std::vector<double> epochs, acc, bal;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        epochs.push_back(std::stod(rows[r][epoch_col]));
        acc.push_back(std::stod(rows[r][acc_col]));
        bal.push_back(std::stod(rows[r][bal_col]));
    }
    const double e_lo = epochs.front();
    const double e_hi = epochs.back();

    std::string out = svg_open() + axes();
    const char* colors[2] = {"#1f77b4", "#d62728"};
    const std::vector<double>* series[2] = {&acc, &bal};
    for (int s = 0; s < 2; ++s) {
        out += "<polyline fill=\"none\" stroke=\"" + std::string(colors[s]) + "\" points=\"";
        for (std::size_t i = 0; i < epochs.size(); ++i) {
            out += num(x_at(epochs[i], e_lo, e_hi)) + "," + num(y_at((*series[s])[i], 0.0, 1.0)) +
                   " ";
        }
        out += "\"/>\n";
    }
    out += "<text x=\"" + std::to_string(kMargin) + "\" y=\"20\" fill=\"#1f77b4\">overall</text>\n";
    out += "<text x=\"" + std::to_string(kMargin + 80) +
           "\" y=\"20\" fill=\"#d62728\">balanced</text>\n";
    out += "</svg>\n";
    return out;
}

std::string svg_per_class_scatter(const std::string& per_class_csv) {
    const auto rows = parse_csv(per_class_csv);
    std::vector<double> counts, acc;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        counts.push_back(std::stod(rows[r][1]));
        acc.push_back(std::stod(rows[r][2]));
    }
    const double c_hi = *std::max_element(counts.begin(), counts.end());

    std::string out = svg_open() + axes();
    for (std::size_t i = 0; i < counts.size(); ++i) {
        out += "<circle cx=\"" + num(x_at(counts[i], 0.0, c_hi)) + "\" cy=\"" +
               num(y_at(acc[i], 0.0, 1.0)) + "\" r=\"4\" fill=\"#1f77b4\"/>\n";
    }
    out += "<text x=\"" + std::to_string(kWidth / 2 - 60) + "\" y=\"" +
           std::to_string(kHeight - 10) + "\">train count</text>\n";
    out += "</svg>\n";
    return out;
}

std::string svg_loss_histograms(const std::string& histogram_csv) {
    const auto rows = parse_csv(histogram_csv);
    // columns: observed_class,bin,bin_lo,bin_hi,clean_count,noisy_count
    std::map<int, std::vector<std::array<double, 4>>> per_class;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        per_class[std::stoi(rows[r][0])].push_back({std::stod(rows[r][2]), std::stod(rows[r][3]),
                                                    std::stod(rows[r][4]),
                                                    std::stod(rows[r][5])});
    }
    const auto n_classes = per_class.size();
    const int panel_h = 120;
    const int total_h = static_cast<int>(n_classes) * panel_h + 20;
    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      std::to_string(kWidth) + "\" height=\"" + std::to_string(total_h) +
                      "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    int panel = 0;
    for (const auto& [cls, bins] : per_class) {
        double max_count = 1.0;
        for (const auto& b : bins) max_count = std::max({max_count, b[2], b[3]});
        const double lo = bins.front()[0];
        const double hi = bins.back()[1];
        const int base_y = (panel + 1) * panel_h;
        for (const auto& b : bins) {
            const double x0 = x_at(b[0], lo, hi);
            const double x1 = x_at(b[1], lo, hi);
            const double w = std::max(1.0, (x1 - x0) / 2.0 - 0.5);
            const double h_clean = b[2] / max_count * (panel_h - 30);
            const double h_noisy = b[3] / max_count * (panel_h - 30);
            out += "<rect x=\"" + num(x0) + "\" y=\"" + num(base_y - h_clean) + "\" width=\"" +
                   num(w) + "\" height=\"" + num(h_clean) + "\" fill=\"#2ca02c\"/>\n";
            out += "<rect x=\"" + num(x0 + w) + "\" y=\"" + num(base_y - h_noisy) +
                   "\" width=\"" + num(w) + "\" height=\"" + num(h_noisy) +
                   "\" fill=\"#d62728\"/>\n";
        }
        out += "<text x=\"5\" y=\"" + std::to_string(base_y - panel_h / 2) + "\">class " +
               std::to_string(cls) + "</text>\n";
        ++panel;
    }
    out += "</svg>\n";
    return out;
}

}  // namespace taillab
