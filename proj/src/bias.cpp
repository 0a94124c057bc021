#include "taillab/bias.hpp"

#include <cmath>
#include <stdexcept>

namespace taillab {

BiasState make_bias_state(int num_classes, double ema_sigma) {
    if (num_classes < 1) throw std::invalid_argument("make_bias_state: need >= 1 class");
    if (!(ema_sigma >= 0.0 && ema_sigma < 1.0))
        throw std::invalid_argument("make_bias_state: ema_sigma must be in [0,1)");
    BiasState state;
    const auto c = static_cast<std::size_t>(num_classes);
    state.epoch_matrix = Matrix(c, c);
    state.counters.assign(c, 0);
    state.ema_matrix = Matrix(c, c);
    state.ema_sigma = ema_sigma;
    state.rows_ever_updated.assign(c, false);
    return state;
}

void accumulate(BiasState& state, const Matrix& softmax_outputs,
                const std::vector<int>& clean_labels) {
    const std::size_t c = state.epoch_matrix.rows();
    if (softmax_outputs.cols() != c)
        throw std::invalid_argument("accumulate: softmax width != num_classes");
    if (softmax_outputs.rows() != clean_labels.size())
        throw std::invalid_argument("accumulate: rows != label count");
    for (std::size_t b = 0; b < softmax_outputs.rows(); ++b) {
        const int y = clean_labels[b];
        if (y < 0 || y >= static_cast<int>(c))
            throw std::invalid_argument("accumulate: label out of range");
        for (std::size_t j = 0; j < c; ++j) {
            state.epoch_matrix(static_cast<std::size_t>(y), j) += softmax_outputs(b, j);
        }
        state.counters[static_cast<std::size_t>(y)] += 1;
        state.accumulated_since_finalize = true;
    }
}

void finalize_epoch(BiasState& state) {
    if (!state.accumulated_since_finalize) {
        state.finalize_warnings += 1;
        return;
    }
    const std::size_t c = state.epoch_matrix.rows();
    const double sigma = state.ema_sigma;
    for (std::size_t i = 0; i < c; ++i) {
        if (state.counters[i] > 0) {
            const double inv = 1.0 / static_cast<double>(state.counters[i]);
            for (std::size_t j = 0; j < c; ++j) {
                const double mean = state.epoch_matrix(i, j) * inv;
                state.ema_matrix(i, j) = sigma * state.ema_matrix(i, j) + (1.0 - sigma) * mean;
            }
            state.rows_ever_updated[i] = true;
        } else if (!state.rows_ever_updated[i]) {
            for (std::size_t j = 0; j < c; ++j) {
                state.ema_matrix(i, j) = 1.0 / static_cast<double>(c);
            }
        }
        // rows updated in an earlier epoch but absent now keep their EMA row
    }
    state.epoch_matrix.fill(0.0);
    state.counters.assign(c, 0);
    state.accumulated_since_finalize = false;
}

Matrix ratio_matrix(const Matrix& ema) {
    if (ema.rows() != ema.cols()) throw std::invalid_argument("ratio_matrix: matrix not square");
    const std::size_t c = ema.rows();
    Matrix r(c, c);
    for (std::size_t i = 0; i < c; ++i) {
        r(i, i) = 1.0;
        for (std::size_t j = i + 1; j < c; ++j) {
            if (!(ema(i, j) > 0.0) || !(ema(j, i) > 0.0))
                throw std::logic_error(
                    "ratio_matrix: non-positive bias entry; softmax accumulation and the "
                    "uniform fallback should make this unreachable");
            r(i, j) = ema(i, j) / ema(j, i);
            r(j, i) = ema(j, i) / ema(i, j);
        }
    }
    return r;
}

Matrix alpha_matrix(const Matrix& ratio, double gamma_sup, double gamma_rel) {
    if (ratio.rows() != ratio.cols()) throw std::invalid_argument("alpha_matrix: not square");
    if (!(gamma_sup >= 0.0) || !(gamma_rel >= 0.0))
        throw std::invalid_argument("alpha_matrix: gammas must be >= 0");
    const std::size_t c = ratio.rows();
    Matrix alpha(c, c);
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            if (i == j) {
                alpha(i, j) = 1.0;
            } else {
                const double r = ratio(i, j);
                alpha(i, j) = r > 1.0 ? std::pow(r, gamma_sup) : std::pow(r, gamma_rel);
            }
        }
    }
    return alpha;
}

Matrix frequency_alpha(const std::vector<std::int64_t>& observed_counts, double gamma_sup,
                       double gamma_rel) {
    const std::size_t c = observed_counts.size();
    for (std::int64_t n : observed_counts) {
        if (n < 1) throw std::invalid_argument("frequency_alpha: counts must be >= 1");
    }
    Matrix r(c, c);
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            r(i, j) = i == j ? 1.0
                             : static_cast<double>(observed_counts[j]) /
                                   static_cast<double>(observed_counts[i]);
        }
    }
    return alpha_matrix(r, gamma_sup, gamma_rel);
}

}  // namespace taillab
